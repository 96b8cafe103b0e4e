"""Conditional-extreme-value diagnostic via concomitant ranks.

For a pair where only one margin is heavy tailed, the Hillish statistic
averages products of log rank ratios of the concomitants attached to the
largest conditioning values.  Stability of the statistic across k
supports a conditional extreme value model; for independent pairs the
statistic converges to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class HillishCurve:
    k: np.ndarray
    value: np.ndarray
    n: int
    pair_label: str = ""


def _concomitants(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # sort by y descending; stable, so tied y keep input order
    order = np.argsort(-y, kind="stable")
    return x[order]


def hillish(x, y, k: int) -> float:
    """Hillish statistic of the pair (x, y) at threshold k.

    Orders y descending, takes the x attached to each of the k largest y
    (the concomitants), ranks each concomitant ascending among the first
    k, and returns mean over j of log(k / rank_j) * log(k / j).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("x and y must be one-dimensional and equally long")
    if not 1 <= k <= x.size:
        raise ParameterError(f"k must be in [1, {x.size}], got {k}")
    top = _concomitants(x, y)[:k]
    ranks = np.searchsorted(np.sort(top), top, side="right")
    j = np.arange(1, k + 1)
    return float(np.mean(np.log(k / ranks) * np.log(k / j)))


def hillish_curve(x, y, k_values: Sequence[int], pair_label: str = "") -> HillishCurve:
    """Hillish values over a range of k (each computed from the definition)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("x and y must be one-dimensional and equally long")
    ks = np.asarray(list(k_values), dtype=int)
    if ks.size == 0 or ks.min() < 1 or ks.max() > x.size:
        raise ParameterError(f"k values must lie in [1, {x.size}]")
    conc = _concomitants(x, y)
    values = np.empty(ks.size)
    for i, k in enumerate(ks):
        top = conc[:k]
        ranks = np.searchsorted(np.sort(top), top, side="right")
        j = np.arange(1, k + 1)
        values[i] = np.mean(np.log(k / ranks) * np.log(k / j))
    return HillishCurve(k=ks, value=values, n=x.size, pair_label=pair_label)


def stability_series(
    curve: HillishCurve, window: float, center: str = "mean"
) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window relative range of a Hillish curve.

    For each curve point, the relative range (max - min) / |center| over
    all points with k inside [k_i, k_i + window] is reported.  The caller
    decides what counts as a stable regime; nothing is thresholded here.
    """
    if window <= 0:
        raise ParameterError("window must be > 0")
    ks = curve.k.astype(float)
    out_k = []
    out_rel = []
    for i, k in enumerate(ks):
        mask = (ks >= k) & (ks <= k + window)
        if mask.sum() < 2:
            continue
        vals = curve.value[mask]
        ref = vals.mean() if center == "mean" else np.median(vals)
        denom = max(abs(ref), 1e-12)
        out_k.append(curve.k[i])
        out_rel.append((vals.max() - vals.min()) / denom)
    return np.asarray(out_k, dtype=int), np.asarray(out_rel)
