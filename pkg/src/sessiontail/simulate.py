"""Session-level traffic generator driven by fitted model components.

Five steps per synthetic trace: bootstrap peak rates from an empirical
sample and quantile-split them into groups; start sessions per group from
a homogeneous Poisson process; turn each session's peak rate into a
dependence parameter through the fitted half-logit trend and draw an
angle; draw a Pareto radius; invert the L1 polar transform into (S, D)
and set R = S/D.  Output uses the same session CSV schema as ingestion so
synthetic traces feed straight back into the analysis pipeline.

(S, D) come out in the standardized scale of the fitting pipeline unless
per-group empirical quantile tables are supplied to map them back to data
units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import (
    STREAM_SIM_ARRIVALS,
    STREAM_SIM_COUNT,
    STREAM_SIM_RADIUS,
    STREAM_SIM_RPEAK,
    STREAM_SIM_THETA,
    derived_rng,
)
from .errors import ParameterError
from .ingest import FlowKey, Session
from .spectral import half_logit, logistic_cdf_table

PSI_QUANT = 1e-3  # angle-sampling tables are cached on this psi grid


@dataclass(frozen=True)
class MarginalTables:
    """Per-group empirical samples used to back-transform (S, D) to data scale."""

    S: tuple[np.ndarray, ...]
    D: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class SimulationSpec:
    """Inputs of the five-step generator.

    Exactly one of n_sessions (total count) or horizon_seconds (per-group
    time horizon) must be set.  With a count, peak rates are bootstrapped
    first and split into q quantile groups, and each group gets that many
    Poisson arrivals.  With a horizon, each group's session count is drawn
    Poisson(lambda_g * T) and peak rates are bootstrapped from that
    group's quantile band of the source sample.
    """

    q: int
    rpeak_source: np.ndarray
    lambda_g: np.ndarray
    beta0: float
    beta1: float
    radial_gamma: float
    seed: int
    radial_scale: float = 1.0
    n_sessions: int | None = None
    horizon_seconds: float | None = None
    marginal_backtransform: MarginalTables | None = None

    def __post_init__(self):
        object.__setattr__(self, "rpeak_source", np.asarray(self.rpeak_source, dtype=float))
        object.__setattr__(self, "lambda_g", np.asarray(self.lambda_g, dtype=float))
        if self.q < 1:
            raise ParameterError("q must be >= 1")
        if self.rpeak_source.size == 0 or (self.rpeak_source <= 0).any():
            raise ParameterError("rpeak_source must be non-empty and positive")
        if self.lambda_g.shape != (self.q,) or (self.lambda_g <= 0).any():
            raise ParameterError("lambda_g must hold q positive rates")
        if self.radial_gamma <= 0:
            raise ParameterError("radial_gamma must be > 0")
        if self.radial_scale <= 0:
            raise ParameterError("radial_scale must be > 0")
        if (self.n_sessions is None) == (self.horizon_seconds is None):
            raise ParameterError("set exactly one of n_sessions or horizon_seconds")
        if self.n_sessions is not None and self.n_sessions < 1:
            raise ParameterError("n_sessions must be >= 1")
        if self.horizon_seconds is not None and not self.horizon_seconds > 0:
            raise ParameterError("horizon_seconds must be > 0")
        if self.marginal_backtransform is not None:
            mt = self.marginal_backtransform
            if len(mt.S) != self.q or len(mt.D) != self.q:
                raise ParameterError("marginal tables must cover all q groups")


def spec_from_json(path) -> SimulationSpec:
    """Load a SimulationSpec from its JSON file form."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    tables = None
    if raw.get("marginal_backtransform") is not None:
        mt = raw["marginal_backtransform"]
        tables = MarginalTables(
            S=tuple(np.asarray(g, dtype=float) for g in mt["S"]),
            D=tuple(np.asarray(g, dtype=float) for g in mt["D"]),
        )
    try:
        return SimulationSpec(
            q=int(raw["q"]),
            rpeak_source=np.asarray(raw["rpeak_source"], dtype=float),
            lambda_g=np.asarray(raw["lambda_g"], dtype=float),
            beta0=float(raw["beta0"]),
            beta1=float(raw["beta1"]),
            radial_gamma=float(raw["radial_gamma"]),
            seed=int(raw["seed"]),
            radial_scale=float(raw.get("radial_scale", 1.0)),
            n_sessions=raw.get("n_sessions"),
            horizon_seconds=raw.get("horizon_seconds"),
            marginal_backtransform=tables,
        )
    except KeyError as exc:
        raise ParameterError(f"simulation spec missing field {exc}") from None


def _sample_angles(psi: np.ndarray, seed: int, group: int) -> np.ndarray:
    """Angles for per-session psi values, sampled on a quantized psi grid.

    psi is rounded to the PSI_QUANT grid so the tabulated sampler can be
    reused across sessions; each (group, grid level) pair draws from its
    own derived stream, making the output independent of iteration order.
    psi below half a grid step degenerates to the analytic limit, a point
    mass at 1/2.
    """
    levels = np.round(psi / PSI_QUANT).astype(int)
    out = np.full(psi.size, 0.5)
    for level in np.unique(levels[levels > 0]):
        mask = levels == level
        table = logistic_cdf_table(float(level * PSI_QUANT))
        rng = derived_rng(seed, STREAM_SIM_THETA, group, int(level))
        out[mask] = table.sample(rng, int(mask.sum()))
    return out


def simulate_sessions(spec: SimulationSpec) -> list[Session]:
    """Generate a synthetic session collection; bit-reproducible given seed."""
    q = spec.q
    src_sorted = np.sort(spec.rpeak_source)
    n_src = src_sorted.size

    if spec.n_sessions is not None:
        n = spec.n_sessions
        rng = derived_rng(spec.seed, STREAM_SIM_RPEAK)
        rp_all = spec.rpeak_source[rng.integers(0, n_src, size=n)]
        order = np.argsort(rp_all, kind="stable")
        group_rp = [
            rp_all[order[((g - 1) * n) // q : (g * n) // q]] for g in range(1, q + 1)
        ]
        counts = [rp.size for rp in group_rp]
        gammas = []
        for g in range(q):
            rng_a = derived_rng(spec.seed, STREAM_SIM_ARRIVALS, g)
            gaps = rng_a.exponential(1.0 / spec.lambda_g[g], size=counts[g])
            gammas.append(np.cumsum(gaps))
    else:
        horizon = float(spec.horizon_seconds)
        group_rp = []
        gammas = []
        for g in range(q):
            rng_c = derived_rng(spec.seed, STREAM_SIM_COUNT, g)
            count = int(rng_c.poisson(spec.lambda_g[g] * horizon))
            gammas.append(np.sort(rng_c.random(count)) * horizon)
            lo = (g * n_src) // q
            hi = ((g + 1) * n_src) // q
            band = src_sorted[lo:hi]
            if band.size == 0:
                raise ParameterError(f"source sample too small for group {g + 1}")
            rng_r = derived_rng(spec.seed, STREAM_SIM_RPEAK, g)
            group_rp.append(band[rng_r.integers(0, band.size, size=count)])

    sessions: list[Session] = []
    for g in range(q):
        rp = group_rp[g]
        count = rp.size
        if count == 0:
            continue
        psi = half_logit(spec.beta0 + spec.beta1 * np.log(rp))
        theta = _sample_angles(psi, spec.seed, g)
        if ((theta <= 0.0) | (theta >= 1.0)).any():
            raise ParameterError("angle sampler left the open interval (0, 1)")
        rng_n = derived_rng(spec.seed, STREAM_SIM_RADIUS, g)
        u = 1.0 - rng_n.random(count)  # in (0, 1]
        radius = spec.radial_scale * u ** (-spec.radial_gamma)
        s_vals = radius * theta
        d_vals = radius * (1.0 - theta)
        if spec.marginal_backtransform is not None:
            s_vals = _empirical_map(s_vals, spec.marginal_backtransform.S[g])
            d_vals = _empirical_map(d_vals, spec.marginal_backtransform.D[g])
        key = FlowKey("sim", f"g{g + 1}")
        for i in range(count):
            sessions.append(
                Session(
                    key=key,
                    gamma_start=float(gammas[g][i]),
                    S=float(s_vals[i]),
                    D=float(d_vals[i]),
                    R=float(s_vals[i] / d_vals[i]),
                    R_peak=float(rp[i]),
                    p=0,
                )
            )
    sessions.sort(key=lambda s: s.gamma_start)
    return sessions


def _empirical_map(values: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Monotone map of values onto the empirical quantiles of a table."""
    if table.size == 0:
        raise ParameterError("empty marginal table")
    ranks = np.empty(values.size, dtype=float)
    ranks[np.argsort(values, kind="stable")] = np.arange(1, values.size + 1)
    return np.quantile(np.sort(table), ranks / (values.size + 1.0))
