"""Homogeneous-Poisson diagnostics for session initiation times.

Within a segment, session start times form a homogeneous Poisson process
exactly when the interarrival gaps are iid exponential.  Two checks are
provided: an exponential QQ comparison (summarized by the QQ correlation)
and the sample autocorrelation function with normal-approximation bounds
for an iid sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import irfft, rfft
from scipy.stats import norm

from .errors import DegenerateDataError, ParameterError


@dataclass(frozen=True)
class PoissonDiagnostics:
    lambda_hat: float
    qq_empirical: np.ndarray
    qq_theoretical: np.ndarray
    qq_correlation: float
    acf_lags: np.ndarray
    acf: np.ndarray
    bound: float
    spike_fraction: float


def _gamma_starts(group) -> np.ndarray:
    sessions = getattr(group, "sessions", group)
    try:
        return np.asarray([s.gamma_start for s in sessions], dtype=float)
    except AttributeError:
        return np.asarray(sessions, dtype=float)


def interarrivals(group) -> np.ndarray:
    """Gaps between successive session starts, relabeling into time order.

    Accepts a SessionGroup, a sequence of sessions, or a bare array of
    start times.
    """
    gammas = _gamma_starts(group)
    if gammas.size < 2:
        raise DegenerateDataError("need at least 2 sessions for interarrivals")
    return np.diff(np.sort(gammas))


def exp_qq(deltas) -> tuple[float, tuple[np.ndarray, np.ndarray], float]:
    """Exponential QQ data for interarrival gaps.

    Returns (lambda_hat, (empirical, theoretical), correlation): the rate
    MLE 1/mean, the order statistics paired with exponential plotting
    quantiles -log(1 - i/(n+1))/lambda_hat, and their correlation.
    """
    d = np.asarray(deltas, dtype=float)
    if d.size < 20:
        raise ParameterError("need at least 20 interarrivals")
    if (d < 0).any() or not np.isfinite(d).all():
        raise DegenerateDataError("interarrivals must be finite and >= 0")
    mean = d.mean()
    if mean == 0.0:
        raise DegenerateDataError("all interarrivals are zero")
    lambda_hat = 1.0 / mean
    emp = np.sort(d)
    probs = np.arange(1, d.size + 1) / (d.size + 1.0)
    theo = -np.log1p(-probs) / lambda_hat
    if emp.std() == 0.0:
        corr = float("nan")
    else:
        corr = float(np.corrcoef(emp, theo)[0, 1])
    return lambda_hat, (emp, theo), corr


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation for lags 0..max_lag.

    rho(h) = sum_{i<=n-h} (x_i - xbar)(x_{i+h} - xbar) / sum (x_i - xbar)^2,
    computed by FFT; identical to the direct sum up to round-off.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if not 1 <= max_lag <= n - 1:
        raise ParameterError(f"max_lag must be in [1, {n - 1}]")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise DegenerateDataError("zero-variance series has no autocorrelation")
    m = 1
    while m < 2 * n:
        m *= 2
    spec = rfft(centered, m)
    autocov = irfft(spec * np.conj(spec), m)[: max_lag + 1]
    return autocov / denom


def acf_test(
    deltas, max_lag: int | None = None, alpha: float = 0.05
) -> tuple[np.ndarray, float, float]:
    """Independence check of interarrivals via autocorrelation spikes.

    Under iid gaps, sqrt(n) rho(h) is asymptotically standard normal, so
    about 1 - alpha of the |rho(h)| for h >= 1 should stay inside
    z_{1-alpha/2}/sqrt(n) (two-sided, matching symmetric plot bands).
    Returns (rho for lags 0..max_lag, bound, spike fraction over lags
    1..max_lag).  max_lag defaults to n - 1.
    """
    d = np.asarray(deltas, dtype=float)
    n = d.size
    if n < 2:
        raise DegenerateDataError("need at least 2 interarrivals")
    if max_lag is None:
        max_lag = n - 1
    if not 0 < alpha < 1:
        raise ParameterError("alpha must be in (0, 1)")
    rho = acf(d, max_lag)
    bound = float(norm.ppf(1.0 - alpha / 2.0) / np.sqrt(n))
    spikes = np.abs(rho[1:]) > bound
    return rho, bound, float(spikes.mean())


def diagnose(group, max_lag: int | None = None, alpha: float = 0.05) -> PoissonDiagnostics:
    """Run both Poisson checks on one segment."""
    deltas = interarrivals(group)
    lambda_hat, (emp, theo), corr = exp_qq(deltas)
    rho, bound, spike_fraction = acf_test(deltas, max_lag=max_lag, alpha=alpha)
    return PoissonDiagnostics(
        lambda_hat=lambda_hat,
        qq_empirical=emp,
        qq_theoretical=theo,
        qq_correlation=corr,
        acf_lags=np.arange(rho.size),
        acf=rho,
        bound=bound,
        spike_fraction=spike_fraction,
    )
