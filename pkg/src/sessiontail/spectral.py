"""Bivariate extremal-dependence estimation.

Pairs are standardized margin-free with antiranks, mapped to L1 polar
coordinates, and thresholded on radius > 1.  The retained angles are
fitted with the one-parameter symmetric logistic spectral density; a
global trend links the logistic parameter to each session's log peak
rate through a half-logit link, and m-out-of-n bootstrap resampling
provides standard errors for the trend coefficients.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from ._rng import STREAM_BOOTSTRAP, STREAM_LOGISTIC, derived_rng
from .errors import DegenerateDataError, NonConvergenceError, ParameterError

ANGLE_EPS = 1e-6       # clamp angles into [eps, 1-eps] before likelihood work
PSI_TOL = 1e-8         # optimizer tolerance on the logistic parameter
BETA_TOL = 1e-6        # optimizer tolerance on the trend coefficients
_PSI_FLOOR = 1e-9      # trend-implied psi is kept inside (floor, 0.5 - floor)


@dataclass(frozen=True)
class AngularSample:
    """Antirank-standardized pairs in L1 polar coordinates."""

    radius: np.ndarray
    theta: np.ndarray
    k: int

    @property
    def retained(self) -> np.ndarray:
        return self.radius > 1.0

    @property
    def retained_theta(self) -> np.ndarray:
        return self.theta[self.retained]

    @property
    def n_retained(self) -> int:
        return int(self.retained.sum())


@dataclass(frozen=True)
class LogisticFit:
    psi_hat: float
    loglik: float
    n_retained: int
    k: int | None = None


@dataclass
class TrendFit:
    """Half-logit trend of the logistic parameter in log peak rate.

    The link is fixed at g(x) = 0.5 / (1 + exp(-x)), confining the implied
    dependence parameter to (0, 0.5).  Standard-error fields stay None
    until a bootstrap run fills them.
    """

    beta0: float
    beta1: float
    loglik: float
    se_beta0: float | None = None
    se_beta1: float | None = None
    n_bootstrap: int | None = None
    bootstrap_m: int | None = None
    dropped: int | None = None


def half_logit(x):
    """Link g(x) = 0.5 / (1 + exp(-x)), mapping the reals onto (0, 0.5)."""
    with np.errstate(over="ignore"):
        return 0.5 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def antiranks(values: np.ndarray) -> np.ndarray:
    """Descending ranks with ties counted as 'as large as' (>=)."""
    v = np.asarray(values)
    sorted_v = np.sort(v)
    return v.size - np.searchsorted(sorted_v, v, side="left")


def antirank_polar(x, y, k: int) -> AngularSample:
    """Standardize a pair sample by antiranks and go to L1 polar coordinates.

    Each observation i maps to (k/r_i1, k/r_i2) with r_ij its descending
    marginal rank; radius is the coordinate sum and theta the first
    coordinate's share.  Points with radius > 1 form the retained angular
    sample that estimates the spectral measure.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("x and y must be one-dimensional and equally long")
    n = x.size
    if not 1 <= k <= n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    z1 = k / antiranks(x)
    z2 = k / antiranks(y)
    radius = z1 + z2
    return AngularSample(radius=radius, theta=z1 / radius, k=k)


def _log_density(t: np.ndarray, psi: float) -> np.ndarray:
    a = -np.log(t) / psi
    b = -np.log1p(-t) / psi
    m = np.maximum(a, b)
    lse = m + np.log1p(np.exp(-np.abs(a - b)))
    return math.log((1.0 - psi) / (2.0 * psi)) + (1.0 + psi) * (a + b) + (psi - 2.0) * lse


def logistic_density(t, psi: float):
    """Symmetric logistic spectral density h(t; psi) on [0, 1].

    psi near 0 concentrates mass at 1/2 (asymptotic full dependence); psi
    near 1 pushes mass to the endpoints (asymptotic independence).  At
    t = 0 or 1 the analytic limit is returned: 0 for psi < 1/2, 1/2 at
    psi = 1/2, and +inf for psi > 1/2.
    """
    if not 0.0 < psi < 1.0:
        raise ParameterError("psi must be in (0, 1)")
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    if ((t_arr < 0) | (t_arr > 1)).any():
        raise ParameterError("t must be in [0, 1]")
    out = np.empty_like(t_arr)
    edge = (t_arr == 0.0) | (t_arr == 1.0)
    if psi < 0.5:
        out[edge] = 0.0
    elif psi == 0.5:
        out[edge] = 0.5
    else:
        out[edge] = np.inf
    interior = ~edge
    if interior.any():
        out[interior] = np.exp(_log_density(t_arr[interior], psi))
    return float(out[0]) if scalar else out


def logistic_loglik(angles, psi: float) -> float:
    """Log-likelihood of the logistic spectral density at psi."""
    t = np.clip(np.asarray(angles, dtype=float), ANGLE_EPS, 1.0 - ANGLE_EPS)
    return float(_log_density(t, psi).sum())


def logistic_mle(angles, k: int | None = None) -> LogisticFit:
    """Maximum-likelihood logistic parameter for a retained angular sample.

    One-dimensional bounded search on (eps, 1-eps).  A boundary solution
    (all angles at 1/2 drives the estimate to the lower bound) is reported
    with a degenerate-fit warning rather than an error.
    """
    t = np.asarray(angles, dtype=float)
    if t.size < 10:
        raise ParameterError("need at least 10 angles to fit")
    t = np.clip(t, ANGLE_EPS, 1.0 - ANGLE_EPS)
    res = minimize_scalar(
        lambda p: -logistic_loglik(t, p),
        bounds=(ANGLE_EPS, 1.0 - ANGLE_EPS),
        method="bounded",
        options={"xatol": PSI_TOL},
    )
    psi_hat = float(res.x)
    if psi_hat <= ANGLE_EPS * 2.0:
        warnings.warn(
            "logistic fit degenerate: likelihood increases toward psi = 0, "
            "estimate pinned at the lower bound",
            stacklevel=2,
        )
        psi_hat = ANGLE_EPS
    return LogisticFit(
        psi_hat=psi_hat, loglik=logistic_loglik(t, psi_hat), n_retained=t.size, k=k
    )


def _trend_nll(beta0: float, beta1: float, theta: np.ndarray, log_rpeak: np.ndarray) -> float:
    psi = half_logit(beta0 + beta1 * log_rpeak)
    psi = np.clip(psi, _PSI_FLOOR, 0.5 - _PSI_FLOOR)
    a = -np.log(theta) / psi
    b = -np.log1p(-theta) / psi
    m = np.maximum(a, b)
    lse = m + np.log1p(np.exp(-np.abs(a - b)))
    ll = np.log((1.0 - psi) / (2.0 * psi)) + (1.0 + psi) * (a + b) + (psi - 2.0) * lse
    return float(-ll.sum())


def fit_trend(
    groups: Sequence[tuple[np.ndarray, np.ndarray]],
    fix_beta1: float | None = None,
    start: tuple[float, float] | None = None,
    max_rounds: int = 200,
) -> TrendFit:
    """Fit the half-logit trend jointly over all groups.

    Each group contributes its retained angles paired with the owning
    sessions' peak rates; the pooled log-likelihood with
    psi_i = g(beta0 + beta1 log rpeak_i) is maximized by a coarse grid
    start followed by coordinate-wise one-dimensional refinement.

    Parameters
    ----------
    groups : sequence of (theta, rpeak) pairs, one per group; theta are the
        retained angles and rpeak the matching sessions' peak rates
    fix_beta1 : hold beta1 at this value and optimize beta0 alone
    start : optional warm start (beta0, beta1) replacing the grid stage
    """
    thetas = []
    rpeaks = []
    for theta, rpeak in groups:
        theta = np.asarray(theta, dtype=float)
        rpeak = np.asarray(rpeak, dtype=float)
        if theta.size != rpeak.size:
            raise ParameterError("each group needs matching theta and rpeak arrays")
        if theta.size < 10:
            raise ParameterError("each group needs at least 10 retained angles")
        if (rpeak <= 0).any():
            raise ParameterError("peak rates must be > 0")
        thetas.append(np.clip(theta, ANGLE_EPS, 1.0 - ANGLE_EPS))
        rpeaks.append(rpeak)
    if len(thetas) < 2 and fix_beta1 is None:
        raise ParameterError("need at least 2 groups to identify a trend")
    t = np.concatenate(thetas)
    lr = np.log(np.concatenate(rpeaks))

    def nll(b0, b1):
        return _trend_nll(b0, b1, t, lr)

    trace = []
    if start is not None:
        b0, b1 = float(start[0]), float(start[1] if fix_beta1 is None else fix_beta1)
    else:
        b0_grid = np.linspace(-8.0, 8.0, 17)
        b1_grid = np.array([fix_beta1]) if fix_beta1 is not None else np.linspace(-4.0, 4.0, 17)
        vals = [(nll(b0, b1), b0, b1) for b0 in b0_grid for b1 in b1_grid]
        best = min(vals)
        b0, b1 = best[1], best[2]
        trace.append((b0, b1, best[0]))

    span0, span1 = 2.0, 1.0
    current = nll(b0, b1)
    for _ in range(max_rounds):
        res0 = minimize_scalar(
            lambda v: nll(v, b1), bounds=(b0 - span0, b0 + span0), method="bounded",
            options={"xatol": BETA_TOL / 10.0},
        )
        new_b0 = float(res0.x)
        if fix_beta1 is None:
            res1 = minimize_scalar(
                lambda v: nll(new_b0, v), bounds=(b1 - span1, b1 + span1), method="bounded",
                options={"xatol": BETA_TOL / 10.0},
            )
            new_b1 = float(res1.x)
        else:
            new_b1 = b1
        new_val = nll(new_b0, new_b1)
        moved = max(abs(new_b0 - b0), abs(new_b1 - b1))
        at_edge0 = abs(abs(new_b0 - b0) - span0) < 1e-9
        at_edge1 = fix_beta1 is None and abs(abs(new_b1 - b1) - span1) < 1e-9
        b0, b1, current = new_b0, new_b1, new_val
        trace.append((b0, b1, current))
        if at_edge0 or at_edge1:
            span0 *= 2.0
            span1 *= 2.0
            continue
        span0 = max(span0 / 2.0, 10.0 * BETA_TOL)
        span1 = max(span1 / 2.0, 10.0 * BETA_TOL)
        if moved < BETA_TOL:
            break
    else:
        raise NonConvergenceError("trend fit did not converge", trace=trace)
    return TrendFit(beta0=b0, beta1=b1, loglik=-current)


def replication_stddev(values) -> float:
    """Bootstrap standard error: sample standard deviation over replications
    about their own mean, with the B-1 divisor."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ParameterError("need at least 2 replications")
    return float(v.std(ddof=1))


def _rank_split(values: np.ndarray, q: int) -> list[np.ndarray]:
    """Index groups of a rank-based q-quantile split (ties by position)."""
    order = np.argsort(values, kind="stable")
    n = values.size
    return [order[((g - 1) * n) // q : (g * n) // q] for g in range(1, q + 1)]


def bootstrap_trend_se(
    x,
    y,
    rpeak,
    m: int,
    n_replications: int,
    q: int,
    k_values: Sequence[int],
    seed: int,
    min_retained: int = 10,
    max_dropped_frac: float = 0.05,
) -> tuple[float, float, int]:
    """m-out-of-n bootstrap standard errors for the trend coefficients.

    Each replication resamples m sessions with replacement, re-splits them
    into q quantile groups of the resampled peak rate, redoes the
    antirank/polar/threshold pipeline per group reusing the original
    per-group k values, and refits the trend.  The standard error is the
    replication standard deviation (B-1 divisor).  Replications whose fit
    fails are dropped and counted; more than max_dropped_frac of them
    failing raises.

    Returns (se_beta0, se_beta1, dropped).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rp = np.asarray(rpeak, dtype=float)
    n = x.size
    if y.size != n or rp.size != n:
        raise ParameterError("x, y and rpeak must be equally long")
    if not 0 < m < n:
        raise ParameterError("bootstrap size m must satisfy 0 < m < n")
    if n_replications < 100:
        raise ParameterError("need at least 100 bootstrap replications")
    ks = list(k_values)
    if len(ks) != q:
        raise ParameterError("need one k per group")
    start = None
    try:
        start_fit = _fit_from_arrays(x, y, rp, q, ks, min_retained)
        start = (start_fit.beta0, start_fit.beta1)
    except (ParameterError, NonConvergenceError, DegenerateDataError):
        start = None
    b0s, b1s = [], []
    dropped = 0
    for b in range(n_replications):
        rng = derived_rng(seed, STREAM_BOOTSTRAP, b)
        idx = rng.integers(0, n, size=m)
        try:
            fit = _fit_from_arrays(x[idx], y[idx], rp[idx], q, ks, min_retained, start=start)
        except (ParameterError, NonConvergenceError, DegenerateDataError):
            dropped += 1
            continue
        b0s.append(fit.beta0)
        b1s.append(fit.beta1)
    if dropped > max_dropped_frac * n_replications:
        raise NonConvergenceError(
            f"{dropped} of {n_replications} bootstrap replications failed"
        )
    return replication_stddev(b0s), replication_stddev(b1s), dropped


def _fit_from_arrays(x, y, rp, q, ks, min_retained, start=None) -> TrendFit:
    groups = []
    for g_idx, members in enumerate(_rank_split(rp, q)):
        sample = antirank_polar(x[members], y[members], int(ks[g_idx]))
        keep = sample.retained
        if keep.sum() < min_retained:
            raise DegenerateDataError(f"group {g_idx + 1} retained too few points")
        groups.append((sample.theta[keep], rp[members][keep]))
    return fit_trend(groups, start=start)


class _LogisticCdfTable:
    """Tabulated CDF of the logistic spectral density with a monotone inverse.

    By symmetry only (0, 1/2] is tabulated: a 4,096-knot grid clustered
    geometrically toward 0 (where the density can concentrate), with fixed
    Gauss-Legendre panels between knots and the analytic power-law mass of
    the innermost sliver.  Queries and draws on (1/2, 1) are reflections.
    """

    KNOTS = 4096
    _GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
    _TOP = float(np.nextafter(1.0, 0.0))

    def __init__(self, psi: float):
        if not 0.0 < psi < 1.0:
            raise ParameterError("psi must be in (0, 1)")
        self.psi = psi
        t_min = min((1e-9) ** (psi / (1.0 - psi)), 1e-8)
        t_min = max(t_min, 1e-280)
        x = np.linspace(0.0, 1.0, self.KNOTS)
        knots = np.exp(np.log(t_min) * (1.0 - x) + math.log(0.5) * x)
        knots[-1] = 0.5
        lo, hi = knots[:-1], knots[1:]
        mid = 0.5 * (hi + lo)
        rad = 0.5 * (hi - lo)
        nodes = mid[:, None] + rad[:, None] * self._GL_NODES[None, :]
        dens = np.exp(_log_density(nodes.ravel(), psi)).reshape(nodes.shape)
        panel = (dens @ self._GL_WEIGHTS) * rad
        # mass of [0, t_min]: h(t) ~ (1/2)((1/psi) - 1) t^{1/psi - 2} there,
        # which integrates to (1/2) t_min^{(1-psi)/psi}
        edge_mass = 0.5 * t_min ** ((1.0 - psi) / psi)
        cdf = np.empty(knots.size)
        cdf[0] = edge_mass
        np.cumsum(panel, out=cdf[1:])
        cdf[1:] += edge_mass
        if abs(cdf[-1] - 0.5) > 1e-3:
            raise NonConvergenceError(
                f"half-interval CDF mass {cdf[-1]} far from 0.5 at psi={psi}"
            )
        cdf *= 0.5 / cdf[-1]
        keep = np.concatenate([[True], np.diff(cdf) > 0.0])
        self._knots = knots[keep]
        self._cdf = cdf[keep]
        self._inverse = PchipInterpolator(self._cdf, self._knots, extrapolate=False)
        self._forward = PchipInterpolator(self._knots, self._cdf, extrapolate=False)
        self._t_min = t_min

    def _half_cdf(self, t: np.ndarray) -> np.ndarray:
        return np.clip(self._forward(np.clip(t, self._knots[0], 0.5)), 0.0, 0.5)

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        low = np.minimum(t, 0.5)
        ref = np.minimum(1.0 - t, 0.5)
        out = np.where(t <= 0.5, self._half_cdf(low), 1.0 - self._half_cdf(ref))
        out = np.where(t <= 0.0, 0.0, out)
        return np.where(t >= 1.0, 1.0, out)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.random(count)
        flip = u > 0.5
        v = np.clip(np.where(flip, 1.0 - u, u), self._cdf[0], 0.5)
        t = self._inverse(v)
        out = np.where(flip, 1.0 - t, t)
        return np.clip(out, self._t_min, self._TOP)


_TABLE_CACHE: dict[float, _LogisticCdfTable] = {}


def logistic_cdf_table(psi: float) -> _LogisticCdfTable:
    table = _TABLE_CACHE.get(psi)
    if table is None:
        table = _LogisticCdfTable(psi)
        if len(_TABLE_CACHE) > 4096:
            _TABLE_CACHE.clear()
        _TABLE_CACHE[psi] = table
    return table


def sample_logistic(psi: float, count: int, seed: int) -> np.ndarray:
    """Draw angles from the logistic spectral density by tabulated inversion."""
    if count < 0:
        raise ParameterError("count must be >= 0")
    rng = derived_rng(seed, STREAM_LOGISTIC)
    return logistic_cdf_table(psi).sample(rng, count)
