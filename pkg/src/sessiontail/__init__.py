"""Session-level heavy-tail and extremal-dependence analysis of packet traces."""

from .errors import (
    DegenerateDataError,
    NonConvergenceError,
    ParameterError,
    PeakRateUndefinedError,
    SessionTailError,
    TraceFormatError,
)
from .ingest import (
    FlowKey,
    IngestConfig,
    PacketRecord,
    Session,
    cluster_packets,
    legacy_predictors,
    parse_packets,
    peak_rate,
    read_sessions,
    sessionize,
    write_sessions,
)
from .segmentation import SessionGroup, split_by_quantiles
from .tailstats import (
    EvTestCurve,
    GpdFit,
    HillCurve,
    McConfig,
    ev_condition_test,
    ev_statistic,
    gpd_fit_excesses,
    gpd_quantile,
    hill,
    hill_curve,
    simulate_ev_limit,
    weibull_alternative_test,
)
from .spectral import (
    AngularSample,
    LogisticFit,
    TrendFit,
    antirank_polar,
    bootstrap_trend_se,
    fit_trend,
    half_logit,
    logistic_density,
    logistic_mle,
    sample_logistic,
)
from .cev import HillishCurve, hillish, hillish_curve
from .poisson import PoissonDiagnostics, acf_test, diagnose, exp_qq, interarrivals
from .simulate import MarginalTables, SimulationSpec, simulate_sessions, spec_from_json

__version__ = "0.1.0"

__all__ = [
    "AngularSample",
    "DegenerateDataError",
    "EvTestCurve",
    "FlowKey",
    "GpdFit",
    "HillCurve",
    "HillishCurve",
    "IngestConfig",
    "LogisticFit",
    "MarginalTables",
    "McConfig",
    "NonConvergenceError",
    "PacketRecord",
    "ParameterError",
    "PeakRateUndefinedError",
    "PoissonDiagnostics",
    "Session",
    "SessionGroup",
    "SessionTailError",
    "SimulationSpec",
    "TraceFormatError",
    "TrendFit",
    "acf_test",
    "antirank_polar",
    "bootstrap_trend_se",
    "cluster_packets",
    "diagnose",
    "ev_condition_test",
    "ev_statistic",
    "exp_qq",
    "fit_trend",
    "gpd_fit_excesses",
    "gpd_quantile",
    "half_logit",
    "hill",
    "hill_curve",
    "hillish",
    "hillish_curve",
    "interarrivals",
    "legacy_predictors",
    "logistic_density",
    "logistic_mle",
    "parse_packets",
    "peak_rate",
    "read_sessions",
    "sample_logistic",
    "sessionize",
    "simulate_ev_limit",
    "simulate_sessions",
    "spec_from_json",
    "split_by_quantiles",
    "weibull_alternative_test",
    "write_sessions",
]
