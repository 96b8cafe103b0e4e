"""Packet-trace ingestion and per-session statistics.

Packets sharing an ordered (src, dst) flow key are clustered into
end-to-end sessions: a session is a maximal run of packets in which every
gap between successive packets is strictly below the configured threshold.
Each surviving session carries total payload S, duration D, mean rate
R = S/D, the window-maximal peak rate R_peak, its start time gamma, and
optionally the fixed-width-window legacy predictors (I_delta, R_delta).

Input is a normalized packet CSV with header ``ts,src,dst,bytes``; session
collections round-trip through a CSV with header
``gamma,S,D,R,R_peak,p,src,dst``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ParameterError, PeakRateUndefinedError, TraceFormatError

PACKET_HEADER = "ts,src,dst,bytes"
SESSION_HEADER = "gamma,S,D,R,R_peak,p,src,dst"
SESSION_HEADER_LEGACY = SESSION_HEADER + ",I_delta,R_delta"


class FlowKey(NamedTuple):
    """Ordered endpoint pair; direction matters."""

    src: str
    dst: str


@dataclass(frozen=True, slots=True)
class PacketRecord:
    ts: float
    src: str
    dst: str
    bytes: int

    def __post_init__(self):
        if not (math.isfinite(self.ts) and self.ts >= 0.0):
            raise TraceFormatError(f"packet ts must be finite and >= 0, got {self.ts}")
        if self.bytes < 1:
            raise TraceFormatError(f"packet bytes must be >= 1, got {self.bytes}")


@dataclass(frozen=True, slots=True)
class Session:
    """One end-to-end session and its summary statistics."""

    key: FlowKey
    gamma_start: float
    S: float
    D: float
    R: float
    R_peak: float
    p: int
    I_delta: float | None = None
    R_delta: float | None = None


@dataclass(frozen=True)
class IngestConfig:
    """Sessionization parameters.

    gap_threshold_t : split a flow wherever the interarrival is >= t;
        packets stay together only when the gap is strictly less than t.
    min_duration : sessions shorter than this are discarded.  Zero-duration
        sessions (all single-packet sessions among them) are always dropped
        because R is undefined for them.
    delta : subinterval width for the legacy predictors; required when
        compute_legacy is set.
    peak_rate_cap : guard against pathological sessions; peak-rate
        evaluation is O(p^2) and refuses sessions with more packets.
    """

    gap_threshold_t: float = 2.0
    min_duration: float = 0.1
    delta: float | None = None
    compute_legacy: bool = False
    peak_rate_cap: int = 10_000

    def __post_init__(self):
        if not self.gap_threshold_t > 0:
            raise ParameterError("gap_threshold_t must be > 0")
        if self.min_duration < 0:
            raise ParameterError("min_duration must be >= 0")
        if self.delta is not None and not self.delta > 0:
            raise ParameterError("delta must be > 0")
        if self.compute_legacy and self.delta is None:
            raise ParameterError("compute_legacy requires delta")
        if self.peak_rate_cap < 2:
            raise ParameterError("peak_rate_cap must be >= 2")


def parse_packets(stream: Iterable[str]) -> list[PacketRecord]:
    """Parse packet CSV lines into records, preserving file order.

    The first line must be the header ``ts,src,dst,bytes``.  Timestamps may
    be non-monotone; sorting happens during sessionization.  Malformed
    lines raise TraceFormatError with the 1-based line number.
    """
    records: list[PacketRecord] = []
    it = iter(stream)
    try:
        header = next(it)
    except StopIteration:
        raise TraceFormatError("empty packet file, expected header line") from None
    if header.strip() != PACKET_HEADER:
        raise TraceFormatError(
            f"line 1: expected header {PACKET_HEADER!r}, got {header.strip()!r}"
        )
    for lineno, line in enumerate(it, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise TraceFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        ts_s, src, dst, bytes_s = parts
        if not src or not dst:
            raise TraceFormatError(f"line {lineno}: empty endpoint token")
        try:
            ts = float(ts_s)
            nbytes = int(bytes_s)
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
        try:
            records.append(PacketRecord(ts=ts, src=src, dst=dst, bytes=nbytes))
        except TraceFormatError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
    return records


def _merge_zero_gaps(nbytes: np.ndarray, gaps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge packets separated by zero interarrival time (bytes summed)."""
    positive = gaps > 0
    if positive.all():
        return nbytes, gaps
    group = np.concatenate([[0], np.cumsum(positive)])
    return np.bincount(group, weights=nbytes), gaps[positive]


def peak_rate(nbytes: Sequence[float], interarrivals: Sequence[float], *, cap: int = 10_000) -> float:
    """Maximum transfer rate over all windows of >= 2 consecutive packets.

    Evaluates, over every window of k consecutive packets (k = 2..p), the
    window byte total divided by the window time span, and returns the
    overall maximum.  Packets separated by zero interarrival time are
    merged (bytes summed) first, so every window span is positive.

    Window sums accumulate left to right from each window start, so the
    result matches a direct double loop over windows bit for bit.

    Parameters
    ----------
    nbytes : per-packet byte counts, length p >= 2
    interarrivals : gaps between successive packets, length p - 1, all >= 0
    cap : refuse sessions with more than this many packets (the evaluation
        is O(p^2))
    """
    b = np.asarray(nbytes, dtype=float)
    t = np.asarray(interarrivals, dtype=float)
    if b.ndim != 1 or t.ndim != 1 or t.size != b.size - 1:
        raise ParameterError("need p byte counts and p-1 interarrivals")
    if b.size < 2:
        raise PeakRateUndefinedError("peak rate needs at least two packets")
    if (t < 0).any() or not np.isfinite(t).all():
        raise ParameterError("interarrivals must be finite and >= 0")
    b, t = _merge_zero_gaps(b, t)
    p = b.size
    if p < 2:
        raise PeakRateUndefinedError("all packets share one timestamp")
    if p > cap:
        raise ParameterError(f"session has {p} packets, exceeding peak-rate cap {cap}")
    best = -np.inf
    for a in range(p - 1):
        window_bytes = b[a] + np.cumsum(b[a + 1 :])
        window_spans = np.cumsum(t[a:])
        m = (window_bytes / window_spans).max()
        if m > best:
            best = m
    return float(best)


def legacy_predictors(
    nbytes: Sequence[float], ts: Sequence[float], delta: float
) -> tuple[float, float]:
    """Fixed-window predictors (I_delta, R_delta) of one session.

    The session is split into l = ceil(D / delta) subintervals anchored at
    the first packet.  With B_i the bytes landing in subinterval i, the
    maximum input is I_delta = max B_i.  Subinterval durations are delta
    except for the last one, T_l = D - (l - 1) delta, which makes
    R_delta = max B_i / T_i >= S / D.
    """
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    b = np.asarray(nbytes, dtype=float)
    t = np.asarray(ts, dtype=float)
    if b.size != t.size or b.size == 0:
        raise ParameterError("need matching non-empty byte and timestamp arrays")
    if (np.diff(t) < 0).any():
        order = np.argsort(t, kind="stable")
        t = t[order]
        b = b[order]
    duration = float(t[-1] - t[0])
    if not duration > 0:
        raise ParameterError("legacy predictors need a session with D > 0")
    n_sub = math.ceil(duration / delta)
    idx = np.minimum(((t - t[0]) / delta).astype(int), n_sub - 1)
    binned = np.bincount(idx, weights=b, minlength=n_sub)
    widths = np.full(n_sub, delta)
    widths[-1] = duration - (n_sub - 1) * delta
    i_delta = float(binned.max())
    r_delta = float((binned / widths).max())
    return i_delta, r_delta


def cluster_packets(
    packets: Sequence[PacketRecord], gap_threshold_t: float
) -> list[tuple[FlowKey, np.ndarray, np.ndarray]]:
    """Cluster packets into raw sessions before any duration filtering.

    Returns (flow key, timestamps, byte counts) triples covering every
    input packet exactly once.  Within a flow, packets are stably sorted
    by timestamp (input order breaks ties) and split wherever the gap to
    the next packet is >= gap_threshold_t.
    """
    if not gap_threshold_t > 0:
        raise ParameterError("gap_threshold_t must be > 0")
    flows: dict[FlowKey, tuple[list[float], list[int]]] = {}
    for rec in packets:
        key = FlowKey(rec.src, rec.dst)
        entry = flows.get(key)
        if entry is None:
            entry = ([], [])
            flows[key] = entry
        entry[0].append(rec.ts)
        entry[1].append(rec.bytes)
    clusters = []
    for key, (ts_list, b_list) in flows.items():
        ts = np.asarray(ts_list, dtype=float)
        b = np.asarray(b_list, dtype=float)
        order = np.argsort(ts, kind="stable")
        ts = ts[order]
        b = b[order]
        breaks = np.flatnonzero(np.diff(ts) >= gap_threshold_t) + 1
        for ts_c, b_c in zip(np.split(ts, breaks), np.split(b, breaks)):
            clusters.append((key, ts_c, b_c))
    return clusters


def sessionize(packets: Sequence[PacketRecord], cfg: IngestConfig | None = None) -> list[Session]:
    """Cluster packets into sessions and compute per-session statistics.

    Sessions with D < min_duration are discarded; zero-duration clusters
    (in particular every single-packet cluster) are always discarded since
    R is undefined for them.  The result is sorted by gamma_start.
    """
    if cfg is None:
        cfg = IngestConfig()
    sessions = []
    for key, ts, b in cluster_packets(packets, cfg.gap_threshold_t):
        duration = float(ts[-1] - ts[0])
        if duration <= 0.0 or duration < cfg.min_duration:
            continue
        total = float(b.sum())
        # the full-session window is one of the peak-rate candidates, but
        # its value is recomputed here from the raw timestamps so the
        # R_peak >= R invariant holds without rounding slack
        rpeak = max(peak_rate(b, np.diff(ts), cap=cfg.peak_rate_cap), total / duration)
        i_delta = r_delta = None
        if cfg.compute_legacy:
            i_delta, r_delta = legacy_predictors(b, ts, cfg.delta)
        sessions.append(
            Session(
                key=key,
                gamma_start=float(ts[0]),
                S=total,
                D=duration,
                R=total / duration,
                R_peak=rpeak,
                p=int(b.size),
                I_delta=i_delta,
                R_delta=r_delta,
            )
        )
    sessions.sort(key=lambda s: s.gamma_start)
    return sessions


def _fmt(x: float) -> str:
    # repr of a float is the shortest string that round-trips exactly,
    # which always carries at least the required 9 significant digits of
    # information.
    return repr(float(x))


def write_sessions(sessions: Sequence[Session], path) -> None:
    """Write sessions to CSV; legacy columns appear only if all rows have them."""
    with_legacy = bool(sessions) and all(s.I_delta is not None for s in sessions)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write((SESSION_HEADER_LEGACY if with_legacy else SESSION_HEADER) + "\n")
        for s in sessions:
            row = [
                _fmt(s.gamma_start),
                _fmt(s.S),
                _fmt(s.D),
                _fmt(s.R),
                _fmt(s.R_peak),
                str(s.p),
                s.key.src,
                s.key.dst,
            ]
            if with_legacy:
                row += [_fmt(s.I_delta), _fmt(s.R_delta)]
            fh.write(",".join(row) + "\n")


def read_sessions(path) -> list[Session]:
    """Read a session CSV written by write_sessions (or the CLI)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header == SESSION_HEADER:
            with_legacy = False
        elif header == SESSION_HEADER_LEGACY:
            with_legacy = True
        else:
            raise TraceFormatError(f"unexpected session header {header!r}")
        sessions = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            expected = 10 if with_legacy else 8
            if len(parts) != expected:
                raise TraceFormatError(
                    f"line {lineno}: expected {expected} fields, got {len(parts)}"
                )
            try:
                sessions.append(
                    Session(
                        key=FlowKey(parts[6], parts[7]),
                        gamma_start=float(parts[0]),
                        S=float(parts[1]),
                        D=float(parts[2]),
                        R=float(parts[3]),
                        R_peak=float(parts[4]),
                        p=int(parts[5]),
                        I_delta=float(parts[8]) if with_legacy else None,
                        R_delta=float(parts[9]) if with_legacy else None,
                    )
                )
            except ValueError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from None
    return sessions
