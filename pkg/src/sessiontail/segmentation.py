"""Quantile segmentation of a session collection.

Sessions are split into q groups of approximately equal size by the
empirical quantiles of a chosen predictor: the peak rate R_peak by
default, or one of the legacy predictors for comparison runs.  Group g
holds the sessions whose predictor rank falls in ((g-1) n/q, g n/q].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ParameterError
from .ingest import Session

PREDICTORS = ("peak", "maxinput", "deltapeak")


def predictor_value(session: Session, predictor: str) -> float:
    if predictor == "peak":
        return session.R_peak
    if predictor == "maxinput":
        if session.I_delta is None:
            raise ParameterError("session lacks I_delta; ingest with a delta")
        return session.I_delta
    if predictor == "deltapeak":
        if session.R_delta is None:
            raise ParameterError("session lacks R_delta; ingest with a delta")
        return session.R_delta
    raise ParameterError(f"unknown predictor {predictor!r}; expected one of {PREDICTORS}")


@dataclass(frozen=True)
class SessionGroup:
    """One quantile segment; an immutable snapshot of its sessions."""

    index: int                         # 1-based group number
    quantile_range: tuple[float, float]  # (lo, hi] as fractions of the sample
    sessions: tuple[Session, ...]
    predictor: str

    def __len__(self) -> int:
        return len(self.sessions)


def split_by_quantiles(
    sessions: Sequence[Session], q: int, predictor: str = "peak"
) -> list[SessionGroup]:
    """Rank-split sessions into q groups by a predictor.

    Rank-based splitting (equal counts, ties broken by gamma_start then
    input order) is used instead of value cutpoints so group sizes stay
    balanced even with heavily tied predictors.
    """
    n = len(sessions)
    if q < 2:
        raise ParameterError("q must be >= 2")
    if n == 0:
        raise ParameterError("no sessions to segment")
    if q > n:
        raise ParameterError(f"q={q} exceeds the number of sessions ({n})")
    values = [predictor_value(s, predictor) for s in sessions]
    order = sorted(range(n), key=lambda i: (values[i], sessions[i].gamma_start, i))
    groups = []
    for g in range(1, q + 1):
        lo = ((g - 1) * n) // q
        hi = (g * n) // q
        members = tuple(sessions[i] for i in order[lo:hi])
        groups.append(
            SessionGroup(
                index=g,
                quantile_range=((g - 1) / q, g / q),
                sessions=members,
                predictor=predictor,
            )
        )
    return groups
