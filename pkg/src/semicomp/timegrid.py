"""Discretization of semi-competing risks records onto a partition of time.

A subject observed from entry ``L`` until ``T2~`` is turned into a sequence
of interval cells ``(y1_prev, y2_prev) -> (y1, y2)`` for the intervals
``(tau_{k-1}, tau_k]`` it contributes to.  Interval indices are 1-based to
match the usual ``k = 1..K`` labelling of the grid.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

CENSOR_MODES = ("drop_partial", "round_up")


@dataclass(frozen=True)
class Partition:
    """Ordered cut-points ``tau_0 < ... < tau_K``."""

    cuts: tuple

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        if len(cuts) < 3:
            raise ConfigurationError("partition needs at least K=2 intervals")
        if any(not np.isfinite(c) for c in cuts):
            raise ConfigurationError("partition cut-points must be finite")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ConfigurationError("partition cut-points must be strictly increasing")
        object.__setattr__(self, "cuts", cuts)

    @classmethod
    def regular(cls, origin: float, width: float, count: int) -> "Partition":
        """Equal-width partition of ``count`` intervals starting at ``origin``."""
        if width <= 0 or count < 2:
            raise ConfigurationError("regular partition needs width > 0 and count >= 2")
        return cls(tuple(origin + width * i for i in range(count + 1)))

    @property
    def K(self) -> int:
        return len(self.cuts) - 1

    @property
    def origin(self) -> float:
        return self.cuts[0]

    @property
    def end(self) -> float:
        return self.cuts[-1]

    def interval(self, k: int) -> tuple:
        """Bounds ``(tau_{k-1}, tau_k)`` of the 1-based interval ``k``."""
        if not 1 <= k <= self.K:
            raise IndexError(f"interval index {k} outside 1..{self.K}")
        return self.cuts[k - 1], self.cuts[k]

    def interval_of(self, t: float) -> int:
        """Index ``k`` with ``tau_{k-1} < t <= tau_k`` (closed on the right)."""
        if not self.cuts[0] < t <= self.cuts[-1]:
            raise DomainError(f"time {t} outside ({self.cuts[0]}, {self.cuts[-1]}]")
        return bisect.bisect_left(self.cuts, t)

    def refine(self) -> "Partition":
        """Partition with every interval halved."""
        cuts = np.asarray(self.cuts)
        mids = (cuts[:-1] + cuts[1:]) / 2
        return Partition(tuple(np.sort(np.concatenate([cuts, mids]))))


@dataclass(frozen=True)
class SubjectRecord:
    """Raw observed data ``(L, T1~, d1, T2~, d2)`` plus covariates.

    ``time_varying`` maps a 1-based interval index to covariate values
    measured at the start of that interval.
    """

    id: str
    entry: float
    t1_obs: float
    d1: int
    t2_obs: float
    d2: int
    baseline_covariates: Mapping[str, float] = field(default_factory=dict)
    time_varying: Optional[Mapping[int, Mapping[str, float]]] = None

    def __post_init__(self):
        if self.d1 not in (0, 1) or self.d2 not in (0, 1):
            raise DomainError(f"subject {self.id}: event indicators must be 0/1")
        if not self.entry <= self.t1_obs <= self.t2_obs:
            raise DomainError(
                f"subject {self.id}: need entry <= t1 <= t2, got "
                f"{self.entry}, {self.t1_obs}, {self.t2_obs}"
            )
        if self.d1 == 1 and self.t1_obs <= self.entry:
            raise DomainError(f"subject {self.id}: non-terminal event at or before entry")
        if self.d2 == 1 and self.t2_obs <= self.entry:
            raise DomainError(f"subject {self.id}: terminal event at or before entry")

    def covariates_at(self, k: int) -> dict:
        """Covariate values attached to interval ``k``.

        Time-varying values are carried forward from the most recent
        interval at or before ``k``; names never measured fall back to the
        baseline value.
        """
        out = dict(self.baseline_covariates)
        if self.time_varying:
            for j in sorted(self.time_varying):
                if j > k:
                    break
                out.update(self.time_varying[j])
        return out


@dataclass(frozen=True)
class IntervalObservation:
    k: int
    y1_prev: int
    y2_prev: int
    y1: int
    y2: int
    covariates: Mapping[str, float]

    @property
    def state_prev(self) -> tuple:
        return (self.y1_prev, self.y2_prev)

    @property
    def state(self) -> tuple:
        return (self.y1, self.y2)


@dataclass(frozen=True)
class SubjectPath:
    id: str
    k_entry: int
    k_exit: int
    observations: tuple

    @property
    def empty(self) -> bool:
        """True when the subject contributes no full interval."""
        return len(self.observations) == 0


def clip_to_partition(record: SubjectRecord, partition: Partition) -> SubjectRecord:
    """Administratively censor follow-up beyond ``tau_K``."""
    end = partition.end
    if record.t2_obs <= end:
        return record
    t1, d1 = record.t1_obs, record.d1
    if t1 > end or (d1 == 0):
        t1, d1 = end, 0
    return replace(record, t1_obs=t1, d1=d1, t2_obs=end, d2=0)


def discretize(
    record: SubjectRecord,
    partition: Partition,
    censor_mode: str = "drop_partial",
) -> SubjectPath:
    """Represent one subject as a bivariate binary process on ``partition``.

    Parameters
    ----------
    record : SubjectRecord
    partition : Partition
    censor_mode : {"drop_partial", "round_up"}
        How a censored subject's last, partially observed interval is
        treated.  ``drop_partial`` keeps only intervals observed in full;
        ``round_up`` keeps the interval containing the censoring time and
        scores it as event-free for any event not observed.

    Returns
    -------
    SubjectPath
        Empty (``k_exit < k_entry``) when no interval qualifies.
    """
    if censor_mode not in CENSOR_MODES:
        raise ConfigurationError(f"unknown censor_mode {censor_mode!r}")
    cuts = partition.cuts
    if record.entry < cuts[0]:
        raise DomainError("entry precedes partition origin")
    if record.t2_obs > cuts[-1]:
        raise DomainError("event beyond partition")

    k_entry = bisect.bisect_right(cuts, record.entry)
    if record.d2 == 1 or censor_mode == "round_up":
        k_exit = bisect.bisect_left(cuts, record.t2_obs)
    else:
        k_exit = bisect.bisect_right(cuts, record.t2_obs) - 1

    def status(k):
        if k < k_entry:
            return 0, 0
        tk = cuts[k]
        y1 = int(record.d1 == 1 and record.t1_obs <= tk)
        y2 = int(record.d2 == 1 and record.t2_obs <= tk)
        return y1, y2

    obs = []
    for k in range(k_entry, k_exit + 1):
        y1p, y2p = status(k - 1)
        y1, y2 = status(k)
        obs.append(IntervalObservation(k, y1p, y2p, y1, y2, record.covariates_at(k)))
    return SubjectPath(record.id, k_entry, k_exit, tuple(obs))


def discretize_all(
    records: Sequence[SubjectRecord],
    partition: Partition,
    censor_mode: str = "drop_partial",
    clip: bool = True,
) -> list:
    """Discretize a cohort, applying administrative clipping first."""
    paths = []
    for rec in records:
        if clip:
            rec = clip_to_partition(rec, partition)
        paths.append(discretize(rec, partition, censor_mode))
    return paths
