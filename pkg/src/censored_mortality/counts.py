"""Per-(day, state) counts of in-hospital patients and terminal events.

Arrays are 0-based: row ``k`` of ``dD``/``dR``/``dL`` is day ``k + 1``, and
``H`` carries one extra row so ``H[horizon]`` is H(horizon + 1, s).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .cohort import (
    MAIN_GROUP,
    Cohort,
    CohortClass,
    Event,
    PatientRecord,
    StatePartition,
    classify_cohort,
)


@dataclass(frozen=True, eq=False)
class DailyCounts:
    partition: StatePartition
    horizon: int
    H: np.ndarray   # (horizon + 1, S)
    dD: np.ndarray  # (horizon, S)
    dR: np.ndarray
    dL: np.ndarray
    # arrivals per day for inflow cohorts; None for fixed-arrival cohorts
    L_in: np.ndarray | None = None

    def __post_init__(self):
        S = self.partition.n_states
        if self.H.shape != (self.horizon + 1, S):
            raise ValueError(f"H has shape {self.H.shape}, expected {(self.horizon + 1, S)}")
        for name in ("dD", "dR", "dL") + (("L_in",) if self.L_in is not None else ()):
            if getattr(self, name).shape != (self.horizon, S):
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {(self.horizon, S)}")

    @property
    def H0(self) -> np.ndarray:
        """H(1, s): patients present on the first day, per state."""
        return self.H[0]

    @property
    def total(self) -> float:
        return float(self.H[0].sum())

    def dead(self) -> np.ndarray:
        return self.dD.sum(axis=0)

    def recovered(self) -> np.ndarray:
        return self.dR.sum(axis=0)

    def transferred(self) -> np.ndarray:
        return self.dL.sum(axis=0)

    def __add__(self, other: "DailyCounts") -> "DailyCounts":
        """Elementwise merge of two shards over disjoint record sets."""
        if not self.partition.same_as(other.partition) or self.horizon != other.horizon:
            raise ValueError("cannot merge counts over different partitions or horizons")
        if (self.L_in is None) != (other.L_in is None):
            raise ValueError("cannot merge inflow and fixed-arrival counts")
        return DailyCounts(
            self.partition, self.horizon,
            self.H + other.H, self.dD + other.dD, self.dR + other.dR, self.dL + other.dL,
            None if self.L_in is None else self.L_in + other.L_in,
        )

    def to_rows(self) -> list[dict]:
        rows = []
        for k in range(self.horizon + 1):
            for s, label in enumerate(self.partition.labels):
                row = {"t": k + 1, "state_label": label, "H": int(self.H[k, s])}
                if k < self.horizon:
                    row.update(dD=int(self.dD[k, s]), dR=int(self.dR[k, s]), dL=int(self.dL[k, s]))
                else:
                    row.update(dD="", dR="", dL="")
                rows.append(row)
        return rows


@dataclass(frozen=True, eq=False)
class FluxCounts:
    L_in: np.ndarray   # (horizon, S); row k is day k + 1
    L_out: np.ndarray
    counts: DailyCounts

    @property
    def horizon(self) -> int:
        return self.counts.horizon

    @property
    def partition(self) -> StatePartition:
        return self.counts.partition

    def to_rows(self) -> list[dict]:
        rows = []
        for k in range(self.horizon):
            for s, label in enumerate(self.partition.labels):
                rows.append({
                    "t": k + 1, "state_label": label,
                    "H": int(self.counts.H[k, s]), "dD": int(self.counts.dD[k, s]),
                    "dR": int(self.counts.dR[k, s]), "dL": int(self.counts.dL[k, s]),
                    "L_in": int(self.L_in[k, s]), "L_out": int(self.L_out[k, s]),
                })
        return rows


def _as_cohort(records: Iterable[PatientRecord] | Cohort) -> Cohort:
    return records if isinstance(records, Cohort) else Cohort.from_records(records)


def _bincount2(day0: np.ndarray, state: np.ndarray, rows: int, S: int) -> np.ndarray:
    flat = np.bincount(day0 * S + state, minlength=rows * S)
    return flat[: rows * S].reshape(rows, S).astype(np.int64)


def _event_matrices(c: Cohort, state: np.ndarray, horizon: int, S: int):
    within = c.event_day <= horizon
    out = []
    for ev in (Event.Death, Event.Recovery, Event.TransferOut):
        m = within & (c.event == ev)
        out.append(_bincount2(c.event_day[m] - 1, state[m], horizon, S))
    return out


def aggregate_counts(
    records: Iterable[PatientRecord] | Cohort,
    partition: StatePartition,
    cohort_filter: Iterable[CohortClass] = MAIN_GROUP,
    horizon: int = 30,
) -> DailyCounts:
    """Daily counts for the fixed-arrival part (arrival day <= 1) of the filtered records."""
    c = _as_cohort(records).select(cohort_filter, horizon)
    c = c.take(c.arrival_day <= 1)
    S = partition.n_states
    state = classify_cohort(partition, c)
    dD, dR, dL = _event_matrices(c, state, horizon, S)
    H = np.zeros((horizon + 1, S), dtype=np.int64)
    H[0] = np.bincount(state, minlength=S)
    H[1:] = H[0] - np.cumsum(dD + dR + dL, axis=0)
    return DailyCounts(partition, horizon, H, dD, dR, dL)


def flux_counts(
    records: Iterable[PatientRecord] | Cohort,
    partition: StatePartition,
    horizon: int = 30,
) -> FluxCounts:
    """Arrival/transfer fluxes and presence counts of an inflow (In30) cohort."""
    c = _as_cohort(records)
    c = c.take((c.arrival_day > 1) & (c.arrival_day <= horizon))
    S = partition.n_states
    state = classify_cohort(partition, c)
    L_in = _bincount2(c.arrival_day - 1, state, horizon, S)
    dD, dR, dL = _event_matrices(c, state, horizon, S)
    H = np.zeros((horizon + 1, S), dtype=np.int64)
    # H(t) = arrived by day t minus those absorbed before day t
    arrived = np.cumsum(L_in, axis=0)
    gone = np.vstack([np.zeros((1, S), dtype=np.int64), np.cumsum(dD + dR + dL, axis=0)])
    H[:horizon] = arrived - gone[:horizon]
    H[horizon] = arrived[-1] - gone[horizon] if horizon else 0
    counts = DailyCounts(partition, horizon, H, dD, dR, dL, L_in=L_in)
    return FluxCounts(L_in=L_in, L_out=dL.copy(), counts=counts)


@dataclass(frozen=True)
class BalanceViolation:
    t: int
    state: str
    lhs: int
    rhs: int


def check_balance(counts: DailyCounts) -> list[BalanceViolation]:
    """Cells where H(t+1,s) = H(t,s) - dD - dR - dL (+ arrivals on t+1) fails."""
    H, T = counts.H, counts.horizon
    rhs = H[:T] - counts.dD - counts.dR - counts.dL
    if counts.L_in is not None:
        rhs = rhs.copy()
        rhs[:-1] += counts.L_in[1:]
    lhs = H[1:]
    bad = np.argwhere(lhs != rhs)
    labels = counts.partition.labels
    return [BalanceViolation(int(k) + 1, labels[s], int(lhs[k, s]), int(rhs[k, s])) for k, s in bad]
