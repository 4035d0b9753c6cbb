"""Death-case weights for the truncated (known-outcome) dataset."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .cohort import Cohort, CohortClass, Event, PatientRecord, StatePartition, classify_cohort
from .counts import DailyCounts
from .estimation import TransitionTable, Variant


@dataclass(frozen=True, eq=False)
class WeightTable:
    """``w`` is NaN where no death was observed (no weight defined there)."""

    partition: StatePartition
    w: np.ndarray        # (horizon, S)
    H0w: np.ndarray      # (S,)
    p_d: np.ndarray      # (S,)
    p_dt: np.ndarray     # (horizon, S)
    dD_L: np.ndarray     # (horizon, S) modelled deaths after transfer
    alive_pool: np.ndarray  # H(horizon+1, s) + R(horizon, s)

    def weight(self, day: int, state: int) -> float:
        return float(self.w[day - 1, state])

    def defined_weights(self) -> np.ndarray:
        return self.w[~np.isnan(self.w)]


def transferred_deaths(tt: TransitionTable, counts: DailyCounts) -> np.ndarray:
    """Modelled daily deaths among patients already transferred out.

    The transferred compartment evolves with the in-registry alpha and nu and
    never transfers again. Under advanced transfer a patient transferred on
    day t faces day t's recovery/death lottery outside; under retarded
    transfer that lottery has already happened, so they join from day t + 1.
    """
    T = counts.horizon
    dL = counts.dL.astype(float)
    L = np.zeros(counts.partition.n_states)
    out = np.zeros((T, counts.partition.n_states))
    for k in range(T):
        stay = 1.0 - tt.alpha[k] - tt.nu[k]
        if tt.variant is Variant.AdvancedTransfer:
            pool = L + dL[k]
            out[k] = tt.nu[k] * pool
            L = pool * stay
        else:
            out[k] = tt.nu[k] * L
            L = L * stay + dL[k]
    return out


def death_weights(tt: TransitionTable, counts: DailyCounts) -> WeightTable:
    if not tt.partition.same_as(counts.partition):
        raise ValueError("transition table and counts use different partitions")
    T = counts.horizon
    H0 = counts.H0.astype(float)
    dD = counts.dD.astype(float)
    dD_L = transferred_deaths(tt, counts)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_dt = np.where(H0 > 0, (dD + dD_L) / H0, 0.0)
    p_d = p_dt.sum(axis=0)
    if np.any(p_d >= 1.0):
        bad = [counts.partition.labels[s] for s in np.flatnonzero(p_d >= 1.0)]
        raise ValueError(f"death probability is 1 in states {bad}: no alive pool to reweight against")
    alive_pool = counts.H[T].astype(float) + counts.dR.sum(axis=0)
    dead_total = (dD + dD_L).sum(axis=0)
    # H0w = alive_pool / (1 - p_d), written over integer-valued terms so that the
    # uncensored case reduces to w == 1 exactly
    with np.errstate(divide="ignore", invalid="ignore"):
        H0w = alive_pool * H0 / (H0 - dead_total)
        w = np.where(dD > 0, ((dD + dD_L) * alive_pool) / ((H0 - dead_total) * dD), np.nan)
    return WeightTable(counts.partition, w, H0w, p_d, p_dt, dD_L, alive_pool)


def effective_dof(weights: Iterable[float]) -> float:
    w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=float)
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    s2 = float(np.sum(w * w))
    if s2 == 0:
        raise ValueError("all weights are zero")
    return float(np.sum(w)) ** 2 / s2


@dataclass(frozen=True)
class WeightedRecord:
    record: PatientRecord
    weight: float


def record_weights(
    records: Iterable[PatientRecord] | Cohort,
    weights: WeightTable,
    horizon: int | None = None,
) -> np.ndarray:
    """Weight per record of a known-outcome cohort; 1 except for deaths within the horizon."""
    c = records if isinstance(records, Cohort) else Cohort.from_records(records)
    T = weights.w.shape[0] if horizon is None else horizon
    cc = c.cohort_classes(T)
    if len(c) and any(x is not CohortClass.AvailableW30D for x in cc):
        raise ValueError("weights apply to the known-outcome (AvailableW30D) cohort only")
    out = np.ones(len(c))
    death = (c.event == Event.Death) & (c.event_day <= T)
    if death.any():
        state = classify_cohort(weights.partition, c)
        w = weights.w[c.event_day[death] - 1, state[death]]
        if np.isnan(w).any():
            raise ValueError("death record at a (day, state) cell with no weight: counts and records disagree")
        out[death] = w
    return out


def emit_weighted_dataset(
    records: Iterable[PatientRecord] | Cohort, weights: WeightTable, horizon: int | None = None
) -> Iterator[WeightedRecord]:
    c = records if isinstance(records, Cohort) else Cohort.from_records(records)
    w = record_weights(c, weights, horizon)
    for rec, wi in zip(c.records(), w):
        yield WeightedRecord(rec, float(wi))
