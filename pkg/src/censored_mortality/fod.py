"""Fraction-of-death curves, naive estimators and the model comparison table."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .counts import DailyCounts
from .estimation import TransitionTable, Variant, estimate_transitions


def survival_before(alpha: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Probability of still being unabsorbed at the start of each day (rows), per state."""
    stay = 1.0 - np.asarray(alpha) - np.asarray(nu)
    ones = np.ones((1,) + stay.shape[1:])
    return np.concatenate([ones, np.cumprod(stay, axis=0)[:-1]], axis=0)


def scfod_matrix(tt: TransitionTable) -> np.ndarray:
    """Specific cumulative FOD for every state; row ``k`` is day ``k + 1``."""
    return np.cumsum(tt.nu * survival_before(tt.alpha, tt.nu), axis=0)


def scfod_curve(tt: TransitionTable, state) -> np.ndarray:
    s = state if isinstance(state, int) else state.index
    return scfod_matrix(tt)[:, s]


def cumulative_recovery_matrix(tt: TransitionTable) -> np.ndarray:
    return np.cumsum(tt.alpha * survival_before(tt.alpha, tt.nu), axis=0)


def cfod(tt: TransitionTable, counts: DailyCounts) -> np.ndarray:
    """H(1,s)-weighted mean of the scFOD curves."""
    if not tt.partition.same_as(counts.partition):
        raise ValueError(
            f"transition table partition {tt.partition.name!r} does not match counts partition {counts.partition.name!r}"
        )
    H0 = counts.H0.astype(float)
    if H0.sum() <= 0:
        raise ValueError("cohort is empty")
    return scfod_matrix(tt) @ H0 / H0.sum()


class NaiveMode(enum.Enum):
    AvailableCase = "available-case"
    AllTransferredAlive = "all-transferred-alive"


def naive_fod(alive: float, dead: float, unknown: float, mode: NaiveMode | str) -> float:
    mode = NaiveMode(mode) if isinstance(mode, str) else mode
    if min(alive, dead, unknown) < 0:
        raise ValueError("outcome totals must be non-negative")
    if alive + dead <= 0:
        raise ValueError("no known outcomes: alive + dead must be positive")
    if mode is NaiveMode.AvailableCase:
        return dead / (alive + dead)
    return dead / (alive + dead + unknown)


def outcome_totals(counts: DailyCounts) -> tuple[int, int, int]:
    """(alive, dead, unknown) at the horizon as seen by the registry."""
    dead = int(counts.dD.sum())
    unknown = int(counts.dL.sum())
    return int(counts.H0.sum()) - dead - unknown, dead, unknown


@dataclass(frozen=True, eq=False)
class FodReport:
    variant: Variant
    partition_name: str
    state_labels: list[str]
    scfod: np.ndarray          # (horizon, S)
    cfod: np.ndarray           # (horizon,)
    H0: float
    corrected_dead: float
    corrected_alive: float
    naive_available_case: float
    naive_all_alive: float
    observed: tuple[int, int, int]
    p_values: dict[str, float] = field(default_factory=dict)

    @property
    def corrected_fod(self) -> float:
        return float(self.cfod[-1])

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "partition": self.partition_name,
            "H0": self.H0,
            "corrected_fod": self.corrected_fod,
            "corrected_dead": self.corrected_dead,
            "corrected_alive": self.corrected_alive,
            "naive_available_case": self.naive_available_case,
            "naive_all_alive": self.naive_all_alive,
            "observed": dict(zip(("alive", "dead", "unknown"), self.observed)),
            "cfod": [float(x) for x in self.cfod],
            "scfod": {lab: [float(x) for x in self.scfod[:, s]] for s, lab in enumerate(self.state_labels)},
            "p_values": dict(self.p_values),
        }


def fod_report(counts: DailyCounts, variant: Variant | str, tt: TransitionTable | None = None) -> FodReport:
    tt = tt if tt is not None else estimate_transitions(counts, variant)
    curve = cfod(tt, counts)
    H0 = float(counts.H0.sum())
    dead = H0 * float(curve[-1])
    alive, obs_dead, unknown = outcome_totals(counts)
    return FodReport(
        variant=tt.variant,
        partition_name=counts.partition.name,
        state_labels=counts.partition.labels,
        scfod=scfod_matrix(tt),
        cfod=curve,
        H0=H0,
        corrected_dead=dead,
        corrected_alive=H0 - dead,
        naive_available_case=naive_fod(alive, obs_dead, unknown, NaiveMode.AvailableCase),
        naive_all_alive=naive_fod(alive, obs_dead, unknown, NaiveMode.AllTransferredAlive),
        observed=(alive, obs_dead, unknown),
    )


# ---------------------------------------------------------------------------
# model comparison


class ComparisonTest(enum.Enum):
    # z-test of each FOD against the reference proportion taken as known, n = H0
    OneSampleVsReference = "one-sample-vs-reference"
    # pooled two-proportion z-test, each entry on its own denominator
    PooledTwoProportion = "pooled-two-proportion"


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    alive: float
    dead: float
    fod: float
    p_value: float


@dataclass(frozen=True)
class ComparisonEntry:
    label: str
    dead: float
    total: float

    @property
    def fod(self) -> float:
        return self.dead / self.total


def two_sided_normal_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def proportion_difference_p(
    p: float, n: float, p_ref: float, n_ref: float, test: ComparisonTest = ComparisonTest.OneSampleVsReference
) -> float:
    if p == p_ref:
        return 1.0
    if test is ComparisonTest.OneSampleVsReference:
        se = math.sqrt(p_ref * (1 - p_ref) / n_ref)
    else:
        pooled = (p * n + p_ref * n_ref) / (n + n_ref)
        se = math.sqrt(pooled * (1 - pooled) * (1 / n + 1 / n_ref))
    return two_sided_normal_p((p - p_ref) / se)


def model_comparison_report(
    entries: Sequence[ComparisonEntry | tuple[str, "FodReport"]],
    reference: str,
    test: ComparisonTest | str = ComparisonTest.OneSampleVsReference,
) -> list[ComparisonRow]:
    """FOD table with the p-value of each entry's difference from ``reference``.

    Entries are :class:`ComparisonEntry` (dead out of total) or
    ``(label, FodReport)`` pairs. With the default test the reference FOD is
    treated as a known proportion on the reference entry's total.
    """
    test = ComparisonTest(test) if isinstance(test, str) else test
    norm: list[ComparisonEntry] = []
    for e in entries:
        if isinstance(e, ComparisonEntry):
            norm.append(e)
        else:
            label, rep = e
            norm.append(ComparisonEntry(label, rep.corrected_dead, rep.H0))
    ref = next((e for e in norm if e.label == reference), None)
    if ref is None:
        raise KeyError(f"reference {reference!r} not among entries")
    return [
        ComparisonRow(e.label, e.total - e.dead, e.dead, e.fod,
                      proportion_difference_p(e.fod, e.total, ref.fod, ref.total, test))
        for e in norm
    ]
