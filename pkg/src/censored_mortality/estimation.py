"""Transition coefficients, Wilson intervals and the transfer/severity independence test."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cohort import MAIN_GROUP, Cohort, CohortClass, PatientRecord, StatePartition, classify_cohort
from .counts import DailyCounts


class Variant(enum.Enum):
    """Order of the daily transfer lottery relative to the recovery/death lottery."""

    AdvancedTransfer = "advanced"
    RetardedTransfer = "retarded"


def parse_variant(v: Variant | str) -> Variant:
    if isinstance(v, Variant):
        return v
    key = v.strip().lower()
    for member in Variant:
        if key in (member.value, member.name.lower()):
            return member
    raise ValueError(f"unknown variant {v!r}")


# ---------------------------------------------------------------------------
# Wilson score interval


@dataclass(frozen=True)
class ProportionCI:
    p_hat: float
    lower: float
    upper: float
    z: float
    n: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


class WilsonForm(enum.Enum):
    # exact score interval
    Score = "score"
    # same centre, half-width without the z^2/4n^2 term; matches the registry's printed tables
    Reduced = "reduced"


def _half_extra(z2: float, n, form: WilsonForm):
    return z2 / (4 * n * n) if form is WilsonForm.Score else 0.0


def wilson_interval(p_hat: float, n: float, z: float = 1.96, form: WilsonForm = WilsonForm.Score) -> ProportionCI:
    """Wilson score interval; ``n`` may be a non-integer effective sample size."""
    if not n > 0:
        raise ValueError(f"Wilson interval needs n > 0, got {n}")
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"p_hat must lie in [0, 1], got {p_hat}")
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = p_hat + z2 / (2 * n)
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + _half_extra(z2, n, form))
    lower = max(0.0, (centre - half) / denom)
    upper = min(1.0, (centre + half) / denom)
    return ProportionCI(p_hat, lower, upper, z, n)


def wilson_bounds(
    p_hat: np.ndarray, n: np.ndarray, z: float = 1.96, form: WilsonForm = WilsonForm.Score
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Wilson bounds; cells with n == 0 get NaN."""
    p_hat = np.asarray(p_hat, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z2 = z * z
        denom = 1.0 + z2 / n
        centre = p_hat + z2 / (2 * n)
        half = z * np.sqrt(p_hat * (1 - p_hat) / n + _half_extra(z2, n, form))
        lo = np.clip((centre - half) / denom, 0.0, 1.0)
        hi = np.clip((centre + half) / denom, 0.0, 1.0)
    lo = np.where(n > 0, lo, np.nan)
    hi = np.where(n > 0, hi, np.nan)
    return lo, hi


# ---------------------------------------------------------------------------
# transition coefficients


@dataclass(frozen=True, eq=False)
class TransitionTable:
    """Daily coefficients; row ``k`` is day ``k + 1``.

    ``n_alpha_nu`` and ``n_mu`` are the denominators behind each estimate,
    used as the sample size of their Wilson intervals. ``n_eff`` is H(t,s).
    """

    variant: Variant
    partition: StatePartition
    alpha: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    n_eff: np.ndarray
    n_alpha_nu: np.ndarray
    n_mu: np.ndarray

    @property
    def horizon(self) -> int:
        return self.alpha.shape[0]

    def interval(self, coefficient: str, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
        p = getattr(self, coefficient)
        n = self.n_mu if coefficient == "mu" else self.n_alpha_nu
        return wilson_bounds(p, n, z)

    def to_rows(self, z: float = 1.96) -> list[dict]:
        bounds = {c: self.interval(c, z) for c in ("alpha", "nu", "mu")}
        rows = []
        for k in range(self.horizon):
            for s, label in enumerate(self.partition.labels):
                row = {"t": k + 1, "state_label": label, "n_eff": float(self.n_eff[k, s])}
                for c in ("alpha", "nu", "mu"):
                    lo, hi = bounds[c]
                    row[c] = float(getattr(self, c)[k, s])
                    row[f"{c}_lower"] = "" if np.isnan(lo[k, s]) else float(lo[k, s])
                    row[f"{c}_upper"] = "" if np.isnan(hi[k, s]) else float(hi[k, s])
                rows.append(row)
        return rows


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def estimate_transitions(counts: DailyCounts, variant: Variant | str) -> TransitionTable:
    variant = parse_variant(variant)
    T = counts.horizon
    H = counts.H[:T].astype(float)
    dD, dR, dL = (np.asarray(x, dtype=float) for x in (counts.dD, counts.dR, counts.dL))
    # (1 - mu) H and (1 - alpha - nu) H written as exact count differences
    if variant is Variant.AdvancedTransfer:
        mu = _ratio(dL, H)
        n_an = H - dL
        nu = _ratio(dD, n_an)
        alpha = _ratio(dR, n_an)
        n_mu = H
    else:
        nu = _ratio(dD, H)
        alpha = _ratio(dR, H)
        # all absorbed: nobody is left to transfer, mu stays 0
        n_mu = H - dD - dR
        mu = _ratio(dL, n_mu)
        n_an = H
    return TransitionTable(variant, counts.partition, alpha, nu, mu, H.copy(), n_an, n_mu)


# ---------------------------------------------------------------------------
# transfer fractions


@dataclass(frozen=True)
class TransferFractionRow:
    state: str
    out30: int
    total: int
    fraction: float
    ci: ProportionCI | None


def transfer_fraction_report(
    records: Iterable[PatientRecord] | Cohort,
    partition: StatePartition,
    horizon: int = 30,
    z: float = 1.96,
    form: WilsonForm = WilsonForm.Score,
) -> list[TransferFractionRow]:
    """Per-state share of the main group transferred out within the horizon, plus an all-states row."""
    c = records if isinstance(records, Cohort) else Cohort.from_records(records)
    c = c.select(MAIN_GROUP, horizon)
    state = classify_cohort(partition, c)
    out = np.array([cc is CohortClass.Out30 for cc in c.cohort_classes(horizon)], dtype=bool)
    S = partition.n_states
    totals = np.bincount(state, minlength=S)
    outs = np.bincount(state[out], minlength=S)
    rows = [
        _fraction_row(label, int(outs[s]), int(totals[s]), z, form) for s, label in enumerate(partition.labels)
    ]
    rows.append(_fraction_row("all", int(outs.sum()), int(totals.sum()), z, form))
    return rows


def _fraction_row(label: str, k: int, n: int, z: float, form: WilsonForm) -> TransferFractionRow:
    if n == 0:
        return TransferFractionRow(label, k, n, 0.0, None)
    return TransferFractionRow(label, k, n, k / n, wilson_interval(k / n, n, z, form))


# ---------------------------------------------------------------------------
# chi-square test of independence

_LOG_TINY = math.log(np.finfo(float).tiny)


def _log_gamma_series(a: float, x: float) -> float:
    """log P(a, x) via the power series; converges fast for x < a + 1."""
    term = total = 1.0 / a
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return math.log(total) - x + a * math.log(x) - math.lgamma(a)


def _log_gamma_cf(a: float, x: float) -> float:
    """log Q(a, x) via the Lentz continued fraction; for x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.log(h) - x + a * math.log(x) - math.lgamma(a)


def log_gamma_upper_regularized(a: float, x: float) -> float:
    """Natural log of Q(a, x) = Gamma(a, x) / Gamma(a), finite even where Q underflows."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        p = math.exp(_log_gamma_series(a, x))
        return math.log1p(-p) if p < 1.0 else -math.inf
    return _log_gamma_cf(a, x)


def chi2_logsf(statistic: float, dof: int) -> float:
    return log_gamma_upper_regularized(dof / 2.0, statistic / 2.0)


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    log10_p: float
    continuity_correction: bool = False

    @property
    def underflow(self) -> bool:
        """True when the p-value is below the smallest positive double."""
        return self.log10_p * math.log(10) < _LOG_TINY

    def p_value_text(self) -> str:
        if self.underflow:
            return f"< {np.finfo(float).tiny:.3g} (log10 p = {self.log10_p:.1f})"
        return f"{self.p_value:.6g}"


def chi_square_independence(
    table: Sequence[Sequence[float]] | np.ndarray,
    continuity_correction: bool = False,
) -> ChiSquareResult:
    """Pearson chi-square test of independence on a contingency table.

    ``continuity_correction`` applies Yates' correction and is only valid for
    2x2 tables.
    """
    obs = np.asarray(table, dtype=float)
    if obs.ndim != 2 or min(obs.shape) < 2:
        raise ValueError("contingency table must be at least 2x2")
    if (obs < 0).any():
        raise ValueError("counts must be non-negative")
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    if (rows <= 0).any() or (cols <= 0).any():
        raise ValueError("every row and column sum must be positive")
    expected = np.outer(rows, cols) / obs.sum()
    diff = np.abs(obs - expected)
    if continuity_correction:
        if obs.shape != (2, 2):
            raise ValueError("Yates correction applies to 2x2 tables only")
        diff = np.maximum(diff - 0.5, 0.0)
    stat = float((diff ** 2 / expected).sum())
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    logp = chi2_logsf(stat, dof)
    return ChiSquareResult(stat, dof, math.exp(logp), logp / math.log(10), continuity_correction)


def severity_transfer_table(
    records: Iterable[PatientRecord] | Cohort, partition: StatePartition, horizon: int = 30
) -> np.ndarray:
    """State x {stayed, transferred} table of the main group; empty states dropped."""
    c = records if isinstance(records, Cohort) else Cohort.from_records(records)
    c = c.select(MAIN_GROUP, horizon)
    state = classify_cohort(partition, c)
    out = np.array([cc is CohortClass.Out30 for cc in c.cohort_classes(horizon)], dtype=bool)
    S = partition.n_states
    table = np.column_stack([np.bincount(state[~out], minlength=S), np.bincount(state[out], minlength=S)])
    return table[table.sum(axis=1) > 0]
