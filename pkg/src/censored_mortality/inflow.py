"""Projected outcomes of an inflow cohort from coefficients fitted elsewhere."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .counts import FluxCounts
from .estimation import ProportionCI, TransitionTable, Variant, WilsonForm, parse_variant, wilson_interval

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InflowProjection:
    """Rows are t = 0..horizon; row 0 is the zero initial condition."""

    variant: Variant
    state_labels: list[str]
    h: np.ndarray
    R: np.ndarray
    D: np.ndarray
    total: float
    clamped_cells: int = 0

    @property
    def dead_proj(self) -> float:
        return float(self.D[-1].sum())

    @property
    def alive_proj(self) -> float:
        return self.total - self.dead_proj


def project_inflow(
    tt: TransitionTable, flux: FluxCounts, variant: Variant | str | None = None
) -> InflowProjection:
    """Run the advanced- or retarded-transfer recurrences over the observed fluxes."""
    variant = tt.variant if variant is None else parse_variant(variant)
    if variant is not tt.variant:
        raise ValueError(f"variant {variant.value} does not match the transition table ({tt.variant.value})")
    if not tt.partition.same_as(flux.partition):
        raise ValueError("transition table and flux counts use different partitions")
    T = flux.horizon
    if tt.horizon < T:
        raise ValueError(f"transition table covers {tt.horizon} days, flux needs {T}")
    S = flux.partition.n_states
    h = np.zeros((T + 1, S))
    R = np.zeros((T + 1, S))
    D = np.zeros((T + 1, S))
    L_in = flux.L_in.astype(float)
    L_out = flux.L_out.astype(float)
    clamped = 0
    for t in range(T):
        a, v = tt.alpha[t], tt.nu[t]
        net = L_in[t] - L_out[t]
        if variant is Variant.AdvancedTransfer:
            pool = h[t] + net
            bad = pool < 0
            if bad.any():
                clamped += int(bad.sum())
                log.warning("negative in-hospital mass on day %d clamped to 0 (states %s)", t + 1,
                            [flux.partition.labels[s] for s in np.flatnonzero(bad)])
                pool = np.where(bad, 0.0, pool)
            h[t + 1] = pool * (1 - a - v)
            R[t + 1] = R[t] + a * pool
            D[t + 1] = D[t] + v * pool
        else:
            nxt = h[t] * (1 - a - v) + net
            bad = nxt < 0
            if bad.any():
                clamped += int(bad.sum())
                log.warning("negative in-hospital mass on day %d clamped to 0 (states %s)", t + 1,
                            [flux.partition.labels[s] for s in np.flatnonzero(bad)])
                nxt = np.where(bad, 0.0, nxt)
            h[t + 1] = nxt
            R[t + 1] = R[t] + a * h[t]
            D[t + 1] = D[t] + v * h[t]
    return InflowProjection(variant, flux.partition.labels, h, R, D, float(L_in.sum()), clamped)


@dataclass(frozen=True)
class ValidationRow:
    label: str
    alive_proj: float
    dead_proj: float
    total: float
    fod_proj: float
    ci: ProportionCI
    empirical_fod: float
    empirical_ci: ProportionCI

    @property
    def overlap(self) -> bool:
        return self.ci.lower <= self.empirical_ci.upper and self.empirical_ci.lower <= self.ci.upper

    def to_dict(self) -> dict:
        return {
            "model": self.label, "alive": self.alive_proj, "dead": self.dead_proj, "total": self.total,
            "fod": self.fod_proj, "ci_lower": self.ci.lower, "ci_upper": self.ci.upper,
            "empirical_fod": self.empirical_fod, "empirical_ci_lower": self.empirical_ci.lower,
            "empirical_ci_upper": self.empirical_ci.upper, "ci_overlap": self.overlap,
        }


def validation_report(
    proj: InflowProjection | tuple[float, float, float],
    empirical: tuple[float, float, float],
    label: str = "",
    z: float = 1.96,
    form: WilsonForm = WilsonForm.Score,
) -> ValidationRow:
    """Compare a projection (or an (alive, dead, total) triple) with empirical outcomes."""
    if isinstance(proj, InflowProjection):
        alive, dead, total = proj.alive_proj, proj.dead_proj, proj.total
        label = label or f"{proj.variant.value}"
    else:
        alive, dead, total = proj
    e_alive, e_dead, e_total = empirical
    if abs(total - e_total) > 1e-9 * max(1.0, e_total):
        raise ValueError(f"projection total {total} differs from empirical total {e_total}")
    if total <= 0:
        raise ValueError("empty inflow cohort")
    fod = dead / total
    e_fod = e_dead / e_total
    return ValidationRow(label, alive, dead, total, fod, wilson_interval(fod, total, z, form),
                         e_fod, wilson_interval(e_fod, e_total, z, form))
