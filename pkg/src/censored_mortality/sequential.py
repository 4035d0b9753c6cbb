"""M-step sequential-choice day model and numerical checks of its bounds.

A day is split into M fractional steps, each a recovery/death choice followed
by a transfer choice. Whatever the split, the day's in-registry death,
recovery and transfer probabilities must fall between the advanced-transfer
and retarded-transfer values; :func:`proposition_bounds_check` measures that.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

CONSISTENCY_TOL = 1e-12


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FractionalSchedule:
    alpha_i: np.ndarray
    nu_i: np.ndarray
    mu_i: np.ndarray
    daily_alpha: float
    daily_nu: float
    daily_mu: float

    @property
    def M(self) -> int:
        return len(self.alpha_i)

    def consistency_residuals(self) -> dict[str, float]:
        """Absolute residuals of the five consistency identities."""
        stay = 1.0 - self.alpha_i - self.nu_i
        before = np.concatenate([[1.0], np.cumprod(stay)[:-1]])
        mu_before = np.concatenate([[1.0], np.cumprod(1.0 - self.mu_i)[:-1]])
        return {
            "alpha_sum": abs(float(np.sum(self.alpha_i * before)) - self.daily_alpha),
            "nu_sum": abs(float(np.sum(self.nu_i * before)) - self.daily_nu),
            "stay_product": abs(float(np.prod(stay)) - (1.0 - self.daily_alpha - self.daily_nu)),
            "mu_sum": abs(float(np.sum(self.mu_i * mu_before)) - self.daily_mu),
            "mu_product": abs(float(np.prod(1.0 - self.mu_i)) - (1.0 - self.daily_mu)),
        }

    def is_consistent(self, tol: float = CONSISTENCY_TOL) -> bool:
        return max(self.consistency_residuals().values()) <= tol


def _check_daily(alpha: float, nu: float, mu: float) -> None:
    for name, v in (("alpha", alpha), ("nu", nu), ("mu", mu)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} is not a probability")
    if alpha + nu > 1.0:
        raise ValueError(f"alpha + nu = {alpha + nu} exceeds 1")


def fractional_split(alpha: float, nu: float, mu: float, M: int) -> FractionalSchedule:
    """Uniform geometric split of daily probabilities into M consistent steps."""
    _check_daily(alpha, nu, mu)
    if M < 1:
        raise ValueError("M must be at least 1")
    absorb = alpha + nu
    if absorb > 0:
        q_i = (1.0 - absorb) ** (1.0 / M)
        step = 1.0 - q_i
        alpha_i = np.full(M, step * alpha / absorb)
        nu_i = np.full(M, step * nu / absorb)
    else:
        alpha_i = np.zeros(M)
        nu_i = np.zeros(M)
    mu_i = np.full(M, 1.0 - (1.0 - mu) ** (1.0 / M))
    if M == 1:
        alpha_i[:], nu_i[:], mu_i[:] = alpha, nu, mu
    return FractionalSchedule(alpha_i, nu_i, mu_i, alpha, nu, mu)


def manual_schedule(
    alpha_i: Sequence[float],
    nu_i: Sequence[float],
    mu_i: Sequence[float],
    tol: float = CONSISTENCY_TOL,
) -> FractionalSchedule:
    """Schedule from explicit step probabilities; daily values are derived from them."""
    a, n, m = (np.asarray(x, dtype=float) for x in (alpha_i, nu_i, mu_i))
    if not (a.shape == n.shape == m.shape) or a.ndim != 1 or len(a) == 0:
        raise ValueError("step vectors must be 1-D and of equal, non-zero length")
    if (a < 0).any() or (n < 0).any() or (m < 0).any() or (m > 1).any() or (a + n > 1).any():
        raise ValueError("step probabilities out of range")
    stay = 1.0 - a - n
    before = np.concatenate([[1.0], np.cumprod(stay)[:-1]])
    mu_before = np.concatenate([[1.0], np.cumprod(1.0 - m)[:-1]])
    return FractionalSchedule(
        a, n, m,
        float(np.sum(a * before)), float(np.sum(n * before)), float(np.sum(m * mu_before)),
    )


@dataclass(frozen=True)
class DayOutcome:
    p_death_in: float
    p_recover_in: float
    p_leave: float
    p_stay: float


def day_outcome_probabilities(sched: FractionalSchedule) -> DayOutcome:
    """In-registry death, recovery, transfer and stay probabilities for one day."""
    stay = 1.0 - sched.alpha_i - sched.nu_i
    keep = 1.0 - sched.mu_i
    # probability of being in hospital before step j (both choices survived for i < j)
    before = np.concatenate([[1.0], np.cumprod(stay * keep)[:-1]])
    return DayOutcome(
        p_death_in=float(np.sum(sched.nu_i * before)),
        p_recover_in=float(np.sum(sched.alpha_i * before)),
        p_leave=float(np.sum(sched.mu_i * stay * before)),
        p_stay=float(np.prod(stay * keep)),
    )


@dataclass
class BoundsReport:
    n_schedules: int = 0
    violations: int = 0
    max_slack_violation: float = 0.0
    max_consistency_residual: float = 0.0
    max_conservation_error: float = 0.0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def merge(self, other: "BoundsReport") -> "BoundsReport":
        return BoundsReport(
            self.n_schedules + other.n_schedules,
            self.violations + other.violations,
            max(self.max_slack_violation, other.max_slack_violation),
            max(self.max_consistency_residual, other.max_consistency_residual),
            max(self.max_conservation_error, other.max_conservation_error),
        )


def proposition_bounds_check(
    alpha: float, nu: float, mu: float, schedules: Sequence[FractionalSchedule], tol: float = CONSISTENCY_TOL
) -> BoundsReport:
    """Check nu(1-mu) <= death <= nu, alpha(1-mu) <= recovery <= alpha and
    mu(1-alpha-nu) <= transfer <= mu for every schedule.

    ``max_slack_violation`` is the largest amount by which any bound is
    exceeded (0 when all hold); a violation is counted only beyond ``tol``.
    """
    rep = BoundsReport()
    for sched in schedules:
        res = max(sched.consistency_residuals().values())
        daily = (sched.daily_alpha, sched.daily_nu, sched.daily_mu)
        if res > tol or not np.allclose(daily, (alpha, nu, mu), rtol=0, atol=tol):
            raise ScheduleError(
                f"schedule (M={sched.M}) is not consistent with alpha={alpha}, nu={nu}, mu={mu} "
                f"(residual {res:.3g})"
            )
        out = day_outcome_probabilities(sched)
        checks = (
            (nu * (1 - mu), out.p_death_in, nu),
            (alpha * (1 - mu), out.p_recover_in, alpha),
            (mu * (1 - alpha - nu), out.p_leave, mu),
        )
        worst = max(max(lo - v, v - hi, 0.0) for lo, v, hi in checks)
        total = out.p_death_in + out.p_recover_in + out.p_leave + out.p_stay
        rep.n_schedules += 1
        rep.violations += int(worst > tol)
        rep.max_slack_violation = max(rep.max_slack_violation, worst)
        rep.max_consistency_residual = max(rep.max_consistency_residual, res)
        rep.max_conservation_error = max(rep.max_conservation_error, abs(total - 1.0))
    return rep


def random_bounds_sweep(n: int = 10_000, max_M: int = 6, seed: int = 0) -> BoundsReport:
    """Random (alpha, nu, mu) with alpha + nu <= 1 and M in 1..max_M, uniform split."""
    rng = np.random.default_rng(seed)
    rep = BoundsReport()
    for _ in range(n):
        # uniform on the simplex alpha + nu <= 1
        a, b = sorted(rng.random(2))
        alpha, nu = a, b - a
        mu = float(rng.random())
        M = int(rng.integers(1, max_M + 1))
        rep = rep.merge(proposition_bounds_check(alpha, nu, mu, [fractional_split(alpha, nu, mu, M)]))
    return rep
