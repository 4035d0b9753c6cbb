"""Stratified mortality: daily mortality coefficient, FOD by age and by severity profile."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cohort import Event
from .estimation import TransitionTable
from .fod import survival_before


def daily_mortality_curve(
    tt: TransitionTable,
    states: Iterable[int],
    initial_sizes: Sequence[float] | np.ndarray | None = None,
) -> np.ndarray:
    """Probability of dying on day t given survival through day t - 1, for a group of states.

    Each state's nu is weighted by its modelled unabsorbed mass on day t
    (initial size times survival so far). ``initial_sizes`` is indexed by
    state and defaults to equal sizes.
    """
    idx = sorted({int(s) for s in states})
    if not idx:
        raise ValueError("empty stratum")
    size = np.ones(tt.partition.n_states) if initial_sizes is None else np.asarray(initial_sizes, dtype=float)
    if len(idx) == 1 and size[idx[0]] > 0:
        return tt.nu[:, idx[0]].astype(float)
    mass = survival_before(tt.alpha, tt.nu)[:, idx] * size[idx]
    num = (tt.nu[:, idx] * mass).sum(axis=1)
    den = mass.sum(axis=1)
    out = np.zeros(tt.horizon)
    np.divide(num, den, out=out, where=den > 0)
    return out


def moving_average(curve: Sequence[float], window: int = 5, start_day: int = 3) -> np.ndarray:
    """Centred box filter from ``start_day`` (1-based) on; earlier days pass through.

    The window is truncated where it would run past either end of the series.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    x = np.asarray(curve, dtype=float)
    out = x.copy()
    half = window // 2
    n = len(x)
    for k in range(max(start_day - 1, 0), n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        out[k] = x[lo:hi].mean()
    return out


# ---------------------------------------------------------------------------
# combined severities


@dataclass(frozen=True, order=True)
class SeverityTriple:
    s1: int
    s2: int = 0
    s3: int = 0

    def __post_init__(self):
        if not (1 <= self.s1 <= 6 and 0 <= self.s3 <= self.s2 <= self.s1):
            raise ValueError(f"severities must satisfy 6 >= s1 >= s2 >= s3 >= 0, s1 >= 1; got {self}")

    @property
    def niss(self) -> int:
        return self.s1 ** 2 + self.s2 ** 2 + self.s3 ** 2


@dataclass(frozen=True, eq=False)
class SeverityPairTable:
    s1: int
    fod: np.ndarray      # (s1 + 1, s1 + 1) indexed [s2, s3]; NaN where empty
    weight: np.ndarray   # summed case weights per cell
    cases: np.ndarray    # unweighted case counts

    @property
    def empty(self) -> np.ndarray:
        return self.cases == 0

    def cells(self) -> list[tuple[int, int, float, float]]:
        """Populated cells as (s2, s3, fod, weight), ready for :func:`smoothed_fod_fit`."""
        return [
            (s2, s3, float(self.fod[s2, s3]), float(self.weight[s2, s3]))
            for s2 in range(self.s1 + 1) for s3 in range(s2 + 1) if self.cases[s2, s3] > 0
        ]


def severity_pair_fod(
    cases: Iterable[tuple[SeverityTriple, bool, float]], s1: int
) -> SeverityPairTable:
    """Weighted FOD per (s2, s3) for a fixed maximal severity ``s1``.

    ``cases`` yields (severities, died, weight).
    """
    k = s1 + 1
    dead = np.zeros((k, k))
    wsum = np.zeros((k, k))
    n = np.zeros((k, k), dtype=np.int64)
    for tri, died, w in cases:
        if tri.s1 != s1:
            continue
        wsum[tri.s2, tri.s3] += w
        n[tri.s2, tri.s3] += 1
        if died:
            dead[tri.s2, tri.s3] += w
    fod = np.full((k, k), np.nan)
    np.divide(dead, wsum, out=fod, where=wsum > 0)
    return SeverityPairTable(s1, fod, wsum, n)


@dataclass(frozen=True)
class QuadraticFit:
    s1: int
    names: tuple[str, ...]
    coef: np.ndarray
    residual: float  # weighted residual sum of squares

    @property
    def coarse(self) -> bool:
        return len(self.coef) == 3

    def as_dict(self) -> dict:
        return {"s1": self.s1, **{n: float(c) for n, c in zip(self.names, self.coef)}, "wrss": self.residual}

    def predict(self, s2, s3=0) -> np.ndarray:
        return design_row(self.s1, np.asarray(s2), np.asarray(s3)) @ self.coef


FINE_NAMES = ("intercept", "c_s2", "c_s3", "c_s2sq", "c_s3sq")
COARSE_NAMES = ("intercept", "c_shat", "c_shatsq")


def coarse_s2(s2: np.ndarray) -> np.ndarray:
    """0-2 -> 0, 3-4 -> 1, 5-6 -> 2."""
    return np.digitize(np.asarray(s2), [3, 5])


def design_row(s1: int, s2: np.ndarray, s3: np.ndarray) -> np.ndarray:
    s2 = np.asarray(s2, dtype=float)
    s3 = np.asarray(s3, dtype=float)
    if s1 == 6:
        sh = coarse_s2(s2).astype(float)
        return np.stack([np.ones_like(sh), sh, sh ** 2], axis=-1)
    return np.stack([np.ones_like(s2), s2, s3, s2 ** 2, s3 ** 2], axis=-1)


class RankDeficientError(ValueError):
    pass


def smoothed_fod_fit(cells: Sequence[tuple[int, int, float, float]], s1: int) -> QuadraticFit:
    """Weighted least squares of FOD on (1, s2, s3, s2^2, s3^2).

    For ``s1 == 6`` the fit is on (1, s^, s^^2) with s^ the three-bin coarse
    grain of s2.
    """
    arr = np.asarray(cells, dtype=float).reshape(-1, 4)
    s2, s3, y, w = arr.T
    if (w < 0).any():
        raise ValueError("cell weights must be non-negative")
    X = design_row(s1, s2, s3)
    names = COARSE_NAMES if s1 == 6 else FINE_NAMES
    keys = set(zip(coarse_s2(s2), np.zeros_like(s2))) if s1 == 6 else set(zip(s2, s3))
    need = len(names)
    if len(keys) < need:
        raise RankDeficientError(f"need at least {need} distinct cells for s1={s1}, got {len(keys)}")
    sw = np.sqrt(w)
    Xw, yw = X * sw[:, None], y * sw
    rank = np.linalg.matrix_rank(Xw)
    if rank < need:
        raise RankDeficientError(
            f"design matrix for s1={s1} has rank {rank} < {need}; the cells do not separate {', '.join(names)}"
        )
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = float(np.sum(w * (y - X @ coef) ** 2))
    return QuadraticFit(s1, names, coef, resid)


# ---------------------------------------------------------------------------
# FOD against age


@dataclass(frozen=True)
class AgeFit:
    bins: np.ndarray        # left edge of each populated bin
    centres: np.ndarray
    fod: np.ndarray
    weight: np.ndarray
    breakpoint: float
    fod_at_break: float
    slope_before: float
    slope_after: float
    residual: float
    degenerate: bool


def fod_by_age(
    ages: Sequence[float],
    died: Sequence[bool],
    weights: Sequence[float] | None = None,
    age_bin_width: float = 1.0,
    adult_range: tuple[float, float] = (18.0, 100.0),
    min_bins: int = 4,
    flat_tol: float = 1e-9,
) -> AgeFit:
    """Weighted FOD per age bin and a continuous two-segment linear fit.

    The breakpoint is the integer age in the adult range minimising the
    weighted residual, with at least ``min_bins`` populated bins on each side.
    ``degenerate`` is set when both slopes vanish (the breakpoint is then
    meaningless).
    """
    a = np.asarray(ages, dtype=float)
    d = np.asarray(died, dtype=float)
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float)
    lo, hi = adult_range
    keep = (a >= lo) & (a < hi)
    a, d, w = a[keep], d[keep], w[keep]
    b = np.floor((a - lo) / age_bin_width).astype(np.int64)
    nb = int(np.ceil((hi - lo) / age_bin_width))
    wsum = np.bincount(b, weights=w, minlength=nb)
    dsum = np.bincount(b, weights=w * d, minlength=nb)
    pop = wsum > 0
    left = lo + np.arange(nb)[pop] * age_bin_width
    x = left + age_bin_width / 2
    y = dsum[pop] / wsum[pop]
    bw = wsum[pop]

    best = None
    for k in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
        if (x < k).sum() < min_bins or (x >= k).sum() < min_bins:
            continue
        X = np.column_stack([np.ones_like(x), x - k, np.maximum(0.0, x - k)])
        sw = np.sqrt(bw)
        coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        rss = float(np.sum(bw * (y - X @ coef) ** 2))
        if best is None or rss < best[0] - 1e-15:
            best = (rss, k, coef)
    if best is None:
        raise ValueError(f"fewer than {min_bins} populated age bins on each side of every candidate breakpoint")
    rss, k, coef = best
    before, after = float(coef[1]), float(coef[1] + coef[2])
    degenerate = abs(before) <= flat_tol and abs(after) <= flat_tol
    return AgeFit(left, x, y, bw, float(k), float(coef[0]), before, after, rss, degenerate)


def fod_by_age_records(weighted: Iterable, age_bin_width: float = 1.0, horizon: int = 30, **kw) -> AgeFit:
    """:func:`fod_by_age` over weighted records (anything with ``record`` and ``weight``)."""
    ages, died, w = [], [], []
    for wr in weighted:
        r = wr.record
        ages.append(r.age_years)
        died.append(r.event is Event.Death and r.event_day <= horizon)
        w.append(wr.weight)
    return fod_by_age(ages, died, w, age_bin_width=age_bin_width, **kw)
