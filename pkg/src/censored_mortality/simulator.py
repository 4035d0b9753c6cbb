"""Ground-truth cohort simulator for the two-lottery daily Markov chain.

Patients transferred out keep evolving with the same recovery and death
probabilities (and never transfer again), but the registry only sees the
transfer; what happens afterwards goes to the :class:`TruthReport`.
"""
from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import rng
from .cohort import Cohort, Destination, Event, PartitionKind, StatePartition, builtin_partition, classify_cohort
from .sequential import fractional_split

FIXTURE_VERSION = 1

# in-hospital / outside-registry / absorbed codes
_H, _L, _D, _R, _DL, _RL, _WAIT = 0, 1, 2, 3, 4, 5, 6

_RECOVERY_DEST = np.array([Destination.HomeOwn, Destination.HomeCarer, Destination.NursingHome,
                           Destination.Rehabilitation])
_RECOVERY_CUM = np.cumsum([0.6, 0.1, 0.1, 0.2])
_TRANSFER_DEST = np.array([Destination.OtherAcuteHospital, Destination.OtherInstitution, Destination.Unknown])
_TRANSFER_CUM = np.cumsum([0.6, 0.3, 0.1])


class Ordering(enum.Enum):
    AdvancedTransfer = "advanced"
    RetardedTransfer = "retarded"
    Sequential = "sequential"


@dataclass(frozen=True)
class Demographics:
    """Per-state generators: age ~ clipped normal, NISS ~ uniform integer on [low, high].

    ``max_severity`` of 0 derives the maximal severity from NISS as the
    smallest s with 3 s^2 >= NISS.
    """

    age_mean: tuple[float, ...]
    age_sd: tuple[float, ...]
    niss_low: tuple[int, ...]
    niss_high: tuple[int, ...]
    max_severity: tuple[int, ...]
    age_low: tuple[float, ...] | None = None
    age_high: tuple[float, ...] | None = None


def default_demographics(kind: PartitionKind | str) -> Demographics:
    kind = PartitionKind(kind) if isinstance(kind, str) else kind
    if kind is PartitionKind.Coarsest:
        return Demographics((50.0,), (22.0,), (1,), (75,), (0,))
    if kind is PartitionKind.MaxSeverity:
        lows = tuple(s * s for s in range(1, 7))
        highs = tuple(min(3 * s * s, 75) for s in range(1, 6)) + (75,)
        return Demographics((50.0,) * 6, (22.0,) * 6, lows, highs, tuple(range(1, 7)))
    bins = ((1, 3), (4, 8), (9, 9), (10, 16), (17, 24), (25, 35), (36, 75))
    if kind is PartitionKind.NissBinned:
        return Demographics((45.0, 50.0, 52.0, 55.0, 57.0, 58.0, 55.0), (22.0,) * 7,
                            tuple(b[0] for b in bins), tuple(b[1] for b in bins), (0,) * 7)
    # age-refined: the split bin's ages are drawn so they land on the right side of 54.5
    return Demographics((30.0, 80.0, 50.0, 52.0, 55.0, 57.0, 58.0, 55.0), (12.0, 9.0) + (22.0,) * 6,
                        (1, 1) + tuple(b[0] for b in bins[1:]), (3, 3) + tuple(b[1] for b in bins[1:]), (0,) * 8,
                        age_low=(0.0, 54.5) + (0.0,) * 6, age_high=(54.4, 105.0) + (105.0,) * 6)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    partition_kind: PartitionKind
    alpha: np.ndarray   # (horizon, S); row k is day k + 1
    nu: np.ndarray
    mu: np.ndarray
    ordering: Ordering
    state_mix: np.ndarray
    demographics: Demographics
    seed: int = 0
    M: int = 1
    description: str = ""

    def __post_init__(self):
        shape = self.alpha.shape
        if self.nu.shape != shape or self.mu.shape != shape or len(shape) != 2:
            raise ValueError("alpha, nu and mu must share a (horizon, states) shape")
        if shape[1] != self.partition.n_states or len(self.state_mix) != shape[1]:
            raise ValueError("state dimension does not match the partition")
        if (self.alpha < 0).any() or (self.nu < 0).any() or (self.alpha + self.nu > 1 + 1e-15).any():
            raise ValueError("need alpha, nu >= 0 and alpha + nu <= 1 in every cell")
        if (self.mu < 0).any() or (self.mu > 1).any():
            raise ValueError("mu must be a probability")
        if abs(float(np.sum(self.state_mix)) - 1.0) > 1e-9 or (np.asarray(self.state_mix) < 0).any():
            raise ValueError("state_mix must be a probability vector")
        if self.ordering is Ordering.Sequential and self.M < 1:
            raise ValueError("sequential ordering needs M >= 1")

    @property
    def partition(self) -> StatePartition:
        return builtin_partition(self.partition_kind)

    @property
    def horizon(self) -> int:
        return self.alpha.shape[0]

    def with_(self, **changes) -> "GroundTruth":
        from dataclasses import replace
        return replace(self, **changes)

    def true_scfod(self) -> np.ndarray:
        stay = 1.0 - self.alpha - self.nu
        before = np.vstack([np.ones((1, stay.shape[1])), np.cumprod(stay, axis=0)[:-1]])
        return np.cumsum(self.nu * before, axis=0)

    def expected_fod(self) -> float:
        return float(self.true_scfod()[-1] @ self.state_mix)

    def to_dict(self) -> dict:
        return {
            "version": FIXTURE_VERSION,
            "description": self.description,
            "partition": self.partition_kind.value,
            "ordering": self.ordering.value,
            "M": self.M,
            "seed": self.seed,
            "state_mix": [float(x) for x in self.state_mix],
            "alpha": self.alpha.tolist(),
            "nu": self.nu.tolist(),
            "mu": self.mu.tolist(),
            "demographics": {k: list(v) for k, v in self.demographics.__dict__.items() if v is not None},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        if d.get("version", FIXTURE_VERSION) != FIXTURE_VERSION:
            raise ValueError(f"unsupported ground-truth fixture version {d.get('version')}")
        kind = PartitionKind(d["partition"])
        demo = d.get("demographics")
        demographics = (Demographics(**{k: tuple(v) for k, v in demo.items() if v is not None})
                        if demo else default_demographics(kind))
        return cls(
            partition_kind=kind,
            alpha=np.asarray(d["alpha"], dtype=float),
            nu=np.asarray(d["nu"], dtype=float),
            mu=np.asarray(d["mu"], dtype=float),
            ordering=Ordering(d["ordering"]),
            state_mix=np.asarray(d["state_mix"], dtype=float),
            demographics=demographics,
            seed=int(d.get("seed", 0)),
            M=int(d.get("M", 1)),
            description=d.get("description", ""),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TruthReport:
    n_patients: int
    true_fod: float
    true_dead: int
    true_scfod: np.ndarray          # analytic, (horizon, S)
    empirical_state_fod: np.ndarray  # realised deaths within horizon / patients, per state
    state_counts: np.ndarray
    visible_deaths: int
    visible_recoveries: int
    visible_in_hospital: int
    transferred: int
    hidden_deaths: int
    hidden_recoveries: int
    hidden_alive: int

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if not isinstance(v, np.ndarray)}
        d["empirical_state_fod"] = [float(x) for x in self.empirical_state_fod]
        d["state_counts"] = [int(x) for x in self.state_counts]
        d["true_scfod_horizon"] = [float(x) for x in self.true_scfod[-1]]
        return d


@dataclass
class _Block:
    cohort: Cohort
    state: np.ndarray
    status: np.ndarray
    hidden_day: np.ndarray


def _split_coefficients(gt: GroundTruth):
    """Per-step (alpha_i, nu_i, mu_i), each (horizon, S, steps)."""
    if gt.ordering is not Ordering.Sequential:
        return None
    T, S = gt.alpha.shape
    a = np.zeros((T, S, gt.M))
    n = np.zeros((T, S, gt.M))
    m = np.zeros((T, S, gt.M))
    for t in range(T):
        for s in range(S):
            sched = fractional_split(float(gt.alpha[t, s]), float(min(gt.nu[t, s], 1 - gt.alpha[t, s])),
                                     float(gt.mu[t, s]), gt.M)
            a[t, s], n[t, s], m[t, s] = sched.alpha_i, sched.nu_i, sched.mu_i
    return a, n, m


def _sample_attributes(gt: GroundTruth, state: np.ndarray, u: np.ndarray):
    demo = gt.demographics
    age_mean = np.asarray(demo.age_mean)[state]
    age_sd = np.asarray(demo.age_sd)[state]
    # Box-Muller from two patient-level uniforms
    z = np.sqrt(-2.0 * np.log(1.0 - u[:, 0])) * np.cos(2 * np.pi * u[:, 1])
    age_lo = 0.0 if demo.age_low is None else np.asarray(demo.age_low)[state]
    age_hi = 105.0 if demo.age_high is None else np.asarray(demo.age_high)[state]
    age = np.clip(np.round(age_mean + age_sd * z, 1), age_lo, age_hi)
    lo = np.asarray(demo.niss_low)[state]
    hi = np.asarray(demo.niss_high)[state]
    niss = lo + np.floor(u[:, 2] * (hi - lo + 1)).astype(np.int64)
    niss = np.minimum(niss, hi)
    fixed = np.asarray(demo.max_severity)[state]
    derived = np.maximum(1, np.ceil(np.sqrt(niss / 3.0) - 1e-12)).astype(np.int64)
    max_sev = np.where(fixed > 0, fixed, np.minimum(derived, 6))
    return age, niss, max_sev


def _simulate_block(gt: GroundTruth, state: np.ndarray, arrival: np.ndarray, gen: np.random.Generator,
                    split) -> _Block:
    n = len(state)
    T = gt.horizon
    per_day = 2 * (gt.M if gt.ordering is Ordering.Sequential else 1)
    u_patient = gen.random((n, 4))
    u_day = gen.random((n, T, per_day))

    status = np.full(n, _WAIT, dtype=np.int64)
    event_day = np.full(n, T + 1, dtype=np.int64)
    hidden_day = np.zeros(n, dtype=np.int64)

    def outcome(active: np.ndarray, a: np.ndarray, v: np.ndarray, u: np.ndarray, t: int):
        """Recovery/death choice for patients in ``active`` (H or L)."""
        idx = np.flatnonzero(active)
        if not len(idx):
            return
        uu = u[idx]
        die = uu < v[idx]
        rec = ~die & (uu < v[idx] + a[idx])
        inside = status[idx] == _H
        for mask, in_code, out_code in ((die, _D, _DL), (rec, _R, _RL)):
            hit = idx[mask & inside]
            status[hit] = in_code
            event_day[hit] = t
            hit = idx[mask & ~inside]
            status[hit] = out_code
            hidden_day[hit] = t

    def transfer(m: np.ndarray, u: np.ndarray, t: int):
        idx = np.flatnonzero(status == _H)
        go = idx[u[idx] < m[idx]]
        status[go] = _L
        event_day[go] = t

    for k in range(T):
        t = k + 1
        status[(status == _WAIT) & (arrival == t)] = _H
        a, v, m = gt.alpha[k][state], gt.nu[k][state], gt.mu[k][state]
        u_out, u_tr = u_day[:, k, 0], u_day[:, k, 1]
        if gt.ordering is Ordering.AdvancedTransfer:
            transfer(m, u_tr, t)
            outcome((status == _H) | (status == _L), a, v, u_out, t)
        elif gt.ordering is Ordering.RetardedTransfer:
            outcome((status == _H) | (status == _L), a, v, u_out, t)
            transfer(m, u_tr, t)
        else:
            sa, sn, sm = split
            for i in range(gt.M):
                outcome((status == _H) | (status == _L), sa[k, :, i][state], sn[k, :, i][state],
                        u_day[:, k, 2 * i], t)
                transfer(sm[k, :, i][state], u_day[:, k, 2 * i + 1], t)

    event = np.full(n, Event.StillInHospital, dtype=np.int64)
    dest = np.full(n, Destination.Unknown, dtype=np.int64)
    event[status == _D] = Event.Death
    dest[status == _D] = Destination.Mortuary
    rec = status == _R
    event[rec] = Event.Recovery
    dest[rec] = _RECOVERY_DEST[np.searchsorted(_RECOVERY_CUM, u_patient[rec, 3], side="right").clip(max=3)]
    gone = np.isin(status, (_L, _DL, _RL))
    event[gone] = Event.TransferOut
    dest[gone] = _TRANSFER_DEST[np.searchsorted(_TRANSFER_CUM, u_patient[gone, 3], side="right").clip(max=2)]

    age, niss, max_sev = _sample_attributes(gt, state, u_patient)
    cohort = Cohort(age, niss, max_sev, arrival.astype(np.int64), event_day, event, dest)
    return _Block(cohort, state, status, hidden_day)


def _run_blocks(tasks, workers: int):
    if workers <= 1:
        return [f() for f in tasks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda f: f(), tasks))


_COLUMNS = ("age_years", "niss", "max_severity", "arrival_day", "event_day", "event", "destination")


def _assemble(blocks: list[_Block], prefix: str) -> Cohort:
    return Cohort(*(np.concatenate([getattr(b.cohort, c) for b in blocks]) for c in _COLUMNS), id_prefix=prefix)


def _check_classification(gt: GroundTruth, cohort: Cohort, state: np.ndarray) -> None:
    got = classify_cohort(gt.partition, cohort)
    if not np.array_equal(got, state):
        raise ValueError("demographic generators produce records that the partition assigns to other states")


def _truth(gt: GroundTruth, blocks: list[_Block]) -> TruthReport:
    status = np.concatenate([b.status for b in blocks]) if blocks else np.zeros(0, dtype=np.int64)
    state = np.concatenate([b.state for b in blocks]) if blocks else np.zeros(0, dtype=np.int64)
    S = gt.partition.n_states
    n = len(status)
    dead = np.isin(status, (_D, _DL))
    counts = np.bincount(state, minlength=S)
    dead_s = np.bincount(state[dead], minlength=S)
    with np.errstate(invalid="ignore", divide="ignore"):
        emp = np.where(counts > 0, dead_s / np.maximum(counts, 1), 0.0)
    return TruthReport(
        n_patients=n,
        true_fod=float(dead.sum() / n) if n else 0.0,
        true_dead=int(dead.sum()),
        true_scfod=gt.true_scfod(),
        empirical_state_fod=emp,
        state_counts=counts,
        visible_deaths=int((status == _D).sum()),
        visible_recoveries=int((status == _R).sum()),
        visible_in_hospital=int((status == _H).sum()),
        transferred=int(np.isin(status, (_L, _DL, _RL)).sum()),
        hidden_deaths=int((status == _DL).sum()),
        hidden_recoveries=int((status == _RL).sum()),
        hidden_alive=int((status == _L).sum()),
    )


def simulate_cohort(
    gt: GroundTruth, n_patients: int, seed: int | None = None, workers: int = 1
) -> tuple[Cohort, TruthReport]:
    """Main-group cohort (all arrive on day 1) and its hidden truth.

    Output depends only on ``gt``, ``n_patients`` and ``seed`` (defaults to
    ``gt.seed``), never on ``workers``.
    """
    if n_patients < 1:
        raise ValueError("n_patients must be at least 1")
    seed = gt.seed if seed is None else seed
    split = _split_coefficients(gt)
    cum_mix = np.cumsum(gt.state_mix)

    def task(b: int, lo: int, hi: int):
        def run():
            gen = rng.block_generator(seed, rng.MAIN_COHORT, b)
            u_state = gen.random(hi - lo)
            state = np.searchsorted(cum_mix, u_state, side="right").clip(max=len(cum_mix) - 1)
            return _simulate_block(gt, state, np.ones(hi - lo, dtype=np.int64), gen, split)
        return run

    blocks = _run_blocks([task(b, lo, hi) for b, (lo, hi) in enumerate(rng.block_ranges(n_patients))], workers)
    cohort = _assemble(blocks, "P")
    _check_classification(gt, cohort, np.concatenate([b.state for b in blocks]))
    return cohort, _truth(gt, blocks)


def simulate_inflow(
    gt: GroundTruth, arrival_schedule: np.ndarray, seed: int | None = None, workers: int = 1
) -> tuple[Cohort, TruthReport]:
    """Inflow cohort from an arrival schedule (row k = day k + 1, one column per state).

    Arrivals are in hospital from their arrival day and face that day's lotteries.
    """
    sched = np.asarray(arrival_schedule, dtype=np.int64)
    T, S = gt.alpha.shape
    if sched.shape != (T, S):
        raise ValueError(f"arrival schedule must have shape {(T, S)}, got {sched.shape}")
    if (sched < 0).any():
        raise ValueError("arrival counts must be non-negative")
    if sched[0].sum() > 0:
        raise ValueError("inflow arrivals must be on day 2 or later")
    seed = gt.seed if seed is None else seed
    day = np.repeat(np.repeat(np.arange(1, T + 1), S), sched.ravel())
    state = np.repeat(np.tile(np.arange(S), T), sched.ravel())
    n = len(day)
    if n == 0:
        c = Cohort.empty()
        return c, _truth(gt, [])
    split = _split_coefficients(gt)

    def task(b: int, lo: int, hi: int):
        def run():
            return _simulate_block(gt, state[lo:hi], day[lo:hi], rng.block_generator(seed, rng.INFLOW, b), split)
        return run

    blocks = _run_blocks([task(b, lo, hi) for b, (lo, hi) in enumerate(rng.block_ranges(n))], workers)
    cohort = _assemble(blocks, "I")
    _check_classification(gt, cohort, state)
    return cohort, _truth(gt, blocks)


def paper_calibration() -> GroundTruth:
    """Fixture tuned to the registry's published marginals (state mix, transfer
    fractions by NISS bin, overall 30-day mortality near 6.8%)."""
    text = resources.files("censored_mortality.data").joinpath("paper_calibration.json").read_text()
    return GroundTruth.from_dict(json.loads(text))
