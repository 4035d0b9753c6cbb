"""Record schema, outcome taxonomy, cohort classes and state partitions.

Records are held in two shapes: :class:`PatientRecord` for single episodes
(CSV rows, hand-built fixtures) and :class:`Cohort`, a columnar batch used by
every aggregation routine so that simulator-sized cohorts never materialise as
Python objects.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np


class RecordError(ValueError):
    """A record violates one of the schema invariants."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"[{invariant}] {message}")
        self.invariant = invariant


class JoinError(ValueError):
    def __init__(self, patient_ids: Sequence[str]):
        super().__init__(f"conflicting terminal events for patient_id(s): {', '.join(patient_ids)}")
        self.patient_ids = list(patient_ids)


class ClassificationError(ValueError):
    pass


class Event(enum.IntEnum):
    Death = 0
    Recovery = 1
    TransferOut = 2
    StillInHospital = 3


class Destination(enum.IntEnum):
    HomeOwn = 0
    HomeCarer = 1
    NursingHome = 2
    Rehabilitation = 3
    Mortuary = 4
    OtherAcuteHospital = 5
    OtherInstitution = 6
    Unknown = 7


class CohortClass(enum.Enum):
    AvailableW30D = "AvailableW30D"
    Out30 = "Out30"
    In30 = "In30"
    LateArrivalExcluded = "LateArrivalExcluded"


MAIN_GROUP = frozenset({CohortClass.AvailableW30D, CohortClass.Out30})

RECOVERY_DESTINATIONS = frozenset(
    {Destination.HomeOwn, Destination.HomeCarer, Destination.NursingHome, Destination.Rehabilitation}
)
TRANSFER_DESTINATIONS = frozenset(
    {Destination.OtherAcuteHospital, Destination.OtherInstitution, Destination.Unknown}
)

_ALLOWED_DESTINATIONS = {
    Event.Death: frozenset({Destination.Mortuary}),
    Event.Recovery: RECOVERY_DESTINATIONS,
    Event.TransferOut: TRANSFER_DESTINATIONS,
    # no discharge yet, so the destination is not known
    Event.StillInHospital: frozenset({Destination.Unknown}),
}


def parse_enum(kind: type[enum.Enum], text: str | enum.Enum):
    """Case-insensitive lookup of an enum member by name."""
    if isinstance(text, kind):
        return text
    key = str(text).strip().casefold()
    for member in kind:
        if member.name.casefold() == key:
            return member
    raise ValueError(f"unknown {kind.__name__} {text!r}")


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    age_years: float
    niss: int
    max_severity: int
    arrival_day: int
    event_day: int
    event: Event
    destination: Destination

    def __post_init__(self):
        object.__setattr__(self, "event", parse_enum(Event, self.event))
        object.__setattr__(self, "destination", parse_enum(Destination, self.destination))
        validate_record(self)


def validate_record(r: PatientRecord) -> None:
    if not (r.age_years >= 0):
        raise RecordError("age_non_negative", f"{r.patient_id}: age_years={r.age_years}")
    if r.niss < 1:
        raise RecordError("niss_positive", f"{r.patient_id}: niss={r.niss}")
    if not 1 <= r.max_severity <= 6:
        raise RecordError("max_severity_range", f"{r.patient_id}: max_severity={r.max_severity}")
    if r.arrival_day < 1:
        raise RecordError("arrival_day_positive", f"{r.patient_id}: arrival_day={r.arrival_day}")
    if r.event_day < r.arrival_day:
        raise RecordError(
            "event_after_arrival",
            f"{r.patient_id}: event_day={r.event_day} < arrival_day={r.arrival_day}",
        )
    if r.destination not in _ALLOWED_DESTINATIONS[r.event]:
        raise RecordError(
            "event_destination_consistent",
            f"{r.patient_id}: event {r.event.name} with destination {r.destination.name}",
        )


def assign_cohort(record: PatientRecord, horizon: int = 30) -> CohortClass:
    """Fig.-1 style split of a record into the analysis groups.

    Deaths and recoveries after the horizon leave the record in
    ``AvailableW30D``; it is then counted alive at the horizon.
    """
    validate_record(record)
    if record.arrival_day > horizon:
        return CohortClass.LateArrivalExcluded
    if record.arrival_day > 1:
        return CohortClass.In30
    if record.event is Event.TransferOut and record.event_day <= horizon:
        return CohortClass.Out30
    return CohortClass.AvailableW30D


def join_episodes(rows: Iterable[PatientRecord]) -> list[PatientRecord]:
    """Collapse per-hospital episodes into one record per trauma case.

    Rows of one case must arrive in admission order. Attributes and the
    arrival day come from the first episode, the terminal event from the
    last. Intermediate episodes must end in a transfer.
    """
    groups: dict[str, list[PatientRecord]] = {}
    for row in rows:
        groups.setdefault(row.patient_id, []).append(row)

    conflicts = []
    out = []
    for pid, eps in groups.items():
        if any(e.event in (Event.Death, Event.Recovery) for e in eps[:-1]):
            conflicts.append(pid)
            continue
        first, last = eps[0], eps[-1]
        out.append(
            PatientRecord(
                patient_id=pid,
                age_years=first.age_years,
                niss=first.niss,
                max_severity=first.max_severity,
                arrival_day=first.arrival_day,
                event_day=last.event_day,
                event=last.event,
                destination=last.destination,
            )
        )
    if conflicts:
        raise JoinError(conflicts)
    return out


# ---------------------------------------------------------------------------
# columnar batches


@dataclass(frozen=True, eq=False)
class Cohort:
    """Columnar record batch. Row order is significant (it is the output order)."""

    age_years: np.ndarray
    niss: np.ndarray
    max_severity: np.ndarray
    arrival_day: np.ndarray
    event_day: np.ndarray
    event: np.ndarray
    destination: np.ndarray
    ids: np.ndarray | None = None
    id_prefix: str = "P"
    # integer ids rendered as ``{id_prefix}{seq:07d}`` when ``ids`` is None
    seq: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.event)
        for name in ("age_years", "niss", "max_severity", "arrival_day", "event_day", "destination"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        for arr in (self.age_years, self.niss, self.max_severity, self.arrival_day,
                    self.event_day, self.event, self.destination):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.event)

    @property
    def patient_ids(self) -> list[str]:
        if self.ids is not None:
            return [str(x) for x in self.ids]
        seq = self.seq if self.seq is not None else range(len(self))
        return [f"{self.id_prefix}{int(i):07d}" for i in seq]

    @classmethod
    def empty(cls) -> "Cohort":
        z = np.zeros(0, dtype=np.int64)
        return cls(np.zeros(0), z, z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), ids=np.array([], dtype=object))

    @classmethod
    def from_records(cls, records: Iterable[PatientRecord]) -> "Cohort":
        if isinstance(records, Cohort):
            return records
        records = list(records)
        if not records:
            return cls.empty()
        return cls(
            age_years=np.array([r.age_years for r in records], dtype=float),
            niss=np.array([r.niss for r in records], dtype=np.int64),
            max_severity=np.array([r.max_severity for r in records], dtype=np.int64),
            arrival_day=np.array([r.arrival_day for r in records], dtype=np.int64),
            event_day=np.array([r.event_day for r in records], dtype=np.int64),
            event=np.array([int(r.event) for r in records], dtype=np.int64),
            destination=np.array([int(r.destination) for r in records], dtype=np.int64),
            ids=np.array([r.patient_id for r in records], dtype=object),
        )

    def records(self) -> Iterator[PatientRecord]:
        for i, pid in enumerate(self.patient_ids):
            yield PatientRecord(
                patient_id=pid,
                age_years=float(self.age_years[i]),
                niss=int(self.niss[i]),
                max_severity=int(self.max_severity[i]),
                arrival_day=int(self.arrival_day[i]),
                event_day=int(self.event_day[i]),
                event=Event(int(self.event[i])),
                destination=Destination(int(self.destination[i])),
            )

    def take(self, mask_or_index) -> "Cohort":
        if self.ids is not None:
            ids, seq = self.ids[mask_or_index], None
        else:
            seq = (self.seq if self.seq is not None else np.arange(len(self)))[mask_or_index]
            ids = None
        return Cohort(
            age_years=self.age_years[mask_or_index],
            niss=self.niss[mask_or_index],
            max_severity=self.max_severity[mask_or_index],
            arrival_day=self.arrival_day[mask_or_index],
            event_day=self.event_day[mask_or_index],
            event=self.event[mask_or_index],
            destination=self.destination[mask_or_index],
            ids=ids,
            id_prefix=self.id_prefix,
            seq=seq,
        )

    def cohort_classes(self, horizon: int = 30) -> np.ndarray:
        """Vectorised :func:`assign_cohort`; returns an object array of CohortClass."""
        out = np.full(len(self), CohortClass.AvailableW30D, dtype=object)
        out[(self.arrival_day <= 1) & (self.event == Event.TransferOut) & (self.event_day <= horizon)] = CohortClass.Out30
        out[(self.arrival_day > 1) & (self.arrival_day <= horizon)] = CohortClass.In30
        out[self.arrival_day > horizon] = CohortClass.LateArrivalExcluded
        return out

    def select(self, classes: Iterable[CohortClass], horizon: int = 30) -> "Cohort":
        wanted = set(classes)
        cc = self.cohort_classes(horizon)
        mask = np.isin(cc, np.array(list(wanted), dtype=object))
        return self.take(mask)


def concat(cohorts: Sequence[Cohort]) -> Cohort:
    if not cohorts:
        return Cohort.empty()
    ids = np.concatenate([np.array(c.patient_ids, dtype=object) for c in cohorts])
    return Cohort(
        *(np.concatenate([getattr(c, name) for c in cohorts]) for name in
          ("age_years", "niss", "max_severity", "arrival_day", "event_day", "event", "destination")),
        ids=ids,
        id_prefix=cohorts[0].id_prefix,
    )


# ---------------------------------------------------------------------------
# state partitions


@dataclass(frozen=True)
class StateId:
    index: int
    label: str


@dataclass(frozen=True, eq=False)
class StatePartition:
    """A mapping from injury-time attributes to a fixed state.

    ``classify_batch`` maps a :class:`Cohort` to state indices; ``classify``
    is its single-record form.
    """

    name: str
    states: tuple[StateId, ...]
    classify_batch: Callable[[Cohort], np.ndarray] = field(repr=False)

    def __post_init__(self):
        if [s.index for s in self.states] != list(range(len(self.states))):
            raise ValueError("state indices must be 0..k-1 in order")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.states]

    def classify(self, record: PatientRecord) -> StateId:
        idx = int(self.classify_batch(Cohort.from_records([record]))[0])
        return self.states[idx]

    def same_as(self, other: "StatePartition") -> bool:
        return self.name == other.name and self.states == other.states


NISS_BIN_EDGES = (1, 4, 9, 10, 17, 25, 36)
NISS_BIN_LABELS = ("NISS 1-3", "NISS 4-8", "NISS 9", "NISS 10-16", "NISS 17-24", "NISS 25-35", "NISS 36+")


def _niss_bin(niss: np.ndarray) -> np.ndarray:
    if len(niss) and niss.min() < 1:
        raise ClassificationError("NISS below 1 cannot be binned")
    return np.searchsorted(NISS_BIN_EDGES, niss, side="right") - 1


def _states(labels: Sequence[str]) -> tuple[StateId, ...]:
    return tuple(StateId(i, lab) for i, lab in enumerate(labels))


def coarsest_partition() -> StatePartition:
    return StatePartition("coarsest", _states(["all"]), lambda c: np.zeros(len(c), dtype=np.int64))


def max_severity_partition() -> StatePartition:
    def classify(c: Cohort) -> np.ndarray:
        sev = np.asarray(c.max_severity, dtype=np.int64)
        if len(sev) and (sev.min() < 1 or sev.max() > 6):
            raise ClassificationError("max_severity outside 1..6")
        return sev - 1

    return StatePartition("max-severity", _states([f"max severity {k}" for k in range(1, 7)]), classify)


def niss_partition() -> StatePartition:
    return StatePartition("niss", _states(NISS_BIN_LABELS), lambda c: _niss_bin(np.asarray(c.niss)))


def niss_age_partition(age_threshold: float = 54.5) -> StatePartition:
    """Binned NISS with the lowest bin split by age at ``age_threshold``."""

    def classify(c: Cohort) -> np.ndarray:
        age = np.asarray(c.age_years, dtype=float)
        if np.isnan(age).any():
            raise ClassificationError("missing age cannot be classified under the age-refined partition")
        b = _niss_bin(np.asarray(c.niss))
        # shift bins 1..6 up by one to make room for the split bin 0/1
        return np.where(b == 0, (age >= age_threshold).astype(np.int64), b + 1)

    labels = ["NISS 1-3 y", "NISS 1-3 o", *NISS_BIN_LABELS[1:]]
    name = "niss-age" if age_threshold == 54.5 else f"niss-age@{age_threshold:g}"
    return StatePartition(name, _states(labels), classify)


class PartitionKind(enum.Enum):
    Coarsest = "coarsest"
    MaxSeverity = "max-severity"
    NissBinned = "niss"
    NissBinnedAgeRefined = "niss-age"


def builtin_partition(kind: PartitionKind | str, age_threshold: float = 54.5) -> StatePartition:
    kind = PartitionKind(kind) if isinstance(kind, str) else kind
    if kind is PartitionKind.Coarsest:
        return coarsest_partition()
    if kind is PartitionKind.MaxSeverity:
        return max_severity_partition()
    if kind is PartitionKind.NissBinned:
        return niss_partition()
    return niss_age_partition(age_threshold)


def classify_cohort(partition: StatePartition, cohort: Cohort) -> np.ndarray:
    idx = np.asarray(partition.classify_batch(cohort), dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= partition.n_states):
        raise ClassificationError(f"partition {partition.name} produced a state outside its declared states")
    return idx
