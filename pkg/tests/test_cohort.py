import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from censored_mortality.cohort import (
    MAIN_GROUP, Cohort, CohortClass, ClassificationError, Destination, Event, JoinError, PartitionKind,
    PatientRecord, RecordError, assign_cohort, builtin_partition, classify_cohort, concat, join_episodes,
    niss_age_partition,
)

from _fixtures import ALIVE, DEAD, TOTAL, UNKNOWN, marginal_cohort


def rec(pid="p", age=40.0, niss=9, sev=3, arrival=1, day=5, event="Recovery", dest="HomeOwn"):
    return PatientRecord(pid, age, niss, sev, arrival, day, event, dest)


EVENT_DEST = {
    Event.Death: [Destination.Mortuary],
    Event.Recovery: [Destination.HomeOwn, Destination.HomeCarer, Destination.NursingHome, Destination.Rehabilitation],
    Event.TransferOut: [Destination.OtherAcuteHospital, Destination.OtherInstitution, Destination.Unknown],
    Event.StillInHospital: [Destination.Unknown],
}


@st.composite
def records(draw, max_arrival=40):
    arrival = draw(st.integers(1, max_arrival))
    event = draw(st.sampled_from(list(Event)))
    niss = draw(st.integers(1, 75))
    return PatientRecord(
        patient_id=draw(st.text("abc0123456789", min_size=1, max_size=6)),
        age_years=draw(st.floats(0, 105, allow_nan=False)),
        niss=niss,
        max_severity=draw(st.integers(1, 6)),
        arrival_day=arrival,
        event_day=arrival + draw(st.integers(0, 40)),
        event=event,
        destination=draw(st.sampled_from(EVENT_DEST[event])),
    )


class TestRecordValidation:
    def test_enums_parse_case_insensitively(self):
        r = rec(event="death", dest="MORTUARY")
        assert r.event is Event.Death and r.destination is Destination.Mortuary

    @pytest.mark.parametrize("kwargs, invariant", [
        (dict(age=-1.0), "age_non_negative"),
        (dict(niss=0), "niss_positive"),
        (dict(sev=7), "max_severity_range"),
        (dict(arrival=0, day=0), "arrival_day_positive"),
        (dict(arrival=5, day=3), "event_after_arrival"),
        (dict(event="Death", dest="HomeOwn"), "event_destination_consistent"),
        (dict(event="Recovery", dest="Mortuary"), "event_destination_consistent"),
        (dict(event="TransferOut", dest="NursingHome"), "event_destination_consistent"),
    ])
    def test_violation_names_invariant(self, kwargs, invariant):
        with pytest.raises(RecordError) as err:
            rec(**kwargs)
        assert err.value.invariant == invariant

    def test_unknown_enum_rejected(self):
        with pytest.raises(ValueError):
            rec(event="Vanished")


class TestAssignCohort:
    def test_transfer_within_horizon_is_out30(self):
        assert assign_cohort(rec(event="TransferOut", dest="OtherAcuteHospital", day=12)) is CohortClass.Out30

    def test_late_arrival_death_is_in30(self):
        assert assign_cohort(rec(arrival=5, day=20, event="Death", dest="Mortuary")) is CohortClass.In30

    def test_death_after_horizon_is_available(self):
        assert assign_cohort(rec(day=40, event="Death", dest="Mortuary")) is CohortClass.AvailableW30D

    def test_transfer_after_horizon_is_available(self):
        assert assign_cohort(rec(day=31, event="TransferOut", dest="Unknown")) is CohortClass.AvailableW30D

    def test_arrival_after_horizon_excluded(self):
        assert assign_cohort(rec(arrival=31, day=31)) is CohortClass.LateArrivalExcluded

    def test_still_in_hospital_is_available(self):
        r = rec(day=31, event="StillInHospital", dest="Unknown")
        assert assign_cohort(r) is CohortClass.AvailableW30D

    @settings(max_examples=200, deadline=None)
    @given(st.lists(records(), max_size=40))
    def test_classes_partition_any_record_set(self, rs):
        classes = [assign_cohort(r) for r in rs]
        assert sum(classes.count(c) for c in CohortClass) == len(rs)
        if rs:
            vec = Cohort.from_records(rs).cohort_classes(30)
            assert list(vec) == classes


class TestJoin:
    def test_two_hospitals_collapse(self):
        a = rec("x", arrival=1, day=3, event="TransferOut", dest="OtherAcuteHospital")
        b = rec("x", arrival=3, day=9, event="Recovery", dest="HomeOwn")
        (r,) = join_episodes([a, b])
        assert r.event is Event.Recovery and r.arrival_day == 1 and r.event_day == 9

    def test_single_row_is_identity(self):
        a = rec("y")
        assert join_episodes([a]) == [a]

    def test_two_deaths_conflict(self):
        a = rec("z", day=3, event="Death", dest="Mortuary")
        b = rec("z", day=4, event="Death", dest="Mortuary")
        with pytest.raises(JoinError) as err:
            join_episodes([a, b, rec("ok")])
        assert err.value.patient_ids == ["z"]


class TestPartitions:
    def test_niss_nine_is_third_bin(self):
        p = builtin_partition(PartitionKind.NissBinned)
        assert p.classify(rec(niss=9)).index == 2

    def test_coarsest_single_state(self):
        p = builtin_partition("coarsest")
        assert p.n_states == 1 and p.classify(rec(niss=50, sev=5)).index == 0

    def test_age_refined_old_low_bin(self):
        p = builtin_partition("niss-age")
        assert p.n_states == 8
        assert p.classify(rec(niss=2, sev=1, age=60.0)).label == "NISS 1-3 o"
        assert p.classify(rec(niss=2, sev=1, age=54.4)).label == "NISS 1-3 y"
        assert p.classify(rec(niss=9, age=80.0)).label == "NISS 9"

    def test_alternative_age_threshold(self):
        p = niss_age_partition(74.5)
        assert p.classify(rec(niss=2, sev=1, age=60.0)).label == "NISS 1-3 y"
        assert p.name != builtin_partition("niss-age").name

    def test_missing_age_rejected(self):
        c = Cohort(np.array([np.nan]), np.array([2]), np.array([1]), np.array([1]), np.array([3]),
                   np.array([int(Event.Recovery)]), np.array([int(Destination.HomeOwn)]))
        with pytest.raises(ClassificationError):
            classify_cohort(builtin_partition("niss-age"), c)

    def test_max_severity_states(self):
        p = builtin_partition("max-severity")
        assert [p.classify(rec(sev=s, niss=s * s)).index for s in range(1, 7)] == list(range(6))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(records(), min_size=1, max_size=30), st.sampled_from(list(PartitionKind)))
    def test_image_is_exactly_declared_states(self, rs, kind):
        p = builtin_partition(kind)
        idx = classify_cohort(p, Cohort.from_records(rs))
        assert set(idx) <= set(range(p.n_states))
        for r, i in zip(rs, idx):
            assert p.classify(r) == p.states[i]

    def test_niss_bins_cover_every_score(self):
        p = builtin_partition("niss")
        idx = [p.classify(rec(niss=n, sev=6)).index for n in range(1, 76)]
        assert idx == sorted(idx) and set(idx) == set(range(7))


class TestCohortBatch:
    def test_records_round_trip(self):
        rs = [rec("a"), rec("b", event="Death", dest="Mortuary", day=2)]
        c = Cohort.from_records(rs)
        assert list(c.records()) == rs

    def test_columns_are_read_only(self):
        c = Cohort.from_records([rec()])
        with pytest.raises(ValueError):
            c.niss[0] = 4

    def test_take_and_concat_preserve_ids(self):
        c = Cohort.from_records([rec("a"), rec("b"), rec("c")])
        both = concat([c.take([2]), c.take([0])])
        assert both.patient_ids == ["c", "a"]

    def test_generated_ids(self):
        c = marginal_cohort().take(np.array([0, 5]))
        assert c.patient_ids == ["P0000000", "P0000005"]

    def test_registry_marginals(self):
        c = marginal_cohort()
        cc = c.cohort_classes()
        n_out = int((cc == CohortClass.Out30).sum())
        avail = c.take(cc == CohortClass.AvailableW30D)
        dead = int((avail.event == Event.Death).sum())
        assert (len(avail) - dead, dead, n_out) == (ALIVE, DEAD, UNKNOWN)
        assert len(c.select(MAIN_GROUP)) == TOTAL == ALIVE + DEAD + UNKNOWN
