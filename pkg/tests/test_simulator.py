import numpy as np
import pytest

from censored_mortality.cohort import CohortClass, Event, PartitionKind
from censored_mortality.counts import aggregate_counts
from censored_mortality.estimation import transfer_fraction_report, wilson_interval
from censored_mortality.fod import fod_report
from censored_mortality.io import records_csv_text
from censored_mortality.simulator import (
    GroundTruth, Ordering, default_demographics, paper_calibration, simulate_cohort, simulate_inflow,
)

T = 30


def flat(alpha, nu, mu, ordering=Ordering.RetardedTransfer, M=1):
    full = lambda x: np.full((T, 1), float(x))
    return GroundTruth(PartitionKind.Coarsest, full(alpha), full(nu), full(mu), ordering, np.array([1.0]),
                       default_demographics("coarsest"), seed=7, M=M)


def analytic(alpha, nu, lotteries):
    return nu / (alpha + nu) * (1 - (1 - alpha - nu) ** lotteries)


@pytest.fixture(scope="module")
def calibrated():
    gt = paper_calibration()
    c, truth = simulate_cohort(gt, 165_559, seed=2024)
    return gt, c, truth


class TestGroundTruth:
    def test_rejects_bad_cells(self):
        with pytest.raises(ValueError):
            flat(0.7, 0.4, 0.1)
        with pytest.raises(ValueError):
            flat(0.1, 0.1, 1.2)

    def test_round_trip(self, tmp_path):
        gt = paper_calibration()
        gt.save(tmp_path / "gt.json")
        back = GroundTruth.load(tmp_path / "gt.json")
        assert back.to_dict() == gt.to_dict()

    def test_bad_version(self):
        d = paper_calibration().to_dict()
        d["version"] = 999
        with pytest.raises(ValueError):
            GroundTruth.from_dict(d)


@pytest.mark.parametrize("ordering", list(Ordering))
def test_no_transfers_visible_equals_true(ordering):
    c, truth = simulate_cohort(flat(0.1, 0.02, 0.0, ordering, M=3), 20_000, seed=1)
    assert not (c.cohort_classes() == CohortClass.Out30).any()
    visible = int(((c.event == Event.Death) & (c.event_day <= T)).sum())
    assert visible == truth.true_dead and truth.hidden_deaths == 0


def test_no_deaths():
    c, truth = simulate_cohort(flat(0.1, 0.0, 0.05), 10_000, seed=2)
    assert truth.true_fod == 0.0 and not (c.event == Event.Death).any()


@pytest.mark.parametrize("ordering", list(Ordering))
def test_true_fod_matches_analytic_under_every_ordering(ordering):
    n = 100_000
    _, truth = simulate_cohort(flat(0.08, 0.004, 0.05, ordering, M=4), n, seed=3)
    p = analytic(0.08, 0.004, T)
    assert abs(truth.true_fod - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_outcome_bookkeeping(calibrated):
    _, c, truth = calibrated
    parts = (truth.visible_deaths + truth.visible_recoveries + truth.visible_in_hospital
             + truth.hidden_deaths + truth.hidden_recoveries + truth.hidden_alive)
    assert parts == truth.n_patients == len(c)
    assert truth.transferred == truth.hidden_deaths + truth.hidden_recoveries + truth.hidden_alive
    assert truth.transferred == int((c.event == Event.TransferOut).sum() - ((c.event == Event.TransferOut)
                                                                              & (c.event_day > T)).sum())
    assert truth.true_dead == truth.visible_deaths + truth.hidden_deaths


def test_worker_count_does_not_change_output():
    gt = paper_calibration()
    texts = {records_csv_text(simulate_cohort(gt, 10_000, seed=5, workers=w)[0]) for w in (1, 2, 8)}
    assert len(texts) == 1
    sched = np.zeros(gt.alpha.shape, dtype=np.int64)
    sched[1:20] = 400
    texts = {records_csv_text(simulate_inflow(gt, sched, seed=5, workers=w)[0]) for w in (1, 3)}
    assert len(texts) == 1


def test_seed_changes_output():
    gt = paper_calibration()
    a = records_csv_text(simulate_cohort(gt, 2_000, seed=1)[0])
    b = records_csv_text(simulate_cohort(gt, 2_000, seed=2)[0])
    assert a != b


class TestInflow:
    def test_arrival_on_day_one_rejected(self):
        gt = flat(0.1, 0.01, 0.05)
        sched = np.zeros((T, 1), dtype=np.int64)
        sched[0] = 3
        with pytest.raises(ValueError):
            simulate_inflow(gt, sched)

    def test_shape_and_sign(self):
        gt = flat(0.1, 0.01, 0.05)
        with pytest.raises(ValueError):
            simulate_inflow(gt, np.zeros((T, 2), dtype=np.int64))
        sched = np.zeros((T, 1), dtype=np.int64)
        sched[4] = -1
        with pytest.raises(ValueError):
            simulate_inflow(gt, sched)

    def test_empty_schedule(self):
        c, truth = simulate_inflow(flat(0.1, 0.01, 0.05), np.zeros((T, 1), dtype=np.int64))
        assert len(c) == 0 and truth.n_patients == 0

    def test_thousand_arrivals_within_binomial_bound(self):
        sched = np.zeros((T, 1), dtype=np.int64)
        sched[1:21] = 50
        c, truth = simulate_inflow(flat(0.1, 0.03, 0.05), sched, seed=9)
        assert len(c) == 1000 and (c.arrival_day > 1).all()
        # an arrival on day a faces the lotteries of days a..T
        p = np.mean([analytic(0.1, 0.03, T - a + 1) for a in range(2, 22)])
        assert abs(truth.true_fod - p) <= 3 * np.sqrt(p * (1 - p) / 1000)
        assert (c.cohort_classes() == CohortClass.In30).all()


class TestCalibration:
    def test_out30_fraction(self, calibrated):
        _, c, _ = calibrated
        frac = np.mean(c.cohort_classes() == CohortClass.Out30)
        assert abs(100 * frac - 11.65) <= 0.5

    def test_low_niss_transfer_fraction(self, calibrated):
        gt, c, _ = calibrated
        row = transfer_fraction_report(c, gt.partition)[0]
        assert row.state == "NISS 1-3" and abs(100 * row.fraction - 63.39) <= 3

    def test_overall_fod_near_target(self, calibrated):
        _, _, truth = calibrated
        assert abs(truth.true_fod - 0.068) <= 0.005

    def test_corrected_fod_within_truth_band(self, calibrated):
        gt, c, truth = calibrated
        rep = fod_report(aggregate_counts(c, gt.partition), gt.ordering.value)
        band = wilson_interval(truth.true_fod, truth.n_patients)
        assert band.lower <= rep.corrected_fod <= band.upper

    def test_bias_ordering(self, calibrated):
        gt, c, truth = calibrated
        rep = fod_report(aggregate_counts(c, gt.partition), "retarded")
        sd = np.sqrt(truth.true_fod * (1 - truth.true_fod) / truth.n_patients)
        assert rep.naive_available_case >= truth.true_fod - 3 * sd
        assert truth.true_fod >= rep.naive_all_alive - 3 * sd
