import logging

import numpy as np
import pytest

from censored_mortality.cohort import CohortClass, Event, coarsest_partition
from censored_mortality.counts import DailyCounts, FluxCounts, aggregate_counts, flux_counts
from censored_mortality.estimation import TransitionTable, Variant, WilsonForm, estimate_transitions
from censored_mortality.inflow import project_inflow, validation_report
from censored_mortality.simulator import Ordering, paper_calibration, simulate_cohort, simulate_inflow

ONE = coarsest_partition()


def const_table(alpha, nu, variant, T=30, partition=ONE):
    S = partition.n_states
    a, v, z = np.full((T, S), alpha), np.full((T, S), nu), np.zeros((T, S))
    return TransitionTable(variant, partition, a, v, z, z, z, z)


def flux(L_in, L_out=None, partition=ONE):
    L_in = np.asarray(L_in, dtype=np.int64).reshape(len(L_in), -1)
    L_out = np.zeros_like(L_in) if L_out is None else np.asarray(L_out, dtype=np.int64).reshape(L_in.shape)
    T, S = L_in.shape
    z = np.zeros((T, S), dtype=np.int64)
    return FluxCounts(L_in, L_out, DailyCounts(partition, T, np.zeros((T + 1, S), dtype=np.int64), z, z, z))


def single_arrival(T=30):
    L = np.zeros(T, dtype=np.int64)
    L[1] = 1
    return flux(L)


@pytest.mark.parametrize("variant", list(Variant))
def test_zero_flux_projects_nothing(variant):
    p = project_inflow(const_table(0.2, 0.1, variant), flux(np.zeros(30)))
    assert not p.h.any() and not p.R.any() and not p.D.any() and p.total == 0


def test_single_arrival_retarded():
    p = project_inflow(const_table(0.2, 0.1, Variant.RetardedTransfer), single_arrival())
    assert p.D[2, 0] == 0 and p.h[2, 0] == 1
    assert p.D[3, 0] == pytest.approx(0.1, abs=1e-15)
    assert p.R[3, 0] == pytest.approx(0.2, abs=1e-15)
    assert p.h[3, 0] == pytest.approx(0.7, abs=1e-15)


def test_single_arrival_advanced_meets_first_lottery_on_arrival():
    p = project_inflow(const_table(0.2, 0.1, Variant.AdvancedTransfer), single_arrival())
    assert p.D[2, 0] == pytest.approx(0.1, abs=1e-15) and p.h[2, 0] == pytest.approx(0.7, abs=1e-15)
    assert p.D[3, 0] == pytest.approx(0.17, abs=1e-15)


def test_closed_form_single_arrival():
    T = 30
    p = project_inflow(const_table(0.2, 0.1, Variant.AdvancedTransfer), single_arrival(T))
    # arrival on day 2 faces T - 1 lotteries
    assert p.dead_proj == pytest.approx(0.1 / 0.3 * (1 - 0.7 ** (T - 1)), abs=1e-14)


@pytest.mark.parametrize("variant", list(Variant))
def test_mass_conservation(variant):
    rng = np.random.default_rng(8)
    L_in = rng.integers(0, 50, 30)
    L_in[0] = 0
    L_out = rng.integers(0, 3, 30)
    L_out[:2] = 0
    a, v = rng.uniform(0, 0.2, (30, 1)), rng.uniform(0, 0.05, (30, 1))
    z = np.zeros_like(a)
    p = project_inflow(TransitionTable(variant, ONE, a, v, z, z, z, z), flux(L_in, L_out))
    assert p.clamped_cells == 0
    net = np.concatenate([[0], np.cumsum(L_in - L_out)])
    assert np.allclose(p.h[:, 0] + p.R[:, 0] + p.D[:, 0], net, rtol=0, atol=1e-9)


def test_advanced_projects_at_least_retarded_on_constant_tables():
    rng = np.random.default_rng(9)
    L_in = rng.integers(0, 30, 30)
    L_in[0] = 0
    adv = project_inflow(const_table(0.15, 0.05, Variant.AdvancedTransfer), flux(L_in))
    ret = project_inflow(const_table(0.15, 0.05, Variant.RetardedTransfer), flux(L_in))
    assert adv.dead_proj >= ret.dead_proj


def test_clamp_logs_warning(caplog):
    L_in = np.zeros(30, dtype=np.int64); L_out = np.zeros(30, dtype=np.int64)
    L_in[1], L_out[2] = 1, 1
    with caplog.at_level(logging.WARNING, logger="censored_mortality.inflow"):
        p = project_inflow(const_table(0.5, 0.2, Variant.AdvancedTransfer), flux(L_in, L_out))
    assert p.clamped_cells == 1 and "clamped" in caplog.text
    assert (p.h >= 0).all()


def test_variant_and_partition_mismatch():
    from censored_mortality.cohort import builtin_partition
    tt = const_table(0.1, 0.1, Variant.AdvancedTransfer)
    with pytest.raises(ValueError):
        project_inflow(tt, single_arrival(), Variant.RetardedTransfer)
    with pytest.raises(ValueError):
        project_inflow(tt, flux(np.zeros((30, 7)), partition=builtin_partition("niss")))


def test_projection_matches_simulated_inflow():
    gt = paper_calibration().with_(ordering=Ordering.AdvancedTransfer)
    sched = np.zeros(gt.alpha.shape, dtype=np.int64)
    sched[1:29] = np.round(2000 * gt.state_mix).astype(np.int64)
    c, _ = simulate_inflow(gt, sched, seed=21)
    f = flux_counts(c, gt.partition)
    z = np.zeros_like(gt.alpha)
    tt = TransitionTable(Variant.AdvancedTransfer, gt.partition, gt.alpha, gt.nu, gt.mu, z, z, z)
    p = project_inflow(tt, f)
    dead = int(((c.event == Event.Death) & (c.event_day <= 30)).sum())
    assert p.total == len(c)
    assert abs(dead - p.dead_proj) <= 3 * np.sqrt(p.dead_proj)


def test_fitted_pipeline_on_simulated_registry():
    gt = paper_calibration()
    main, _ = simulate_cohort(gt, 100_000, seed=5)
    tt = estimate_transitions(aggregate_counts(main, gt.partition), "retarded")
    sched = np.zeros(gt.alpha.shape, dtype=np.int64)
    sched[1:29] = np.round(300 * gt.state_mix).astype(np.int64)
    c, _ = simulate_inflow(gt, sched, seed=6)
    inflow = c.select([CohortClass.In30])
    row = validation_report(project_inflow(tt, flux_counts(inflow, gt.partition)),
                            _empirical(inflow), "niss retarded")
    assert 0 < row.fod_proj < 0.2 and row.total == len(inflow)


def _empirical(c):
    dead = int(((c.event == Event.Death) & (c.event_day <= 30)).sum())
    return len(c) - dead, dead, len(c)


class TestValidationRows:
    def test_printed_empirical_ci(self):
        row = validation_report((13455 - 417, 417, 13455), (13455 - 417, 417, 13455), form=WilsonForm.Reduced)
        assert (round(100 * row.empirical_ci.lower, 2), round(100 * row.empirical_ci.upper, 2)) == (2.82, 3.41)

    def test_printed_projection_ci(self):
        row = validation_report((13455 - 483.78, 483.78, 13455), (13455 - 417, 417, 13455))
        assert (round(100 * row.ci.lower, 2), round(100 * row.ci.upper, 2)) == (3.29, 3.92)
        assert row.overlap

    def test_disjoint_intervals(self):
        row = validation_report((9000, 1000, 10000), (9800, 200, 10000))
        assert not row.overlap and row.to_dict()["ci_overlap"] is False

    def test_total_mismatch(self):
        with pytest.raises(ValueError):
            validation_report((90, 10, 100), (95, 5, 101))

    def test_projection_label_defaults_to_variant(self):
        p = project_inflow(const_table(0.2, 0.1, Variant.RetardedTransfer), single_arrival())
        row = validation_report(p, (0.5, 0.5, 1.0))
        assert row.label == "retarded" and row.dead_proj == p.dead_proj
