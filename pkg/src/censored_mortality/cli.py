"""Command-line pipeline: simulate, fit, fod, validate, reweight, stratify, oracle-check.

Every artifact carries the resolved run configuration: CSV files start with a
``# {json}`` comment line, JSON files have a ``metadata`` key. Nothing
time-dependent is recorded, so identical inputs give identical bytes.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, rng
from .cohort import (
    ClassificationError, Cohort, CohortClass, Event, JoinError, PartitionKind, builtin_partition,
    concat,
)
from .counts import aggregate_counts, check_balance, flux_counts
from .estimation import (
    Variant, WilsonForm, chi_square_independence, estimate_transitions, severity_transfer_table,
    transfer_fraction_report,
)
from .fod import ComparisonEntry, ComparisonTest, fod_report, model_comparison_report
from .inflow import project_inflow, validation_report
from .io import CsvParseError, json_text, read_records_csv, records_csv_text, rows_csv_text, write_atomic
from .reweight import death_weights, effective_dof, record_weights
from .sequential import ScheduleError, random_bounds_sweep
from .simulator import GroundTruth, paper_calibration, simulate_cohort, simulate_inflow
from .stratify import daily_mortality_curve, fod_by_age, moving_average

SUBCOMMANDS = ("simulate", "fit", "fod", "validate", "reweight", "stratify", "oracle-check")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input: str | None = None
    output_dir: str = "."
    partition: str = PartitionKind.NissBinned.value
    variant: str = Variant.RetardedTransfer.value
    horizon: int = 30
    z: float = 1.96
    seed: int | None = None
    format: str = "csv"
    workers: int = 1
    age_threshold: float = 54.5
    wilson_form: str = WilsonForm.Score.value
    options: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # parallelism never changes results
        return {"tool": "censored-mortality", "version": __version__, "config": d}


class InvariantError(RuntimeError):
    def __init__(self, invariant: str, message: str, details=None):
        super().__init__(message)
        self.invariant = invariant
        self.details = details


class _Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.meta = cfg.metadata()
        self.written: list[str] = []

    def table(self, stem: str, rows: list[dict], columns: Sequence[str] | None = None) -> None:
        if self.cfg.format == "json":
            self._put(f"{stem}.json", json_text({"rows": rows}, self.meta))
        else:
            self._put(f"{stem}.csv", rows_csv_text(rows, self.meta, columns))

    def doc(self, stem: str, payload: dict) -> None:
        self._put(f"{stem}.json", json_text(payload, self.meta))

    def records(self, name: str, cohort: Cohort, weights=None) -> None:
        self._put(name, records_csv_text(cohort, weights, self.meta))

    def _put(self, name: str, text: str) -> None:
        write_atomic(self.out / name, text)
        self.written.append(name)


# ---------------------------------------------------------------------------
# shared steps


def _partition(cfg: RunConfig, kind: str | None = None):
    return builtin_partition(kind or cfg.partition, cfg.age_threshold)


def _load(cfg: RunConfig) -> Cohort:
    if not cfg.input:
        raise ValueError(f"{cfg.subcommand} needs --input")
    return read_records_csv(cfg.input)


def _fit(cfg: RunConfig, records: Cohort, variant: str | None = None, kind: str | None = None):
    counts = aggregate_counts(records, _partition(cfg, kind), horizon=cfg.horizon)
    bad = check_balance(counts)
    if bad:
        raise InvariantError("daily_balance", f"{len(bad)} cells break the daily balance",
                             [asdict(b) for b in bad[:20]])
    if counts.total == 0:
        raise ValueError("no main-group records in the input")
    return counts, estimate_transitions(counts, variant or cfg.variant)


def _inflow_schedule(gt: GroundTruth, n: int, seed: int) -> np.ndarray:
    """``n`` arrivals spread uniformly over days 2..horizon and by the state mix."""
    T, S = gt.alpha.shape
    sched = np.zeros((T, S), dtype=np.int64)
    if n and T > 1:
        p = np.outer(np.full(T - 1, 1.0 / (T - 1)), gt.state_mix).ravel()
        gen = rng.block_generator(seed, rng.INFLOW_SCHEDULE, 0)
        sched[1:] = gen.multinomial(n, p / p.sum()).reshape(T - 1, S)
    return sched


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig, w: _Writer) -> dict:
    opts = cfg.options
    gt = GroundTruth.load(opts["ground_truth"]) if opts.get("ground_truth") else paper_calibration()
    if gt.horizon != cfg.horizon:
        raise ValueError(f"ground truth covers {gt.horizon} days but --horizon is {cfg.horizon}")
    seed = gt.seed if cfg.seed is None else cfg.seed
    main, truth = simulate_cohort(gt, opts["n_patients"], seed=seed, workers=cfg.workers)
    parts = [main]
    doc = {"seed": seed, "expected_fod": gt.expected_fod(), "main": truth.to_dict()}
    if opts["inflow"]:
        inflow, itruth = simulate_inflow(gt, _inflow_schedule(gt, opts["inflow"], seed), seed=seed,
                                         workers=cfg.workers)
        parts.append(inflow)
        doc["inflow"] = itruth.to_dict()
    w.records("records.csv", concat(parts) if len(parts) > 1 else main)
    w.doc("truth", doc)
    w.doc("ground_truth", gt.to_dict())
    return {"patients": sum(len(p) for p in parts), "true_fod": truth.true_fod}


def cmd_fit(cfg: RunConfig, w: _Writer) -> dict:
    records = _load(cfg)
    counts, tt = _fit(cfg, records)
    w.table("counts", counts.to_rows())
    w.table("transitions", tt.to_rows(cfg.z))
    fr = transfer_fraction_report(records, counts.partition, cfg.horizon, cfg.z, WilsonForm(cfg.wilson_form))
    w.table("transfer_fractions", [
        {"state_label": r.state, "out30": r.out30, "total": r.total, "fraction": r.fraction,
         "ci_lower": r.ci.lower if r.ci else "", "ci_upper": r.ci.upper if r.ci else ""} for r in fr
    ])
    table = severity_transfer_table(records, counts.partition, cfg.horizon)
    chi = None
    if table.shape[0] >= 2 and (table.sum(axis=0) > 0).all():
        res = chi_square_independence(table)
        chi = {"statistic": res.statistic, "dof": res.dof, "p_value": res.p_value, "log10_p": res.log10_p,
               "p_value_text": res.p_value_text()}
    w.doc("chi_square", {"table": table, "result": chi})
    return {"states": counts.partition.n_states, "patients": int(counts.total)}


def cmd_fod(cfg: RunConfig, w: _Writer) -> dict:
    records = _load(cfg)
    counts, tt = _fit(cfg, records)
    rep = fod_report(counts, tt.variant, tt)
    alive, dead, unknown = rep.observed
    entries: list = [
        ComparisonEntry("available-case", dead, alive + dead),
        ComparisonEntry("all-transferred-alive", dead, alive + dead + unknown),
    ]
    kinds = [PartitionKind.Coarsest.value] + ([cfg.partition] if cfg.partition != PartitionKind.Coarsest.value else [])
    for kind in kinds:
        for v in Variant:
            c, t = _fit(cfg, records, v.value, kind)
            entries.append((f"{kind} {v.value}", fod_report(c, v, t)))
    reference = f"{PartitionKind.Coarsest.value} {Variant.AdvancedTransfer.value}"
    test = ComparisonTest(cfg.options.get("comparison_test", ComparisonTest.OneSampleVsReference.value))
    rows = model_comparison_report(entries, reference, test)
    w.doc("fod_report", rep.to_dict())
    w.table("cfod", [
        {"t": k + 1, "cfod": float(rep.cfod[k]),
         **{f"scfod[{lab}]": float(rep.scfod[k, s]) for s, lab in enumerate(rep.state_labels)}}
        for k in range(len(rep.cfod))
    ])
    w.table("comparison", [
        {"model": r.label, "alive": r.alive, "dead": r.dead, "fod": r.fod, "p_value": r.p_value} for r in rows
    ])
    return {"corrected_fod": rep.corrected_fod}


def cmd_validate(cfg: RunConfig, w: _Writer) -> dict:
    records = _load(cfg)
    _, tt = _fit(cfg, records)
    inflow = records.select([CohortClass.In30], cfg.horizon)
    if len(inflow) == 0:
        raise ValueError("no inflow (arrival day 2..horizon) records in the input")
    flux = flux_counts(inflow, tt.partition, cfg.horizon)
    bad = check_balance(flux.counts)
    if bad:
        raise InvariantError("daily_balance", f"{len(bad)} inflow cells break the daily balance",
                             [asdict(b) for b in bad[:20]])
    proj = project_inflow(tt, flux)
    dead = int(((inflow.event == Event.Death) & (inflow.event_day <= cfg.horizon)).sum())
    total = len(inflow)
    row = validation_report(proj, (total - dead, dead, total), f"{cfg.partition} {tt.variant.value}", cfg.z,
                            WilsonForm(cfg.wilson_form))
    w.table("validation", [row.to_dict()])
    w.table("inflow_flux", flux.to_rows())
    return {"fod_proj": row.fod_proj, "empirical_fod": row.empirical_fod, "clamped_cells": proj.clamped_cells}


def _weighted_known(cfg: RunConfig, records: Cohort):
    counts, tt = _fit(cfg, records)
    wt = death_weights(tt, counts)
    known = records.select([CohortClass.AvailableW30D], cfg.horizon)
    known = known.take(known.arrival_day <= 1)
    return counts, tt, wt, known, record_weights(known, wt, cfg.horizon)


def cmd_reweight(cfg: RunConfig, w: _Writer) -> dict:
    records = _load(cfg)
    counts, tt, wt, known, weights = _weighted_known(cfg, records)
    labels = counts.partition.labels
    w.table("weights", [
        {"t": k + 1, "state_label": lab, "dD": int(counts.dD[k, s]), "dD_L": float(wt.dD_L[k, s]),
         "p_dt": float(wt.p_dt[k, s]), "w": "" if np.isnan(wt.w[k, s]) else float(wt.w[k, s])}
        for k in range(counts.horizon) for s, lab in enumerate(labels)
    ])
    w.records("weighted_records.csv", known, weights)
    n_w = effective_dof(weights)
    w.doc("reweight_summary", {
        "n": len(known), "n_w": n_w, "sum_weights": float(weights.sum()),
        "states": {lab: {"H0": int(counts.H0[s]), "H0w": float(wt.H0w[s]), "p_d": float(wt.p_d[s])}
                   for s, lab in enumerate(labels)},
    })
    return {"n": len(known), "n_w": n_w}


def cmd_stratify(cfg: RunConfig, w: _Writer) -> dict:
    opts = cfg.options
    records = _load(cfg)
    cut = opts["age_cut"]
    groups = {
        "all": np.ones(len(records), dtype=bool),
        f"age<{cut:g}": records.age_years < cut,
        f"age>={cut:g}": records.age_years >= cut,
    }
    rows, skipped = [], []
    for name, mask in groups.items():
        sub = records.take(mask)
        counts = aggregate_counts(sub, _partition(cfg), horizon=cfg.horizon)
        if counts.total == 0:
            skipped.append(name)
            continue
        tt = estimate_transitions(counts, cfg.variant)
        present = np.flatnonzero(counts.H0 > 0)
        raw = daily_mortality_curve(tt, present, counts.H0.astype(float))
        smooth = moving_average(raw, opts["window"], opts["start_day"])
        rows += [{"group": name, "t": k + 1, "raw": float(raw[k]), "smoothed": float(smooth[k])}
                 for k in range(cfg.horizon)]
    w.table("daily_mortality", rows)

    _, _, _, known, weights = _weighted_known(cfg, records)
    died = (known.event == Event.Death) & (known.event_day <= cfg.horizon)
    fit = fod_by_age(known.age_years, died, weights, age_bin_width=opts["age_bin_width"])
    w.table("fod_by_age", [
        {"age_bin": float(b), "fod": float(f), "weight": float(x)} for b, f, x in zip(fit.bins, fit.fod, fit.weight)
    ])
    w.doc("age_fit", {
        "breakpoint": fit.breakpoint, "fod_at_break": fit.fod_at_break, "slope_before": fit.slope_before,
        "slope_after": fit.slope_after, "wrss": fit.residual, "degenerate": fit.degenerate,
        "moving_average": {"window": opts["window"], "start_day": opts["start_day"],
                           "edge_policy": "pass-through before start_day, truncated window at series ends"},
        "skipped_groups": skipped,
    })
    return {"breakpoint": fit.breakpoint}


def cmd_oracle_check(cfg: RunConfig, w: _Writer) -> dict:
    seed = 0 if cfg.seed is None else cfg.seed
    rep = random_bounds_sweep(cfg.options["n"], cfg.options["max_m"], seed)
    summary = {"passed": rep.passed, **asdict(rep)}
    w.doc("oracle_check", summary)
    return summary


_COMMANDS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "fod": cmd_fod, "validate": cmd_validate,
    "reweight": cmd_reweight, "stratify": cmd_stratify, "oracle-check": cmd_oracle_check,
}


# ---------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="record CSV")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--partition", default=PartitionKind.NissBinned.value, choices=[k.value for k in PartitionKind])
    p.add_argument("--variant", default=Variant.RetardedTransfer.value, choices=[v.value for v in Variant])
    p.add_argument("--horizon", type=int, default=30)
    p.add_argument("--z", type=float, default=1.96)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", default="csv", choices=["csv", "json"], help="format of tabular outputs")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--age-threshold", type=float, default=54.5, help="age split of the niss-age partition")
    p.add_argument("--wilson-form", default=WilsonForm.Score.value, choices=[f.value for f in WilsonForm],
                   help="'reduced' drops the z^2/4n^2 term, as in the registry's printed tables")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="censored-mortality", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)
    p = sub.add_parser("simulate", help="generate a synthetic registry extract")
    _common(p)
    p.add_argument("--ground-truth", help="ground-truth JSON (default: shipped calibration fixture)")
    p.add_argument("--n-patients", type=int, default=165_559)
    p.add_argument("--inflow", type=int, default=0, help="number of inflow arrivals on days 2..horizon")
    for name, text in (("fit", "daily counts, transition coefficients, transfer fractions"),
                       ("fod", "corrected and naive FOD with model comparison"),
                       ("validate", "project the inflow cohort and compare with its outcomes"),
                       ("reweight", "death weights for the known-outcome dataset")):
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "fod":
            p.add_argument("--comparison-test", default=ComparisonTest.OneSampleVsReference.value,
                           choices=[t.value for t in ComparisonTest])
    p = sub.add_parser("stratify", help="daily mortality curves and FOD by age")
    _common(p)
    p.add_argument("--age-cut", type=float, default=65.0)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--start-day", type=int, default=3)
    p.add_argument("--age-bin-width", type=float, default=1.0)
    p = sub.add_parser("oracle-check", help="random check of the sequential-model bounds")
    _common(p)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--max-m", type=int, default=6)
    return ap


_BASE = {"subcommand", "input", "output_dir", "partition", "variant", "horizon", "z", "seed", "format", "workers",
         "age_threshold", "wilson_form"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns)
    return RunConfig(**{k: d[k] for k in _BASE}, options={k: v for k, v in sorted(d.items()) if k not in _BASE})


def run(cfg: RunConfig) -> int:
    """Execute one subcommand; returns the exit status."""
    w = _Writer(cfg)
    summary = _COMMANDS[cfg.subcommand](cfg, w)
    print(json.dumps({"status": "ok", "subcommand": cfg.subcommand, "outputs": w.written,
                      **json.loads(json_text(summary))}, sort_keys=True))
    if cfg.subcommand == "oracle-check" and not summary["passed"]:
        return 1
    return 0


def _error_record(exc: BaseException) -> dict:
    rec = {"status": "error", "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, CsvParseError):
        rec["line"] = exc.line
    if getattr(exc, "invariant", None):
        rec["invariant"] = exc.invariant
    if isinstance(exc, InvariantError) and exc.details is not None:
        rec["details"] = exc.details
    if isinstance(exc, JoinError):
        rec["patient_ids"] = list(exc.patient_ids)
    return rec


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    cfg = config_from_args(ns)
    try:
        return run(cfg)
    except (ValueError, KeyError, OSError, InvariantError, ScheduleError, ClassificationError) as exc:
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
