"""Recompute the registry's printed summary tables from their published counts.

Prints transfer fractions with Wilson intervals (both interval forms), the two
naive estimators, the model-comparison p-values and the inflow empirical row.

    python scripts/registry_tables.py
"""
from __future__ import annotations

from censored_mortality.estimation import WilsonForm, wilson_interval
from censored_mortality.fod import ComparisonEntry, ComparisonTest, NaiveMode, model_comparison_report, naive_fod

MAX_SEVERITY = [("1", 1905, 3005), ("2", 3094, 35109), ("3", 6203, 77518), ("4", 4535, 29603),
                ("5", 3542, 20175), ("6", 10, 149)]
NISS_BINS = [("1-3", 1905, 3005), ("4-8", 2078, 24982), ("9", 2159, 36722), ("10-16", 2710, 29237),
             ("17-24", 2882, 25074), ("25-35", 3603, 23557), ("36+", 3952, 22982)]
ALIVE, DEAD, UNKNOWN = 135_733, 10_537, 19_289
H0 = ALIVE + DEAD + UNKNOWN
MODELS = [("coarsest advanced", 11342), ("coarsest retarded", 11209), ("max-severity advanced", 11439),
          ("max-severity retarded", 11293), ("niss advanced", 11414), ("niss retarded", 11267)]


def pct(x: float) -> str:
    return f"{100 * x:6.2f}"


def fraction_table(title: str, rows) -> None:
    print(f"\n{title}")
    print(f"{'state':>8} {'OUT30':>6} {'total':>6} {'frac%':>6}   reduced CI      score CI")
    for label, k, n in rows:
        r = wilson_interval(k / n, n, form=WilsonForm.Reduced)
        s = wilson_interval(k / n, n)
        print(f"{label:>8} {k:6d} {n:6d} {pct(k / n)}  {pct(r.lower)}-{pct(r.upper)}  {pct(s.lower)}-{pct(s.upper)}")


def main() -> None:
    fraction_table("transfer fractions by maximal severity", MAX_SEVERITY)
    fraction_table("transfer fractions by NISS bin", NISS_BINS)

    entries = [ComparisonEntry("available-case", DEAD, ALIVE + DEAD), ComparisonEntry("all-transferred-alive", DEAD, H0)]
    entries += [ComparisonEntry(label, dead, H0) for label, dead in MODELS]
    print(f"\nnaive: available-case {pct(naive_fod(ALIVE, DEAD, UNKNOWN, NaiveMode.AvailableCase))}%, "
          f"all-transferred-alive {pct(naive_fod(ALIVE, DEAD, UNKNOWN, NaiveMode.AllTransferredAlive))}%")
    print(f"\n{'model':>24} {'FOD%':>6} {'p one-sample':>13} {'p pooled':>10}")
    one = model_comparison_report(entries, "coarsest advanced", ComparisonTest.OneSampleVsReference)
    pooled = model_comparison_report(entries, "coarsest advanced", ComparisonTest.PooledTwoProportion)
    for a, b in zip(one, pooled):
        print(f"{a.label:>24} {pct(a.fod)} {a.p_value:13.3g} {b.p_value:10.3g}")

    ci = wilson_interval(417 / 13455, 13455)
    print(f"\ninflow empirical: {pct(417 / 13455)}% ({pct(ci.lower)}-{pct(ci.upper)})")


if __name__ == "__main__":
    main()
