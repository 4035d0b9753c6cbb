"""Shared builders for deterministic test cohorts."""
from __future__ import annotations

import numpy as np

from censored_mortality.cohort import Cohort, Destination, Event

# NISS 1-3, 4-8, 9, 10-16, 17-24, 25-35, 36+
NISS_TOTALS = (3005, 24982, 36722, 29237, 25074, 23557, 22982)
NISS_OUT30 = (1905, 2078, 2159, 2710, 2882, 3603, 3952)
NISS_LOW = (1, 4, 9, 10, 17, 25, 36)
# max severity 1..6
SEV_TOTALS = (3005, 35109, 77518, 29603, 20175, 149)
SEV_OUT30 = (1905, 3094, 6203, 4535, 3542, 10)

ALIVE, DEAD, UNKNOWN, TOTAL = 135_733, 10_537, 19_289, 165_559


def _split(total: int, weights) -> np.ndarray:
    """Largest-remainder apportionment of ``total`` by ``weights``."""
    w = np.asarray(weights, dtype=float)
    raw = total * w / w.sum()
    out = np.floor(raw).astype(np.int64)
    out[np.argsort(-(raw - out), kind="stable")[: total - out.sum()]] += 1
    return out


def marginal_cohort(kind: str = "niss", deaths: int = DEAD) -> Cohort:
    """Main group whose per-state totals and Out30 counts follow the registry tables.

    Deaths are apportioned over the non-transferred patients of each state;
    event days cycle through 1..30 so every day is populated.
    """
    if kind == "niss":
        totals, outs = NISS_TOTALS, NISS_OUT30
        niss_of = list(NISS_LOW)
        sev_of = [max(1, int(np.ceil(np.sqrt(n / 3.0) - 1e-12))) for n in NISS_LOW]
    else:
        totals, outs = SEV_TOTALS, SEV_OUT30
        niss_of = [s * s for s in range(1, 7)]
        sev_of = list(range(1, 7))
    stay = np.asarray(totals) - np.asarray(outs)
    dead = _split(deaths, stay)
    cols = {k: [] for k in ("age", "niss", "sev", "day", "event", "dest")}
    for s, (n, k, d) in enumerate(zip(totals, outs, dead)):
        ev = np.full(n, int(Event.Recovery))
        dest = np.full(n, int(Destination.HomeOwn))
        ev[:k] = Event.TransferOut
        dest[:k] = Destination.OtherAcuteHospital
        ev[k:k + d] = Event.Death
        dest[k:k + d] = Destination.Mortuary
        cols["age"].append(20.0 + (np.arange(n) % 70))
        cols["niss"].append(np.full(n, niss_of[s]))
        cols["sev"].append(np.full(n, sev_of[s]))
        cols["day"].append(np.arange(n) % 30 + 1)
        cols["event"].append(ev)
        cols["dest"].append(dest)
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    n = len(cat["event"])
    return Cohort(cat["age"].astype(float), cat["niss"].astype(np.int64), cat["sev"].astype(np.int64),
                  np.ones(n, dtype=np.int64), cat["day"].astype(np.int64), cat["event"].astype(np.int64),
                  cat["dest"].astype(np.int64))


def make_cohort(rows) -> Cohort:
    """Cohort from (age, niss, max_severity, arrival_day, event_day, event, destination) tuples."""
    if not rows:
        return Cohort.empty()
    a = list(zip(*rows))
    return Cohort(
        np.array(a[0], dtype=float), np.array(a[1], dtype=np.int64), np.array(a[2], dtype=np.int64),
        np.array(a[3], dtype=np.int64), np.array(a[4], dtype=np.int64),
        np.array([int(e) for e in a[5]], dtype=np.int64), np.array([int(d) for d in a[6]], dtype=np.int64),
    )
