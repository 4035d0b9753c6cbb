"""Record CSV reading/writing and atomic artifact output."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cohort import Cohort, Destination, Event, RecordError, _ALLOWED_DESTINATIONS

RECORD_COLUMNS = ("patient_id", "age_years", "niss", "max_severity", "arrival_day", "event_day", "event",
                  "destination")

_EVENTS = {e.name.casefold(): int(e) for e in Event}
_DESTS = {d.name.casefold(): int(d) for d in Destination}


class CsvParseError(ValueError):
    def __init__(self, line: int, message: str, invariant: str | None = None):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.invariant = invariant


def _data_lines(text: str) -> Iterable[tuple[int, str]]:
    for no, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#") or not line.strip():
            continue
        yield no, line


def parse_records_csv(text: str) -> Cohort:
    """Parse the record CSV. Lines starting with ``#`` are metadata and skipped."""
    numbered = list(_data_lines(text))
    if not numbered:
        raise CsvParseError(1, "missing header")
    header_line, header = numbered[0]
    cols = next(csv.reader([header]))
    if tuple(c.strip() for c in cols) != RECORD_COLUMNS:
        raise CsvParseError(header_line, f"header must be exactly {','.join(RECORD_COLUMNS)}; got {header}")
    ids, ages, niss, sev, arr, evd, ev, dest, lines = [], [], [], [], [], [], [], [], []
    for no, row in zip((n for n, _ in numbered[1:]), csv.reader([line for _, line in numbered[1:]])):
        if len(row) != len(RECORD_COLUMNS):
            raise CsvParseError(no, f"expected {len(RECORD_COLUMNS)} fields, got {len(row)}")
        try:
            ids.append(row[0])
            ages.append(float(row[1]))
            niss.append(int(row[2]))
            sev.append(int(row[3]))
            arr.append(int(row[4]))
            evd.append(int(row[5]))
        except ValueError as exc:
            raise CsvParseError(no, str(exc)) from None
        try:
            ev.append(_EVENTS[row[6].strip().casefold()])
        except KeyError:
            raise CsvParseError(no, f"unknown event {row[6]!r}") from None
        try:
            dest.append(_DESTS[row[7].strip().casefold()])
        except KeyError:
            raise CsvParseError(no, f"unknown destination {row[7]!r}") from None
        lines.append(no)
    cohort = Cohort(
        np.array(ages, dtype=float), np.array(niss, dtype=np.int64), np.array(sev, dtype=np.int64),
        np.array(arr, dtype=np.int64), np.array(evd, dtype=np.int64), np.array(ev, dtype=np.int64),
        np.array(dest, dtype=np.int64), ids=np.array(ids, dtype=object),
    )
    bad = first_invalid(cohort)
    if bad is not None:
        idx, err = bad
        raise CsvParseError(lines[idx], str(err), err.invariant)
    return cohort


def first_invalid(c: Cohort) -> tuple[int, RecordError] | None:
    """Index and error of the first record breaking a schema invariant."""
    checks = [
        ("age_non_negative", ~(c.age_years >= 0)),
        ("niss_positive", c.niss < 1),
        ("max_severity_range", (c.max_severity < 1) | (c.max_severity > 6)),
        ("arrival_day_positive", c.arrival_day < 1),
        ("event_after_arrival", c.event_day < c.arrival_day),
    ]
    allowed = np.zeros((len(Event), len(Destination)), dtype=bool)
    for e, ds in _ALLOWED_DESTINATIONS.items():
        for d in ds:
            allowed[int(e), int(d)] = True
    checks.append(("event_destination_consistent", ~allowed[c.event, c.destination]))
    first = None
    for name, mask in checks:
        hit = np.flatnonzero(mask)
        if len(hit) and (first is None or hit[0] < first[0]):
            first = (int(hit[0]), name)
    if first is None:
        return None
    return first[0], RecordError(first[1], f"record {c.patient_ids[first[0]] if c.ids is not None else first[0]}")


def read_records_csv(path: str | Path) -> Cohort:
    return parse_records_csv(Path(path).read_text(encoding="utf-8"))


def format_float(x: float) -> str:
    return repr(float(x))


def records_csv_text(c: Cohort, weights: Sequence[float] | None = None, metadata: dict | None = None) -> str:
    buf = io.StringIO()
    if metadata is not None:
        buf.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS + (("weight",) if weights is not None else ()))
    ev_names = [e.name for e in Event]
    dest_names = [d.name for d in Destination]
    ids = c.patient_ids
    for i in range(len(c)):
        row = [ids[i], format_float(c.age_years[i]), int(c.niss[i]), int(c.max_severity[i]),
               int(c.arrival_day[i]), int(c.event_day[i]), ev_names[c.event[i]], dest_names[c.destination[i]]]
        if weights is not None:
            row.append(format_float(weights[i]))
        w.writerow(row)
    return buf.getvalue()


def rows_csv_text(rows: Sequence[dict], metadata: dict | None = None, columns: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    if metadata is not None:
        buf.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
    cols = list(columns or (rows[0].keys() if rows else []))
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: format_float(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def json_text(payload: dict, metadata: dict | None = None) -> str:
    doc = {"metadata": metadata, **payload} if metadata is not None else payload
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def write_atomic(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the target directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
