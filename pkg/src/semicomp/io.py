"""CSV cohort files and JSON helpers.

Subject-level CSV: ``id, entry, t1, d1, t2, d2`` followed by covariate
columns.  Optional long-format CSV of time-varying covariates:
``id, interval_index, name, value``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError, SemiCompError
from .timegrid import SubjectRecord

SUBJECT_COLUMNS = ("id", "entry", "t1", "d1", "t2", "d2")
TV_COLUMNS = ("id", "interval_index", "name", "value")


class SchemaError(SemiCompError, ValueError):
    """Malformed input file; the message carries the file and line number."""


def _float(value: str, where: str, column: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: column {column!r} is not a number: {value!r}") from None
    if not math.isfinite(out):
        raise SchemaError(f"{where}: column {column!r} is not finite")
    return out


def _flag(value: str, where: str, column: str) -> int:
    v = _float(value, where, column)
    if v not in (0.0, 1.0):
        raise SchemaError(f"{where}: column {column!r} must be 0 or 1, got {value!r}")
    return int(v)


def read_tv_csv(path) -> dict:
    """``{id: {interval_index: {name: value}}}`` from the long-format file."""
    path = Path(path)
    out: dict = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TV_COLUMNS:
            raise SchemaError(f"{path}:1: header must be {','.join(TV_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if not row:
                continue
            if len(row) != 4:
                raise SchemaError(f"{where}: expected 4 fields, got {len(row)}")
            sid, k, name, value = (c.strip() for c in row)
            kf = _float(k, where, "interval_index")
            if kf != int(kf) or kf < 1:
                raise SchemaError(f"{where}: interval_index must be a positive integer")
            out.setdefault(sid, {}).setdefault(int(kf), {})[name] = _float(value, where, "value")
    return out


def read_cohort_csv(path, tv_path=None) -> list:
    """Read subject records, validating each row with its line number."""
    path = Path(path)
    tv = read_tv_csv(tv_path) if tv_path else {}
    records = []
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}:1: empty file")
        header = [h.strip() for h in header]
        if tuple(header[:6]) != SUBJECT_COLUMNS:
            raise SchemaError(f"{path}:1: first columns must be {','.join(SUBJECT_COLUMNS)}")
        cov_names = header[6:]
        if len(set(cov_names)) != len(cov_names):
            raise SchemaError(f"{path}:1: duplicate covariate columns")
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{where}: expected {len(header)} fields, got {len(row)}")
            sid = row[0].strip()
            if sid in seen:
                raise SchemaError(f"{where}: duplicate id {sid!r}")
            seen.add(sid)
            entry = _float(row[1], where, "entry")
            t1 = _float(row[2], where, "t1")
            d1 = _flag(row[3], where, "d1")
            t2 = _float(row[4], where, "t2")
            d2 = _flag(row[5], where, "d2")
            covs = {n: _float(v, where, n) for n, v in zip(cov_names, row[6:])}
            try:
                rec = SubjectRecord(sid, entry, t1, d1, t2, d2, covs, tv.get(sid))
            except DomainError as err:
                raise SchemaError(f"{where}: {err}") from None
            records.append(rec)
    unknown = set(tv) - seen
    if unknown:
        raise SchemaError(f"{tv_path}: ids not in the subject file: {sorted(unknown)[:5]}")
    if not records:
        raise SchemaError(f"{path}: no subjects")
    return records


def _fmt(x: float) -> str:
    return repr(float(x))


def write_cohort_csv(records: Sequence[SubjectRecord], path, tv_path=None) -> None:
    """Write records in the subject-level schema (and time-varying values)."""
    names = sorted({n for r in records for n in r.baseline_covariates})
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(SUBJECT_COLUMNS) + names)
        for r in records:
            w.writerow([r.id, _fmt(r.entry), _fmt(r.t1_obs), r.d1, _fmt(r.t2_obs), r.d2]
                       + [_fmt(r.baseline_covariates[n]) for n in names])
    if tv_path is not None:
        with Path(tv_path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TV_COLUMNS)
            for r in records:
                for k in sorted(r.time_varying or {}):
                    for n in sorted(r.time_varying[k]):
                        w.writerow([r.id, k, n, _fmt(r.time_varying[k][n])])


def jsonable(obj):
    """Convert numpy values and non-finite floats into plain JSON types."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dump_json(obj, path) -> None:
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")
