"""On-disk formats for run records, summary tables and chain traces.

Records are JSON lines.  The first line is a header object naming the
format and its schema version; each following line is one
:class:`~frigibbs.experiment.RunRecord`.  Non-finite floats (an infinite
SNR) are written as the strings ``"inf"``, ``"-inf"`` and ``"nan"`` so the
file stays strict JSON.

The summary is CSV with the columns of :data:`SUMMARY_HEADER`; traces are
CSV with one row per sweep.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import RecordFormatError
from .experiment import RunRecord, SummaryRow
from .gibbs import ChainTrace

RECORDS_FORMAT = "frigibbs-records"
RECORDS_SCHEMA_VERSION = 1
SUMMARY_HEADER = ("sigma_e", "N", "method", "mean_E", "std_E", "mean_snr_db", "n_ok", "n_failed")

_FLOAT_FIELDS = ("sigma_e", "T", "sigma_h", "E", "snr_db", "sigma_e_estimate", "wall_clock")
_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _encode_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _decode_float(x, name, lineno):
    if x is None or isinstance(x, (int, float)) and not isinstance(x, bool):
        return None if x is None else float(x)
    if isinstance(x, str) and x in _NONFINITE:
        return _NONFINITE[x]
    raise RecordFormatError(f"field {name!r} is not a number: {x!r}", lineno)


def record_to_json(r: RunRecord) -> str:
    d = r.to_dict()
    for k in _FLOAT_FIELDS:
        d[k] = _encode_float(d[k])
    return json.dumps(d, sort_keys=True, allow_nan=False)


def export_records(records, path) -> None:
    """Write ``records`` to ``path``; an empty collection gives a header-only file."""
    header = {"format": RECORDS_FORMAT, "schema_version": RECORDS_SCHEMA_VERSION}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for r in records:
            fh.write(record_to_json(r) + "\n")


def import_records(path) -> list[RunRecord]:
    """Read a file written by :func:`export_records`.

    Raises :class:`RecordFormatError` naming the offending line for a
    missing or foreign header, a schema-version mismatch, malformed JSON
    or a record with missing fields.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise RecordFormatError("empty file, expected a header", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"unreadable header: {exc.msg}", 1) from exc
    if not isinstance(header, dict) or header.get("format") != RECORDS_FORMAT:
        raise RecordFormatError(f"not a {RECORDS_FORMAT} file", 1)
    version = header.get("schema_version")
    if version != RECORDS_SCHEMA_VERSION:
        raise RecordFormatError(
            f"schema version {version} is not supported (expected {RECORDS_SCHEMA_VERSION})", 1
        )

    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise RecordFormatError("blank line", lineno)
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"malformed record: {exc.msg}", lineno) from exc
        if not isinstance(d, dict):
            raise RecordFormatError("record is not an object", lineno)
        for k in _FLOAT_FIELDS:
            if k in d:
                d[k] = _decode_float(d[k], k, lineno)
        try:
            out.append(RunRecord.from_dict(d))
        except (KeyError, TypeError) as exc:
            raise RecordFormatError(f"missing or invalid fields: {exc}", lineno) from exc
    return out


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def summary_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in rows:
        w.writerow([_fmt(r.sigma_e), r.N, r.method, _fmt(r.mean_E), _fmt(r.std_E),
                    _fmt(r.mean_snr_db), r.n_ok, r.n_failed])
    return buf.getvalue()


def write_summary(rows: list[SummaryRow], path) -> None:
    Path(path).write_text(summary_csv(rows), encoding="utf-8")


def read_summary(path) -> list[SummaryRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != SUMMARY_HEADER:
            raise RecordFormatError(f"unexpected summary header {header}", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                s, n, m, me, se, snr, ok, failed = row
                rows.append(SummaryRow(float(s), int(n), m, float(me), float(se), float(snr),
                                       int(ok), int(failed)))
            except ValueError as exc:
                raise RecordFormatError(f"bad summary row: {exc}", lineno) from exc
    return rows


def trace_header(K: int) -> list[str]:
    return (["sweep"] + [f"c_{k}" for k in range(1, K + 1)]
            + [f"t_{k}" for k in range(1, K + 1)] + ["sigma_e", "neg_log_lik"])


def write_trace(trace: ChainTrace, path) -> None:
    """One row per sweep, numbered from 1; burn-in sweeps included."""
    K = trace.c.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(K))
        for i in range(len(trace)):
            w.writerow([i + 1] + [repr(float(v)) for v in trace.c[i]]
                       + [repr(float(v)) for v in trace.t[i]]
                       + [repr(float(trace.sigma_e[i])), repr(float(trace.neg_log_likelihood[i]))])


def read_trace(path) -> dict[str, np.ndarray]:
    """Columns of a trace file: ``sweep``, ``c`` (sweeps x K), ``t``, ``sigma_e``, ``neg_log_lik``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sweep" or header[-2:] != ["sigma_e", "neg_log_lik"]:
            raise RecordFormatError(f"unexpected trace header {header}", 1)
        K = (len(header) - 3) // 2
        if header != trace_header(K):
            raise RecordFormatError(f"unexpected trace header {header}", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise RecordFormatError(f"expected {len(header)} columns, got {len(row)}", lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise RecordFormatError(str(exc), lineno) from exc
    a = np.array(rows).reshape(-1, len(header))
    return {
        "sweep": a[:, 0].astype(int),
        "c": a[:, 1:1 + K],
        "t": a[:, 1 + K:1 + 2 * K],
        "sigma_e": a[:, -2],
        "neg_log_lik": a[:, -1],
    }
