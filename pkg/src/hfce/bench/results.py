"""CSV/JSON emission of sweep results."""

from __future__ import annotations

import csv
import json
import math

from .runner import ResultRow

HEADER = ["estimator", "snr_db", "pilot_len", "alpha", "trials",
          "nmse_mean", "nmse_median", "ci95_lo", "ci95_hi"]


def _num(x: float) -> str:
    if math.isnan(x):
        return "nan"
    return f"{x:.17e}"


def _row_fields(r: ResultRow) -> list[str]:
    return [r.estimator, _num(r.snr_db), str(r.pilot_len), "" if r.alpha is None else _num(r.alpha),
            str(r.trials), _num(r.nmse_mean), _num(r.nmse_median), _num(r.ci95_lo), _num(r.ci95_hi)]


def format_csv(rows) -> str:
    lines = [",".join(HEADER)] + [",".join(_row_fields(r)) for r in rows]
    return "\n".join(lines) + "\n"


def format_json(rows) -> str:
    # hand-rolled so that every number keeps the same %.17e text as the CSV
    records = []
    for r in rows:
        f = _row_fields(r)
        items = [f'"estimator": {json.dumps(r.estimator)}']
        for key, text in zip(HEADER[1:], f[1:]):
            if key == "alpha" and not text:
                text = "null"
            elif text == "nan":
                text = "NaN"
            items.append(f'"{key}": {text}')
        records.append("  {" + ", ".join(items) + "}")
    return "[\n" + ",\n".join(records) + "\n]\n"


def emit_results(rows, fmt: str = "csv", path=None) -> str:
    """Render ``rows`` as CSV or JSON and optionally write them to ``path``."""
    rows = list(rows)
    if not rows:
        raise ValueError("no result rows to emit")
    if fmt == "csv":
        text = format_csv(rows)
    elif fmt == "json":
        text = format_json(rows)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def _row_from_record(rec) -> ResultRow:
    alpha = rec.get("alpha")
    return ResultRow(
        estimator=rec["estimator"], snr_db=float(rec["snr_db"]), pilot_len=int(rec["pilot_len"]),
        alpha=None if alpha in (None, "") else float(alpha), trials=int(rec["trials"]),
        nmse_mean=float(rec["nmse_mean"]), nmse_median=float(rec["nmse_median"]),
        ci95_lo=float(rec["ci95_lo"]), ci95_hi=float(rec["ci95_hi"]))


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as f:
        text = f.read()
    if text.lstrip().startswith("["):
        return [_row_from_record(r) for r in json.loads(text)]
    return [_row_from_record(r) for r in csv.DictReader(text.splitlines())]
