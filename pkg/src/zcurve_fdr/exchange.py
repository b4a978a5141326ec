"""Observation exchange files (CSV, TSV, or JSON lines).

One record per reported statistic; see docs/formats.md for the field list.
Columns other than the fixed ones are carried along as group keys.
"""
import csv
import json

from .observations import (
    EXACT,
    LESS_EQUAL,
    LESS_THAN,
    ROUNDED,
    ConfidenceIntervalReport,
    PValueReport,
    ci_to_z,
    to_z_observation,
)

FIELDS = ("source_id", "kind", "value", "decimals", "lower", "upper", "level", "scale")
KINDS = ("p_exact", "p_rounded", "p_less", "p_less_equal", "ci")
_STYLE_KIND = {EXACT: "p_exact", ROUNDED: "p_rounded", LESS_THAN: "p_less", LESS_EQUAL: "p_less_equal"}
_KIND_STYLE = {v: k for k, v in _STYLE_KIND.items()}


class ExchangeFormatError(ValueError):
    def __init__(self, errors):
        self.errors = errors
        lines = "; ".join(f"line {n}: {msg}" for n, msg in errors[:5])
        super().__init__(f"{len(errors)} invalid observation record(s): {lines}")


def _fmt(path):
    p = str(path)
    if p.endswith((".jsonl", ".json", ".ndjson")):
        return "jsonl"
    return "tsv" if p.endswith(".tsv") else "csv"


def _num(v):
    if v is None or v == "":
        return None
    return float(v)


def report_to_row(report):
    row = {k: "" for k in FIELDS}
    row["source_id"] = report.source_id or ""
    if isinstance(report, ConfidenceIntervalReport):
        row.update(
            kind="ci",
            value="" if report.estimate is None else repr(report.estimate),
            lower=repr(report.lower),
            upper=repr(report.upper),
            level=repr(report.level),
            scale=report.scale,
        )
    else:
        row.update(kind=_STYLE_KIND[report.style], value=repr(report.value))
        if report.style == ROUNDED:
            row["decimals"] = str(report.decimals)
    for k, v in report.group_keys.items():
        row[k] = v
    return row


def row_to_report(row):
    row = {k: ("" if v is None else v) for k, v in row.items()}
    kind = str(row.get("kind", "")).strip()
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    groups = {k: str(v) for k, v in row.items() if k not in FIELDS and v != ""}
    sid = str(row.get("source_id") or "") or None
    if kind == "ci":
        return ConfidenceIntervalReport(
            lower=float(row["lower"]),
            upper=float(row["upper"]),
            estimate=_num(row.get("value")),
            level=_num(row.get("level")) or 0.95,
            scale=str(row.get("scale") or "additive"),
            source_id=sid,
            group_keys=groups,
        )
    decimals = row.get("decimals")
    return PValueReport(
        value=float(row["value"]),
        style=_KIND_STYLE[kind],
        decimals=int(float(decimals)) if decimals not in ("", None) else None,
        source_id=sid,
        group_keys=groups,
    )


def read_reports(path):
    """Load reports; any invalid record raises :class:`ExchangeFormatError`."""
    fmt = _fmt(path)
    reports, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            rows = ((n, json.loads(line)) for n, line in enumerate(fh, 1) if line.strip())
        else:
            reader = csv.DictReader(fh, delimiter="\t" if fmt == "tsv" else ",")
            rows = ((reader.line_num, r) for r in reader)
        try:
            for n, row in rows:
                try:
                    reports.append(row_to_report(row))
                except (ValueError, TypeError, KeyError) as exc:
                    errors.append((n, str(exc)))
        except json.JSONDecodeError as exc:
            errors.append((exc.lineno, f"invalid JSON: {exc.msg}"))
    if errors:
        raise ExchangeFormatError(errors)
    return reports


def write_reports(path, reports):
    rows = [report_to_row(r) for r in reports]
    extra = sorted({k for r in rows for k in r if k not in FIELDS})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if _fmt(path) == "jsonl":
            for r in rows:
                fh.write(json.dumps(r, sort_keys=False) + "\n")
        else:
            w = csv.DictWriter(
                fh, fieldnames=list(FIELDS) + extra,
                delimiter="\t" if _fmt(path) == "tsv" else ",", lineterminator="\n",
            )
            w.writeheader()
            w.writerows(rows)


def report_to_observation(report, two_sided=True):
    if isinstance(report, ConfidenceIntervalReport):
        return ci_to_z(report)
    return to_z_observation(report, two_sided)


def observations_from_reports(reports, two_sided=True):
    """Convert reports, skipping ones that cannot be mapped (returns both)."""
    obs, skipped = [], []
    for r in reports:
        try:
            o = report_to_observation(r, two_sided)
        except ValueError as exc:
            skipped.append((r, str(exc)))
            continue
        obs.append(o)
    return obs, skipped
