"""Extract p-values and confidence intervals from abstract text.

The grammar is documented in docs/extraction_grammar.md; every production
has a fixture in tests/fixtures/extraction_fixtures.json.
"""
from dataclasses import dataclass, field, replace
import csv
import json
import re
from typing import Union

import numpy as np

from .observations import (
    EXACT,
    LESS_EQUAL,
    LESS_THAN,
    ROUNDED,
    ConfidenceIntervalReport,
    PValueReport,
)

GRAMMAR_VERSION = "1.0"

STUDY_TYPES = ("clinical_trial", "randomized_controlled_trial", "other")
_STUDY_ALIASES = {
    "ct": "clinical_trial",
    "clinical trial": "clinical_trial",
    "clinical_trial": "clinical_trial",
    "rct": "randomized_controlled_trial",
    "randomized controlled trial": "randomized_controlled_trial",
    "randomised controlled trial": "randomized_controlled_trial",
    "randomized_controlled_trial": "randomized_controlled_trial",
    "other": "other",
}


def normalize_study_type(s):
    key = str(s).strip().lower()
    if key not in _STUDY_ALIASES:
        raise ValueError(f"unknown study type {s!r}")
    return _STUDY_ALIASES[key]


@dataclass(frozen=True)
class AbstractRecord:
    id: str
    journal: str
    year: int
    study_type: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("abstract id is empty")
        if int(self.year) < 1900:
            raise ValueError(f"implausible year {self.year}")
        object.__setattr__(self, "study_type", normalize_study_type(self.study_type))

    @property
    def group_keys(self):
        return {"journal": self.journal, "year": str(self.year), "study_type": self.study_type}


@dataclass(frozen=True)
class ExtractionRecord:
    source_id: str
    kind: str  # "p_value" | "confidence_interval"
    raw_span: str
    parsed: Union[PValueReport, ConfidenceIntervalReport]
    position: int


@dataclass
class Extraction:
    records: list
    diagnostics: list = field(default_factory=list)


# --- numbers -----------------------------------------------------------------

_MINUS = "-−–"  # hyphen, minus sign, en dash
_DOT = r"[.·]"  # period or the middle dot some journals print
_TIMES = r"(?:[x×*]|⨯)"
_MANT = rf"(?:\d+(?:{_DOT}\d+)?|{_DOT}\d+)"
_SUP = "⁻¹²³⁴⁵⁶⁷⁸⁹⁰"
_SUP_DIGITS = str.maketrans("⁰¹²³⁴⁵⁶⁷⁸⁹", "0123456789")


def _number_re(tag):
    return (
        rf"(?P<{tag}>"
        rf"{_MANT}\s*[eE]\s*[{_MINUS}+]?\d+"  # 1.2e-4
        rf"|(?:{_MANT}\s*{_TIMES}\s*)?10\s*(?:\^|\*\*)?\s*(?:\(\s*[{_MINUS}]\s*\d+\s*\)|[{_MINUS}]\s*\d+)"  # 1.2x10-4, 10^-4
        rf"|(?:{_MANT}\s*{_TIMES}\s*)?10[{_SUP}]+"  # 1.2x10⁻⁴
        rf"|{_MANT}"
        r")"
    )


def parse_number(token):
    """Parse a numeric token; returns ``(value, decimals)``.

    ``decimals`` is the number of decimal places the printed token resolves
    (for scientific notation: mantissa decimals minus the exponent).
    """
    t = re.sub(r"\s+", "", token).replace("·", ".")
    t = t.translate(str.maketrans({"−": "-", "–": "-"}))
    m = re.fullmatch(r"(\d*\.?\d*)[eE]([-+]?\d+)", t)
    if m and m.group(1) not in ("", "."):
        mant, exp = m.group(1), int(m.group(2))
    else:
        m = re.fullmatch(r"(?:(\d*\.?\d*)(?:[x×*]|⨯))?10(?:\^|\*\*)?(?:\(-(\d+)\)|-(\d+))", t)
        if m:
            mant, exp = (m.group(1) or "1"), -int(m.group(2) or m.group(3))
        else:
            m = re.fullmatch(r"(?:(\d*\.?\d*)(?:[x×*]|⨯))?10⁻([⁰-⁹¹²³]+)", t)
            if m:
                mant, exp = (m.group(1) or "1"), -int(m.group(2).translate(_SUP_DIGITS))
            elif re.fullmatch(r"\d*\.?\d+|\d+\.", t):
                mant, exp = t, 0
            else:
                raise ValueError(f"malformed number {token!r}")
    if mant in ("", "."):
        raise ValueError(f"malformed number {token!r}")
    frac = mant.split(".")[1] if "." in mant else ""
    # parsing the decimal string in one go is correctly rounded; scaling the
    # mantissa by a power of ten is not
    return float(f"{mant}e{exp}"), len(frac) - exp


# --- p-values ----------------------------------------------------------------

_P_HEAD = r"(?<![A-Za-z0-9])[pP](?:\s*[-‐]?\s*values?)?"
_P_OPS = r"(?P<op><=|=<|≤|⩽|<|=|\bof\b|\bwas\b|\bis\b)"
_P_RE = re.compile(
    rf"(?P<head>{_P_HEAD})\s*(?:\((?:two|one)[- ]sided\)\s*)?{_P_OPS}\s*{_number_re('num')}(?!\d|[.·]\d)",
    re.IGNORECASE,
)
_OP_STYLE = {
    "<": LESS_THAN,
    "<=": LESS_EQUAL,
    "=<": LESS_EQUAL,
    "≤": LESS_EQUAL,
    "⩽": LESS_EQUAL,
}

# --- confidence intervals ------------------------------------------------------

_NUM = rf"(?:[{_MINUS}]\s?)?(?:\d+(?:{_DOT}\d+)?|{_DOT}\d+)"
_CI_RE = re.compile(
    r"(?P<level>\d{2}(?:\.\d+)?)\s*%\s*(?:CI|C\.I\.|confidence\s+intervals?|credible\s+intervals?)"
    r"\s*(?:,|:|=|was|of|is)?\s*(?P<open>[\[(]\s*)?"
    rf"(?P<lo>{_NUM})"
    r"\s*(?:to|,|;|—|–|--|-(?=\s*[-−\d.])|\bthrough\b)\s*"
    rf"(?P<hi>{_NUM})"
    r"(?(open)(?:\s*[\])])?)",  # close only a bracket the match opened
    re.IGNORECASE,
)
_ESTIMATE_RE = re.compile(
    rf"(?P<est>{_NUM})\s*(?:\([^()]*\)\s*)?[;,:(\[]?\s*$"
)
_RATIO_CUES = re.compile(
    r"\b(?:a?OR|a?RR|a?HR|IRR|odds\s+ratios?|hazard\s+ratios?|risk\s+ratios?|relative\s+risks?|rate\s+ratios?)\b"
)
_RATIO_CUES_CI = re.compile(
    r"\b(?:odds\s+ratios?|hazard\s+ratios?|risk\s+ratios?|relative\s+risks?|rate\s+ratios?)\b",
    re.IGNORECASE,
)
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+(?=[A-Z(\[])")


def _sentences(text):
    """Yield ``(start, end)`` spans of sentences."""
    start = 0
    for m in _SENTENCE_END.finditer(text):
        # a period inside a number ("0. 5") or abbreviation is not a boundary
        prev = text[max(0, m.start() - 4):m.start()]
        if re.search(r"\b(?:vs|al|e\.g|i\.e|Fig|No)\.$", prev):
            continue
        yield start, m.start()
        start = m.end()
    yield start, len(text)


def _to_float(tok):
    t = re.sub(r"\s+", "", tok).replace("·", ".")
    t = t.replace("−", "-").replace("–", "-")
    return float(t)


def _p_matches(text, exact_equals, diagnostics, source_id):
    out = []
    for m in _P_RE.finditer(text):
        op = m.group("op").lower()
        try:
            value, decimals = parse_number(m.group("num"))
            style = _OP_STYLE.get(op)
            if style is None:  # "=", "of", "was", "is"
                if exact_equals or decimals <= 0:
                    report = PValueReport(value, EXACT, source_id=source_id)
                else:
                    report = PValueReport(round(value, decimals), ROUNDED, decimals, source_id=source_id)
            else:
                report = PValueReport(value, style, source_id=source_id)
        except ValueError as exc:
            diagnostics.append(f"{source_id}@{m.start()}: skipped {m.group(0)!r}: {exc}")
            continue
        out.append((m.start(), m.end(), report))
    return out


def _ci_matches(text, sent_start, sent_end, diagnostics, source_id):
    out = []
    sentence = text[sent_start:sent_end]
    for m in _CI_RE.finditer(sentence):
        try:
            level = float(m.group("level")) / 100.0
            lo, hi = _to_float(m.group("lo")), _to_float(m.group("hi"))
            before = sentence[max(0, m.start() - 80):m.start()]
            cue_window = sentence[:m.start()]
            ratio = bool(_RATIO_CUES.search(cue_window) or _RATIO_CUES_CI.search(cue_window))
            start = m.start()
            estimate = None
            em = _ESTIMATE_RE.search(before)
            if em:
                estimate = _to_float(em.group("est"))
                start = m.start() - len(before) + em.start("est")
            if ratio and lo <= 0:
                ratio = False
                diagnostics.append(f"{source_id}@{sent_start + m.start()}: ratio cue with nonpositive bound, using additive scale")
            if not ratio:
                diagnostics.append(f"{source_id}@{sent_start + m.start()}: no ratio cue, additive scale assumed")
            if ratio and estimate is not None and estimate <= 0:
                estimate = None
            ci = ConfidenceIntervalReport(
                lower=lo, upper=hi, estimate=estimate, level=level,
                scale="ratio" if ratio else "additive", source_id=source_id,
            )
        except ValueError as exc:
            diagnostics.append(f"{source_id}@{sent_start + m.start()}: skipped {m.group(0)!r}: {exc}")
            continue
        end = m.end()
        span = sentence[start:end]
        if span.count("(") + span.count("[") > span.count(")") + span.count("]"):
            close = re.match(r"\s*[\])]", sentence[end:])
            if close:
                end += close.end()
        out.append((sent_start + start, sent_start + end, ci))
    return out


def _leftmost_longest(spans):
    """Drop spans overlapping an earlier-starting (or, at a tie, longer) span."""
    kept = []
    for s in sorted(spans, key=lambda s: (s[0], -(s[1] - s[0]))):
        if kept and s[0] < kept[-1][1]:
            continue
        kept.append(s)
    return kept


def extract_statistics(abstract, exact_equals=False, diagnostics=None):
    """Extract p-value and confidence-interval records from one abstract.

    Confidence intervals are only used in sentences without a parseable
    p-value. ``p = v`` reports are treated as rounded to the printed
    precision unless ``exact_equals`` is set.
    """
    diags = [] if diagnostics is None else diagnostics
    text = abstract.text
    sid = abstract.id
    groups = abstract.group_keys
    spans = []
    for s0, s1 in _sentences(text):
        sentence = text[s0:s1]
        ps = _p_matches(sentence, exact_equals, diags, sid)
        if ps:
            spans.extend((s0 + a, s0 + b, "p_value", r) for a, b, r in ps)
        else:
            spans.extend((a, b, "confidence_interval", r) for a, b, r in _ci_matches(text, s0, s1, diags, sid))
    records = []
    for start, end, kind, parsed in _leftmost_longest(spans):
        parsed = _with_groups(parsed, groups)
        records.append(ExtractionRecord(sid, kind, text[start:end], parsed, start))
    return records


def _with_groups(report, groups):
    return replace(report, group_keys=dict(groups))


def render_p_report(report):
    """Canonical text form of a p-value report (re-extractable)."""
    if report.style == ROUNDED:
        return f"p = {report.value:.{report.decimals}f}"
    if report.style == LESS_THAN:
        return f"p < {report.value!r}"
    if report.style == LESS_EQUAL:
        return f"p ≤ {report.value!r}"
    if float(report.value).is_integer():
        return f"p = {int(report.value)}"
    return f"p = {report.value!r}"


def filter_study_types(records, allowed):
    allowed = {normalize_study_type(a) for a in allowed}
    return [r for r in records if r.study_type in allowed]


def one_per_abstract(records, seed=0):
    """Keep one uniformly chosen record per source, ordered by source id."""
    by_source = {}
    for r in sorted(records, key=lambda r: (r.source_id, r.position, r.kind)):
        by_source.setdefault(r.source_id, []).append(r)
    rng = np.random.default_rng(seed)
    out = []
    for sid in sorted(by_source):
        group = by_source[sid]
        out.append(group[int(rng.integers(len(group)))])
    return out


# --- corpus loading --------------------------------------------------------------

@dataclass
class CorpusLoad:
    records: list
    errors: list  # (line number, message)


def _record_from_mapping(d):
    missing = [k for k in ("id", "journal", "year", "study_type", "text") if d.get(k) in (None, "")]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    return AbstractRecord(
        id=str(d["id"]), journal=str(d["journal"]), year=int(d["year"]),
        study_type=d["study_type"], text=str(d["text"]),
    )


def load_corpus(path, fmt=None):
    """Read abstracts from JSON lines or a delimited file.

    Per-line problems are collected in ``errors`` with 1-based line
    numbers; an unreadable file raises ``OSError``.
    """
    path = str(path)
    if fmt is None:
        fmt = "jsonl" if path.endswith((".jsonl", ".json", ".ndjson")) else ("tsv" if path.endswith(".tsv") else "csv")
    records, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    d = json.loads(line)
                    if not isinstance(d, dict):
                        raise ValueError("not a JSON object")
                    records.append(_record_from_mapping(d))
                except (ValueError, TypeError) as exc:
                    errors.append((lineno, str(exc)))
        elif fmt in ("csv", "tsv"):
            reader = csv.DictReader(fh, delimiter="\t" if fmt == "tsv" else ",")
            for d in reader:
                try:
                    records.append(_record_from_mapping(d))
                except (ValueError, TypeError) as exc:
                    errors.append((reader.line_num, str(exc)))
        else:
            raise ValueError(f"unknown corpus format {fmt!r}")
    return CorpusLoad(records, errors)


SUMMARY_COLUMNS = ("journal", "abstracts", "ct_or_rct", "scrapeable", "p_values", "confidence_intervals")


def corpus_summary(all_records, kept_records, extractions):
    """Counts per journal in the layout Abstracts / CT-or-RCT / Scrapeable / statistics.

    ``extractions`` maps abstract id to its extraction records.
    """
    journals = sorted({r.journal for r in all_records})
    rows = []
    for j in journals + ["Total"]:
        pick = (lambda r: True) if j == "Total" else (lambda r, j=j: r.journal == j)
        kept = [r for r in kept_records if pick(r)]
        recs = [x for r in kept for x in extractions.get(r.id, [])]
        rows.append({
            "journal": j,
            "abstracts": sum(1 for r in all_records if pick(r)),
            "ct_or_rct": len(kept),
            "scrapeable": sum(1 for r in kept if extractions.get(r.id)),
            "p_values": sum(1 for x in recs if x.kind == "p_value"),
            "confidence_intervals": sum(1 for x in recs if x.kind == "confidence_interval"),
        })
    return rows
