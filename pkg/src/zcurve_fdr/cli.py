"""Command-line interface: extract, fit, simulate, adjust-alpha, rerun.

Exit status: 0 success, 1 analysis failure, 2 usage or I/O failure.
"""
import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import re
import sys

import numpy as np

from . import __version__
from .estimands import adjust_alpha
from .exchange import ExchangeFormatError, observations_from_reports, read_reports, write_reports
from .extraction import (
    SUMMARY_COLUMNS,
    corpus_summary,
    extract_statistics,
    filter_study_types,
    load_corpus,
    one_per_abstract,
)
from .fit import (
    FitConfig,
    InsufficientDataError,
    bootstrap,
    density_curve,
    fit,
    grid_means,
    pointwise_bands,
)
from .simulation import (
    GRID_COLUMNS,
    SCENARIOS,
    PowerDistribution,
    ScenarioConfig,
    fdr_grid,
    run_grid,
)

log = logging.getLogger("zcurve_fdr")

EXIT_OK, EXIT_ANALYSIS, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- manifest -----------------------------------------------------------------

def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(out_path, args, argv, inputs=()):
    """Write ``<out_path>.manifest.json`` next to an output artifact."""
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "cwd": os.getcwd(),
        "config": config,
        "seed": getattr(args, "seed", None),
        "software": {"name": "zcurve_fdr", "version": __version__},
        "inputs": {str(p): _digest(p) for p in inputs},
        "output": str(out_path),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def _manifest_ref(out_path):
    return os.path.basename(f"{out_path}.manifest.json")


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


# --- extract ------------------------------------------------------------------

_TYPE_SETS = {
    "ct": "clinical_trial",
    "rct": "randomized_controlled_trial",
    "other": "other",
}


def _parse_types(s):
    s = s.strip().lower()
    if s == "none":
        return set()
    if s == "all":
        return set(_TYPE_SETS.values())
    out = set()
    for tok in s.split(","):
        tok = tok.strip()
        if tok not in _TYPE_SETS:
            raise UsageError(f"unknown study type {tok!r} (use ct, rct, other, all, none)")
        out.add(_TYPE_SETS[tok])
    return out


def cmd_extract(args, argv):
    allowed = _parse_types(args.types)
    try:
        loaded = load_corpus(args.corpus, args.format)
    except OSError as exc:
        log.error("cannot read corpus: %s", exc)
        return EXIT_USAGE
    for lineno, msg in loaded.errors:
        log.warning("%s:%d: %s", args.corpus, lineno, msg)
    if not allowed:
        log.warning("--types none: no abstracts selected")
    kept = filter_study_types(loaded.records, allowed)
    diagnostics = []
    per_abstract = {r.id: extract_statistics(r, exact_equals=args.exact_equals, diagnostics=diagnostics) for r in kept}
    for d in diagnostics:
        log.debug("%s", d)
    records = [x for r in kept for x in per_abstract[r.id]]
    if args.one_per_abstract:
        records = one_per_abstract(records, seed=args.seed)
    try:
        write_reports(args.out, [x.parsed for x in records])
        write_manifest(args.out, args, argv, inputs=[args.corpus])
        summary = corpus_summary(loaded.records, kept, per_abstract)
        if args.summary:
            with open(args.summary, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
                w.writeheader()
                w.writerows(summary)
            write_manifest(args.summary, args, argv, inputs=[args.corpus])
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_USAGE
    _print_rows(summary, SUMMARY_COLUMNS)
    print(f"{len(records)} statistic(s) written to {args.out}")
    if len(loaded.errors) > args.max_errors:
        log.error("%d invalid corpus line(s) exceed --max-errors %d", len(loaded.errors), args.max_errors)
        return EXIT_ANALYSIS
    return EXIT_OK


# --- fit ------------------------------------------------------------------------

def _group_label(obs, keys, year_split):
    parts = []
    for k in keys:
        if k == "year-split":
            y = obs.group_keys.get("year")
            if y is None:
                parts.append("year=?")
            else:
                parts.append(f"<={year_split}" if int(y) <= year_split else f">{year_split}")
        else:
            parts.append(obs.group_keys.get(k, "?"))
    return " / ".join(parts)


def _fmt_ci(est, ci):
    if est is None:
        return "-"
    if not ci:
        return f"{est:.2f}"
    return f"{est:.2f} [{ci[0]:.2f}, {ci[1]:.2f}]"


def _read_baseline(path):
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["group"]] = (float(row["estimate"]), float(row["lower"]), float(row["upper"]))
    return out


def _slug(s):
    return re.sub(r"[^A-Za-z0-9]+", "_", s).strip("_").lower() or "group"


def _write_plot_data(prefix, name, obs, res, boot_models):
    model = res.model
    stem = f"{prefix}{_slug(name)}"
    n_sig = res.n_used + res.diagnostics.get("n_above_upper", 0)
    edges = np.round(np.arange(0.0, 6.0 + 1e-9, 0.1), 10)
    mids = np.array([o.lo if o.exact else 0.5 * (o.lo + o.hi) for o in obs if math.isfinite(o.hi)])
    counts, _ = np.histogram(mids[mids <= 6.0], bins=edges)
    with open(f"{stem}_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "density"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([f"{lo:.1f}", f"{hi:.1f}", int(c), repr(c / (n_sig * 0.1))])
        w.writerow(["6.0", "inf", int(np.sum(mids > 6.0)), ""])
        w.writerow(["censored", "inf", sum(1 for o in obs if math.isinf(o.hi)), ""])
    top = min(6.0, model.window.b)
    grid = np.round(np.arange(0.0, top + 1e-9, 0.05), 10)
    curve = density_curve(model, grid)
    models = [m for m in boot_models if m is not None]
    lo_b, hi_b = pointwise_bands(models, grid) if len(models) >= 2 else (None, None)
    with open(f"{stem}_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "density", "band_lo", "band_hi"])
        for i, (z, d) in enumerate(curve):
            w.writerow([f"{z:.2f}", repr(d), "" if lo_b is None else repr(float(lo_b[i])), "" if hi_b is None else repr(float(hi_b[i]))])
    return [f"{stem}_hist.csv", f"{stem}_curve.csv"]


def _means(args):
    try:
        return grid_means(args.component_step)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _fit_config(args):
    return FitConfig(
        means=_means(args),
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
        restarts=args.restarts,
        seed=args.seed,
        upper=args.upper_bound,
        two_sided=not args.one_sided,
    )


def _load_observations(path, two_sided):
    reports = read_reports(path)
    obs, skipped = observations_from_reports(reports, two_sided)
    for r, msg in skipped:
        log.warning("skipping record %s: %s", r.source_id, msg)
    return obs


def cmd_fit(args, argv):
    try:
        obs = _load_observations(args.observations, not args.one_sided)
        baseline = _read_baseline(args.baseline) if args.baseline else {}
    except (OSError, ExchangeFormatError, KeyError, ValueError) as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_USAGE
    config = _fit_config(args)
    keys = [k.strip() for k in args.group_by.split(",")] if args.group_by else []
    groups = {}
    if keys:
        for o in obs:
            groups.setdefault(_group_label(o, keys, args.year_split), []).append(o)
    named = [(g, groups[g]) for g in sorted(groups)] + [("Combined" if keys else "All", obs)]

    results, rows, plot_files = [], [], []
    for name, members in named:
        entry = {"group": name, "n": len(members)}
        try:
            res = fit(members, config, args.alpha)
        except InsufficientDataError as exc:
            entry.update(status=str(exc))
            results.append(entry)
            rows.append({"group": name, "n": len(members), "status": "insufficient significant observations"})
            continue
        boot = None
        if args.replicates > 0:
            boot = bootstrap(members, config, args.alpha, args.replicates, args.seed, keep_models=bool(args.plot_data))
            res.intervals = boot.intervals
            res.diagnostics["bootstrap"] = boot.to_dict()
        entry.update(status="ok", result=res.to_dict())
        results.append(entry)
        e = res.estimands
        iv = res.intervals or {}
        row = {
            "group": name,
            "n": len(members),
            "n_sig": res.n_used + res.diagnostics["n_above_upper"],
            "odr": f"{e.odr:.3f}" if e.odr is not None else "-",
            "edr": _fmt_ci(e.edr, iv.get("edr")),
            "fdr": _fmt_ci(e.fdr, iv.get("fdr")),
            "err": _fmt_ci(e.err, iv.get("err")),
            "status": "ok" if res.converged else "not converged",
        }
        if baseline:
            b = baseline.get(name)
            row["baseline"] = _fmt_ci(b[0], b[1:]) if b else "-"
        rows.append(row)
        if args.plot_data:
            plot_files += _write_plot_data(args.plot_data, name, members, res, boot.models if boot else [])

    columns = ["group", "n", "n_sig", "odr", "edr", "fdr", "err", "status"] + (["baseline"] if baseline else [])
    table = _render_rows(rows, columns)
    print(table)
    try:
        if args.out:
            _dump_json(args.out, {
                "manifest": _manifest_ref(args.out),
                "alpha": args.alpha,
                "group_by": keys,
                "groups": results,
            })
            write_manifest(args.out, args, argv, inputs=[args.observations])
        if args.table:
            with open(args.table, "w") as fh:
                fh.write(table + "\n")
            write_manifest(args.table, args, argv, inputs=[args.observations])
        for p in plot_files:
            write_manifest(p, args, argv, inputs=[args.observations])
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_USAGE
    if all(r.get("status") != "ok" for r in results):
        log.error("insufficient significant observations in every group")
        return EXIT_ANALYSIS
    return EXIT_OK


# --- simulate -------------------------------------------------------------------

def _parse_power_dist(s):
    kind, _, rest = s.partition(":")
    try:
        if kind == "beta":
            a, b = (float(x) for x in rest.split(",")) if rest else (2.0, 5.0)
            return PowerDistribution("beta", a, b)
        if kind == "fixed":
            return PowerDistribution("fixed", value=float(rest))
        if kind == "empirical":
            return PowerDistribution.from_file(rest)
    except (ValueError, OSError) as exc:
        raise UsageError(f"bad --power-dist {s!r}: {exc}") from exc
    raise UsageError(f"unknown power distribution {s!r}")


def cmd_simulate(args, argv):
    step, n = (0.01, 10000) if args.full_scale else (args.grid_step, args.n)
    try:
        grid = fdr_grid(step)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if n <= 0:
        raise UsageError("--n must be positive")
    dist = _parse_power_dist(args.power_dist)
    cfg = ScenarioConfig(args.scenario, n, args.alpha, grid, dist, args.seed)
    result = run_grid(cfg, FitConfig(means=_means(args), max_iterations=args.max_iterations, tolerance=args.tolerance))
    columns = list(GRID_COLUMNS)
    text = result.to_csv()
    if args.overlay:
        try:
            with open(args.overlay, newline="") as fh:
                ext = {round(float(r["true_fdr"]), 10): r["estimated_fdr"] for r in csv.DictReader(fh)}
        except (OSError, KeyError, ValueError) as exc:
            log.error("cannot read overlay: %s", exc)
            return EXIT_USAGE
        reader = csv.DictReader(text.splitlines())
        rows = list(reader)
        for r in rows:
            r["external_fdr"] = ext.get(round(float(r["true_fdr"]), 10), "")
        columns.append("external_fdr")
        text = _csv_text(rows, columns)
    summary = result.summary_dict()
    try:
        inputs = [args.overlay] if args.overlay else []
        if args.out:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
            write_manifest(args.out, args, argv, inputs)
        else:
            sys.stdout.write(text)
        if args.summary:
            _dump_json(args.summary, {"manifest": _manifest_ref(args.summary), **summary})
            write_manifest(args.summary, args, argv, inputs)
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_USAGE
    s = summary
    if s["rmse"] is not None:
        print(
            f"scenario {s['scenario']}: RMSE {s['rmse']:.3f} ({s['se_rmse']:.3f})  "
            f"bias {s['bias']:+.3f} ({s['se_bias']:.3f})  failed {s['n_failed']}/{s['n_points']}",
            file=sys.stderr,
        )
    return EXIT_OK if s["rmse"] is not None else EXIT_ANALYSIS


# --- adjust-alpha ---------------------------------------------------------------

def _parse_alpha_grid(s):
    try:
        vals = [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"malformed --alpha-grid {s!r}") from exc
    if not vals or any(not 0 < v < 1 for v in vals) or len(set(vals)) != len(vals):
        raise UsageError(f"malformed --alpha-grid {s!r}")
    return sorted(vals, reverse=True)


def cmd_adjust_alpha(args, argv):
    grid = _parse_alpha_grid(args.alpha_grid)
    try:
        obs = _load_observations(args.observations, True)
    except (OSError, ExchangeFormatError) as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_USAGE
    config = FitConfig(
        means=_means(args), max_iterations=args.max_iterations, tolerance=args.tolerance, seed=args.seed
    )
    res = adjust_alpha(obs, args.target_fdr, grid, config)
    rows = []
    for r in res.per_alpha:
        rows.append({
            "alpha": f"{r['alpha']:g}",
            "edr": "-" if r["edr"] is None else f"{r['edr']:.3f}",
            "fdr": "-" if r["fdr"] is None else f"{r['fdr']:.3f}",
            "status": r["status"],
        })
    star = "none qualifies" if res.alpha_star is None else f"{res.alpha_star:g}"
    rows.append({"alpha": "alpha*", "edr": "", "fdr": f"<= {args.target_fdr:g}", "status": star})
    print(_render_rows(rows, ["alpha", "edr", "fdr", "status"]))
    if args.out:
        try:
            _dump_json(args.out, {"manifest": _manifest_ref(args.out), **res.to_dict()})
            write_manifest(args.out, args, argv, inputs=[args.observations])
        except OSError as exc:
            log.error("cannot write output: %s", exc)
            return EXIT_USAGE
    if all(r["status"] != "ok" for r in res.per_alpha):
        log.error("insufficient significant observations at every alpha")
        return EXIT_ANALYSIS
    return EXIT_OK


# --- rerun ---------------------------------------------------------------------

def cmd_rerun(args, argv):
    try:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        replay = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        log.error("cannot read manifest: %s", exc)
        return EXIT_USAGE
    # relative paths in argv are relative to where the run started
    here = os.getcwd()
    try:
        os.chdir(manifest.get("cwd", here))
        return main(replay)
    finally:
        os.chdir(here)


# --- plumbing -------------------------------------------------------------------

def _render_rows(rows, columns):
    cells = [[str(c) for c in columns]] + [[str(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _print_rows(rows, columns):
    print(_render_rows(rows, columns))


def _csv_text(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _add_fit_options(p):
    p.add_argument("--component-step", type=float, default=0.5,
                   help="spacing of the component means over [0, 6]; 1 gives the unit grid")
    p.add_argument("--max-iterations", type=int, default=10000)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="zcurve-fdr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key = value file overriding option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract p-values/CIs from a corpus of abstracts")
    p.add_argument("corpus")
    p.add_argument("-o", "--out", required=True, help="observation file (.csv, .tsv, .jsonl)")
    p.add_argument("--format", choices=("jsonl", "csv", "tsv"))
    p.add_argument("--types", default="ct,rct", help="study types to keep: ct,rct,other | all | none")
    p.add_argument("--one-per-abstract", action="store_true")
    p.add_argument("--exact-equals", action="store_true", help="treat 'p = v' as exact, not rounded")
    p.add_argument("--summary", help="write the per-journal count table (CSV)")
    p.add_argument("--max-errors", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="fit z-curve and report EDR/FDR/ERR per group")
    p.add_argument("observations")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--group-by", default="", help="comma list of journal, year-split, study_type")
    p.add_argument("--year-split", type=int, default=2010)
    p.add_argument("--replicates", type=int, default=500)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--upper-bound", type=float, default=math.inf)
    p.add_argument("--one-sided", action="store_true")
    p.add_argument("--baseline", help="CSV of group,estimate,lower,upper from another estimator")
    p.add_argument("--out", help="JSON results")
    p.add_argument("--table", help="write the rendered table here as well")
    p.add_argument("--plot-data", help="prefix for histogram/curve CSV files")
    _add_fit_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run the simulation grid for one scenario")
    p.add_argument("--scenario", choices=SCENARIOS, default="A")
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--power-dist", default="beta:2,5", help="beta:a,b | fixed:w | empirical:PATH")
    p.add_argument("--full-scale", action="store_true", help="grid step 0.01 and n = 10000")
    p.add_argument("--out", help="grid CSV (stdout if omitted)")
    p.add_argument("--summary", help="RMSE/bias JSON")
    p.add_argument("--overlay", help="CSV (true_fdr, estimated_fdr) from an external estimator")
    _add_fit_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("adjust-alpha", help="find the largest alpha meeting a target FDR")
    p.add_argument("observations")
    p.add_argument("--target-fdr", type=float, default=0.05)
    p.add_argument("--alpha-grid", default="0.05,0.01,0.005,0.001")
    p.add_argument("--out")
    _add_fit_options(p)
    p.set_defaults(func=cmd_adjust_alpha)

    p = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            dests = {a.dest: a for a in sp._actions}
            sp.set_defaults(**{
                k: (dests[k].type(v) if dests[k].type else v)
                for k, v in values.items() if k in dests
            })
            for k in values:
                if k in dests and dests[k].required:
                    dests[k].required = False


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, UsageError, ValueError) as exc:
        print(f"zcurve-fdr: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"zcurve-fdr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
