"""Command line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 an inequality
suite found a violation.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import datetime, timezone

from . import __version__
from .config import load_config, schema_json
from .engine import ExperimentReport, _atomic_write, run_experiment, write_report
from .exceptions import BerrymixError, ConfigError
from .lemmas import run_suites, summarize

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION = 0, 1, 2
OUT_ENV = "BERRYMIX_OUT"


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _error(msg):
    print(f"error: {msg}", file=sys.stderr)


def _out_dir(arg, default_name):
    if arg:
        return arg
    return os.path.join(os.environ.get(OUT_ENV, "berrymix-out"), default_name)


def _write_with_manifest(out_dir, files, extra):
    """Write ``files`` (name -> text) and a manifest listing them."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    try:
        for name, text in files.items():
            _atomic_write(os.path.join(out_dir, name), text)
            written.append(name)
        manifest = {
            "tool_version": __version__,
            "finished": datetime.now(timezone.utc).isoformat(),
            "files": {n: hashlib.sha256(files[n].encode("utf-8")).hexdigest() for n in written},
            **extra,
        }
        manifest["files"]["manifest.json"] = None
        _atomic_write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    except BaseException:
        for n in written:
            os.unlink(os.path.join(out_dir, n))
        raise


def cmd_verify_lemmas(args):
    if args.chains < 1:
        _error("--chains must be at least 1")
        return EXIT_CONFIG
    if args.budget < 1 or args.max_states < 2 or args.max_horizon < 2:
        _error("--budget must be positive and --max-states/--max-horizon at least 2")
        return EXIT_CONFIG
    scale = 0.5 if args.inject_fault == "halve-phi" else 1.0
    report = run_suites(
        n_chains=args.chains,
        seed=args.seed,
        budget=int(args.budget),
        max_states=args.max_states,
        max_horizon=args.max_horizon,
        phi_scale=scale,
    )
    ok, failing = summarize(report)
    report["parameters"] = {
        "chains": args.chains,
        "seed": args.seed,
        "budget": int(args.budget),
        "max_states": args.max_states,
        "max_horizon": args.max_horizon,
        "inject_fault": args.inject_fault,
    }
    report["passed"] = ok
    out = _out_dir(args.out, "lemmas")
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    _write_with_manifest(out, {"lemma_report.json": text}, {"root_seed": args.seed})
    for name in sorted(k for k in report if isinstance(report[k], dict) and "checked" in report[k]):
        r = report[name]
        label = "literal-signed (info only)" if name == "literal_signed" else name
        print(f"{label:28s} checked={r['checked']:7d} violations={r['violation_count']:6d} max_ratio={r['max_ratio']:.4g}")
    if not ok:
        _error(f"violations in: {', '.join(failing)}")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_run(args):
    try:
        config = load_config(args.config, seed=args.seed, threads=args.threads)
    except ConfigError as exc:
        _error(str(exc))
        return EXIT_CONFIG
    out = _out_dir(args.out, f"{config.name}-{config.digest()[:12]}")
    started = datetime.now(timezone.utc).isoformat()
    try:
        report = run_experiment(config)
        files = write_report(report, out, plot=True if args.plot else None, started=started)
    except BerrymixError as exc:
        _error(str(exc))
        return EXIT_CONFIG
    for e in report.errors:
        _warn(f"grid point N={e['N']} failed: {e['error']}")
    if report.status != "ok":
        _warn(f"no rate fit: status {report.status}")
    print(f"status={report.status} slope={report.fit.get('slope')}")
    for f in files:
        print(f)
    return EXIT_OK


COMPARE_COLUMNS = ["run", "name", "config_digest", "status", "model", "slope", "ci_low", "ci_high", "points", "D_min", "D_max"]


def _load_run(run_dir):
    with open(os.path.join(run_dir, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(run_dir, "report.json"), encoding="utf-8") as fh:
        text = fh.read()
    want = manifest["files"]["report.json"]
    if hashlib.sha256(text.encode("utf-8")).hexdigest() != want:
        raise ValueError("report.json does not match its manifest digest")
    return ExperimentReport.from_json(text)


def cmd_report(args):
    if not args.runs:
        _error("no run directories given")
        return EXIT_CONFIG
    rows = []
    for run in args.runs:
        try:
            rep = _load_run(run)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            _warn(f"skipping {run}: {exc}")
            continue
        D = [r["D_N"] for r in rep.rows]
        ci = rep.fit.get("ci") or [None, None]
        rows.append(
            [
                os.path.basename(os.path.normpath(run)),
                rep.config.get("name"),
                rep.digest,
                rep.status,
                rep.fit.get("model"),
                rep.fit.get("slope"),
                ci[0],
                ci[1],
                len(rep.rows),
                min(D) if D else None,
                max(D) if D else None,
            ]
        )
    if not rows:
        _error("no usable run directories")
        return EXIT_CONFIG
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_COLUMNS)
    w.writerows(["" if v is None else v for v in row] for row in rows)
    if args.out:
        _write_with_manifest(args.out, {"comparison.csv": buf.getvalue()}, {"runs": list(args.runs)})
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_schema(args):
    sys.stdout.write(schema_json() + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="berrymix", description="Berry-Esseen rate experiments for mixing sequences.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-lemmas", help="run the enumeration-backed inequality suites")
    v.add_argument("--chains", type=int, default=200, help="number of random tiny chains")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--budget", type=float, default=1e7, help="atom budget for path enumeration")
    v.add_argument("--max-states", type=int, default=3)
    v.add_argument("--max-horizon", type=int, default=8)
    v.add_argument("--inject-fault", choices=["none", "halve-phi"], default="none")
    v.add_argument("--out", help=f"output directory (default ${OUT_ENV}/lemmas)")
    v.set_defaults(func=cmd_verify_lemmas)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name>-<digest>)")
    r.add_argument("--seed", type=int, help="override the root seed")
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--plot", action="store_true", help="write plot.svg even if the config disables it")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("report", help="compare finished runs in one CSV table")
    c.add_argument("runs", nargs="*")
    c.add_argument("--out", help="directory for comparison.csv and its manifest")
    c.set_defaults(func=cmd_report)

    s = sub.add_parser("schema", help="print the config JSON schema")
    s.set_defaults(func=cmd_schema)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        _error("--threads must be at least 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
