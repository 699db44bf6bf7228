"""Command-line front end: ``run``, ``sweep`` and ``plot``.

Exit codes for ``run``: 0 when the iteration stopped on the step tolerance or
the discrepancy principle, 2 when it hit the iteration cap, 1 on solver
failure or an invalid configuration.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, load_config, parse_config, parse_override, set_dotted
from .experiments import EXIT_FAILURE, EXIT_MAX_ITER, EXIT_OK, run_experiment
from .plotting import plot_bundle

log = logging.getLogger("cauchy_mann")

SWEEP_COLUMNS = ["param", "value", "stop_reason", "n_evaluations", "k_eps",
                 "final_error", "fixed_point_defect", "exit_code"]


def _overrides(args) -> dict:
    out = dict(parse_override(s) for s in args.set or [])
    if args.output_dir is not None:
        out["output_dir"] = args.output_dir
    return out


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    report = run_experiment(cfg, write=True)
    rec = report.record
    print(f"stop_reason={rec.stop_reason.value} evaluations={rec.n_evaluations} "
          f"final_error={report.final_error:.6g} output={cfg.output_dir}")
    if args.plot:
        plot_bundle(cfg.output_dir)
    return report.exit_code


def _value_tag(value) -> str:
    return json.dumps(value).replace("/", "_").replace('"', "")


def _sweep_one(cfg_data: dict, param: str, value) -> dict:
    row = {"param": param, "value": json.dumps(value)}
    try:
        cfg = parse_config(cfg_data)
        rep = run_experiment(cfg, write=True, defect=True)
    except Exception as exc:  # one bad run must not abort the sweep
        row.update(stop_reason="error", exit_code=EXIT_FAILURE)
        log.error("sweep %s=%s failed: %s", param, value, exc)
        return row
    row.update(
        stop_reason=rep.record.stop_reason.value,
        n_evaluations=rep.record.n_evaluations,
        k_eps=rep.record.k_eps,
        final_error=rep.final_error,
        fixed_point_defect=rep.fixed_point_defect,
        exit_code=rep.exit_code,
    )
    return row


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("CAUCHY_MANN_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer CAUCHY_MANN_THREADS=%r", cap)
    return max(1, min(n, n_jobs))


def run_sweep(config_path, param: str, values: list, overrides: Optional[dict] = None) -> List[dict]:
    """One run per value of the dotted ``param``; returns the sweep rows in value order."""
    try:
        base = json.loads(Path(config_path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {config_path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    for k, v in (overrides or {}).items():
        set_dotted(base, k, v)
    root = Path(base.get("output_dir", "out"))
    jobs = []
    for value in values:
        data = json.loads(json.dumps(base))
        set_dotted(data, param, value)
        data["output_dir"] = str(root / f"{param}={_value_tag(value)}")
        parse_config(data)  # fail fast on schema errors before any work starts
        jobs.append(data)

    n = _workers(len(jobs))
    if n == 1:
        rows = [_sweep_one(d, param, v) for d, v in zip(jobs, values)]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_one, jobs, [param] * len(jobs), values))

    root.mkdir(parents=True, exist_ok=True)
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r[k]) for k in SWEEP_COLUMNS})
    return rows


def cmd_sweep(args) -> int:
    if not args.values:
        print("sweep needs at least one value", file=sys.stderr)
        return EXIT_FAILURE
    values = [parse_override(f"v={v}")[1] for v in args.values]
    try:
        rows = run_sweep(args.config, args.param, values, _overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for r in rows:
        print(f"{r['param']}={r['value']}: {r['stop_reason']} k_eps={r.get('k_eps')} "
              f"error={r.get('final_error')}")
    codes = {r["exit_code"] for r in rows}
    if EXIT_FAILURE in codes:
        return EXIT_FAILURE
    return EXIT_MAX_ITER if EXIT_MAX_ITER in codes else EXIT_OK


def cmd_plot(args) -> int:
    try:
        paths = plot_bundle(args.report_dir)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cauchy-mann",
                                description="Mann iterations for nonlinear elliptic Cauchy problems.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a dotted config key (value parsed as JSON)")
        sp.add_argument("--output-dir", help="override output_dir")

    run = sub.add_parser("run", help="run one configuration and write a report bundle")
    common(run)
    run.add_argument("--plot", action="store_true", help="also write error.svg and trace.svg")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a configuration over values of one key")
    common(sweep)
    sweep.add_argument("--param", required=True, help="dotted key, e.g. stop.discrepancy.eps")
    sweep.add_argument("--values", nargs="*", default=[], help="values (JSON literals)")
    sweep.set_defaults(func=cmd_sweep)

    plot = sub.add_parser("plot", help="render SVG plots of a report bundle")
    plot.add_argument("report_dir")
    plot.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
