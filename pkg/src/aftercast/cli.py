"""Command-line front end.

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric failure.
Every command that writes files also writes ``manifest.json`` next to them.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import os
import sys
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .combiners import AfterOptions, check_names, PANEL_METHODS
from .distributions import QuadratureAccuracyError
from .engine import AfterConfig, AfterState, Method
from .panel import (NotScreenable, PanelFormatError, heavy_tail_screen, load_panel_csv,
                    run_panel_benchmark, screen_records)
from .simulation import ScenarioSpec, run_experiment

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
JOBS_ENV = "AFTERCAST_JOBS"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    """TOML or JSON, chosen by extension (JSON first, then TOML, when unknown)."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    suffix = p.suffix.lower()
    try:
        if suffix == ".json":
            return json.loads(text)
        if suffix == ".toml":
            return tomllib.loads(text)
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot parse config {p}: {exc}") from None


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, argv: Sequence[str], config_path, seed, inputs,
                   outputs, settings: dict) -> Path:
    manifest = {
        "command": command,
        "argv": list(argv),
        "config_path": str(config_path) if config_path else None,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "settings": settings,
        "outputs": [str(p) for p in outputs],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def resolve_jobs(flag: Optional[int]) -> int:
    if flag is not None:
        jobs = flag
    else:
        raw = os.environ.get(JOBS_ENV, "").strip()
        if not raw:
            return 1
        try:
            jobs = int(raw)
        except ValueError:
            raise UsageError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise UsageError("jobs must be >= 1")
    return jobs


def parse_methods(text: Optional[str], default) -> tuple:
    if text is None:
        return tuple(default)
    names = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return check_names(names)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_omega(text: str) -> tuple:
    try:
        vals = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise UsageError(f"--omega must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--omega is empty")
    return vals


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_panel(path):
    if not Path(path).is_file():
        raise UsageError(f"panel file not found: {path}")
    return load_panel_csv(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_SIM_OVERRIDES = ("seed", "n_draws", "n_replicates")


def cmd_simulate(args, argv) -> int:
    cfg = load_config(args.config)
    cfg = dict(cfg.get("scenario", cfg))
    for key in _SIM_OVERRIDES:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.methods is not None:
        cfg["methods"] = list(parse_methods(args.methods, ()))
    try:
        spec = ScenarioSpec.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario config: {exc}") from None
    jobs = resolve_jobs(args.jobs)
    table = run_experiment(spec, jobs=jobs)
    out = _out_dir(args.out)
    csv_path, txt_path = out / "ratios.csv", out / "table.txt"
    csv_path.write_text(table.to_csv(), encoding="utf-8")
    txt_path.write_text(table.to_text(), encoding="utf-8")
    write_manifest(out, "simulate", argv, args.config, spec.seed, [args.config], [csv_path, txt_path],
                   {"scenario": spec.to_dict(), "jobs": jobs})
    sys.stdout.write(table.to_text())
    return EXIT_OK


def _after_options(args) -> AfterOptions:
    return AfterOptions(omega=parse_omega(args.omega), c1=args.c1, c2=args.c2,
                        warmup=args.warmup, centered_sd=False)


def cmd_bench(args, argv) -> int:
    methods = parse_methods(args.methods, PANEL_METHODS)
    jobs = resolve_jobs(args.jobs)
    records = _load_panel(args.panel)
    if args.screen == "heavy-tail":
        records, _ = screen_records(records)
        if not records:
            raise DataError("no series passed the heavy-tail screen")
    if args.warmup is None:
        args.warmup = 6
    after = _after_options(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = run_panel_benchmark(records, methods, warmup=args.warmup, n_scored=args.scored,
                                  after=after, jobs=jobs)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if not res.series_ids:
        raise DataError("no series long enough to benchmark")
    out = _out_dir(args.out)
    summary, ratios = out / "summary.csv", out / "ratios.csv"
    summary.write_text(res.summary_csv(), encoding="utf-8")
    ratios.write_text(res.ratios_csv(), encoding="utf-8")
    write_manifest(out, "bench", argv, None, None, [args.panel], [summary, ratios],
                   {"methods": list(methods), "screen": args.screen, "warmup": args.warmup,
                    "scored": args.scored, "omega": list(after.omega), "c1": after.c1, "c2": after.c2,
                    "series": len(res.series_ids), "skipped": res.skipped, "jobs": jobs})
    sys.stdout.write(res.to_text())
    return EXIT_OK


def cmd_combine(args, argv) -> int:
    records = _load_panel(args.panel)
    if len(records) != 1:
        raise UsageError(f"combine needs a single-series panel, got {len(records)} series")
    rec = records[0]
    if args.resume:
        flags = ("method", "c1", "c2", "omega", "warmup")
        if any(getattr(args, f) is not None for f in flags):
            raise UsageError("--resume takes its configuration from the saved state; drop the method flags")
        try:
            state = AfterState.from_json(Path(args.resume).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"state file not found: {args.resume}") from None
        except (ValueError, KeyError) as exc:
            raise UsageError(f"invalid state file: {exc}") from None
        if state.J != rec.forecasts.shape[1]:
            raise DataError(f"state has {state.J} candidates, panel has {rec.forecasts.shape[1]}")
    else:
        try:
            method = Method.parse(args.method or "g")
        except ValueError:
            raise UsageError(f"unknown method {args.method!r}; valid names: l2, l1, t, g "
                             "(aliases A2, A1, At, Ag)") from None
        try:
            cfg = AfterConfig(method=method,
                              omega=parse_omega(args.omega) if args.omega else (1.0, 3.0),
                              c1=1.0 if args.c1 is None else args.c1,
                              c2=2.0 if args.c2 is None else args.c2,
                              warmup=1 if args.warmup is None else args.warmup)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        state = AfterState(cfg, rec.forecasts.shape[1])
    cfg = state.config
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    names = rec.method_names
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", "actual", "combined", *(f"w_{n}" for n in names)])
        for i, (f, y) in enumerate(zip(rec.forecasts, rec.actuals)):
            weights = state.weights()
            w.writerow([state.period + 1, repr(float(y)), repr(state.forecast(f)),
                        *(repr(float(v)) for v in weights)])
            state.absorb(f, y)
    outputs = [out]
    if args.state_out:
        sp = Path(args.state_out)
        sp.parent.mkdir(parents=True, exist_ok=True)
        sp.write_text(state.to_json(), encoding="utf-8")
        outputs.append(sp)
    inputs = [args.panel] + ([args.resume] if args.resume else [])
    write_manifest(out.parent, "combine", argv, None, None, inputs, outputs, {"after": cfg.to_dict()})
    print(f"wrote {rec.n_periods} periods for series {rec.series_id} to {out}")
    return EXIT_OK


def cmd_screen(args, argv) -> int:
    records = _load_panel(args.panel)
    out = _out_dir(args.out)
    path = out / "screen.csv"
    n_heavy = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "screenable", "heavy", "kurtosis", "terms"])
        for rec in records:
            try:
                r = heavy_tail_screen(rec)
            except NotScreenable:
                w.writerow([rec.series_id, "false", "", "", ""])
                continue
            n_heavy += r.heavy
            w.writerow([rec.series_id, "true", str(r.heavy).lower(), repr(r.kurtosis), " ".join(r.terms)])
    write_manifest(out, "screen", argv, None, None, [args.panel], [path], {})
    print(f"{n_heavy} of {len(records)} series flagged heavy-tailed; wrote {path}")
    return EXIT_OK


def _read_csv_rows(path: Path) -> List[dict]:
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_report(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input not found: {p}")
    if p.suffix.lower() == ".json":
        try:
            state = AfterState.from_json(p.read_text(encoding="utf-8"))
        except (ValueError, KeyError) as exc:
            raise DataError(f"not an AFTER state file: {exc}") from None
        cfg = state.config
        lines = [f"AFTER state: method {cfg.method.value}, {state.J} candidates, {state.period} periods absorbed",
                 f"omega {list(cfg.omega)}, c1 {cfg.c1:g}, c2 {cfg.c2:g}, warmup {cfg.warmup}",
                 "weights:"]
        lines += [f"  {j:>3}  {w:.6f}" for j, w in enumerate(state.weights())]
        return "\n".join(lines) + "\n"
    rows = _read_csv_rows(p)
    if not rows:
        raise DataError(f"{p} has no rows")
    cols = rows[0].keys()
    if "mean_ratio" in cols:
        r0 = rows[0]
        lines = [f"{r0.get('kind', '')}: {r0.get('noise', '')}, p={r0.get('p', '')}, p0={r0.get('p0', '')}, "
                 f"{r0.get('n_draws', '')} draws x {r0.get('n_replicates', '')} replicates, "
                 f"ratios vs {r0.get('benchmark', '')}"]
        for r in rows:
            lines.append(f"{r['method']:<8}{float(r['mean_ratio']):>10.3f} ({float(r['se']):.3f})")
        return "\n".join(lines) + "\n"
    if {"mean", "se", "median", "q1", "q3"} <= set(cols):
        keys = ("mean", "se", "median", "min", "q1", "q3", "max")
        lines = [f"{'':<9}" + "".join(f"{k:>9}" for k in keys)]
        for r in rows:
            lines.append(f"{r['method']:<9}" + "".join(f"{float(r[k]):>9.3f}" for k in keys))
        return "\n".join(lines) + "\n"
    raise DataError(f"{p}: unrecognised table (expected a ratio table, a panel summary or a state file)")


def cmd_report(args, argv) -> int:
    text = render_report(args.input)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        write_manifest(out.parent, "report", argv, None, None, [args.input], [out], {})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aftercast", description="AFTER forecast combination toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation scenario and write its ratio table")
    s.add_argument("config", help="scenario config (.toml or .json)")
    s.add_argument("--out", default="results/simulate")
    s.add_argument("--seed", type=int)
    s.add_argument("--draws", dest="n_draws", type=int)
    s.add_argument("--replicates", dest="n_replicates", type=int)
    s.add_argument("--methods", help="comma-separated method names")
    s.add_argument("--jobs", type=int, help=f"worker processes (default ${JOBS_ENV} or 1)")
    s.set_defaults(func=cmd_simulate)

    def after_flags(p, defaults: bool):
        p.add_argument("--omega", default="1,3" if defaults else None, help="t degrees of freedom, e.g. 1,3")
        p.add_argument("--c1", type=float, default=1.0 if defaults else None)
        p.add_argument("--c2", type=float, default=2.0 if defaults else None)
        p.add_argument("--warmup", type=int, default=None)

    b = sub.add_parser("bench", help="MSFE ratios vs SA on a forecast panel")
    b.add_argument("panel", help="panel CSV")
    b.add_argument("--methods", help="comma-separated method names")
    b.add_argument("--screen", choices=["heavy-tail"], help="keep only series flagged by the screen")
    b.add_argument("--scored", type=int, default=9, help="number of final periods scored")
    b.add_argument("--out", default="results/bench")
    b.add_argument("--jobs", type=int)
    after_flags(b, True)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("combine", help="AFTER weights and combined forecasts for one series")
    c.add_argument("panel", help="single-series panel CSV")
    c.add_argument("--method", help="l2, l1, t or g (aliases A2, A1, At, Ag)")
    c.add_argument("--out", default="results/combine/trace.csv")
    c.add_argument("--state-out", help="save the final AFTER state as JSON")
    c.add_argument("--resume", help="continue from a saved AFTER state")
    after_flags(c, False)
    c.set_defaults(func=cmd_combine)

    sc = sub.add_parser("screen", help="heavy-tail screen of each series' training history")
    sc.add_argument("panel")
    sc.add_argument("--out", default="results/screen")
    sc.set_defaults(func=cmd_screen)

    r = sub.add_parser("report", help="print a ratio table, panel summary or AFTER state")
    r.add_argument("input")
    r.add_argument("--out", help="also write the text to this file")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args, argv)
    except (UsageError, PanelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NotScreenable) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, FloatingPointError, QuadratureAccuracyError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
