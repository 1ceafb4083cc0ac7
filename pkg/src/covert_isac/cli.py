"""Command-line front end.

Subcommands::

    solve            one scenario, every scheme or one (--scheme)
    sweep            one parameter over a grid (--axis, --grid)
    validate         quick numerical self-checks
    trajectory-dump  trajectories and selected sensing slots per scheme

Scenarios are files in the ``key = value`` format or ``builtin:case1`` /
``builtin:case2``. Every command that writes results also writes
``manifest.json`` with the scenario, configuration and library versions.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from . import experiments as ex
from .baselines import ALL_SCHEMES, run_scheme
from .bcd import audit, audit_ok, summary, write_bundle
from .checks import run_checks
from .scenario import AlgorithmConfig, load_config, resolve_scenario


def _schemes(arg) -> list:
    if arg is None or arg == "all":
        return list(ALL_SCHEMES)
    return [x.strip() for x in arg.split(",") if x.strip()]


def _grid(arg) -> list:
    try:
        return [float(x) for x in arg.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"bad --grid {arg!r}: expected comma-separated numbers") from None


def _common(p, out_required=True):
    p.add_argument("--scenario", default="builtin:case1", help="scenario file or builtin:case1|case2")
    p.add_argument("--config", help="algorithm configuration file")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="seed for randomised checks (solves are deterministic)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covert-isac", description="Dual-UAV covert ISAC optimisation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario")
    _common(p)
    p.add_argument("--scheme", default="all", help="scheme name, comma list or 'all'")

    p = sub.add_parser("sweep", help="sweep one parameter")
    _common(p)
    p.add_argument("--axis", help=f"one of {', '.join(ex.AXES)}")
    p.add_argument("--grid", help="comma-separated strictly increasing values (dB for gamma/residual)")
    p.add_argument("--scheme", default="all")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--manifest", help="re-run the sweep recorded in this manifest")

    p = sub.add_parser("validate", help="run the numerical self-checks")
    _common(p, out_required=False)

    p = sub.add_parser("trajectory-dump", help="trajectories and sensing slots per scheme")
    _common(p)
    p.add_argument("--scheme", default="all")
    return ap


def _load(args):
    s = resolve_scenario(args.scenario)
    cfg = load_config(args.config) if args.config else AlgorithmConfig()
    return s, cfg


def cmd_solve(args) -> int:
    s, cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, status = [], 0
    for scheme in _schemes(args.scheme):
        rep = run_scheme(scheme, s, cfg)
        write_bundle(rep, out / scheme)
        ok = rep.feasible and audit_ok(audit(rep, s), s)
        info = summary(rep)
        rows.append([scheme, "ok" if rep.feasible else "failed", repr(info["acr_cco"]), repr(info["acr_ccs"]),
                     repr(info["acr_total"]), repr(info["sum_rate"]), int(ok), rep.failed_stage])
        print(f"{scheme}: feasible={rep.feasible} acr_total={rep.acr_total:.4f} acr_ccs={rep.acr_ccs:.4f} "
              f"sum_rate={rep.sum_rate:.3f} audit={'pass' if ok else 'FAIL'}")
        if not rep.feasible:
            print(f"error: {scheme}: {rep.failed_stage}", file=sys.stderr)
            status = 1
    (out / "summary.csv").write_text(ex._csv(
        ["scheme", "status", "acr_cco", "acr_ccs", "acr_total", "sum_rate", "audit_ok", "error"], rows))
    ex.write_manifest(ex.manifest(s, cfg, None, args.seed, "solve"), out / "manifest.json")
    return status


def cmd_sweep(args) -> int:
    if args.manifest:
        s, cfg, spec = ex.load_manifest(args.manifest)
        if spec is None:
            raise ValueError(f"{args.manifest} does not describe a sweep")
    else:
        if not args.axis or not args.grid:
            raise ValueError("sweep needs --axis and --grid (or --manifest)")
        s, cfg = _load(args)
        spec = ex.SweepSpec(args.axis, _grid(args.grid), _schemes(args.scheme))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_manifest(ex.manifest(s, cfg, spec, args.seed), out / "manifest.json")

    def flush(rows):
        (out / "summary.csv").write_text(ex.summary_csv(rows))

    rows = ex.run_sweep(s, cfg, spec, jobs=max(1, args.jobs), on_progress=flush)
    flush(rows)
    for fig, (axis, _) in ex.FIGURES.items():
        if axis == spec.axis:
            ex.emit_figure_data(rows, fig, out, spec.schemes)
    failed = [r for r in rows if not r.ok]
    for r in rows:
        print(f"{spec.axis}={r.value:g} {r.scheme}: " + (f"acr_total={r.acr_total:.4f}" if r.ok else "FAILED"))
    for r in failed:
        print(f"error: {spec.axis}={r.value:g} {r.scheme}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_validate(args) -> int:
    s, _ = _load(args)
    failed = 0
    for name, ok, detail in run_checks(s, args.seed):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    return 1 if failed else 0


def cmd_trajectory_dump(args) -> int:
    s, cfg = _load(args)
    out = Path(args.out)
    reports = {scheme: run_scheme(scheme, s, cfg) for scheme in _schemes(args.scheme)}
    ex.emit_figure_data(reports, "fig2", out, list(reports))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scheme", "target", "slot", "weighted_distance"])
    status = 0
    for scheme, rep in reports.items():
        if rep.schedule is None:
            print(f"error: {scheme}: {rep.failed_stage or 'no schedule'}", file=sys.stderr)
            status = 1
            continue
        for q, ns in enumerate(rep.schedule.slots):
            w.writerows([scheme, q + 1, n, repr(float(rep.schedule.distances[q, n - 1]))] for n in ns)
        print(f"{scheme}: sensing slots {rep.schedule.slots}")
    (out / "ccs_slots.csv").write_text(buf.getvalue())
    ex.write_manifest(ex.manifest(s, cfg, None, args.seed, "trajectory-dump"), out / "manifest.json")
    return status


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "validate": cmd_validate,
            "trajectory-dump": cmd_trajectory_dump}


def _glue_grid(argv):
    """``--grid -50,-40`` would read as an option; pass it as ``--grid=-50,-40``."""
    out = []
    it = iter(argv)
    for a in it:
        if a == "--grid":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--grid={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    argv = _glue_grid(sys.argv[1:] if argv is None else list(argv))
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
