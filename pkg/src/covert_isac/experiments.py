"""Parameter sweeps over the scheme set and figure-ready CSV export.

A sweep varies one scenario parameter over a grid and runs every requested
scheme at each grid point. Results are collected in grid order regardless
of how many worker processes ran them, so the CSV bytes only depend on the
inputs.
"""

from __future__ import annotations

import csv
import io
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import ALL_SCHEMES, SchemeId, run_scheme
from .bcd import SolveReport
from .scenario import (AlgorithmConfig, Scenario, ScenarioError, db2lin, dump_config, dump_scenario,
                       parse_config, parse_scenario)

# axis name -> CSV column label
AXES = {
    "gamma": "gamma_db",
    "epsilon": "epsilon",
    "residual": "residual_db",
    "antennas": "antennas",
    "duration": "duration_s",
}
AXIS_ALIASES = {"Γ": "gamma", "ε": "epsilon", "ϖ": "residual", "varpi": "residual", "M": "antennas",
                "T": "duration"}

# figure id -> (axis, metric); fig 2 is the trajectory export
FIGURES = {
    "fig4": ("duration", "sum_rate"),
    "fig5": ("gamma", "acr_ccs"),
    "fig6": ("epsilon", "acr_total"),
    "fig7": ("residual", "acr_total"),
}

SUMMARY_HEADER = ["axis", "value", "scheme", "status", "acr_cco", "acr_ccs", "acr_total", "sum_rate",
                  "outer_iterations", "error"]


def canonical_axis(axis: str) -> str:
    axis = AXIS_ALIASES.get(axis, axis)
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    return axis


def apply_axis(s: Scenario, axis: str, value: float) -> Scenario:
    """Scenario with the swept parameter set to ``value`` (dB for Γ and ϖ,
    seconds for T)."""
    axis = canonical_axis(axis)
    if axis == "gamma":
        return s.with_updates(sensing_threshold=db2lin(value))
    if axis == "epsilon":
        return s.with_updates(covertness_level=float(value))
    if axis == "residual":
        r = db2lin(value)
        return s.with_updates(residual_rb=r, residual_jb=r, residual_rw=r)
    if axis == "antennas":
        if value != int(value):
            raise ScenarioError(f"antenna count must be an integer, got {value}")
        return s.with_updates(antennas=int(value))
    n = value / s.slot_duration
    if abs(n - round(n)) > 1e-9:
        raise ScenarioError(f"duration {value} s is not a whole number of {s.slot_duration} s slots")
    return s.with_updates(num_slots=int(round(n)))


@dataclass
class SweepSpec:
    axis: str
    grid: list
    schemes: list = field(default_factory=lambda: list(ALL_SCHEMES))
    out: str | None = None

    def __post_init__(self):
        self.axis = canonical_axis(self.axis)
        self.grid = [float(v) for v in self.grid]
        if not self.grid:
            raise ValueError("sweep grid is empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("sweep grid must be strictly increasing")
        self.schemes = [SchemeId(x).value for x in self.schemes]
        if not self.schemes:
            raise ValueError("no schemes requested")


@dataclass
class SweepRow:
    axis: str
    value: float
    scheme: str
    ok: bool
    acr_cco: float = float("nan")
    acr_ccs: float = float("nan")
    acr_total: float = float("nan")
    sum_rate: float = float("nan")
    outer_iterations: int = 0
    error: str = ""

    def metric(self, name: str) -> float:
        return getattr(self, name)

    def cells(self) -> list:
        f = lambda x: repr(float(x))  # noqa: E731
        return [self.axis, f(self.value), self.scheme, "ok" if self.ok else "failed", f(self.acr_cco),
                f(self.acr_ccs), f(self.acr_total), f(self.sum_rate), self.outer_iterations, self.error]


def _row(axis, value, scheme, rep: SolveReport) -> SweepRow:
    if not rep.feasible:
        return SweepRow(axis, value, scheme, False, error=rep.failed_stage or "infeasible")
    return SweepRow(axis, value, scheme, True, rep.acr_cco, rep.acr_ccs, rep.acr_total, rep.sum_rate,
                    int(rep.flags.get("outer_iterations", 0)))


def _run_task(task):
    """Worker: one scheme over one or more grid values. Grid values that
    only change the sensing threshold share the CCO stage."""
    scen_text, cfg_text, axis, values, scheme = task
    base = parse_scenario(scen_text, "<sweep>")
    cfg = parse_config(cfg_text, "<sweep>")
    cache = {} if axis == "gamma" else None
    rows = []
    for v in values:
        try:
            rows.append(_row(axis, v, scheme, run_scheme(scheme, apply_axis(base, axis, v), cfg, cco_cache=cache)))
        except Exception as exc:  # recorded as a failed point, the sweep goes on
            rows.append(SweepRow(axis, v, scheme, False, error=f"{type(exc).__name__}: {exc}"))
    return rows


def sweep_tasks(s: Scenario, cfg: AlgorithmConfig, spec: SweepSpec) -> list:
    st, ct = dump_scenario(s), dump_config(cfg)
    if spec.axis == "gamma":
        return [(st, ct, spec.axis, list(spec.grid), sc) for sc in spec.schemes]
    return [(st, ct, spec.axis, [v], sc) for v in spec.grid for sc in spec.schemes]


def run_sweep(s: Scenario, cfg: AlgorithmConfig, spec: SweepSpec, jobs: int = 1, on_progress=None
              ) -> list[SweepRow]:
    """All (value, scheme) points, ordered by grid value then scheme order.

    ``on_progress`` is called with the sorted rows finished so far after
    every task, which lets callers flush partial results.
    """
    tasks = sweep_tasks(s, cfg, spec)
    order = {sc: k for k, sc in enumerate(spec.schemes)}
    rows = []

    def collect(chunk):
        rows.extend(chunk)
        rows.sort(key=lambda r: (r.value, order[r.scheme]))
        if on_progress is not None:
            on_progress(list(rows))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for chunk in ex.map(_run_task, tasks):
                collect(chunk)
    else:
        for t in tasks:
            collect(_run_task(t))
    return rows


def _csv(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def summary_csv(rows) -> str:
    return _csv(SUMMARY_HEADER, [r.cells() for r in rows])


def read_summary(text: str) -> list[SweepRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(SweepRow(rec["axis"], float(rec["value"]), rec["scheme"], rec["status"] == "ok",
                             float(rec["acr_cco"]), float(rec["acr_ccs"]), float(rec["acr_total"]),
                             float(rec["sum_rate"]), int(rec["outer_iterations"]), rec["error"]))
    return rows


def versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "clarabel"):
        try:
            out[pkg] = version(pkg)
        except PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def manifest(s: Scenario, cfg: AlgorithmConfig, spec: SweepSpec | None, seed: int | None = None,
             command: str = "sweep") -> dict:
    m = {"command": command, "scenario": dump_scenario(s), "config": dump_config(cfg), "seed": seed,
         "versions": versions()}
    if spec is not None:
        m.update(axis=spec.axis, grid=spec.grid, schemes=spec.schemes)
    return m


def write_manifest(m: dict, path) -> None:
    Path(path).write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")


def load_manifest(path):
    """``(scenario, config, spec)`` recorded by :func:`write_manifest`."""
    m = json.loads(Path(path).read_text())
    s = parse_scenario(m["scenario"], f"{path}:scenario")
    cfg = parse_config(m["config"], f"{path}:config")
    spec = SweepSpec(m["axis"], m["grid"], m["schemes"]) if "axis" in m else None
    return s, cfg, spec


# -- figure data -------------------------------------------------------------

def figure_csv(rows, figure: str, schemes=None) -> str:
    """Axis value, scheme, metric for one of ``fig4`` .. ``fig7``. Every
    scheme in ``schemes`` must have at least one row."""
    if figure not in FIGURES:
        raise ValueError(f"unknown figure {figure!r}")
    axis, metric = FIGURES[figure]
    rows = [r for r in rows if r.axis == axis]
    want = list(ALL_SCHEMES if schemes is None else schemes)
    have = {r.scheme for r in rows}
    missing = [sc for sc in want if sc not in have]
    if missing:
        raise ValueError(f"{figure}: no {axis} results for scheme(s) {', '.join(missing)}")
    body = [[repr(r.value), r.scheme, repr(float(r.metric(metric)) if r.ok else float("nan"))]
            for r in rows if r.scheme in want]
    return _csv([AXES[axis], "scheme", metric], body)


def trajectory_figure_csv(reports: dict) -> str:
    """Positions per index for each scheme's UAVs: (N+1) * 2 rows per scheme."""
    body = []
    for scheme, rep in reports.items():
        for uav, pos in (("alice", rep.plan.alice), ("jack", rep.plan.jack)):
            body.extend([k, uav, repr(float(p[0])), repr(float(p[1])), scheme] for k, p in enumerate(pos))
    return _csv(["slot", "uav", "x", "y", "scheme"], body)


def emit_figure_data(results, figure: str, out, schemes=None) -> Path:
    """Write ``<figure>.csv`` into ``out``. ``results`` is a list of sweep
    rows for fig4-fig7 and a ``{scheme: SolveReport}`` dict for fig2."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if figure == "fig2":
        want = list(results if schemes is None else schemes)
        missing = [sc for sc in want if sc not in results]
        if missing:
            raise ValueError(f"fig2: no report for scheme(s) {', '.join(missing)}")
        text = trajectory_figure_csv({sc: results[sc] for sc in want})
    else:
        text = figure_csv(results, figure, schemes)
    path = out / f"{figure}.csv"
    path.write_text(text)
    return path


def is_monotone(values, increasing: bool, slack: float = 1e-9) -> bool:
    d = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(d >= -slack)) if increasing else bool(np.all(d <= slack))
