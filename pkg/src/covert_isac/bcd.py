"""Block coordinate descent over beamforming and the two trajectories, and
the follow-up sensing-slot pipeline.

The CCO stage treats every slot as a covert-communication slot, alternating
per-slot beamforming, Alice's trajectory and Jack's trajectory until the
average covert rate stops improving. The CCS stage then fixes the trajectory,
picks sensing slots greedily and re-solves those slots with the
dual-functional beamformer.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamforming import (BeamformingInfeasible, BeamformerSet, LinkBudget, bob_rate, ccs_beamforming,
                          cco_beamforming, sensing_gain, slot_channels)
from .conic import RankOneError, rank_ratio
from .covert import covertness_slack, hypothesis_variances, kl_divergence, min_dep, solve_kappa
from .link import sinr_bob
from .scenario import AlgorithmConfig, Scenario, max_displacement
from .scheduler import SensingSchedule, greedy_schedule
from .trajectory import (SlotBeams, TrajectoryPlan, alice_objective_terms, initialize_trajectory,
                         maneuver_violation, optimize_alice, optimize_jack)


@dataclass
class SlotRecord:
    slot: int
    phase: str
    target: int  # 1-based target index, 0 for CCO slots
    rate: float
    sinr: float
    slack: float  # watts
    sensing_gain: float
    feasible: bool = True
    note: str = ""


@dataclass
class SolveReport:
    scheme: str
    plan: TrajectoryPlan
    beams: list  # BeamformerSet per slot, index slot - 1
    kappa: float
    history: list = field(default_factory=list)
    schedule: SensingSchedule | None = None
    records: list = field(default_factory=list)
    feasible: bool = True
    failed_stage: str = ""
    timings: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def _rates(self, phase=None):
        return [r.rate for r in self.records if phase is None or r.phase == phase]

    @property
    def acr_cco(self) -> float:
        v = self._rates("cco")
        return float(np.mean(v)) if v else 0.0

    @property
    def acr_ccs(self) -> float:
        v = self._rates("ccs")
        return float(np.mean(v)) if v else 0.0

    @property
    def acr_total(self) -> float:
        return float(np.mean(self._rates())) if self.records else 0.0

    @property
    def sum_rate(self) -> float:
        """Rates summed over all slots (bits/s/Hz times slots)."""
        return float(np.sum(self._rates()))

    @property
    def ccs_slots(self) -> list:
        return [r.slot for r in self.records if r.phase == "ccs"]

    def slot_beams(self) -> SlotBeams:
        return SlotBeams(np.array([b.w_a for b in self.beams]), np.array([b.w_j for b in self.beams]))


# -- evaluation ------------------------------------------------------------

def evaluate_slot(s: Scenario, kappa: float, plan: TrajectoryPlan, bf: BeamformerSet, target=None,
                  outage: bool = False) -> SlotRecord:
    """Raw per-slot metrics. With ``outage`` a slot that breaks covertness (or
    misses the sensing threshold) earns zero rate."""
    n = bf.slot
    tpos = [] if target is None else [s.targets[target]]
    ch = slot_channels(s, plan.alice[n], plan.jack[n], tpos)
    lb = LinkBudget.from_scenario(s, kappa)
    R = bf.R_r if bf.phase == "ccs" else None
    sinr = float(sinr_bob(bf.phase, ch.h_ab, ch.h_jb, bf.w_a, bf.w_j, R, s.residual_rb, s.residual_jb,
                          s.noise_bob))
    slack = float(covertness_slack(ch.h_aw, ch.h_jw, bf.w_a, bf.w_j, R, kappa, s.noise_willie,
                                   s.residual_rw, bf.phase))
    sg = sensing_gain(ch.targets[0], bf.w_a, bf.w_j, R) if tpos else 0.0
    rate = float(np.log2(1.0 + sinr))
    feasible = True
    note = ""
    if slack < -1e-9 * (kappa - 1.0) * s.noise_willie:
        feasible, note = False, "covertness"
    elif tpos and sg < s.sensing_threshold * (1 - 1e-9):
        feasible, note = False, "sensing"
    if outage and not feasible:
        rate = 0.0
    return SlotRecord(n, bf.phase, 0 if target is None else target + 1, rate, sinr, slack, sg, feasible, note)


def _zero_set(m, n, phase):
    z = np.zeros(m, dtype=complex)
    return BeamformerSet(n, z, z.copy(), np.zeros((m, m), dtype=complex), phase)


def beamform_plan(s: Scenario, plan: TrajectoryPlan, kappa: float, cfg: AlgorithmConfig, previous=None,
                  fallbacks=None):
    """CCO beamforming for every slot of ``plan`` (warm-started if given).
    Slots that kept their warm start for lack of a rank-one solution are
    appended to ``fallbacks``."""
    lb = LinkBudget.from_scenario(s, kappa)
    beams = []
    for n in range(1, plan.num_slots + 1):
        ch = slot_channels(s, plan.alice[n], plan.jack[n])
        start = None if previous is None else (previous[n - 1].w_a, previous[n - 1].w_j)
        bf, tr = cco_beamforming(ch, lb, cfg, start=start, slot=n)
        if tr.rank_fallback is not None and fallbacks is not None:
            fallbacks.append(n)
        beams.append(bf)
    return beams


def _mean_rate(s, kappa, plan, beams):
    lb = LinkBudget.from_scenario(s, kappa)
    return float(np.mean([bob_rate(slot_channels(s, plan.alice[b.slot], plan.jack[b.slot]), lb, b.w_a, b.w_j)
                          for b in beams]))


def solve_cco(s: Scenario, cfg: AlgorithmConfig = AlgorithmConfig(), plan: TrajectoryPlan | None = None,
              optimize_trajectory: bool = True, scheme: str = "proposed") -> SolveReport:
    """Alternate beamforming, Alice and Jack blocks with every slot in CCO.

    The history holds the average covert rate after the first beamforming
    pass and after each outer iteration.
    """
    kappa = solve_kappa(s.covertness_level)
    plan = initialize_trajectory(s) if plan is None else plan.copy()
    plan.phases = ["cco"] * plan.num_slots
    timings = {"beamforming": 0.0, "alice": 0.0, "jack": 0.0}
    report = SolveReport(scheme, plan, [], kappa, timings=timings)
    beams = None
    fallbacks = []
    for it in range(cfg.max_outer):
        t0 = time.perf_counter()
        try:
            beams = beamform_plan(s, plan, kappa, cfg, previous=beams, fallbacks=fallbacks)
        except (BeamformingInfeasible, RankOneError) as exc:
            report.feasible, report.failed_stage = False, f"beamforming: {exc}"
            break
        timings["beamforming"] += time.perf_counter() - t0
        if it == 0:
            report.history.append(_mean_rate(s, kappa, plan, beams))
        if not optimize_trajectory:
            break
        sb = SlotBeams(np.array([b.w_a for b in beams]), np.array([b.w_j for b in beams]))
        t0 = time.perf_counter()
        plan = optimize_alice(s, plan, sb, kappa, cfg)
        timings["alice"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        plan = optimize_jack(s, plan, sb, kappa, cfg)
        timings["jack"] += time.perf_counter() - t0
        cur = float(np.mean(alice_objective_terms(s, plan.alice[1:], plan.jack[1:], sb)[0]))
        report.history.append(cur)
        if cur - report.history[-2] <= cfg.phi_outer:
            break
    report.plan = plan
    report.beams = beams or []
    report.flags["outer_iterations"] = max(len(report.history) - 1, 1 if beams else 0)
    report.flags["rank_fallbacks"] = len(fallbacks)
    if beams:
        report.records = [evaluate_slot(s, kappa, plan, b) for b in beams]
    return report


def solve_ccs(s: Scenario, cfg: AlgorithmConfig, cco_report: SolveReport, force_zero_r: bool = False,
              scheme: str | None = None) -> SolveReport:
    """Schedule sensing slots on the CCO trajectory and re-solve them with
    the dual-functional beamformer; other slots keep their CCO beamformers."""
    if not cco_report.feasible:
        raise ValueError("CCS stage needs a feasible CCO report")
    kappa = cco_report.kappa
    plan = cco_report.plan.copy()
    schedule = greedy_schedule(plan, s)
    owner = schedule.target_of()
    lb = LinkBudget.from_scenario(s, kappa)
    beams = list(cco_report.beams)
    records = list(cco_report.records)
    timings = dict(cco_report.timings)
    t0 = time.perf_counter()
    slot_errors = {}
    for n in sorted(owner):
        q = owner[n]
        plan.phases[n - 1] = "ccs"
        ch = slot_channels(s, plan.alice[n], plan.jack[n], [s.targets[q]])
        try:
            bf, _ = ccs_beamforming(ch, lb, cfg, slot=n, force_zero_r=force_zero_r)
            beams[n - 1] = bf
            records[n - 1] = evaluate_slot(s, kappa, plan, bf, q)
        except (BeamformingInfeasible, RankOneError) as exc:
            slot_errors[n] = str(exc)
            beams[n - 1] = _zero_set(s.antennas, n, "ccs")
            records[n - 1] = SlotRecord(n, "ccs", q + 1, 0.0, 0.0, (kappa - 1.0) * s.noise_willie, 0.0,
                                        False, getattr(exc, "constraint", "rank"))
    timings["ccs"] = time.perf_counter() - t0
    rep = SolveReport(scheme or cco_report.scheme, plan, beams, kappa, list(cco_report.history), schedule,
                      records, True, "", timings, dict(cco_report.flags))
    rep.flags["ccs_infeasible_slots"] = sorted(slot_errors)
    return rep


def solve(s: Scenario, cfg: AlgorithmConfig = AlgorithmConfig()) -> SolveReport:
    """The full pipeline: CCO optimisation followed by the CCS stage."""
    rep = solve_cco(s, cfg)
    if not rep.feasible:
        return rep
    return solve_ccs(s, cfg, rep)


# -- audit -----------------------------------------------------------------

def audit(report: SolveReport, s: Scenario) -> dict:
    """Re-check the final solution against the raw constraints.

    Returns worst-case figures: maneuver violation (m), power excess (W),
    minimum covertness slack (W), maximum KL divergence, minimum MDEP and the
    worst sensing ratio over scheduled slots that were solved.
    """
    vmax = max_displacement(s)
    kappa = report.kappa
    out = {
        "maneuver_alice": maneuver_violation(report.plan.alice, s.alice_initial, s.alice_final, vmax),
        "maneuver_jack": maneuver_violation(report.plan.jack, s.jack_initial, s.jack_final, vmax),
    }
    p_a, p_j, slack, kl, dep, sens, ratios = [], [], [], [], [], [], []
    owner = report.schedule.target_of() if report.schedule is not None else {}
    for bf, rec in zip(report.beams, report.records):
        n = bf.slot
        R = bf.R_r if bf.phase == "ccs" else np.zeros_like(bf.R_r)
        p_a.append(float(np.real(np.vdot(bf.w_a, bf.w_a) + np.trace(R))) - s.power_alice)
        p_j.append(float(np.real(np.vdot(bf.w_j, bf.w_j))) - s.power_jack)
        if not rec.feasible and rec.rate == 0.0:
            continue  # declared outage or infeasible slot carries no covert rate
        tpos = [s.targets[owner[n]]] if n in owner and bf.phase == "ccs" else []
        ch = slot_channels(s, report.plan.alice[n], report.plan.jack[n], tpos)
        slack.append(float(covertness_slack(ch.h_aw, ch.h_jw, bf.w_a, bf.w_j, R, kappa, s.noise_willie,
                                            s.residual_rw, bf.phase)))
        v = hypothesis_variances(ch.h_aw, ch.h_jw, bf.w_a, bf.w_j, R, s.residual_rw, s.noise_willie)
        kl.append(kl_divergence(v))
        dep.append(min_dep(v))
        if tpos and s.sensing_threshold > 0:
            sens.append(sensing_gain(ch.targets[0], bf.w_a, bf.w_j, R) / s.sensing_threshold)
        if np.any(bf.w_a):
            ratios.append(rank_ratio(np.outer(bf.w_a, np.conj(bf.w_a))))
    out["power_alice_excess"] = max(p_a, default=0.0)
    out["power_jack_excess"] = max(p_j, default=0.0)
    out["min_slack"] = min(slack, default=np.inf)
    out["min_slack_normalized"] = out["min_slack"] / ((kappa - 1.0) * s.noise_willie)
    out["max_kl"] = max(kl, default=0.0)
    out["min_mdep"] = min(dep, default=1.0)
    out["min_sensing_ratio"] = min(sens, default=np.inf)
    return out


def audit_ok(a: dict, s: Scenario) -> bool:
    eps = s.covertness_level
    return (a["maneuver_alice"] <= 1e-6 and a["maneuver_jack"] <= 1e-6
            and a["power_alice_excess"] <= 1e-9 and a["power_jack_excess"] <= 1e-9
            and a["min_slack"] >= -1e-9 and a["max_kl"] <= 2 * eps**2 + 1e-9
            and a["min_mdep"] >= 1 - eps and a["min_sensing_ratio"] >= 1 - 1e-9)


# -- serialisation ---------------------------------------------------------

SLOT_HEADER = ["slot", "phase", "target", "alice_x", "alice_y", "jack_x", "jack_y", "rate", "sinr",
               "slack_w", "sensing_gain", "power_alice", "power_sensing", "power_jack", "feasible", "note"]
TRAJ_HEADER = ["index", "uav", "x", "y"]


def _csv(rows, header) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return out.getvalue()


def _f(x) -> str:
    return repr(float(x))


def slots_csv(report: SolveReport) -> str:
    rows = []
    for bf, r in zip(report.beams, report.records):
        n = bf.slot
        ua, uj = report.plan.alice[n], report.plan.jack[n]
        rows.append([n, r.phase, r.target, _f(ua[0]), _f(ua[1]), _f(uj[0]), _f(uj[1]), _f(r.rate),
                     _f(r.sinr), _f(r.slack), _f(r.sensing_gain), _f(np.linalg.norm(bf.w_a) ** 2),
                     _f(np.real(np.trace(bf.R_r))), _f(np.linalg.norm(bf.w_j) ** 2), int(r.feasible), r.note])
    return _csv(rows, SLOT_HEADER)


def trajectory_csv(report: SolveReport) -> str:
    rows = []
    for uav, pos in (("alice", report.plan.alice), ("jack", report.plan.jack)):
        rows.extend([k, uav, _f(p[0]), _f(p[1])] for k, p in enumerate(pos))
    return _csv(rows, TRAJ_HEADER)


def history_csv(report: SolveReport) -> str:
    return _csv([[k, _f(v)] for k, v in enumerate(report.history)], ["iteration", "acr"])


def summary(report: SolveReport) -> dict:
    return {
        "scheme": report.scheme,
        "feasible": report.feasible,
        "failed_stage": report.failed_stage,
        "kappa": report.kappa,
        "acr_cco": report.acr_cco,
        "acr_ccs": report.acr_ccs,
        "acr_total": report.acr_total,
        "sum_rate": report.sum_rate,
        "outer_iterations": report.flags.get("outer_iterations", 0),
        "rank_fallbacks": report.flags.get("rank_fallbacks", 0),
        "ccs_slots": report.ccs_slots,
        "ccs_infeasible_slots": report.flags.get("ccs_infeasible_slots", []),
        "degenerate_fhf": report.flags.get("degenerate_fhf", False),
    }


def write_bundle(report: SolveReport, outdir) -> Path:
    """Write ``slots.csv``, ``trajectory.csv``, ``history.csv``,
    ``schedule.csv`` and ``summary.json`` into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "slots.csv").write_text(slots_csv(report))
    (outdir / "trajectory.csv").write_text(trajectory_csv(report))
    (outdir / "history.csv").write_text(history_csv(report))
    if report.schedule is not None:
        (outdir / "schedule.csv").write_text(report.schedule.to_csv())
    (outdir / "summary.json").write_text(json.dumps(summary(report), indent=2, sort_keys=True) + "\n")
    return outdir
