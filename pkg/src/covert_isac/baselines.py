"""Benchmark schemes: fly-hover-fly trajectories with optimised or MRC
beamforming, and a single-UAV variant without the jammer."""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .bcd import SolveReport, evaluate_slot, solve_ccs, solve_cco
from .beamforming import BeamformerSet, LinkBudget, ccs_initial, covert_power_cap, mrc_direction, slot_channels
from .covert import solve_kappa
from .scenario import AlgorithmConfig, Scenario, max_displacement
from .scheduler import greedy_schedule
from .trajectory import TrajectoryPlan, straight_line


class SchemeId(str, Enum):
    PROPOSED = "proposed"
    FHF_BEAMFORMING = "fhf_beamforming"
    DUAL_UAV_FHF = "dual_uav_fhf"
    SINGLE_UAV_FHF = "single_uav_fhf"


ALL_SCHEMES = [s.value for s in SchemeId]


def fhf_path(start, hover, end, n, vmax):
    """Fly to ``hover`` at full speed, hover, then fly to ``end``.

    Returns ``(positions, hover_slots, degenerate)``. When the detour cannot
    be flown in ``n`` slots the straight line is returned and flagged.
    """
    start, hover, end = (np.asarray(p, dtype=float) for p in (start, hover, end))
    d_in = float(np.linalg.norm(hover - start))
    d_out = float(np.linalg.norm(end - hover))
    # a tiny tolerance keeps exact multiples of vmax from rounding up
    n_in = math.ceil(d_in / vmax - 1e-9)
    n_out = math.ceil(d_out / vmax - 1e-9)
    hover_slots = n - n_in - n_out
    if hover_slots < 0:
        return straight_line(start, end, n), hover_slots, True
    U = np.empty((n + 1, 2))
    k = np.arange(n + 1)
    dir_in = (hover - start) / d_in if d_in > 0 else np.zeros(2)
    dir_out = (end - hover) / d_out if d_out > 0 else np.zeros(2)
    U[:] = hover
    first = k <= n_in
    U[first] = start + np.minimum(k[first] * vmax, d_in)[:, None] * dir_in
    last = k >= n - n_out
    back = (n - k[last]) * vmax  # distance still to fly at index k
    U[last] = end - np.minimum(back, d_out)[:, None] * dir_out
    return U, hover_slots, hover_slots == 0


def fhf_trajectory(s: Scenario, uav: str, hover_node=None):
    """FHF plan for one UAV (Alice hovers over Bob, Jack over Willie)."""
    vmax = max_displacement(s)
    if uav == "alice":
        node = s.bob if hover_node is None else hover_node
        return fhf_path(s.alice_initial, node, s.alice_final, s.num_slots, vmax)
    if uav == "jack":
        node = s.willie if hover_node is None else hover_node
        return fhf_path(s.jack_initial, node, s.jack_final, s.num_slots, vmax)
    raise ValueError(f"unknown UAV {uav!r}")


def fhf_plan(s: Scenario):
    ua, ha, da = fhf_trajectory(s, "alice")
    uj, hj, dj = fhf_trajectory(s, "jack")
    return TrajectoryPlan(ua, uj), {"hover_alice": ha, "hover_jack": hj, "degenerate_fhf": bool(da or dj)}


def mrc_beamformer(h, power):
    """``sqrt(P) h / ||h||``."""
    h = np.asarray(h, dtype=complex)
    if not np.any(h):
        raise ValueError("MRC needs a nonzero channel")
    return np.sqrt(power) * mrc_direction(h)


def _mrc_set(s, kappa, plan, n, phase, target, with_jack, power_control):
    tpos = [] if target is None else [s.targets[target]]
    ch = slot_channels(s, plan.alice[n], plan.jack[n], tpos)
    lb = LinkBudget.from_scenario(s, kappa)
    if not with_jack:
        lb = LinkBudget(kappa, lb.power_alice, 0.0, lb.noise_bob, lb.noise_willie, lb.residual_rb,
                        lb.residual_jb, lb.residual_rw, lb.sensing_threshold)
    m = s.antennas
    if phase == "ccs":
        if power_control:
            w_a, w_j, R = ccs_initial(ch, lb)
        else:
            w_a = mrc_beamformer(ch.h_ab, lb.power_alice)
            w_j = mrc_beamformer(ch.h_jw, lb.power_jack) if with_jack else np.zeros(m, complex)
            R = np.zeros((m, m), dtype=complex)
        return BeamformerSet(n, w_a, w_j, R, "ccs")
    w_j = mrc_beamformer(ch.h_jw, lb.power_jack) if with_jack else np.zeros(m, complex)
    d = mrc_direction(ch.h_ab)
    p = lb.power_alice
    if power_control:
        p = min(p, covert_power_cap(ch, lb, d, w_j))
    return BeamformerSet(n, np.sqrt(p) * d, w_j, np.zeros((m, m), dtype=complex), "cco")


def run_mrc(s: Scenario, cfg: AlgorithmConfig, with_jack: bool, scheme: str) -> SolveReport:
    """FHF trajectories with MRC beams. Slots breaking covertness (or the
    sensing threshold in CCS) earn zero rate."""
    kappa = solve_kappa(s.covertness_level)
    plan, flags = fhf_plan(s)
    schedule = greedy_schedule(plan, s)
    owner = schedule.target_of()
    beams, records = [], []
    for n in range(1, s.num_slots + 1):
        q = owner.get(n)
        phase = "cco" if q is None else "ccs"
        plan.phases[n - 1] = phase
        bf = _mrc_set(s, kappa, plan, n, phase, q, with_jack, cfg.mrc_power_control)
        beams.append(bf)
        records.append(evaluate_slot(s, kappa, plan, bf, q, outage=True))
    rep = SolveReport(scheme, plan, beams, kappa, [], schedule, records, True, "", {}, flags)
    rep.flags["outage_slots"] = [r.slot for r in records if not r.feasible]
    return rep


def run_scheme(scheme, s: Scenario, cfg: AlgorithmConfig = AlgorithmConfig(), cco_cache=None) -> SolveReport:
    """Run one scheme end to end. ``cco_cache`` (a dict) may hold CCO-stage
    reports keyed by scheme, so that sweeps over the sensing threshold reuse
    them."""
    scheme = SchemeId(scheme).value
    if scheme in (SchemeId.DUAL_UAV_FHF.value, SchemeId.SINGLE_UAV_FHF.value):
        return run_mrc(s, cfg, scheme == SchemeId.DUAL_UAV_FHF.value, scheme)
    cco = None if cco_cache is None else cco_cache.get(scheme)
    if cco is None:
        if scheme == SchemeId.PROPOSED.value:
            cco = solve_cco(s, cfg, scheme=scheme)
        else:
            plan, flags = fhf_plan(s)
            cco = solve_cco(s, cfg, plan=plan, optimize_trajectory=False, scheme=scheme)
            cco.flags.update(flags)
        if cco_cache is not None:
            cco_cache[scheme] = cco
    if not cco.feasible:
        return cco
    return solve_ccs(s, cfg, cco, scheme=scheme)
