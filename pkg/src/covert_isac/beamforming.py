"""Per-slot covert beamforming by SCA over semidefinite relaxations.

Both phases lift the beamformers to ``W = w w^H`` and iterate concave
surrogates of Bob's rate: the ``-log2`` interference term is replaced by its
tangent plane and rank one is encouraged by the penalty
``(tr W - ||W||_2) / iota`` whose spectral norm is linearised at the current
point. All Bob-side terms are divided by ``sigma_b^2`` and all Willie-side terms
by ``sigma_w^2`` before handing them to the conic solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .channel import channel, channel_matrix, distance, gain, quad_form, steering_vector, aod_cos
from .covert import covertness_slack
from .scenario import AlgorithmConfig, Scenario


# relative back-off applied to every constraint handed to the solver, so that
# points accurate to the solver tolerance satisfy the raw constraints
MARGIN = 1e-6
# cost, in bits per full power budget, of radiating power; it breaks ties in
# favour of power-minimal beamformers so that no power parks in directions
# that dominate the spectrum without serving Bob
POWER_REG = 1e-5
# re-expansions allowed per penalty level after a stalled subproblem solve
MAX_RESTARTS = 3
# KKT residual, in solver tolerances, accepted from a re-expanded solve that stalls too
STALL_KKT_FACTOR = 1e3
# eigenvalues below this fraction of the power budget are solver noise and
# are ignored when judging whether a lifted beamformer is rank one
NOISE_FLOOR = 1e-6


class BeamformingInfeasible(RuntimeError):
    """The slot subproblem has no feasible point; ``constraint`` names why."""

    def __init__(self, constraint: str, detail: str = ""):
        super().__init__(f"beamforming infeasible ({constraint}){': ' + detail if detail else ''}")
        self.constraint = constraint


@dataclass(frozen=True)
class LinkBudget:
    """The scalar parameters the slot subproblems need."""

    kappa: float
    power_alice: float
    power_jack: float
    noise_bob: float
    noise_willie: float
    residual_rb: float
    residual_jb: float
    residual_rw: float
    sensing_threshold: float = 0.0

    @classmethod
    def from_scenario(cls, s: Scenario, kappa: float) -> "LinkBudget":
        return cls(kappa, s.power_alice, s.power_jack, s.noise_bob, s.noise_willie,
                   s.residual_rb, s.residual_jb, s.residual_rw, s.sensing_threshold)


@dataclass
class SensingTarget:
    steer_alice: np.ndarray
    dist2_alice: float
    steer_jack: np.ndarray
    dist2_jack: float


@dataclass
class SlotChannels:
    h_ab: np.ndarray
    h_jb: np.ndarray
    h_aw: np.ndarray
    h_jw: np.ndarray
    targets: list = field(default_factory=list)

    @property
    def m(self):
        return len(self.h_ab)


def slot_channels(s: Scenario, u_a, u_j, targets=()) -> SlotChannels:
    """Channels for one slot; ``targets`` holds the sensing target positions."""
    sens = []
    for q in targets:
        sens.append(SensingTarget(
            steering_vector(s.antenna_spacing_ratio, s.antennas, aod_cos(s.altitude_alice, u_a, q)),
            float(distance(s.altitude_alice, u_a, q) ** 2),
            steering_vector(s.antenna_spacing_ratio, s.antennas, aod_cos(s.altitude_jack, u_j, q)),
            float(distance(s.altitude_jack, u_j, q) ** 2),
        ))
    return SlotChannels(channel(s, "alice", s.bob, u_a), channel(s, "jack", s.bob, u_j),
                        channel(s, "alice", s.willie, u_a), channel(s, "jack", s.willie, u_j), sens)


@dataclass
class BeamformerSet:
    slot: int
    w_a: np.ndarray
    w_j: np.ndarray
    R_r: np.ndarray
    phase: str = "cco"

    @property
    def sensing_rank(self) -> int:
        if not np.any(self.R_r):
            return 0
        ev = np.linalg.eigvalsh(self.R_r)
        return int(np.sum(ev > 1e-9 * max(ev[-1], 1e-300)))


@dataclass
class ScaTrace:
    iterations: list = field(default_factory=list)
    tightenings: int = 0
    converged: bool = False
    used_start: bool = False
    rank_fallback: float | None = None  # ratio that triggered the warm-start fallback
    zero_r_start: bool = False  # CCS result came from the run with R_r pinned to zero

    def record(self, **kw):
        self.iterations.append(kw)

    @property
    def true_objective(self):
        return [it["true"] for it in self.iterations]


# -- closed-form helpers --------------------------------------------------

def mrc_direction(h):
    nrm = np.linalg.norm(h)
    if nrm == 0:
        return np.zeros_like(h, dtype=complex)
    return np.asarray(h, dtype=complex) / nrm


class _Gains:
    """Noise-normalised channel matrices of a slot."""

    def __init__(self, ch: SlotChannels, lb: LinkBudget):
        self.ab = channel_matrix(ch.h_ab) / lb.noise_bob
        self.jb = lb.residual_jb * channel_matrix(ch.h_jb) / lb.noise_bob
        self.rb = lb.residual_rb * channel_matrix(ch.h_ab) / lb.noise_bob
        self.aw = channel_matrix(ch.h_aw) / lb.noise_willie
        self.jw = channel_matrix(ch.h_jw) / lb.noise_willie


def _tr(G, W):
    return float(np.real(np.trace(G @ W)))


def bob_rate(ch: SlotChannels, lb: LinkBudget, w_a, w_j, R_r=None, phase="cco") -> float:
    from .link import sinr_bob
    R = R_r if phase == "ccs" else None
    return float(np.log2(1.0 + sinr_bob(phase, ch.h_ab, ch.h_jb, w_a, w_j, R, lb.residual_rb,
                                        lb.residual_jb, lb.noise_bob)))


def _rate_mat(g: _Gains, Wa, Wj, R):
    interf = _tr(g.jb, Wj) + (_tr(g.rb, R) if R is not None else 0.0) + 1.0
    arg = 1.0 + _tr(g.ab, Wa) / interf
    return float(np.log2(arg)) if arg > 0 and interf > 0 else -np.inf  # -inf flags a non-PSD iterate


def _penalty(W):
    tr = float(np.real(np.trace(W)))
    if tr <= 0:
        return 0.0
    return tr - float(np.linalg.eigvalsh(W)[-1])


def covert_power_cap(ch: SlotChannels, lb: LinkBudget, direction, w_j, R_r=None) -> float:
    """Largest Alice power along ``direction`` meeting the covertness bound."""
    leak = gain(ch.h_aw, direction)
    budget = (lb.kappa - 1.0) * (lb.noise_willie + gain(ch.h_jw, w_j))
    if R_r is not None:
        budget += (lb.kappa - 1.0) * lb.residual_rw * quad_form(ch.h_aw, R_r)
    if leak <= 0:
        return np.inf
    return float(budget / leak)


def sensing_gain(t: SensingTarget, w_a, w_j, R_r) -> float:
    alice = gain(t.steer_alice, w_a) + (quad_form(t.steer_alice, R_r) if R_r is not None else 0.0)
    return float(alice / t.dist2_alice + gain(t.steer_jack, w_j) / t.dist2_jack)


def cco_initial(ch: SlotChannels, lb: LinkBudget):
    """MRC towards Willie at full power for Jack, MRC towards Bob for Alice at
    the largest covert power."""
    w_j = np.sqrt(lb.power_jack) * mrc_direction(ch.h_jw)
    d = mrc_direction(ch.h_ab)
    p = min(lb.power_alice, covert_power_cap(ch, lb, d, w_j))
    return np.sqrt(max(p, 0.0)) * d, w_j


def ccs_initial(ch: SlotChannels, lb: LinkBudget):
    """As :func:`cco_initial` with the leftover Alice power spread isotropically."""
    m = ch.m
    w_j = np.sqrt(lb.power_jack) * mrc_direction(ch.h_jw)
    d = mrc_direction(ch.h_ab)
    k1 = lb.kappa - 1.0
    hw2 = float(np.linalg.norm(ch.h_aw) ** 2)
    leak = gain(ch.h_aw, d) + k1 * lb.residual_rw * hw2 / m
    budget = k1 * (lb.noise_willie + gain(ch.h_jw, w_j) + lb.residual_rw * lb.power_alice * hw2 / m)
    p = lb.power_alice if leak <= 0 else min(lb.power_alice, budget / leak)
    R = (lb.power_alice - p) / m * np.eye(m)
    return np.sqrt(max(p, 0.0)) * d, w_j, R


# -- subproblem construction ----------------------------------------------

def _build(g: _Gains, lb: LinkBudget, m, Wa_t, Wj_t, R_t, iota, targets, with_sensing_cov):
    p = conic.ConicProblem()
    Wa = p.add_hermitian("Wa", m)
    Wj = p.add_hermitian("Wj", m)
    R = p.add_hermitian("R", m) if with_sensing_cov else None

    interf = Wj.trace_with(g.jb) + 1.0
    if R is not None:
        interf = interf + R.trace_with(g.rb)
    p.add_log2(Wa.trace_with(g.ab) + interf)
    # tangent plane of log2(interference) at the expansion point
    i0 = _tr(g.jb, Wj_t) + 1.0 + (_tr(g.rb, R_t) if R is not None else 0.0)
    lin = (interf - i0) * (-1.0 / (np.log(2.0) * i0)) + (-np.log2(i0))
    p.add_linear(lin)
    p.add_linear(Wa.trace() * (-_reg(lb.power_alice)) + Wj.trace() * (-_reg(lb.power_jack)))
    for var, Wt in ((Wa, Wa_t), (Wj, Wj_t)):
        val, G = conic.spectral_linearization(Wt)
        # -(tr W - val - tr(G (W - Wt))) / iota
        pen = var.trace() - var.trace_with(G) + (_tr(G, Wt) - val)
        p.add_linear(pen * (-1.0 / iota))

    p.add_le(Wa.trace() + (R.trace() if R is not None else 0.0), lb.power_alice * (1 - MARGIN))
    p.add_le(Wj.trace(), lb.power_jack * (1 - MARGIN))
    k1 = lb.kappa - 1.0
    cov = Wa.trace_with(g.aw) - k1 * Wj.trace_with(g.jw)
    if R is not None:
        cov = cov - k1 * lb.residual_rw * R.trace_with(g.aw)
    p.add_le(cov / k1, 1.0 - MARGIN)
    if lb.sensing_threshold > 0:
        for t in targets:
            Aa = channel_matrix(t.steer_alice) / t.dist2_alice
            Aj = channel_matrix(t.steer_jack) / t.dist2_jack
            expr = Wa.trace_with(Aa) + Wj.trace_with(Aj)
            if R is not None:
                expr = expr + R.trace_with(Aa)
            p.add_ge(expr / lb.sensing_threshold, 1.0 + MARGIN)
    return p


def _restart_point(Wa, Wj, R):
    """Expansion point with the minor eigen-components stripped: the
    dominant parts of ``Wa`` and ``Wj`` (the remainder of ``Wa`` joins ``R``
    when there is one). Constraints are linear in the matrices, so only the
    surrogate depends on this point."""
    wa, _ = conic.extract_rank_one(Wa, 0.0)
    wj, _ = conic.extract_rank_one(Wj, 0.0)
    Wa_c = channel_matrix(wa)
    R_c = None if R is None else _psd_part(R) + _psd_part(Wa - Wa_c)
    return Wa_c, channel_matrix(wj), R_c


def _reg(power):
    return POWER_REG / power if power > 0 else 0.0


def _true_objective(g, lb, Wa, Wj, R, iota):
    reg = _reg(lb.power_alice) * np.real(np.trace(Wa)) + _reg(lb.power_jack) * np.real(np.trace(Wj))
    return _rate_mat(g, Wa, Wj, R) - (_penalty(Wa) + _penalty(Wj)) / iota - float(reg)


def penalised_objective(ch: SlotChannels, lb: LinkBudget, Wa, Wj, R=None, iota=np.inf) -> float:
    """Bob's rate in matrix form minus the rank penalty and power cost."""
    return _true_objective(_Gains(ch, lb), lb, Wa, Wj, R, iota)


def surrogate_objective(ch: SlotChannels, lb: LinkBudget, point, expansion, iota=np.inf) -> float:
    """Surrogate built at ``expansion`` evaluated at ``point``; both are
    ``(Wa, Wj, R)`` triples with ``R = None`` for the CCO phase."""
    with_r = expansion[2] is not None
    p = _build(_Gains(ch, lb), lb, ch.m, *expansion, iota, [], with_r)
    x = np.zeros(p.n)
    for name, W in zip(("Wa", "Wj", "R"), point):
        if name in p.variables:
            var = p.variables[name]
            x[var.idx] = var.flatten(W)
    return p.objective_value(x)


def _sca(ch, lb, cfg: AlgorithmConfig, Wa, Wj, R, with_r, trace: ScaTrace, sensing=False):
    """Run the penalised SCA loop from matrices ``(Wa, Wj, R)``."""
    g = _Gains(ch, lb)
    m = ch.m
    iota = cfg.penalty_scale * max(lb.power_alice, 1e-30)
    tightenings = 0
    prev = -np.inf
    it = 0
    held, restarts = None, 0
    while True:
        targets = ch.targets if sensing else []
        p = _build(g, lb, m, Wa, Wj, R, iota, targets, with_r)
        sol = conic.solve(p, tolerance=cfg.solver_tol)
        if sol.status == "infeasible":
            raise BeamformingInfeasible(_binding_constraint(ch, lb))
        usable = sol.status == "optimal" or sol.kkt_residual <= 10 * cfg.solver_tol
        if not usable and held is not None:
            # stalled again after re-expanding: take the step on a looser
            # certificate; extraction and repair restore exact feasibility
            usable = sol.kkt_residual <= STALL_KKT_FACTOR * cfg.solver_tol
        elif not usable and restarts < MAX_RESTARTS:
            # the solver stalls when the expansion point carries noise-level
            # eigen-components; expand again at a cleaned copy, keeping the
            # current iterate in case the next step is rejected
            held, restarts = (Wa, Wj, R), restarts + 1
            Wa, Wj, R = _restart_point(Wa, Wj, R)
            continue
        Wa_n = sol.values["Wa"]
        Wj_n = sol.values["Wj"]
        R_n = sol.values["R"] if with_r else None
        true = _true_objective(g, lb, Wa_n, Wj_n, R_n, iota)
        it += 1
        # the surrogate is a tight minorant, so the true value can only rise;
        # a numerical dip means we are at the solver's resolution
        usable = usable and np.isfinite(true)
        accept = usable and (true >= prev - 1e-9 or not np.isfinite(prev))
        if accept:
            Wa, Wj, R = Wa_n, Wj_n, R_n
        elif held is not None:
            Wa, Wj, R = held
        held = None
        floor = NOISE_FLOOR * _scale(lb)
        ratios = (conic.rank_ratio(Wa, floor), conic.rank_ratio(Wj, floor))
        trace.record(surrogate=sol.objective, true=true if accept else prev,
                     rate=_rate_mat(g, Wa, Wj, R), rank_ratio_a=ratios[0], rank_ratio_j=ratios[1],
                     iota=iota, status=sol.status, kkt=sol.kkt_residual)
        gain_ = true - prev
        if accept:
            prev = true
        if gain_ <= cfg.phi_beam or not accept or it >= cfg.max_sca:
            if min(ratios) < cfg.rank_one_ratio_min and tightenings < cfg.penalty_tightenings \
                    and it < cfg.max_sca:
                iota /= 10.0
                tightenings += 1
                restarts = 0  # a fresh re-expansion budget per penalty level
                prev = _true_objective(g, lb, Wa, Wj, R, iota)
                continue
            trace.converged = it < cfg.max_sca or gain_ <= cfg.phi_beam
            break
    trace.tightenings = tightenings
    return Wa, Wj, R


def _binding_constraint(ch: SlotChannels, lb: LinkBudget) -> str:
    m = ch.m
    for t in ch.targets:
        best = lb.power_alice * m / t.dist2_alice + lb.power_jack * m / t.dist2_jack
        if best < lb.sensing_threshold:
            return "power"
    return "covertness"


def _scale(lb):
    return max(lb.power_alice, lb.power_jack, 1e-30)


def _extract(W, min_ratio, scale):
    """Dominant beam of ``W``; matrices whose trace is negligible relative to
    ``scale`` (the largest power budget) count as zero, and eigenvalues under
    the noise floor are left out of the rank ratio."""
    if float(np.real(np.trace(W))) <= 1e-8 * scale:
        return np.zeros(W.shape[0], dtype=complex)
    v, ratio = conic.extract_rank_one(W, 0.0, NOISE_FLOOR * scale)
    if ratio < min_ratio:
        raise conic.RankOneError(ratio, min_ratio)
    return v


def _repair_cco(ch, lb, w_a, w_j):
    """Scale Alice down if rank-one extraction broke covertness."""
    cap = covert_power_cap(ch, lb, w_a, w_j) if np.any(w_a) else np.inf
    if cap < 1.0:
        w_a = w_a * np.sqrt(cap) * (1.0 - 1e-12)
    return w_a


def cco_beamforming(ch: SlotChannels, lb: LinkBudget, cfg: AlgorithmConfig = AlgorithmConfig(),
                    start=None, slot: int = 0):
    """Maximise Bob's CCO rate in one slot subject to power and covertness.

    ``start`` is an optional feasible ``(w_a, w_j)`` pair used as the
    expansion point; it defaults to :func:`cco_initial`. The result never does
    worse than the starting pair. When a warm start is given and the penalty
    schedule ends short of rank one, the (repaired) start is returned and the
    ratio is kept in ``trace.rank_fallback``; a cold start raises instead.
    """
    w_a0, w_j0 = cco_initial(ch, lb) if start is None else start
    w_a0 = _repair_cco(ch, lb, np.asarray(w_a0, dtype=complex), np.asarray(w_j0, dtype=complex))
    trace = ScaTrace()
    Wa, Wj, _ = _sca(ch, lb, cfg, channel_matrix(w_a0), channel_matrix(w_j0), None, False, trace)
    m = ch.m
    try:
        w_a = _extract(Wa, cfg.rank_one_ratio_min, _scale(lb))
        w_j = _extract(Wj, cfg.rank_one_ratio_min, _scale(lb))
    except conic.RankOneError as exc:
        if start is None:
            raise
        trace.rank_fallback, trace.used_start = exc.ratio, True
        w_j0 = _cap_power(np.asarray(w_j0, dtype=complex), lb.power_jack)
        w_a0 = _repair_cco(ch, lb, _cap_power(w_a0, lb.power_alice), w_j0)
        return BeamformerSet(slot, w_a0, w_j0, np.zeros((m, m), dtype=complex), "cco"), trace
    w_a = _repair_cco(ch, lb, w_a, w_j)
    w_a, w_j = _cap_power(w_a, lb.power_alice), _cap_power(w_j, lb.power_jack)
    if bob_rate(ch, lb, w_a, w_j) < bob_rate(ch, lb, w_a0, w_j0):
        w_a, w_j = w_a0, w_j0
        trace.used_start = True
    return BeamformerSet(slot, w_a, w_j, np.zeros((m, m), dtype=complex), "cco"), trace


def _cap_power(w, p):
    n2 = float(np.real(np.vdot(w, w)))
    if n2 > p > 0:
        return w * np.sqrt(p / n2)
    if p <= 0:
        return np.zeros_like(w)
    return w


def _ccs_feasible(ch, lb, w_a, w_j, R, rtol=1e-9) -> bool:
    if not (np.real(np.vdot(w_a, w_a)) + np.real(np.trace(R)) <= lb.power_alice * (1 + rtol)):
        return False
    if not np.real(np.vdot(w_j, w_j)) <= lb.power_jack * (1 + rtol):
        return False
    sl = covertness_slack(ch.h_aw, ch.h_jw, w_a, w_j, R, lb.kappa, lb.noise_willie, lb.residual_rw, "ccs")
    if sl < -rtol * (lb.kappa - 1.0) * lb.noise_willie:
        return False
    if lb.sensing_threshold > 0:
        for t in ch.targets:
            if sensing_gain(t, w_a, w_j, R) < lb.sensing_threshold * (1 - rtol):
                return False
    return True


def _polish_ccs(ch, lb, cfg, w_a, w_j, R):
    """Re-optimise powers along fixed beam directions together with ``R``.

    Extraction drops the non-dominant part of Jack's matrix, which can cost a
    hair of sensing gain or jamming at Willie; this restricted problem is
    convex in ``(p_a, p_j, R)`` once the interference log is linearised, so a
    few SCA steps restore exact feasibility while keeping rank one.
    """
    g = _Gains(ch, lb)
    m = ch.m
    qa, qj = mrc_direction(w_a), mrc_direction(w_j)
    Ga = channel_matrix(qa)
    Gj = channel_matrix(qj)
    k1 = lb.kappa - 1.0
    pa_t, pj_t, R_t = float(np.linalg.norm(w_a) ** 2), float(np.linalg.norm(w_j) ** 2), R
    best = None
    for _ in range(cfg.max_sca):
        p = conic.ConicProblem()
        pw = p.add_vector("p", 2)
        Rv = p.add_hermitian("R", m)
        pa, pj = pw[0], pw[1]
        interf = pj * _tr(g.jb, Gj) + Rv.trace_with(g.rb) + 1.0
        p.add_log2(pa * _tr(g.ab, Ga) + interf)
        i0 = pj_t * _tr(g.jb, Gj) + _tr(g.rb, R_t) + 1.0
        p.add_linear((interf - i0) * (-1.0 / (np.log(2.0) * i0)))
        p.add_ge(pa)
        p.add_ge(pj)
        p.add_le(pa + Rv.trace(), lb.power_alice * (1 - MARGIN))
        p.add_le(pj, lb.power_jack * (1 - MARGIN))
        cov = pa * _tr(g.aw, Ga) - k1 * pj * _tr(g.jw, Gj) - k1 * lb.residual_rw * Rv.trace_with(g.aw)
        p.add_le(cov / k1, 1.0 - MARGIN)
        if lb.sensing_threshold > 0:
            for t in ch.targets:
                Aa = channel_matrix(t.steer_alice) / t.dist2_alice
                Aj = channel_matrix(t.steer_jack) / t.dist2_jack
                expr = pa * _tr(Aa, Ga) + pj * _tr(Aj, Gj) + Rv.trace_with(Aa)
                p.add_ge(expr / lb.sensing_threshold, 1.0 + MARGIN)
        sol = conic.solve(p, tolerance=cfg.solver_tol)
        if sol.status == "infeasible":
            break
        pa_n, pj_n = np.maximum(sol.values["p"], 0.0)
        R_n = _psd_part(sol.values["R"])
        cand = (np.sqrt(pa_n) * qa, np.sqrt(pj_n) * qj, R_n)
        r_new = _rate_mat(g, Ga * pa_n, Gj * pj_n, R_n)
        improved = best is None or r_new > best[0] + cfg.phi_beam
        if best is None or r_new > best[0]:
            best = (r_new, cand)
        pa_t, pj_t, R_t = pa_n, pj_n, R_n
        if not improved:
            break
    return None if best is None else best[1]


def _psd_part(R):
    R = 0.5 * (R + np.conj(R.T))
    lam, V = np.linalg.eigh(R)
    lam = np.maximum(lam, 0.0)
    return (V * lam) @ np.conj(V.T)


def _nudge_feasible(ch, lb, w_a, w_j, R):
    """Remove solver-tolerance violations by shrinking Alice's covert beam
    and trimming power overshoot; returns ``None`` if that is not enough."""
    w_j = _cap_power(w_j, lb.power_jack)
    tot = float(np.real(np.vdot(w_a, w_a) + np.trace(R)))
    if tot > lb.power_alice:
        s = lb.power_alice / tot
        w_a, R = w_a * np.sqrt(s), R * s
    cap = covert_power_cap(ch, lb, w_a, w_j, R) if np.any(w_a) else np.inf
    if cap < 1.0:
        w_a = w_a * np.sqrt(cap) * (1.0 - 1e-12)
    return (w_a, w_j, R) if _ccs_feasible(ch, lb, w_a, w_j, R) else None


def ccs_beamforming(ch: SlotChannels, lb: LinkBudget, cfg: AlgorithmConfig = AlgorithmConfig(),
                    slot: int = 0, force_zero_r: bool = False):
    """Dual-functional beamforming for a CCS slot with the sensing covariance.

    Rank one is enforced on ``W_a`` and ``W_j`` only; ``R_r`` may have full
    rank. With ``force_zero_r`` the sensing covariance is pinned to zero.
    Otherwise the SCA is run twice, from the isotropic start and with ``R_r``
    pinned to zero, and the better feasible result is kept; the pinned
    problem is a restriction of the free one, so freeing ``R_r`` never
    lowers the rate.
    """
    if lb.sensing_threshold > 0 and not ch.targets:
        raise ValueError("CCS slot without an assigned target")
    if lb.sensing_threshold > 0:
        binding = _binding_constraint(ch, lb)
        if binding == "power":
            raise BeamformingInfeasible("power", "sensing threshold exceeds full-power beampattern gain")
    if force_zero_r:
        return _ccs_run(ch, lb, cfg, slot, True)
    try:
        free, trace = _ccs_run(ch, lb, cfg, slot, False)
    except (BeamformingInfeasible, conic.RankOneError) as exc:
        free, trace, err = None, None, exc
    try:
        pinned, ptrace = _ccs_run(ch, lb, cfg, slot, True)
    except (BeamformingInfeasible, conic.RankOneError):
        pinned = None
    if free is None and pinned is None:
        raise err
    if free is None or (pinned is not None and bob_rate(ch, lb, pinned.w_a, pinned.w_j, pinned.R_r, "ccs")
                        > bob_rate(ch, lb, free.w_a, free.w_j, free.R_r, "ccs")):
        ptrace.zero_r_start = True
        return pinned, ptrace
    return free, trace


def _ccs_run(ch, lb, cfg, slot, force_zero_r):
    m = ch.m
    w_a0, w_j0, R0 = ccs_initial(ch, lb)
    if force_zero_r:
        R0 = np.zeros((m, m), dtype=complex)
    start_ok = _ccs_feasible(ch, lb, w_a0, w_j0, R0)
    trace = ScaTrace()
    Wa, Wj, R = _sca(ch, lb, cfg, channel_matrix(w_a0), channel_matrix(w_j0),
                     None if force_zero_r else R0, not force_zero_r, trace, sensing=True)
    if R is None:
        R = np.zeros((m, m), dtype=complex)
    w_a = _extract(Wa, cfg.rank_one_ratio_min, _scale(lb))
    w_j = _extract(Wj, cfg.rank_one_ratio_min, _scale(lb))
    R = _psd_part(R)
    if not force_zero_r:
        # the non-dominant part of Alice's matrix is reused as sensing power
        R = _psd_part(R + Wa - channel_matrix(w_a))
    cand = _nudge_feasible(ch, lb, w_a, w_j, R)
    if cand is None and not force_zero_r:
        polished = _polish_ccs(ch, lb, cfg, w_a, w_j, R)
        if polished is not None:
            cand = _nudge_feasible(ch, lb, *polished)
    if cand is None and start_ok:
        cand = (w_a0, w_j0, R0)
        trace.used_start = True
    if cand is None:
        raise BeamformingInfeasible("covertness", "no rank-one point meets every constraint")
    w_a, w_j, R = cand
    if start_ok and not trace.used_start and \
            bob_rate(ch, lb, w_a, w_j, R, "ccs") < bob_rate(ch, lb, w_a0, w_j0, R0, "ccs"):
        w_a, w_j, R = w_a0, w_j0, R0
        trace.used_start = True
    return BeamformerSet(slot, w_a, w_j, R, "ccs"), trace
