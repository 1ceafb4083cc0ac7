"""Trust-region SCA for the UAV trajectories with the beamformers held fixed.

Each slot's rate and covertness condition depend on a single UAV position, so
the per-slot objective is replaced by its tangent plane and the covertness
condition by its first-order expansion. Every SCA iteration is then one
second-order cone program: maneuver limits between consecutive positions,
per-slot trust regions, and linear covertness rows.

Positions are stored as ``(N + 1, 2)`` arrays, index 0 and ``N`` being the
fixed endpoints; slot ``n = 1..N`` is served from position ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .channel import channel_matrix, distance
from .link import eta, eta_gradient
from .scenario import AlgorithmConfig, Scenario, max_displacement

LN2 = np.log(2.0)


class TrajectoryError(RuntimeError):
    pass


@dataclass
class TrajectoryPlan:
    alice: np.ndarray
    jack: np.ndarray
    phases: list = field(default_factory=list)

    def __post_init__(self):
        self.alice = np.asarray(self.alice, dtype=float)
        self.jack = np.asarray(self.jack, dtype=float)
        if not self.phases:
            self.phases = ["cco"] * (len(self.alice) - 1)

    @property
    def num_slots(self) -> int:
        return len(self.alice) - 1

    def copy(self) -> "TrajectoryPlan":
        return TrajectoryPlan(self.alice.copy(), self.jack.copy(), list(self.phases))


@dataclass
class TrustRegionState:
    radius: float
    shrink: float = 0.9
    iteration: int = 0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("trust radius must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")

    def shrunk(self) -> "TrustRegionState":
        return TrustRegionState(self.radius * self.shrink, self.shrink, self.iteration + 1)


@dataclass
class SlotBeams:
    """Per-slot beamformers, ``(N, M)`` arrays indexed by slot - 1."""

    w_a: np.ndarray
    w_j: np.ndarray

    @property
    def W_a(self):
        return channel_matrix(self.w_a)

    @property
    def W_j(self):
        return channel_matrix(self.w_j)


def straight_line(start, end, n):
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return (1.0 - t) * np.asarray(start, dtype=float) + t * np.asarray(end, dtype=float)


def initialize_trajectory(s: Scenario, style: str = "straight-line") -> TrajectoryPlan:
    """Uniform straight-line flight between the endpoints of both UAVs."""
    if style != "straight-line":
        raise ValueError(f"unknown initialisation style {style!r}")
    vmax = max_displacement(s)
    n = s.num_slots
    for name, a, b in (("alice", s.alice_initial, s.alice_final), ("jack", s.jack_initial, s.jack_final)):
        if np.linalg.norm(np.asarray(b) - a) > n * vmax * (1 + 1e-12):
            raise TrajectoryError(f"{name}: endpoints {np.linalg.norm(np.asarray(b) - a):.3f} m apart, "
                                  f"only {n * vmax:.3f} m reachable in {n} slots")
    return TrajectoryPlan(straight_line(s.alice_initial, s.alice_final, n),
                          straight_line(s.jack_initial, s.jack_final, n))


def maneuver_violation(positions, start, end, vmax) -> float:
    """Largest violation (metres) of the endpoint and speed constraints."""
    positions = np.asarray(positions)
    step = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    return float(max(np.max(step - vmax, initial=0.0),
                     np.linalg.norm(positions[0] - start), np.linalg.norm(positions[-1] - end)))


# -- per-slot objective and covertness terms ------------------------------

def alice_objective_terms(s: Scenario, u_a, u_j, beams: SlotBeams):
    """Per-slot rate and its gradient in Alice's position (``u_a`` is
    ``(N, 2)``, the positions serving slots 1..N)."""
    beta, A_a, A_j, dl = s.pathloss_ref, s.altitude_alice, s.altitude_jack, s.antenna_spacing_ratio
    d_ab = distance(A_a, u_a, s.bob)
    d_jb = distance(A_j, u_j, s.bob)
    eta_ab = eta(beams.W_a, dl, A_a, d_ab)
    eta_jb = eta(beams.W_j, dl, A_j, d_jb)
    zeta1 = s.residual_jb * eta_jb / d_jb**2 + s.noise_bob / beta
    zeta2 = eta_ab + d_ab**2 * zeta1
    rate = np.log2(zeta2) - np.log2(d_ab**2 * zeta1)
    diff = np.asarray(u_a) - s.bob
    gam = eta_gradient(beams.W_a, dl, A_a, u_a, s.bob)
    grad = (gam + 2.0 * zeta1[:, None] * diff) / (LN2 * zeta2[:, None]) - 2.0 * diff / (LN2 * d_ab[:, None] ** 2)
    return rate, grad


def alice_covert_terms(s: Scenario, kappa, u_a, u_j, beams: SlotBeams):
    """``g(u_a) <= 0`` form of covertness and its gradient.

    ``g = eta_aw - (kappa - 1) J d_aw^2`` with
    ``J = eta_jw / d_jw^2 + sigma_w^2 / beta``. Also returns the row scale
    for which ``-g / scale`` is the covertness slack in units of
    ``(kappa - 1) sigma_w^2``.
    """
    beta, A_a, A_j, dl = s.pathloss_ref, s.altitude_alice, s.altitude_jack, s.antenna_spacing_ratio
    d_aw = distance(A_a, u_a, s.willie)
    d_jw = distance(A_j, u_j, s.willie)
    J = eta(beams.W_j, dl, A_j, d_jw) / d_jw**2 + s.noise_willie / beta
    k1 = kappa - 1.0
    g = eta(beams.W_a, dl, A_a, d_aw) - k1 * J * d_aw**2
    grad = eta_gradient(beams.W_a, dl, A_a, u_a, s.willie) - 2.0 * k1 * J[:, None] * (np.asarray(u_a) - s.willie)
    return g, grad, k1 * s.noise_willie / beta * d_aw**2


def jack_objective_terms(s: Scenario, u_a, u_j, beams: SlotBeams):
    """Per-slot rate and its gradient in Jack's position."""
    beta, A_a, A_j, dl = s.pathloss_ref, s.altitude_alice, s.altitude_jack, s.antenna_spacing_ratio
    d_ab = distance(A_a, u_a, s.bob)
    d_jb = distance(A_j, u_j, s.bob)
    S_a = eta(beams.W_a, dl, A_a, d_ab) / d_ab**2
    nb = s.noise_bob / beta
    zeta3 = s.residual_jb * eta(beams.W_j, dl, A_j, d_jb) + nb * d_jb**2
    zeta4 = zeta3 + S_a * d_jb**2
    rate = np.log2(zeta4) - np.log2(zeta3)
    diff = np.asarray(u_j) - s.bob
    g3 = s.residual_jb * eta_gradient(beams.W_j, dl, A_j, u_j, s.bob) + 2.0 * nb * diff
    g4 = g3 + 2.0 * S_a[:, None] * diff
    grad = (g4 / zeta4[:, None] - g3 / zeta3[:, None]) / LN2
    return rate, grad


def jack_covert_terms(s: Scenario, kappa, u_a, u_j, beams: SlotBeams):
    """``g(u_j) = (1 - kappa) eta_jw + (S_aw + (1 - kappa) sigma_w^2 / beta) d_jw^2``."""
    beta, A_a, A_j, dl = s.pathloss_ref, s.altitude_alice, s.altitude_jack, s.antenna_spacing_ratio
    d_aw = distance(A_a, u_a, s.willie)
    d_jw = distance(A_j, u_j, s.willie)
    S_aw = eta(beams.W_a, dl, A_a, d_aw) / d_aw**2
    k1 = kappa - 1.0
    coef = S_aw - k1 * s.noise_willie / beta
    g = -k1 * eta(beams.W_j, dl, A_j, d_jw) + coef * d_jw**2
    grad = -k1 * eta_gradient(beams.W_j, dl, A_j, u_j, s.willie) + 2.0 * coef[:, None] * (np.asarray(u_j) - s.willie)
    return g, grad, k1 * s.noise_willie / beta * d_jw**2


# -- the SOCP step -------------------------------------------------------

def _socp_step(U, rho, g, grad, scale, vmax, radii, backoff, pinned, start, end, tol):
    """One linearised step. ``U`` is ``(N+1, 2)``; slot arrays have length N."""
    n = len(U) - 1
    p = conic.ConicProblem()
    x = p.add_vector("u", 2 * (n - 1))

    def pos(k):
        if k == 0:
            return (conic.Affine.constant(start[0]), conic.Affine.constant(start[1]))
        if k == n:
            return (conic.Affine.constant(end[0]), conic.Affine.constant(end[1]))
        return (x[2 * (k - 1)], x[2 * (k - 1) + 1])

    free = np.arange(1, n)
    # objective: mean tangent-plane rate over the N slots
    p.add_linear(x.dot((rho[:n - 1] / n).ravel()))
    rmax = float(np.max(np.linalg.norm(rho[:n - 1], axis=1))) if n > 1 else 0.0
    if rmax * float(np.max(radii)) <= 1e-12:
        return U.copy(), None  # no first-order gain within reach: stay put
    tau = 1e-6 * rmax / max(np.min(radii), 1e-12) / n + 1e-12
    p.add_prox(x, U[free].ravel(), tau)
    for k in range(1, n + 1):
        a, b = pos(k), pos(k - 1)
        p.add_soc(conic.Affine.constant(vmax), [a[0] - b[0], a[1] - b[1]])
    for k in free:
        a = pos(k)
        if pinned[k - 1]:
            p.add_eq(a[0], U[k, 0])
            p.add_eq(a[1], U[k, 1])
            continue
        p.add_soc(conic.Affine.constant(radii[k - 1]), [a[0] - U[k, 0], a[1] - U[k, 1]])
        # covertness row, normalised by its natural scale
        sc = scale[k - 1]
        expr = (a[0] - U[k, 0]) * (grad[k - 1, 0] / sc) + (a[1] - U[k, 1]) * (grad[k - 1, 1] / sc)
        p.add_le(expr, -g[k - 1] / sc - backoff[k - 1])
    sol = conic.solve(p, tolerance=tol)
    if sol.status == "infeasible":
        return None, sol
    newU = U.copy()
    newU[1:n] = sol.values["u"].reshape(n - 1, 2)
    return newU, sol


def _speed_fix(U, vmax):
    step = np.linalg.norm(np.diff(U, axis=0), axis=1)
    return float(np.max(step - vmax, initial=0.0))


def _trajectory_sca(U0, objective, covert, vmax, start, end, radius, shrink, phi, max_iter, stall,
                    tol=1e-8, slack_tol=1e-9, history=None):
    """Safeguarded trust-region SCA on one UAV's positions.

    ``objective(U) -> (rates, grads)`` and ``covert(U) -> (g, grad, scale)``
    evaluate the per-slot terms for positions ``U[1:]``. Steps are accepted
    only if the mean rate does not drop and every slot keeps normalised
    slack ``-g / scale >= -slack_tol``.
    """
    U = np.array(U0, dtype=float)
    n = len(U) - 1
    rates, rho = objective(U[1:])
    f = float(np.mean(rates))
    g, grad, scale = covert(U[1:])
    hist = history if history is not None else []
    hist.append(f)
    psi = radius
    for it in range(max_iter):
        if psi < stall:
            break
        radii = np.full(n, psi)
        backoff = np.zeros(n)
        pinned = np.zeros(n, dtype=bool)
        pinned[-1] = True
        accepted = None
        for attempt in range(6):
            newU, sol = _socp_step(U, rho, g, grad, scale, vmax, radii, backoff, pinned, start, end, tol)
            if newU is None:
                break
            if _speed_fix(newU, vmax) > 1e-6:
                # solver tolerance on the speed cones; shrink towards U
                lam = 1.0
                while _speed_fix(U + lam * (newU - U), vmax) > 1e-9 and lam > 1e-6:
                    lam *= 0.5
                newU = U + lam * (newU - U)
            g_new, _, sc_new = covert(newU[1:])
            slack = -g_new / sc_new
            bad = (slack < -slack_tol) & ~pinned
            if not np.any(bad):
                accepted = newU
                break
            if attempt >= 3:
                pinned |= bad
                continue
            # back off the rows whose linearisation overshot
            lin = (g + np.sum(grad * (newU[1:] - U[1:]), axis=1)) / scale
            backoff[bad] += 1.5 * np.maximum(g_new[bad] / scale[bad] - lin[bad], 0.0) + 1e-9
        if accepted is not None:
            new_rates, new_rho = objective(accepted[1:])
            f_new = float(np.mean(new_rates))
            if f_new >= f - 1e-12:
                gain_ = f_new - f
                U, rates, rho, f = accepted, new_rates, new_rho, f_new
                g, grad, scale = covert(U[1:])
                hist.append(f)
                psi *= shrink
                if gain_ <= phi:
                    break
                continue
        psi *= shrink
    return U, f, hist


def _min_slack(covert, U):
    g, _, sc = covert(U[1:])
    return float(np.min(-g / sc))


def optimize_alice(s: Scenario, plan: TrajectoryPlan, beams: SlotBeams, kappa: float,
                   cfg: AlgorithmConfig = AlgorithmConfig(), history=None) -> TrajectoryPlan:
    """Alice's trajectory block: inner trust-region SCA until the ACR gain
    falls below the threshold."""
    u_j = plan.jack[1:]

    def objective(ua):
        return alice_objective_terms(s, ua, u_j, beams)

    def covert(ua):
        return alice_covert_terms(s, kappa, ua, u_j, beams)

    U, _, _ = _trajectory_sca(plan.alice, objective, covert, max_displacement(s), s.alice_initial,
                              s.alice_final, cfg.radius_alice(s), cfg.shrink_alice, cfg.phi_alice,
                              cfg.max_traj, cfg.stall_radius, cfg.solver_tol, history=history)
    return TrajectoryPlan(U, plan.jack.copy(), list(plan.phases))


def optimize_jack(s: Scenario, plan: TrajectoryPlan, beams: SlotBeams, kappa: float,
                  cfg: AlgorithmConfig = AlgorithmConfig(), history=None) -> TrajectoryPlan:
    u_a = plan.alice[1:]

    def objective(uj):
        return jack_objective_terms(s, u_a, uj, beams)

    def covert(uj):
        return jack_covert_terms(s, kappa, u_a, uj, beams)

    U, _, _ = _trajectory_sca(plan.jack, objective, covert, max_displacement(s), s.jack_initial,
                              s.jack_final, cfg.radius_jack(s), cfg.shrink_jack, cfg.phi_jack,
                              cfg.max_traj, cfg.stall_radius, cfg.solver_tol, history=history)
    return TrajectoryPlan(plan.alice.copy(), U, list(plan.phases))


def alice_trajectory_step(plan: TrajectoryPlan, beams: SlotBeams, state: TrustRegionState, kappa: float,
                          s: Scenario, tol: float = 1e-8):
    """A single linearised step for Alice at trust radius ``state.radius``.

    Returns the new positions and the surrogate (tangent-plane) mean rate.
    The step is not safeguarded; :func:`optimize_alice` adds the checks.
    """
    u_j = plan.jack[1:]
    rates, rho = alice_objective_terms(s, plan.alice[1:], u_j, beams)
    g, grad, scale = alice_covert_terms(s, kappa, plan.alice[1:], u_j, beams)
    return _single_step(plan.alice, rates, rho, g, grad, scale, s, state, s.alice_initial, s.alice_final, tol)


def jack_trajectory_step(plan: TrajectoryPlan, beams: SlotBeams, state: TrustRegionState, kappa: float,
                         s: Scenario, tol: float = 1e-8):
    u_a = plan.alice[1:]
    rates, rho = jack_objective_terms(s, u_a, plan.jack[1:], beams)
    g, grad, scale = jack_covert_terms(s, kappa, u_a, plan.jack[1:], beams)
    return _single_step(plan.jack, rates, rho, g, grad, scale, s, state, s.jack_initial, s.jack_final, tol)


def _single_step(U, rates, rho, g, grad, scale, s, state, start, end, tol):
    n = len(U) - 1
    pinned = np.zeros(n, dtype=bool)
    pinned[-1] = True
    newU, sol = _socp_step(U, rho, g, grad, scale, max_displacement(s), np.full(n, state.radius),
                           np.zeros(n), pinned, start, end, tol)
    if newU is None:
        raise TrajectoryError("trajectory subproblem infeasible; shrink the trust region")
    surrogate = float(np.mean(rates + np.sum(rho * (newU[1:] - U[1:]), axis=1)))
    return newU, surrogate
