import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import small_case
from covert_isac.bcd import beamform_plan
from covert_isac.channel import channel, gain
from covert_isac.covert import covertness_slack, solve_kappa
from covert_isac.scenario import AlgorithmConfig, max_displacement
from covert_isac.trajectory import (SlotBeams, TrajectoryError, TrajectoryPlan, TrustRegionState,
                                    alice_covert_terms, alice_objective_terms, alice_trajectory_step,
                                    initialize_trajectory, jack_covert_terms, jack_objective_terms,
                                    jack_trajectory_step, maneuver_violation, optimize_alice, optimize_jack)

STEP = 1e-4


def crandn(rng, *shape):
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


def random_config(rng, s):
    m = s.antennas
    u_a = rng.uniform(-100, 300, (1, 2))
    u_j = rng.uniform(-100, 300, (1, 2))
    beams = SlotBeams(crandn(rng, 1, m) * np.sqrt(s.power_alice / m), crandn(rng, 1, m) * np.sqrt(s.power_jack / m))
    return u_a, u_j, beams


def true_rate(s, u_a, u_j, beams):
    """Bob's CCO rate from the channel vectors directly."""
    sig = gain(channel(s, "alice", s.bob, u_a), beams.w_a[0])
    jam = s.residual_jb * gain(channel(s, "jack", s.bob, u_j), beams.w_j[0])
    return np.log2(1 + sig / (jam + s.noise_bob))


def central_fd(f, u):
    out = np.zeros(2)
    for k in range(2):
        e = np.zeros((1, 2))
        e[0, k] = STEP
        out[k] = (f(u + e) - f(u - e)) / (2 * STEP)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- initialisation ---------------------------------------------------------

def test_initialize_uniform_steps(case1):
    s = case1.with_updates(num_slots=100, alice_initial=np.zeros(2), alice_final=np.array([100.0, 0.0]))
    assert max_displacement(s) == 7.5
    plan = initialize_trajectory(s)
    steps = np.linalg.norm(np.diff(plan.alice, axis=0), axis=1)
    assert np.allclose(steps, 1.0, atol=1e-12)
    assert maneuver_violation(plan.alice, s.alice_initial, s.alice_final, 7.5) == 0.0


def test_initialize_constant_when_endpoints_coincide(case1):
    s = case1.with_updates(jack_final=case1.jack_initial)
    plan = initialize_trajectory(s)
    assert np.all(plan.jack == case1.jack_initial)


def test_initialize_unreachable(case1):
    s = case1.with_updates(num_slots=10, ccs_slots=4, alice_initial=np.zeros(2),
                           alice_final=np.array([200.0, 0.0]))
    with pytest.raises(TrajectoryError, match="75.000 m reachable"):
        initialize_trajectory(s)


def test_trust_region_state():
    st_ = TrustRegionState(7.5, 0.9)
    radii = [st_.radius]
    for _ in range(10):
        st_ = st_.shrunk()
        radii.append(st_.radius)
    assert st_.radius == pytest.approx(0.9**10 * 7.5, rel=1e-12)
    assert st_.iteration == 10
    assert all(b < a for a, b in zip(radii, radii[1:]))
    with pytest.raises(ValueError):
        TrustRegionState(0.0)
    with pytest.raises(ValueError):
        TrustRegionState(1.0, 1.0)


# -- coefficient gates -----------------------------------------------------

def test_alice_rate_and_gradient(case1):
    rng = np.random.default_rng(0)
    for _ in range(100):
        u_a, u_j, beams = random_config(rng, case1)
        rate, grad = alice_objective_terms(case1, u_a, u_j, beams)
        assert rate[0] == pytest.approx(true_rate(case1, u_a[0], u_j[0], beams), rel=1e-10, abs=1e-12)
        fd = central_fd(lambda u: true_rate(case1, u[0], u_j[0], beams), u_a)
        assert rel_err(grad[0], fd) <= 1e-4


def test_jack_rate_and_gradient(case1):
    rng = np.random.default_rng(1)
    for _ in range(100):
        u_a, u_j, beams = random_config(rng, case1)
        rate, grad = jack_objective_terms(case1, u_a, u_j, beams)
        assert rate[0] == pytest.approx(true_rate(case1, u_a[0], u_j[0], beams), rel=1e-10, abs=1e-12)
        fd = central_fd(lambda u: true_rate(case1, u_a[0], u[0], beams), u_j)
        assert rel_err(grad[0], fd) <= 1e-4


@pytest.mark.parametrize("uav", ["alice", "jack"])
def test_covert_terms_and_gradient(case1, uav):
    s = case1
    kappa = solve_kappa(s.covertness_level)
    fn = alice_covert_terms if uav == "alice" else jack_covert_terms
    rng = np.random.default_rng(2)
    for _ in range(100):
        u_a, u_j, beams = random_config(rng, s)
        g, grad, scale = fn(s, kappa, u_a, u_j, beams)
        # -g / scale is the watt-valued slack in units of (kappa - 1) sigma_w^2
        slack = covertness_slack(channel(s, "alice", s.willie, u_a[0]), channel(s, "jack", s.willie, u_j[0]),
                                 beams.w_a[0], beams.w_j[0], None, kappa, s.noise_willie, s.residual_rw)
        assert -g[0] / scale[0] == pytest.approx(slack / ((kappa - 1) * s.noise_willie), rel=1e-9, abs=1e-9)
        if uav == "alice":
            fd = central_fd(lambda u: fn(s, kappa, u, u_j, beams)[0][0], u_a)
        else:
            fd = central_fd(lambda u: fn(s, kappa, u_a, u, beams)[0][0], u_j)
        assert rel_err(grad[0], fd) <= 1e-4


def test_jack_approach_relieves_binding_covertness(case1):
    """At a binding point with Jack's beam aimed at Willie, moving Jack
    towards Willie lowers the covertness function."""
    s = case1
    kappa = solve_kappa(s.covertness_level)
    rng = np.random.default_rng(3)
    for _ in range(20):
        u_a = rng.uniform(0, 200, (1, 2))
        u_j = s.willie + rng.uniform(30, 120) * np.array([[np.cos(t := rng.uniform(0, 2 * np.pi)), np.sin(t)]])
        h_jw = channel(s, "jack", s.willie, u_j[0])
        h_aw = channel(s, "alice", s.willie, u_a[0])
        w_j = np.sqrt(s.power_jack) * h_jw / np.linalg.norm(h_jw)
        d = h_aw / np.linalg.norm(h_aw)
        # Alice's power set so that the constraint holds with equality
        p = (kappa - 1) * (s.noise_willie + gain(h_jw, w_j)) / gain(h_aw, d)
        beams = SlotBeams((np.sqrt(p) * d)[None], w_j[None])
        g, grad, scale = jack_covert_terms(s, kappa, u_a, u_j, beams)
        assert abs(g[0] / scale[0]) <= 1e-9
        toward = (s.willie - u_j[0]) / np.linalg.norm(s.willie - u_j[0])
        fd = (jack_covert_terms(s, kappa, u_a, u_j + STEP * toward, beams)[0][0]
              - jack_covert_terms(s, kappa, u_a, u_j - STEP * toward, beams)[0][0]) / (2 * STEP)
        assert grad[0] @ toward < 0
        assert fd < 0


# -- single steps -----------------------------------------------------------

def plan_and_beams(s, seed=0):
    kappa = solve_kappa(s.covertness_level)
    plan = initialize_trajectory(s)
    bf = beamform_plan(s, plan, kappa, AlgorithmConfig())
    return plan, SlotBeams(np.array([b.w_a for b in bf]), np.array([b.w_j for b in bf])), kappa


def test_zero_gradient_is_fixed_point():
    s = small_case(0)
    plan = initialize_trajectory(s)
    n, m = s.num_slots, s.antennas
    beams = SlotBeams(np.zeros((n, m), complex), np.full((n, m), np.sqrt(s.power_jack / m), complex))
    newU, sur = alice_trajectory_step(plan, beams, TrustRegionState(5.0), solve_kappa(0.1), s)
    assert np.max(np.abs(newU - plan.alice)) <= 1e-6
    assert sur == 0.0


def test_flat_jack_objective_is_fixed_point():
    s = small_case(1, residual_jb=0.0)
    plan = initialize_trajectory(s)
    n, m = s.num_slots, s.antennas
    beams = SlotBeams(np.full((n, m), 1e-4, complex), np.full((n, m), np.sqrt(s.power_jack / m), complex))
    kappa = solve_kappa(0.1)
    g, _, _ = jack_covert_terms(s, kappa, plan.alice[1:], plan.jack[1:], beams)
    assert np.all(g < 0)
    newU, _ = jack_trajectory_step(plan, beams, TrustRegionState(5.0), kappa, s)
    assert np.max(np.abs(newU - plan.jack)) <= 1e-6


@pytest.mark.parametrize("radius", [1e-2, 1e-4, 1e-6])
def test_vanishing_trust_region(radius):
    s = small_case(2)
    plan, beams, kappa = plan_and_beams(s)
    newU, _ = alice_trajectory_step(plan, beams, TrustRegionState(radius), kappa, s)
    assert np.max(np.linalg.norm(newU - plan.alice, axis=1)) <= radius * (1 + 1e-6) + 1e-9


def test_surrogate_tangent_at_expansion():
    s = small_case(3)
    plan, beams, kappa = plan_and_beams(s)
    rates, _ = alice_objective_terms(s, plan.alice[1:], plan.jack[1:], beams)
    _, sur = alice_trajectory_step(plan, beams, TrustRegionState(1e-9), kappa, s)
    assert sur == pytest.approx(np.mean(rates), abs=1e-9)


def test_single_slot_step_follows_true_ascent(case1):
    s = case1.with_updates(num_slots=2, ccs_slots=1, alice_initial=np.zeros(2), alice_final=np.zeros(2),
                           jack_initial=np.array([0.0, 5.0]), jack_final=np.array([0.0, 5.0]),
                           bob=np.array([60.0, 20.0]), willie=np.array([1e5, 1e5]), targets=np.array([[500.0, 500.0]]))
    plan = initialize_trajectory(s)
    m = s.antennas
    h = channel(s, "alice", s.bob, plan.alice[1])
    beams = SlotBeams(np.tile(h / np.linalg.norm(h), (2, 1)), np.zeros((2, m), complex))
    newU, _ = alice_trajectory_step(plan, beams, TrustRegionState(1.0), solve_kappa(0.1), s)
    move = newU[1] - plan.alice[1]
    fd = central_fd(lambda u: true_rate(s, u[0], plan.jack[1], SlotBeams(beams.w_a[:1], beams.w_j[:1])),
                    plan.alice[1:2])
    assert np.linalg.norm(move) == pytest.approx(1.0, rel=1e-4)
    assert move @ fd / (np.linalg.norm(move) * np.linalg.norm(fd)) >= 0.999
    assert move @ (s.bob - plan.alice[1]) > 0


# -- safeguarded block solves ---------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_block_solves_keep_constraints(seed):
    s = small_case(seed)
    plan, beams, kappa = plan_and_beams(s)
    vmax = max_displacement(s)
    hist_a, hist_j = [], []
    new = optimize_alice(s, plan, beams, kappa, history=hist_a)
    new = optimize_jack(s, new, beams, kappa, history=hist_j)
    assert maneuver_violation(new.alice, s.alice_initial, s.alice_final, vmax) <= 1e-6
    assert maneuver_violation(new.jack, s.jack_initial, s.jack_final, vmax) <= 1e-6
    for hist in (hist_a, hist_j):
        assert all(b >= a - 1e-12 for a, b in zip(hist, hist[1:]))
    assert hist_a[-1] >= hist_a[0]
    for fn in (alice_covert_terms, jack_covert_terms):
        g, _, scale = fn(s, kappa, new.alice[1:], new.jack[1:], beams)
        assert np.min(-g / scale) >= -1e-9


@given(st.integers(0, 10_000))
def test_plan_invariants_random_endpoints(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    base = small_case(0, num_slots=n)
    reach = n * max_displacement(base)
    ends = {}
    for uav in ("alice", "jack"):
        a0 = rng.uniform(-50, 50, 2)
        ends[f"{uav}_initial"], ends[f"{uav}_final"] = a0, a0 + rng.uniform(0, reach / np.sqrt(2), 2)
    s = base.with_updates(**ends)
    plan = initialize_trajectory(s)
    assert isinstance(plan, TrajectoryPlan) and plan.num_slots == n
    for uav in ("alice", "jack"):
        pos = getattr(plan, uav)
        assert maneuver_violation(pos, ends[f"{uav}_initial"], ends[f"{uav}_final"], max_displacement(s)) <= 1e-9
