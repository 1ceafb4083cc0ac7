"""Quick numerical self-checks run by ``covert-isac validate``.

Each check draws its own random instances from a seeded generator and
returns ``(passed, detail)``. They mirror the property tests in the test
suite at a smaller size so they run in seconds.
"""

from __future__ import annotations

import numpy as np

from .baselines import fhf_plan
from .channel import aod_cos, channel, steering_vector
from .covert import (HypothesisVariances, kl_divergence, kl_function, min_dep, min_dep_ratio, radiometer_dep,
                     solve_kappa)
from .link import eta, eta_gradient
from .scenario import Scenario, dump_scenario, max_displacement, parse_scenario
from .scheduler import greedy_from_table
from .trajectory import initialize_trajectory, maneuver_violation


def _rand_herm(rng, m):
    X = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return X @ X.conj().T


def check_steering(s, rng, count=200):
    worst = 0.0
    for _ in range(count):
        u, v = rng.uniform(-200, 200, 2), rng.uniform(-200, 200, 2)
        a = steering_vector(s.antenna_spacing_ratio, s.antennas, aod_cos(s.altitude_alice, u, v))
        h = channel(s, "alice", v, u)
        d2 = s.altitude_alice**2 + np.sum((u - v) ** 2)
        worst = max(worst, np.max(np.abs(np.abs(a) - 1)),
                    abs(np.vdot(h, h).real / (s.antennas * s.pathloss_ref / d2) - 1))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def check_eta(s, rng, count=200):
    worst = 0.0
    for _ in range(count):
        m = int(rng.choice([2, 4, 8]))
        W = _rand_herm(rng, m)
        u, v = rng.uniform(-200, 200, 2), rng.uniform(-200, 200, 2)
        A = s.altitude_alice
        d = float(np.sqrt(A**2 + np.sum((u - v) ** 2)))
        a = steering_vector(s.antenna_spacing_ratio, m, A / d)
        ref = np.vdot(a, W @ a).real
        worst = max(worst, abs(eta(W, s.antenna_spacing_ratio, A, d) - ref) / abs(ref))
    return worst <= 1e-9, f"max relative error {worst:.2e}"


def check_eta_gradient(s, rng, count=50, step=1e-4):
    worst = 0.0
    A = s.altitude_alice
    for _ in range(count):
        W = _rand_herm(rng, s.antennas)
        u, v = rng.uniform(-100, 100, 2), rng.uniform(-100, 100, 2)
        g = eta_gradient(W, s.antenna_spacing_ratio, A, u, v)
        fd = np.zeros(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            dp = np.sqrt(A**2 + np.sum((u + e - v) ** 2))
            dm = np.sqrt(A**2 + np.sum((u - e - v) ** 2))
            fd[k] = (eta(W, s.antenna_spacing_ratio, A, dp) - eta(W, s.antenna_spacing_ratio, A, dm)) / (2 * step)
        scale = max(np.linalg.norm(fd), 1e-12 * np.real(np.trace(W)))
        worst = max(worst, np.linalg.norm(g - fd) / scale)
    return worst <= 1e-4, f"max relative error {worst:.2e}"


def check_kappa(s, rng):
    k = solve_kappa(s.covertness_level)
    res = abs(kl_function(k) - 2 * s.covertness_level**2)
    return k > 1 and res <= 1e-10, f"kappa {k:.10f}, residual {res:.1e}"


def check_bound_chain(s, rng, count=10_000):
    r = rng.uniform(1, 100, count)
    dep = min_dep_ratio(r)
    kl = np.log(r) + 1 / r - 1
    gap = np.min(dep - (1 - np.sqrt(kl / 2)))
    return gap >= -1e-12, f"min(xi - (1 - sqrt(D/2))) = {gap:.2e}"


def check_radiometer(s, rng, samples=200_000):
    worst = 0.0
    for r in (1.5, 2.0, 4.0):
        v = HypothesisVariances(1.0, r)
        worst = max(worst, abs(radiometer_dep(v, samples, rng) - min_dep(v)))
    return worst <= 0.01, f"max |MC - closed form| {worst:.4f}"


def check_covert_chain(s, rng, count=500):
    eps = s.covertness_level
    k = solve_kappa(eps)
    bad = 0
    for _ in range(count):
        s0 = rng.uniform(0.5, 2.0)
        s1 = s0 * rng.uniform(1.0, k)  # slack >= 0 is ratio <= kappa
        v = HypothesisVariances(s0, s1)
        if kl_divergence(v) > 2 * eps**2 + 1e-9 or min_dep(v) < 1 - eps - 1e-12:
            bad += 1
    return bad == 0, f"{bad} violations in {count}"


def _reference_greedy(table, per_target):
    taken = set()
    out = []
    for row in table:
        cand = sorted((d, n) for n, d in enumerate(row) if n not in taken)[:per_target]
        picked = sorted(n + 1 for _, n in cand)
        taken.update(n - 1 for n in picked)
        out.append(picked)
    return out


def check_scheduler(s, rng, count=200):
    bad = 0
    for _ in range(count):
        q = int(rng.integers(1, 4))
        nt = int(rng.integers(1, 4))
        n = int(rng.integers(q * nt, q * nt + 8))
        table = rng.integers(0, 6, size=(q, n)).astype(float)  # small ints force ties
        if greedy_from_table(table, nt) != _reference_greedy(table, nt):
            bad += 1
    return bad == 0, f"{bad} mismatches in {count}"


def check_roundtrip(s, rng):
    again = parse_scenario(dump_scenario(s))
    return again == s, "dump/parse round trip"


def check_plans(s, rng):
    vmax = max_displacement(s)
    worst = 0.0
    for plan in (initialize_trajectory(s), fhf_plan(s)[0]):
        worst = max(worst, maneuver_violation(plan.alice, s.alice_initial, s.alice_final, vmax),
                    maneuver_violation(plan.jack, s.jack_initial, s.jack_final, vmax))
    return worst <= 1e-6, f"max maneuver violation {worst:.2e} m"


CHECKS = {
    "steering_and_channel": check_steering,
    "eta_quadratic_form": check_eta,
    "eta_gradient": check_eta_gradient,
    "kappa_root": check_kappa,
    "mdep_kl_bound": check_bound_chain,
    "radiometer_monte_carlo": check_radiometer,
    "covertness_chain": check_covert_chain,
    "greedy_scheduler": check_scheduler,
    "scenario_round_trip": check_roundtrip,
    "initial_plans_feasible": check_plans,
}


def run_checks(s: Scenario, seed: int = 0):
    """Yield ``(name, passed, detail)`` for every check."""
    for k, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        try:
            ok, detail = fn(s, rng)
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
