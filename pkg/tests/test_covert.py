import numpy as np
import pytest
from hypothesis import given, strategies as st

from covert_isac.covert import (HypothesisVariances, covertness_slack, hypothesis_variances, kl_divergence,
                                kl_function, min_dep, min_dep_ratio, optimal_threshold, radiometer_dep,
                                solve_kappa)
from conftest import random_psd

SW = 1e-11


def _cvec(rng, m, scale=1.0):
    return scale * (rng.normal(size=m) + 1j * rng.normal(size=m))


def test_silence():
    z = np.zeros(4, complex)
    v = hypothesis_variances(z + 1e-3, z + 1e-3, z, z, np.zeros((4, 4)), 0.2, SW)
    assert v.sigma0_sq == v.sigma1_sq == SW


def test_ratio_two():
    h = np.array([1e-5, 0, 0, 0], complex)
    w = np.array([np.sqrt(1e-11) / 1e-5, 0, 0, 0], complex)  # |h^H w|^2 = 1e-11
    v = hypothesis_variances(h, h, w, np.zeros(4, complex), None, 0.1, SW)
    assert v.ratio == pytest.approx(2.0, rel=1e-12)


def test_whitened_sensing_and_shared_jamming():
    rng = np.random.default_rng(0)
    h_aw, h_jw, w_a, w_j = (_cvec(rng, 4, 1e-4) for _ in range(4))
    R = random_psd(rng, 4)
    v = hypothesis_variances(h_aw, h_jw, w_a, np.zeros(4, complex), R, 0.0, SW)
    assert v.sigma0_sq == SW
    # jamming adds the same power under both hypotheses
    vj = hypothesis_variances(h_aw, h_jw, w_a, w_j, R, 0.0, SW)
    jam = abs(np.vdot(h_jw, w_j)) ** 2
    assert vj.sigma0_sq == pytest.approx(SW + jam, rel=1e-12)
    assert vj.sigma1_sq - vj.sigma0_sq == pytest.approx(v.sigma1_sq - v.sigma0_sq, rel=1e-9)


def test_non_psd_rejected():
    h = np.ones(2, complex)
    with pytest.raises(ValueError, match="semidefinite"):
        hypothesis_variances(h, h, h, h, np.diag([1.0, -1.0]), 0.1, SW)
    with pytest.raises(ValueError, match="Hermitian"):
        hypothesis_variances(h, h, h, h, np.array([[1, 1j], [1j, 1]]), 0.1, SW)


def test_variance_invariant():
    with pytest.raises(ValueError):
        HypothesisVariances(1.0, 0.5)
    with pytest.raises(ValueError):
        HypothesisVariances(0.0, 1.0)


def test_min_dep_examples():
    assert min_dep(HypothesisVariances(1.0, 1.0)) == 1.0
    assert min_dep(HypothesisVariances(1.0, 2.0)) == pytest.approx(0.75, abs=1e-14)
    # continuity through the r -> 1 limit
    assert min_dep_ratio(1 + 1e-9) == pytest.approx(1.0, abs=1e-8)


def test_min_dep_monotone_scan():
    r = np.concatenate([np.linspace(1, 2, 2000), np.geomspace(2, 1e6, 2000)])
    x = min_dep_ratio(r)
    assert np.all(np.diff(x) <= 1e-15)
    assert np.all((x >= 0) & (x <= 1))


def test_optimal_threshold():
    t = optimal_threshold(HypothesisVariances(1.0, 2.0))
    assert t == pytest.approx(2 * np.log(2), rel=1e-12)
    assert 1.0 < t < 2.0
    with pytest.raises(ValueError, match="no distinguishing power"):
        optimal_threshold(HypothesisVariances(1.0, 1.0))


def test_kl_examples():
    assert kl_divergence(HypothesisVariances(3.0, 3.0)) == 0.0
    assert kl_divergence(HypothesisVariances(1.0, 2.0)) == pytest.approx(np.log(2) - 0.5, rel=1e-12)
    assert kl_divergence(HypothesisVariances(1.0, 2.0)) == pytest.approx(0.193147, abs=1e-6)


@given(st.floats(1.0, 1e4))
def test_kl_nonnegative(r):
    assert kl_divergence(HypothesisVariances(1.0, r)) >= 0.0


def _bisect_kappa(eps):
    lo, hi = 1.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.log(mid) + 1 / mid - 1 < 2 * eps**2:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_kappa_examples():
    k = solve_kappa(0.1)
    assert k == pytest.approx(1.230, abs=5e-4)
    assert kl_function(1.230) == pytest.approx(0.0200, abs=1e-4)
    assert abs(kl_function(k) - 0.02) <= 1e-10
    # frozen from the independent bisection above
    assert k == pytest.approx(1.2298532886955513, rel=1e-12)
    assert k == pytest.approx(_bisect_kappa(0.1), rel=1e-12)
    k5 = solve_kappa(0.05)
    assert abs(kl_function(k5) - 0.005) <= 1e-10
    assert solve_kappa(1e-4) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        solve_kappa(0.0)


@given(st.floats(1e-3, 0.99))
def test_kappa_property(eps):
    k = solve_kappa(eps)
    assert k > 1
    assert abs(kl_function(k) - 2 * eps**2) <= 1e-10


def test_slack_examples():
    k = solve_kappa(0.1)
    z = np.zeros(4, complex)
    h = np.array([1e-4, 0, 0, 0], complex)
    assert covertness_slack(h, h, z, z, None, k, SW, 0.1) == pytest.approx((k - 1) * SW)
    w = np.array([np.sqrt((k - 1) * SW) / 1e-4, 0, 0, 0], complex)
    assert covertness_slack(h, h, w, z, None, k, SW, 0.1) == pytest.approx(0.0, abs=1e-25)
    # jamming power delta at Willie adds (kappa - 1) delta of slack
    wj = np.array([1e-3, 0, 0, 0], complex)
    delta = abs(np.vdot(h, wj)) ** 2
    base = covertness_slack(h, h, w, z, None, k, SW, 0.1)
    assert covertness_slack(h, h, w, wj, None, k, SW, 0.1) - base == pytest.approx((k - 1) * delta, rel=1e-9)
    with pytest.raises(ValueError):
        covertness_slack(h, h, w, wj, None, k, SW, 0.1, phase="xyz")


def test_slack_ccs_sensing_term():
    k = solve_kappa(0.1)
    rng = np.random.default_rng(3)
    h_aw, h_jw, w_a, w_j = (_cvec(rng, 4, 1e-5) for _ in range(4))
    R = random_psd(rng, 4) * 1e-2
    cco = covertness_slack(h_aw, h_jw, w_a, w_j, None, k, SW, 0.3, "cco")
    ccs = covertness_slack(h_aw, h_jw, w_a, w_j, R, k, SW, 0.3, "ccs")
    assert ccs - cco == pytest.approx((k - 1) * 0.3 * np.real(h_aw.conj() @ R @ h_aw), rel=1e-9)


def test_bound_chain_random():
    r = np.random.default_rng(11).uniform(1, 100, 10_000)
    D = np.log(r) + 1 / r - 1
    assert np.all(min_dep_ratio(r) >= 1 - np.sqrt(D / 2) - 1e-12)


def test_slack_implies_mdep_end_to_end():
    rng = np.random.default_rng(5)
    checked = 0
    for eps in (0.01, 0.05, 0.1, 0.3):
        k = solve_kappa(eps)
        for _ in range(300):
            h_aw, h_jw, w_a, w_j = (_cvec(rng, 4, 10 ** rng.uniform(-7, -4)) for _ in range(4))
            R = random_psd(rng, 4) * 10 ** rng.uniform(-3, 0)
            sl = covertness_slack(h_aw, h_jw, w_a, w_j, R, k, SW, 0.16, "ccs")
            if sl < 0:
                continue
            v = hypothesis_variances(h_aw, h_jw, w_a, w_j, R, 0.16, SW)
            assert kl_divergence(v) <= 2 * eps**2 + 1e-9
            assert min_dep(v) >= 1 - eps
            checked += 1
    assert checked > 100


@pytest.mark.parametrize("r", [1.5, 2.0, 4.0])
def test_radiometer_monte_carlo(r):
    v = HypothesisVariances(1.0, r)
    assert radiometer_dep(v, 1_000_000, rng=int(r * 10)) == pytest.approx(min_dep(v), abs=0.005)


def test_radiometer_threshold_is_optimal():
    v = HypothesisVariances(1.0, 2.0)
    t = optimal_threshold(v)
    at = radiometer_dep(v, 400_000, rng=1, threshold=t)
    for off in (0.7, 1.3):
        assert radiometer_dep(v, 400_000, rng=1, threshold=t * off) > at
