"""Warden-side detection metrics and the covertness constraint.

Willie runs a radiometer on his received power and picks the threshold that
minimises the sum of false-alarm and missed-detection probabilities. Both
hypotheses are zero-mean circular Gaussians, so everything reduces to the
ratio ``r = sigma1^2 / sigma0^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .channel import gain, quad_form


@dataclass(frozen=True)
class HypothesisVariances:
    sigma0_sq: float
    sigma1_sq: float

    def __post_init__(self):
        if not self.sigma0_sq > 0:
            raise ValueError("sigma0_sq must be positive")
        if self.sigma1_sq < self.sigma0_sq:
            raise ValueError("sigma1_sq must be >= sigma0_sq")

    @property
    def ratio(self) -> float:
        return self.sigma1_sq / self.sigma0_sq


def _check_psd(R, tol=1e-12):
    R = np.asarray(R)
    if not np.allclose(R, np.conj(R.T), atol=tol * max(1.0, np.abs(R).max())):
        raise ValueError("sensing covariance is not Hermitian")
    ev = np.linalg.eigvalsh(R)
    if ev.min() < -tol * max(1.0, abs(ev).max()):
        raise ValueError("sensing covariance is not positive semidefinite")


def hypothesis_variances(h_aw, h_jw, w_a, w_j, R_r, residual_rw, noise_w) -> HypothesisVariances:
    """Received-power variances at Willie without / with the covert stream.

    Jack's jamming reaches Willie whether or not Alice transmits, so it sits
    in both hypotheses; only Alice's covert beam separates them. This is the
    reading under which the covertness constraint is exactly
    ``sigma1^2 / sigma0^2 <= kappa``.
    """
    if R_r is None:
        sensing = 0.0
    else:
        _check_psd(R_r)
        sensing = residual_rw * quad_form(h_aw, R_r)
    s0 = sensing + gain(h_jw, w_j) + noise_w
    s1 = s0 + gain(h_aw, w_a)
    return HypothesisVariances(float(s0), float(s1))


def min_dep_ratio(r):
    """Minimum detection error probability as a function of ``r >= 1``."""
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    m = r > 1.0 + 1e-12
    rm = r[m]
    lr = np.log(rm) / (rm - 1.0)
    out[m] = 1.0 + np.exp(-rm * lr) - np.exp(-lr)
    # first-order expansion near r = 1 avoids 0/0 noise
    near = (r > 1.0) & ~m
    out[near] = 1.0 - (r[near] - 1.0) / np.e
    return out if out.ndim else float(out)


def min_dep(v: HypothesisVariances) -> float:
    return float(min_dep_ratio(v.ratio))


def optimal_threshold(v: HypothesisVariances) -> float:
    """Power threshold of the minimum-error radiometer (positive)."""
    if v.sigma1_sq <= v.sigma0_sq:
        raise ValueError("no distinguishing power: sigma1^2 == sigma0^2")
    s0, s1 = v.sigma0_sq, v.sigma1_sq
    return s0 * s1 * np.log(s1 / s0) / (s1 - s0)


def kl_divergence(v: HypothesisVariances) -> float:
    """D(p0 || p1) in nats."""
    r = v.ratio
    return float(np.log(r) + 1.0 / r - 1.0)


def kl_function(lam):
    return np.log(lam) + 1.0 / lam - 1.0


def solve_kappa(epsilon: float) -> float:
    """Root ``kappa >= 1`` of ``ln k + 1/k - 1 = 2 eps^2``."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    target = 2.0 * epsilon**2
    upper = 2.0
    while kl_function(upper) <= target:
        upper *= 2.0
    return bisect(lambda x: kl_function(x) - target, 1.0, upper, xtol=1e-13, rtol=4 * np.finfo(float).eps,
                  maxiter=400)


def covertness_slack(h_aw, h_jw, w_a, w_j, R_r, kappa, noise_w, residual_rw, phase="cco"):
    """Right-hand minus left-hand side of the covertness constraint, in watts.

    Non-negative slack means the KL bound ``D <= 2 eps^2`` holds. ``phase``
    ``"cco"`` ignores the sensing covariance.
    """
    lhs = gain(h_aw, w_a) - (kappa - 1.0) * gain(h_jw, w_j)
    if phase == "ccs" and R_r is not None:
        lhs = lhs - (kappa - 1.0) * residual_rw * quad_form(h_aw, R_r)
    elif phase not in ("cco", "ccs"):
        raise ValueError(f"unknown phase {phase!r}")
    return (kappa - 1.0) * noise_w - lhs


def radiometer_dep(v: HypothesisVariances, samples: int = 1_000_000, rng=None, threshold=None) -> float:
    """Monte-Carlo detection error probability of the threshold test on
    ``|y_w|^2``. Uses the optimal threshold unless one is given."""
    rng = np.random.default_rng(rng)
    if threshold is None:
        threshold = optimal_threshold(v)
    # |y|^2 of a CN(0, s) sample is exponential with mean s
    p0 = rng.exponential(v.sigma0_sq, samples)
    p1 = rng.exponential(v.sigma1_sq, samples)
    false_alarm = np.mean(p0 > threshold)
    miss = np.mean(p1 <= threshold)
    return float(false_alarm + miss)
