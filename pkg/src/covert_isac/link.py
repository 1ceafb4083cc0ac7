"""Bob-side link quality, sensing beampattern gain and the closed-form
beampattern quantities used by the trajectory subproblems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import distance, gain, quad_form, steering_vector, aod_cos


@dataclass(frozen=True)
class SlotRates:
    slot: int
    phase: str
    sinr: float
    rate: float


def sinr_bob(phase, h_ab, h_jb, w_a, w_j, R_r, residual_rb, residual_jb, noise_b):
    """Bob's SINR after imperfect cancellation of jamming (and sensing in CCS)."""
    denom = residual_jb * gain(h_jb, w_j) + noise_b
    if phase == "ccs":
        if R_r is not None:
            denom = denom + residual_rb * quad_form(h_ab, R_r)
    elif phase != "cco":
        raise ValueError(f"unknown phase {phase!r}")
    return gain(h_ab, w_a) / denom


def rate(sinr):
    return np.log2(1.0 + np.asarray(sinr))


def slot_rates(slot, phase, sinr) -> SlotRates:
    sinr = float(max(sinr, 0.0))
    return SlotRates(slot, phase, sinr, float(np.log2(1.0 + sinr)))


def average_covert_rate(rates: Sequence[SlotRates], phase=None) -> float:
    """Mean rate over the slots of ``phase`` (all slots if ``phase`` is None)."""
    vals = [r.rate for r in rates if phase is None or r.phase == phase]
    if not vals:
        raise ValueError(f"no slots in phase {phase!r}")
    return float(np.mean(vals))


def beampattern_sum_gain(u_a, u_j, s_q, w_a, w_j, R_r, A_a, A_j, spacing_ratio=0.5):
    """Distance-normalised transmit beampattern gain towards target ``s_q``.

    The path-loss constant is deliberately left out, so the result is in
    watts per square metre and is compared with the sensing threshold as is.
    """
    m = len(w_a)
    a_a = steering_vector(spacing_ratio, m, aod_cos(A_a, u_a, s_q))
    a_j = steering_vector(spacing_ratio, m, aod_cos(A_j, u_j, s_q))
    alice = gain(a_a, w_a)
    if R_r is not None:
        alice = alice + quad_form(a_a, R_r)
    jack = gain(a_j, w_j)
    d_a2 = A_a**2 + np.sum((np.asarray(u_a) - s_q) ** 2)
    d_j2 = A_j**2 + np.sum((np.asarray(u_j) - s_q) ** 2)
    return float(alice / d_a2 + jack / d_j2)


def _cross_terms(W):
    """Upper-triangle magnitudes, phases and index gaps of ``W``."""
    W = np.asarray(W)
    k, l = np.triu_indices(W.shape[-1], 1)
    w = W[..., k, l]
    return np.abs(w), np.angle(w), (l - k).astype(float)


def eta(W, spacing_ratio, altitude, dist):
    """``a^H W a`` written as a function of the UAV-node distance.

    With ``W_kl = |W_kl| exp(j theta_kl)`` the quadratic form is
    ``sum W_ll + 2 sum_{k<l} |W_kl| cos(theta_kl + 2 pi delta A (l-k) / d)``.
    """
    W = np.asarray(W)
    mag, ph, gap = _cross_terms(W)
    diag = np.real(np.trace(W, axis1=-2, axis2=-1))
    dist = np.asarray(dist, dtype=float)
    arg = ph + 2.0 * np.pi * spacing_ratio * altitude * np.multiply.outer(1.0 / dist, gap)
    return diag + 2.0 * np.sum(mag * np.cos(arg), axis=-1)


def eta_at(W, spacing_ratio, altitude, u, v):
    return eta(W, spacing_ratio, altitude, distance(altitude, u, v))


def eta_gradient(W, spacing_ratio, altitude, u, v):
    """Gradient of ``eta`` with respect to the UAV horizontal position ``u``."""
    u = np.asarray(u, dtype=float)
    diff = u - np.asarray(v, dtype=float)
    d = np.asarray(distance(altitude, u, v))
    mag, ph, gap = _cross_terms(W)
    c = 2.0 * np.pi * spacing_ratio * altitude
    s = np.sum(mag * np.sin(ph + c * gap / d[..., None]) * gap, axis=-1)
    return (2.0 * c * s / d**3)[..., None] * diff
