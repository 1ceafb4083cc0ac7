"""Line-of-sight air-to-ground channels for a vertical uniform linear array.

All functions broadcast over leading axes: positions may be ``(2,)`` or
``(..., 2)`` arrays, and the antenna axis is always last.
"""

from __future__ import annotations

import numpy as np


def distance(altitude, u, v):
    """3-D distance between a UAV at horizontal position ``u`` and altitude
    ``altitude`` and a ground node at ``v``."""
    diff = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    return np.sqrt(altitude**2 + np.sum(diff**2, axis=-1))


def aod_cos(altitude, u, v):
    """Cosine of the angle of departure; 1 when the UAV is overhead."""
    return altitude / distance(altitude, u, v)


def steering_vector(spacing_ratio: float, m: int, cos_theta):
    """Entries ``exp(j 2 pi (d/lambda) k cos(theta))`` for ``k = 0..m-1``."""
    k = np.arange(m)
    phase = 2.0 * np.pi * spacing_ratio * np.multiply.outer(np.asarray(cos_theta, dtype=float), k)
    return np.exp(1j * phase)


def channel_from_geometry(pathloss_ref, altitude, spacing_ratio, m, u, v):
    d = distance(altitude, u, v)
    a = steering_vector(spacing_ratio, m, altitude / d)
    return np.sqrt(pathloss_ref / d**2)[..., None] * a


def channel(scenario, uav: str, node_pos, uav_pos):
    """LoS channel vector from UAV ``"alice"``/``"jack"`` to a ground node."""
    altitude = _altitude(scenario, uav)
    return channel_from_geometry(scenario.pathloss_ref, altitude, scenario.antenna_spacing_ratio,
                                 scenario.antennas, uav_pos, node_pos)


def channel_matrix(h):
    """Rank-one Hermitian outer product ``h h^H``."""
    h = np.asarray(h)
    return h[..., :, None] * np.conj(h[..., None, :])


def steering_matrix(spacing_ratio, m, altitude, u, v):
    """``a a^H`` for the steering vector towards ``v``."""
    return channel_matrix(steering_vector(spacing_ratio, m, aod_cos(altitude, u, v)))


def _altitude(scenario, uav: str) -> float:
    if uav in ("alice", "a"):
        return scenario.altitude_alice
    if uav in ("jack", "j"):
        return scenario.altitude_jack
    raise ValueError(f"unknown UAV {uav!r}")


def quad_form(h, W):
    """Real part of ``h^H W h`` for Hermitian ``W`` (broadcasting)."""
    return np.real(np.einsum("...i,...ij,...j->...", np.conj(h), W, h))


def gain(h, w):
    """``|h^H w|^2``."""
    return np.abs(np.einsum("...i,...i->...", np.conj(h), w)) ** 2
