"""Greedy choice of the sensing (CCS) slots along a fixed trajectory.

Each target receives ``N_t`` slots; targets are served in index order and
take the remaining slots with the smallest weighted distance, ties going to
the earlier slot. Slot numbers are 1-based throughout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .channel import distance


class ScheduleError(ValueError):
    pass


@dataclass
class SensingSchedule:
    slots: list  # per target, sorted 1-based slot numbers
    distances: np.ndarray  # (Q, N) weighted distance table

    @property
    def num_targets(self) -> int:
        return len(self.slots)

    def target_of(self) -> dict:
        """Map slot number -> target index."""
        return {n: q for q, ns in enumerate(self.slots) for n in ns}

    def total(self) -> float:
        return float(sum(self.distances[q, n - 1] for q, ns in enumerate(self.slots) for n in ns))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["target", "slot", "weighted_distance"])
        for q, ns in enumerate(self.slots):
            for n in ns:
                w.writerow([q + 1, n, repr(float(self.distances[q, n - 1]))])
        return out.getvalue()


def weighted_distance(u_a, u_j, v_b, s_q, A_a, A_j, alpha1, alpha2):
    """``alpha1 d_ab + alpha2 (d_aq + d_jq)`` with 3-D distances."""
    return alpha1 * distance(A_a, u_a, v_b) + alpha2 * (distance(A_a, u_a, s_q) + distance(A_j, u_j, s_q))


def distance_table(s, plan) -> np.ndarray:
    """``(Q, N)`` weighted distances, slot ``n`` using position ``n``."""
    a1, a2 = s.sched_weights
    u_a, u_j = plan.alice[1:], plan.jack[1:]
    return np.stack([weighted_distance(u_a, u_j, s.bob, q, s.altitude_alice, s.altitude_jack, a1, a2)
                     for q in s.targets])


def greedy_from_table(table, per_target: int) -> list:
    """Greedy exclusion over a ``(Q, N)`` table; returns sorted 1-based slots."""
    table = np.asarray(table, dtype=float)
    q_count, n = table.shape
    if per_target * q_count > n:
        raise ScheduleError(f"need {per_target * q_count} sensing slots but only {n} exist")
    free = np.ones(n, dtype=bool)
    chosen = []
    for q in range(q_count):
        cand = np.flatnonzero(free)
        # stable sort keeps the smaller slot first among equal distances
        order = cand[np.argsort(table[q, cand], kind="stable")][:per_target]
        free[order] = False
        chosen.append(sorted(int(k) + 1 for k in order))
    return chosen


def greedy_schedule(plan, s) -> SensingSchedule:
    table = distance_table(s, plan)
    return SensingSchedule(greedy_from_table(table, s.slots_per_target), table)
