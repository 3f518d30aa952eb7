"""Random instance builders shared by the offline tests."""

import numpy as np

from tfrc_sched import Request
from tfrc_sched.offline import MilpInstance, PenaltyMode, expand_to_slots


def random_tiny_instance(rng, max_k=3, max_c=2, max_b=4) -> MilpInstance:
    K = int(rng.integers(1, max_k + 1))
    C = int(rng.integers(1, max_c + 1))
    B = int(rng.integers(1, max_b + 1))
    requests = []
    window = np.zeros((K, B), dtype=bool)
    for k in range(K):
        a = int(rng.integers(0, B))
        d = int(rng.integers(a + 1, B + 1))
        window[k, a:d] = True
        requests.append(Request(k, int(rng.integers(0, 2)), a, int(rng.integers(5, 41)), d - a,
                                float(rng.integers(1, 11)), view_start_slot=a, deadline_slot=d))
    rates = rng.integers(0, 16, size=(K, C, B)).astype(float) * window[:, None, :]
    positive = rates[rates > 0]
    expected = float(positive.mean()) if positive.size else 1.0
    return MilpInstance(requests, rates, window, PenaltyMode.NEW, 1, expected)


def check_feasible(instance: MilpInstance, owner: np.ndarray):
    """Slot-level schedule respects windows, sizes and single ownership."""
    sched = expand_to_slots(instance, owner)
    by_id = {r.id: (k, r) for k, r in enumerate(instance.requests)}
    got = {}
    C, T = sched.assignment.shape
    for c in range(C):
        for t in range(T):
            rid = int(sched.assignment[c, t])
            if rid < 0:
                continue
            k, r = by_id[rid]
            assert r.arrival_slot <= t < r.deadline_slot, (rid, c, t)
            got[rid] = got.get(rid, 0) + instance.rates[k, c, t]
    for rid, bits in sched.delivered.items():
        assert bits <= by_id[rid][1].size_bits
        assert bits <= got.get(rid, 0)
    return sched


def realized_reward(instance: MilpInstance, owner: np.ndarray) -> float:
    got = instance.delivered(owner)
    return float(instance.values[got >= instance.sizes].sum())
