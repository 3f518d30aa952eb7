"""Request arrivals, user viewing (focus) behaviour and deadlines."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from .model import Request, SimConfig

# Arrivals are thinned from a master Poisson stream at this per-user rate so
# that any load below it yields a subset of the arrivals of a higher load.
MASTER_RATE_PER_USER = 0.1


def generate_requests(cfg: SimConfig, arrival_stream: np.random.Generator,
                      attribute_stream: np.random.Generator | None = None,
                      master_rate: float | None = None) -> list[Request]:
    """Poisson arrivals per user with uniform size/reward and exponential lifetime.

    Deadlines are left unset; see :func:`compute_deadlines`.
    """
    if attribute_stream is None:
        attribute_stream = arrival_stream
    lam = cfg.arrival_rate_per_user
    lam_master = max(lam, master_rate or MASTER_RATE_PER_USER)
    window_s = cfg.arrival_window_slots * cfg.slot_duration_s

    raw = []
    for user in range(cfg.num_users):
        times = _poisson_times(arrival_stream, lam_master, window_s)
        keep = arrival_stream.random(len(times)) * lam_master < lam
        size_u = attribute_stream.random(len(times))
        life_e = attribute_stream.standard_exponential(len(times))
        reward_u = attribute_stream.random(len(times))
        for i in np.flatnonzero(keep):
            raw.append((times[i], user, size_u[i], life_e[i], reward_u[i]))

    raw.sort(key=lambda r: (int(r[0] / cfg.slot_duration_s), r[1], r[0]))
    requests = []
    for rid, (t, user, su, le, ru) in enumerate(raw):
        size = int(round(cfg.q_min_bits + su * (cfg.q_max_bits - cfg.q_min_bits)))
        lifetime_s = cfg.mean_lifetime_s * le
        requests.append(Request(
            id=rid,
            user=user,
            arrival_slot=int(t / cfg.slot_duration_s),
            size_bits=size,
            lifetime_slots=lifetime_to_slots(lifetime_s, cfg.slot_duration_s),
            unit_reward=cfg.reward_min + ru * (cfg.reward_max - cfg.reward_min),
        ))
    return requests


def _poisson_times(stream: np.random.Generator, rate: float, window_s: float) -> np.ndarray:
    if rate <= 0 or window_s <= 0:
        return np.empty(0)
    times = []
    t = 0.0
    while True:
        t += stream.exponential(1.0 / rate)
        if t >= window_s:
            break
        times.append(t)
    return np.asarray(times)


def lifetime_to_slots(lifetime_s: float, slot_duration_s: float) -> int:
    return max(1, int(round(lifetime_s / slot_duration_s)))


def compute_viewing_schedule(requests: list[Request]) -> list[tuple[int, int, int]]:
    """FIFO single-focus viewing for one user's requests (sorted by arrival).

    Returns (request id, view_start_slot, view_end_slot) per request.
    """
    trace = []
    prev_end = None
    for req in requests:
        start = req.arrival_slot if prev_end is None else max(req.arrival_slot, prev_end)
        end = start + req.lifetime_slots
        trace.append((req.id, start, end))
        prev_end = end
    return trace


def behavior_trace(requests: list[Request]) -> dict[int, list[tuple[int, int, int]]]:
    by_user = defaultdict(list)
    for req in sorted(requests, key=lambda r: (r.arrival_slot, r.id)):
        by_user[req.user].append(req)
    return {u: compute_viewing_schedule(reqs) for u, reqs in sorted(by_user.items())}


def compute_deadlines(requests: list[Request], trace, tfrc_enabled: bool) -> list[Request]:
    """Copies of ``requests`` with view start and deadline filled in.

    With TFRC the lifetime clock starts when the user focuses on the content;
    without it, at arrival.
    """
    view_start = {rid: start for entries in trace.values() for rid, start, _ in entries}
    out = []
    for req in requests:
        r = req.copy()
        r.view_start_slot = view_start[r.id]
        base = r.view_start_slot if tfrc_enabled else r.arrival_slot
        r.deadline_slot = base + r.lifetime_slots
        out.append(r)
    return out


def horizon_slots(cfg: SimConfig, requests: list[Request], trace=None) -> int:
    """Arrival window plus a drain period up to the latest TFRC deadline.

    The TFRC deadline dominates the plain one, so both modes share a horizon.
    Rounded up to whole offline blocks.
    """
    if trace is None:
        trace = behavior_trace(requests)
    last = max((end for entries in trace.values() for _, _, end in entries), default=0)
    h = max(cfg.arrival_window_slots, last, 1)
    g = cfg.offline_block_slots
    return -(-h // g) * g
