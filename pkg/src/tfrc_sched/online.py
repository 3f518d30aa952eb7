"""Causal slot-by-slot schedulers: MSR, MEC, EDF and L-MaxWeight.

Every slot each channel goes, in index order, to the active request with the
highest finite priority; grants are debited before the next channel is
scored, so one request may hold several channels in a slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, expected_rate_bits_per_slot
from .model import Algorithm, RateTable, Request, RunMetrics, Schedule, SimConfig, finalize

MEC_BETA = 1.0
EPS = 1e-6


@dataclass
class ActiveRequest:
    id: int
    user: int
    size_bits: int
    unit_reward: float
    deadline_slot: int
    remaining_bits: int

    @classmethod
    def from_request(cls, req: Request) -> "ActiveRequest":
        return cls(req.id, req.user, req.size_bits, req.unit_reward, req.deadline_slot,
                   req.size_bits - req.delivered_bits)


@dataclass
class OnlineState:
    slot: int
    expected_rate: float
    num_channels: int
    active: dict[int, ActiveRequest] = field(default_factory=dict)
    beta: float = MEC_BETA
    eps: float = EPS

    def evict_expired(self):
        for rid in [rid for rid, a in self.active.items()
                    if a.deadline_slot <= self.slot or a.remaining_bits <= 0]:
            del self.active[rid]


def priority(policy: Algorithm, req: ActiveRequest, rate: float, state: OnlineState) -> float:
    """Score of giving one channel to ``req`` at the current slot (higher wins)."""
    slack = req.deadline_slot - state.slot
    work = req.remaining_bits / state.expected_rate  # slots at the expected rate
    if work > slack * state.num_channels:
        return -math.inf
    if policy is Algorithm.MSR:
        return (req.unit_reward * req.size_bits / work) * (rate / state.expected_rate)
    if policy is Algorithm.MEC:
        urgency = work / max(slack, state.eps)
        return req.unit_reward * rate * math.exp(state.beta * urgency)
    if policy is Algorithm.EDF:
        return -float(req.deadline_slot)
    if policy is Algorithm.LMAXWEIGHT:
        return float(req.remaining_bits) * rate
    raise ValueError(f"{policy} is not an online policy")


def schedule_slot(state: OnlineState, rates: np.ndarray, policy: Algorithm
                  ) -> tuple[list[int], dict[int, int]]:
    """Assign every channel for the current slot.

    ``rates[user, channel]`` are this slot's achievable bits.  Returns the
    per-channel request id (-1 idle) and bits delivered per request.
    """
    assignment = [-1] * state.num_channels
    delivered: dict[int, int] = {}
    for c in range(state.num_channels):
        best = None
        best_key = None
        for rid in sorted(state.active):
            req = state.active[rid]
            if req.remaining_bits <= 0:
                continue
            r = float(rates[req.user, c])
            score = priority(policy, req, r, state)
            if score == -math.inf:
                continue
            tie = r if policy is Algorithm.EDF else 0.0
            key = (score, tie, -rid)
            if best_key is None or key > best_key:
                best, best_key = req, key
        if best is None:
            continue
        assignment[c] = best.id
        got = min(best.remaining_bits, int(rates[best.user, c]))
        best.remaining_bits -= got
        delivered[best.id] = delivered.get(best.id, 0) + got
    return assignment, delivered


def run_online(cfg: SimConfig, requests: list[Request], rate_table: RateTable,
               policy: Algorithm, expected_rate: float | None = None
               ) -> tuple[Schedule, RunMetrics]:
    policy = Algorithm(policy)
    requests = [r.copy() for r in requests]
    for r in requests:
        r.delivered_bits = 0
    if expected_rate is None:
        expected_rate = expected_rate_bits_per_slot(ChannelParams.from_config(cfg))
    horizon = rate_table.num_slots
    schedule = Schedule.empty(rate_table.num_channels, horizon)
    arrivals: dict[int, list[Request]] = {}
    for r in requests:
        arrivals.setdefault(r.arrival_slot, []).append(r)

    state = OnlineState(0, expected_rate, rate_table.num_channels)
    for t in range(horizon):
        state.slot = t
        for r in arrivals.get(t, ()):
            if r.deadline_slot > t:
                state.active[r.id] = ActiveRequest.from_request(r)
        state.evict_expired()
        if not state.active:
            continue
        assignment, delivered = schedule_slot(state, rate_table.bits[:, :, t], policy)
        schedule.assignment[:, t] = assignment
        for rid, bits in delivered.items():
            schedule.delivered[rid] = schedule.delivered.get(rid, 0) + bits
    return schedule, finalize(schedule, requests)
