"""Shared domain types for the downlink scheduling simulator.

Sizes are integer bits and rates are integer bits per slot throughout.
Slot indices start at 0; deadlines are exclusive upper bounds.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np

MBIT = 1_000_000


class Algorithm(str, enum.Enum):
    DSFRB = "DSFRB"
    DSF_NP = "DSF_NP"
    SF_OP = "SF_OP"
    MSR = "MSR"
    MEC = "MEC"
    EDF = "EDF"
    LMAXWEIGHT = "LMAXWEIGHT"

    @property
    def is_offline(self) -> bool:
        return self in OFFLINE_ALGORITHMS

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        key = text.strip().upper().replace("-", "_")
        if key == "L_MAXWEIGHT":
            key = "LMAXWEIGHT"
        return cls(key)


OFFLINE_ALGORITHMS = frozenset({Algorithm.DSFRB, Algorithm.DSF_NP, Algorithm.SF_OP})
ONLINE_ALGORITHMS = (Algorithm.MSR, Algorithm.MEC, Algorithm.EDF, Algorithm.LMAXWEIGHT)


class ConfigError(ValueError):
    """Raised with every violated configuration constraint."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(", ".join(self.errors))


@dataclass(frozen=True)
class SimConfig:
    num_users: int = 5
    num_channels: int = 32
    channel_bandwidth_hz: float = 15_000.0
    slot_duration_s: float = 0.1
    arrival_rate_per_user: float = 0.075
    q_min_bits: int = 15 * MBIT
    q_max_bits: int = 20 * MBIT
    mean_lifetime_s: float = 30.0
    reward_min: float = 1.0
    reward_max: float = 10.0
    mean_snr_db: float = 10.0
    arrival_window_slots: int = 600
    tfrc_enabled: bool = True
    algorithm: Algorithm = Algorithm.DSFRB
    seed: int = 0
    offline_block_slots: int = 10
    deflation_load_factor: float = 1.0
    fixing_threshold: float = 0.9

    @property
    def mean_snr_linear(self) -> float:
        return 10.0 ** (self.mean_snr_db / 10.0)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def validate_config(cfg: SimConfig) -> SimConfig:
    """Return ``cfg`` unchanged, or raise ConfigError naming every violation."""
    errors = []
    if cfg.num_users < 1:
        errors.append("num_users_zero")
    if cfg.num_channels < 1:
        errors.append("num_channels_zero")
    if not cfg.channel_bandwidth_hz > 0:
        errors.append("bandwidth_not_positive")
    if not cfg.slot_duration_s > 0:
        errors.append("slot_duration_not_positive")
    if cfg.q_min_bits <= 0:
        errors.append("q_min_not_positive")
    if cfg.q_min_bits > cfg.q_max_bits:
        errors.append("q_min_exceeds_q_max")
    if not cfg.mean_lifetime_s > 0:
        errors.append("mean_lifetime_not_positive")
    if cfg.reward_min > cfg.reward_max:
        errors.append("reward_min_exceeds_reward_max")
    if not cfg.arrival_rate_per_user >= 0:
        errors.append("arrival_rate_negative")
    if not math.isfinite(cfg.mean_snr_db):
        errors.append("mean_snr_not_finite")
    if cfg.arrival_window_slots < 0:
        errors.append("arrival_window_negative")
    if cfg.offline_block_slots < 1:
        errors.append("block_slots_zero")
    elif cfg.arrival_window_slots % cfg.offline_block_slots:
        errors.append("block_slots_not_dividing_window")
    if not 0 < cfg.fixing_threshold <= 1:
        errors.append("fixing_threshold_out_of_range")
    if not cfg.deflation_load_factor > 0:
        errors.append("deflation_load_factor_not_positive")
    if not isinstance(cfg.algorithm, Algorithm):
        errors.append("unknown_algorithm")
    if errors:
        raise ConfigError(errors)
    return cfg


def mbit_to_bits(mbit: float) -> int:
    return int(round(mbit * MBIT))


def bits_to_mbit(bits: int) -> float:
    return bits / MBIT


@dataclass
class Request:
    id: int
    user: int
    arrival_slot: int
    size_bits: int
    lifetime_slots: int
    unit_reward: float
    view_start_slot: int | None = None
    deadline_slot: int | None = None
    delivered_bits: int = 0
    completed: bool = False

    @property
    def value(self) -> float:
        """Reward earned if the request completes (A_k * Q_k, bit units)."""
        return self.unit_reward * self.size_bits

    def copy(self) -> "Request":
        return dataclasses.replace(self)


@dataclass(frozen=True)
class RateTable:
    """Achievable bits per slot, indexed ``[user, channel, slot]``."""

    bits: np.ndarray

    @property
    def num_users(self) -> int:
        return self.bits.shape[0]

    @property
    def num_channels(self) -> int:
        return self.bits.shape[1]

    @property
    def num_slots(self) -> int:
        return self.bits.shape[2]


@dataclass
class Schedule:
    """(channel, slot) -> request assignment; -1 marks an idle resource."""

    assignment: np.ndarray
    delivered: dict[int, int] = field(default_factory=dict)
    reward_total: float = 0.0
    complete_count: int = 0

    @classmethod
    def empty(cls, num_channels: int, num_slots: int) -> "Schedule":
        return cls(np.full((num_channels, num_slots), -1, dtype=np.int64))


@dataclass(frozen=True)
class RunMetrics:
    total_reward: float
    complete_ratio: float | None
    arrived_count: int
    complete_count: int = 0


def finalize(schedule: Schedule, requests) -> RunMetrics:
    """Apply completion accounting: only fully delivered requests earn reward."""
    reward = 0.0
    done = 0
    for req in requests:
        got = schedule.delivered.get(req.id, 0)
        req.delivered_bits = got
        req.completed = got >= req.size_bits
        if req.completed:
            reward += req.value
            done += 1
    schedule.reward_total = reward
    schedule.complete_count = done
    n = len(requests)
    return RunMetrics(
        total_reward=reward,
        complete_ratio=done / n if n else None,
        arrived_count=n,
        complete_count=done,
    )
