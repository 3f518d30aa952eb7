"""Rayleigh block fading and the SNR -> bits-per-slot mapping."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.laguerre import laggauss

from .model import RateTable, SimConfig

QUADRATURE_NODES = 64


@dataclass(frozen=True)
class ChannelParams:
    mean_snr_linear: float
    bandwidth_hz: float
    slot_duration_s: float

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "ChannelParams":
        return cls(cfg.mean_snr_linear, cfg.channel_bandwidth_hz, cfg.slot_duration_s)


def rate_bits_per_slot(snr_linear, bandwidth_hz: float, slot_duration_s: float):
    """Shannon rate over one slot, floored to whole bits.

    Accepts a scalar or an array of SNRs; returns int / int64 array.
    """
    snr = np.asarray(snr_linear, dtype=float)
    if np.any(snr < 0) or np.any(np.isnan(snr)):
        raise ValueError("invalid_snr")
    bits = np.floor(bandwidth_hz * slot_duration_s * np.log2(1.0 + snr) + 1e-9)
    bits = bits.astype(np.int64)
    return int(bits) if bits.ndim == 0 else bits


def sample_fading(stream: np.random.Generator, num_users: int, num_channels: int,
                  num_slots: int) -> np.ndarray:
    """Unit-mean exponential power gains, shape (users, channels, slots).

    Draws are made slot-major so a longer horizon extends, rather than
    reshuffles, a shorter one.
    """
    g = stream.standard_exponential((num_slots, num_users, num_channels))
    return np.ascontiguousarray(g.transpose(1, 2, 0))


def sample_rate_table(cfg: SimConfig, stream: np.random.Generator,
                      num_slots: int) -> RateTable:
    gains = sample_fading(stream, cfg.num_users, cfg.num_channels, num_slots)
    return rate_table_from_gains(gains, cfg)


def rate_table_from_gains(gains: np.ndarray, cfg: SimConfig) -> RateTable:
    bits = rate_bits_per_slot(gains * cfg.mean_snr_linear, cfg.channel_bandwidth_hz,
                              cfg.slot_duration_s)
    return RateTable(np.asarray(bits, dtype=np.int64).reshape(gains.shape))


@functools.lru_cache(maxsize=256)
def expected_rate_bits_per_slot(params: ChannelParams) -> float:
    """E[B*T*log2(1 + g*snr)] for g ~ Exp(1), by Gauss-Laguerre quadrature."""
    if params.mean_snr_linear <= 0:
        raise ValueError("mean_snr_linear must be positive")
    nodes, weights = laggauss(QUADRATURE_NODES)
    spectral = float(np.dot(weights, np.log1p(params.mean_snr_linear * nodes))) / math.log(2)
    return params.bandwidth_hz * params.slot_duration_s * spectral
