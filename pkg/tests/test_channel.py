import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import exp1

from tfrc_sched import SimConfig
from tfrc_sched.channel import (
    ChannelParams,
    expected_rate_bits_per_slot,
    rate_bits_per_slot,
    sample_fading,
    sample_rate_table,
)


def closed_form_rate(snr_linear, bandwidth=15000.0, slot=0.1):
    # E[log2(1 + g*s)], g ~ Exp(1)  =  e^{1/s} E1(1/s) / ln 2
    return bandwidth * slot * math.exp(1 / snr_linear) * exp1(1 / snr_linear) / math.log(2)


def test_rate_examples():
    assert rate_bits_per_slot(1.0, 15000, 0.1) == 1500
    assert rate_bits_per_slot(3.0, 15000, 0.1) == 3000
    # 1500*log2(11) = 5189.147...
    assert rate_bits_per_slot(10.0, 15000, 0.1) == 5189
    assert rate_bits_per_slot(0.0, 15000, 0.1) == 0


def test_rate_rejects_negative_snr():
    with pytest.raises(ValueError, match="invalid_snr"):
        rate_bits_per_slot(-0.1, 15000, 0.1)


def test_rate_vectorised_matches_scalar():
    snr = np.array([0.0, 1.0, 3.0, 10.0, 123.4])
    out = rate_bits_per_slot(snr, 15000, 0.1)
    assert list(out) == [rate_bits_per_slot(float(s), 15000, 0.1) for s in snr]


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_rate_nondecreasing(a, b):
    lo, hi = sorted((a, b))
    assert rate_bits_per_slot(lo, 15000, 0.1) <= rate_bits_per_slot(hi, 15000, 0.1)


def test_expected_rate_at_10db():
    value = expected_rate_bits_per_slot(ChannelParams(10.0, 15000.0, 0.1))
    oracle = closed_form_rate(10.0)
    assert abs(oracle - 4359.7) <= 0.5
    assert abs(value - 4359.7) <= 0.5
    assert value == pytest.approx(oracle, rel=1e-5)


# 64 Laguerre nodes lose accuracy as the log's branch point -1/snr nears 0
@pytest.mark.parametrize("snr_db,rel", [(0.0, 1e-9), (5.0, 1e-7), (7.5, 1e-6), (12.5, 1e-4),
                                        (15.0, 2e-4), (20.0, 1e-3)])
def test_expected_rate_matches_closed_form(snr_db, rel):
    s = 10 ** (snr_db / 10)
    assert expected_rate_bits_per_slot(ChannelParams(s, 15000.0, 0.1)) == pytest.approx(
        closed_form_rate(s), rel=rel)


def test_expected_rate_limits_and_monotone():
    tiny = expected_rate_bits_per_slot(ChannelParams(1e-9, 15000.0, 0.1))
    assert tiny < 1e-3
    assert (expected_rate_bits_per_slot(ChannelParams(100.0, 15000.0, 0.1))
            > expected_rate_bits_per_slot(ChannelParams(10.0, 15000.0, 0.1)))


def test_fading_mean_snr():
    g = sample_fading(np.random.default_rng(1), 10, 10, 10_000)
    assert g.size == 10**6
    assert 9.9 <= (g * 10.0).mean() <= 10.1


def test_rate_table_deterministic_and_bounded():
    cfg = SimConfig(num_channels=4)
    a = sample_rate_table(cfg, np.random.default_rng(7), 50)
    b = sample_rate_table(cfg, np.random.default_rng(7), 50)
    assert a.bits.shape == (5, 4, 50)
    assert np.array_equal(a.bits, b.bits)
    assert a.bits.min() >= 0
    assert np.all(a.bits == np.floor(a.bits))


def test_rate_table_vanishes_at_low_snr():
    cfg = SimConfig(num_channels=4, mean_snr_db=-90.0)
    assert sample_rate_table(cfg, np.random.default_rng(0), 100).bits.max() == 0


def test_sample_mean_matches_quadrature():
    cfg = SimConfig(num_users=4, num_channels=32)
    bits = sample_rate_table(cfg, np.random.default_rng(3), 1000).bits.astype(float)
    assert bits.size >= 10**5
    se = bits.std(ddof=1) / math.sqrt(bits.size)
    # floor() shaves on average ~0.5 bit per sample
    target = expected_rate_bits_per_slot(ChannelParams.from_config(cfg)) - 0.5
    assert abs(bits.mean() - target) < 3 * se
