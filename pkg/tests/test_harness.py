import math

import pytest
from hypothesis import given, strategies as st

from tfrc_sched import Algorithm, SimConfig
from tfrc_sched.harness import (
    BASELINE,
    InsufficientSamples,
    Row,
    Scenario,
    SweepTable,
    ZeroBaseline,
    apply_sweep,
    confidence_interval,
    desk_config,
    figure_scenario,
    normalize,
    run_replication,
    run_scenario,
    simulate,
)
from tfrc_sched.model import MBIT


def test_ci_examples():
    assert confidence_interval([1, 1, 1]) == (1.0, 0.0)
    mean, half = confidence_interval([0, 2])
    assert mean == 1.0 and half == pytest.approx(1.96)
    with pytest.raises(InsufficientSamples, match="insufficient_samples"):
        confidence_interval([5])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40), st.randoms())
def test_ci_permutation_invariant(xs, rnd):
    shuffled = xs[:]
    rnd.shuffle(shuffled)
    a, b = confidence_interval(xs), confidence_interval(shuffled)
    assert a[0] == pytest.approx(b[0], abs=1e-6) and a[1] == pytest.approx(b[1], abs=1e-6)
    assert a[1] >= 0


def row(alg, tfrc, reward, ratio, x=0.1):
    return Row("s", "lambda", x, alg, tfrc, reward, 0.0, ratio, 0.0, 2)


def test_normalize_examples():
    t = SweepTable([row(Algorithm.DSFRB, True, 100.0, 0.5), row(Algorithm.MSR, True, 80.0, 0.25)])
    normalize(t, BASELINE)
    assert t.row(0.1, Algorithm.MSR, True).norm_reward == pytest.approx(0.8)
    assert t.row(0.1, Algorithm.MSR, True).norm_ratio == pytest.approx(0.5)
    assert t.row(0.1, Algorithm.DSFRB, True).norm_reward == 1.0
    with pytest.raises(ZeroBaseline, match="zero_baseline"):
        normalize(SweepTable([row(Algorithm.DSFRB, True, 0.0, 0.0)]))


def test_zero_rate_replication():
    m = run_replication(desk_config().replace(arrival_rate_per_user=0.0), 1, 0)
    assert m.total_reward == 0 and m.complete_ratio is None and m.arrived_count == 0


def test_replication_deterministic():
    cfg = desk_config().replace(arrival_rate_per_user=0.05, algorithm=Algorithm.MEC)
    assert run_replication(cfg, 3, 1) == run_replication(cfg, 3, 1)


def test_paired_inputs_across_algorithms():
    cfg = desk_config().replace(arrival_rate_per_user=0.06)
    out = simulate(cfg, 2, 0, [Algorithm.DSFRB, Algorithm.EDF, Algorithm.MSR], (True, False))
    arrived = {m.arrived_count for m in out.values()}
    assert len(arrived) == 1


def test_size_sweep_mapping():
    cfg = apply_sweep(SimConfig(), "avg_size_mbit", 25)
    assert cfg.q_min_bits == 10 * MBIT and cfg.q_max_bits == 40 * MBIT
    assert (cfg.q_min_bits + cfg.q_max_bits) / 2 == 25 * MBIT


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario("x", "lambda", (0.2, 0.1), (Algorithm.EDF,))
    with pytest.raises(ValueError):
        Scenario("x", "lambda", (0.1,), (Algorithm.EDF,), runs=1)
    with pytest.raises(ValueError):
        Scenario("x", "bogus", (0.1,), (Algorithm.EDF,))


def test_figure_catalog():
    fig1 = figure_scenario("fig1", desk=True)
    assert fig1.param == "lambda" and fig1.points[0] == 0.01 and fig1.points[-1] == 0.1
    assert set(fig1.combos()) == {(a, t) for a in (Algorithm.DSFRB, Algorithm.DSF_NP,
                                                   Algorithm.SF_OP) for t in (True, False)}
    assert fig1.runs == 20 and fig1.base.num_channels == 8
    assert fig1.base.arrival_window_slots * fig1.base.slot_duration_s == pytest.approx(30.0)
    assert {5, 10, 15, 20} <= set(figure_scenario("fig4", desk=True).points)
    assert figure_scenario("fig3").points == tuple(float(p) for p in range(10, 81, 10))
    assert figure_scenario("fig6").points[0] == 15 and figure_scenario("fig6").points[-1] == 40
    fig5 = figure_scenario("fig5", desk=True)
    assert (Algorithm.DSFRB, True) in fig5.combos() and (Algorithm.DSFRB, False) not in fig5.combos()
    assert len(fig5.combos()) == 9
    with pytest.raises(ValueError):
        figure_scenario("fig9")


def test_custom_scenario_two_runs():
    sc = Scenario("custom", "lambda", (0.05,), (Algorithm.EDF,), desk_config(), (True,), runs=2)
    table = run_scenario(sc, seed=1, workers=1)
    assert len(table.rows) == 1
    assert table.rows[0].runs == 2 and len(table.samples[0.05, Algorithm.EDF, True][0]) == 2
    assert table.rows[0].norm_reward is None


def test_run_scenario_deterministic_and_worker_independent():
    sc = Scenario("c", "mean_snr_db", (5.0, 15.0), (Algorithm.MSR, Algorithm.EDF),
                  desk_config().replace(arrival_window_slots=100), runs=3, online=True,
                  baseline_only=(Algorithm.DSFRB,))
    a = run_scenario(sc, seed=9, workers=1)
    b = run_scenario(sc, seed=9, workers=2)
    assert a.rows == b.rows
    for x in sc.points:
        base = a.row(x, Algorithm.DSFRB, True)
        if base.mean_reward > 0:
            assert base.norm_reward == 1.0 and base.norm_ratio == 1.0


def test_zero_baseline_leaves_cells_empty():
    sc = Scenario("c", "lambda", (0.0,), (Algorithm.EDF,), desk_config(), (True,), runs=2,
                  online=True, baseline_only=(Algorithm.DSFRB,))
    table = run_scenario(sc, seed=0, workers=1)
    assert all(r.norm_reward is None for r in table.rows)
    assert all(math.isnan(r.mean_ratio) for r in table.rows)
    assert all(r.mean_reward == 0 for r in table.rows)
