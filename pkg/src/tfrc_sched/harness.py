"""Replicated experiments, confidence intervals and the figure scenario catalog."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams, expected_rate_bits_per_slot, sample_rate_table
from .model import (
    MBIT,
    OFFLINE_ALGORITHMS,
    ONLINE_ALGORITHMS,
    Algorithm,
    RunMetrics,
    SimConfig,
    validate_config,
)
from .offline import solve_offline
from .online import run_online
from .traffic import behavior_trace, compute_deadlines, generate_requests, horizon_slots

log = logging.getLogger(__name__)

Z_95 = 1.96
THREADS_ENV = "TFRC_SCHED_THREADS"


class InsufficientSamples(ValueError):
    pass


class ZeroBaseline(ValueError):
    pass


def confidence_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Mean and normal-approximation half-width (z = 1.96 at 95%)."""
    if level != 0.95:
        raise ValueError("only the 95% level is supported")
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise InsufficientSamples("insufficient_samples")
    return float(x.mean()), float(Z_95 * x.std(ddof=1) / math.sqrt(x.size))


def substreams(seed: int, run_index: int) -> tuple[np.random.Generator, ...]:
    """Independent (arrivals, attributes, channel) generators for one run."""
    return tuple(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run_index, i)))
                 for i in range(3))


def simulate(cfg: SimConfig, seed: int, run_index: int, algorithms, tfrc_modes=(True, False)
             ) -> dict[tuple[Algorithm, bool], RunMetrics]:
    """One replication evaluated under several algorithms and TFRC modes.

    All of them see the same arrivals, attributes and rate table; TFRC on and
    off differ only in the deadlines.
    """
    arr, attr, chan = substreams(seed, run_index)
    requests = generate_requests(cfg, arr, attr)
    trace = behavior_trace(requests)
    horizon = horizon_slots(cfg, requests, trace)
    table = sample_rate_table(cfg, chan, horizon)
    r_bar = expected_rate_bits_per_slot(ChannelParams.from_config(cfg))
    out = {}
    for tfrc in tfrc_modes:
        reqs = compute_deadlines(requests, trace, tfrc)
        mode_cfg = cfg.replace(tfrc_enabled=tfrc)
        for alg in algorithms:
            alg = Algorithm(alg)
            if alg in OFFLINE_ALGORITHMS:
                _, metrics = solve_offline(reqs, table, mode_cfg, alg)
            else:
                _, metrics = run_online(mode_cfg, reqs, table, alg, r_bar)
            out[alg, tfrc] = metrics
    return out


def run_replication(cfg: SimConfig, seed: int, run_index: int) -> RunMetrics:
    validate_config(cfg)
    return simulate(cfg, seed, run_index, [cfg.algorithm], [cfg.tfrc_enabled])[
        cfg.algorithm, cfg.tfrc_enabled]


# -- scenarios ---------------------------------------------------------------

OFFLINE_SET = (Algorithm.DSFRB, Algorithm.DSF_NP, Algorithm.SF_OP)
ONLINE_SET = ONLINE_ALGORITHMS
BASELINE = (Algorithm.DSFRB, True)

SWEEP_PARAMS = ("lambda", "avg_size_mbit", "mean_lifetime_s", "mean_snr_db")
AVG_SIZE_Q_MIN_MBIT = 10


def apply_sweep(cfg: SimConfig, param: str, x: float) -> SimConfig:
    if param == "lambda":
        return cfg.replace(arrival_rate_per_user=x)
    if param == "avg_size_mbit":
        q_min = AVG_SIZE_Q_MIN_MBIT * MBIT
        return cfg.replace(q_min_bits=q_min, q_max_bits=int(round(2 * x * MBIT)) - q_min)
    if param == "mean_lifetime_s":
        return cfg.replace(mean_lifetime_s=x)
    if param == "mean_snr_db":
        return cfg.replace(mean_snr_db=x)
    raise ValueError(f"unknown sweep parameter {param!r}")


@dataclass
class Scenario:
    id: str
    param: str
    points: tuple[float, ...]
    algorithms: tuple[Algorithm, ...]
    base: SimConfig = field(default_factory=SimConfig)
    tfrc_modes: tuple[bool, ...] = (True, False)
    runs: int = 200
    desk_scale: bool = False
    online: bool = False
    # algorithms evaluated with TFRC on only (the normalization baseline)
    baseline_only: tuple[Algorithm, ...] = ()

    def __post_init__(self):
        self.points = tuple(float(p) for p in self.points)
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ValueError("sweep points must be strictly increasing")
        if self.runs < 2:
            raise ValueError("runs must be at least 2")
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}")

    def combos(self) -> list[tuple[Algorithm, bool]]:
        out = [(a, t) for a in self.algorithms for t in self.tfrc_modes]
        out += [(a, True) for a in self.baseline_only if (a, True) not in out]
        return out


_FIGURES = {
    # kind: (sweep parameter, points); everything else comes from the base config
    "lambda": ("lambda", [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1]),
    "size": ("avg_size_mbit", [15, 20, 25, 30, 35, 40]),
    "lifetime": ("mean_lifetime_s", [10, 20, 30, 40, 50, 60, 70, 80]),
    "snr": ("mean_snr_db", [5, 7.5, 10, 12.5, 15, 17.5, 20]),
}
FIGURE_IDS = {
    "fig1": ("lambda", False), "fig2": ("size", False),
    "fig3": ("lifetime", False), "fig4": ("snr", False),
    "fig5": ("lambda", True), "fig6": ("size", True),
    "fig7": ("lifetime", True), "fig8": ("snr", True),
}

DESK = dict(num_channels=8, arrival_window_slots=300, offline_block_slots=10)
DESK_RUNS = 20


def desk_config(cfg: SimConfig | None = None) -> SimConfig:
    return (cfg or SimConfig()).replace(**DESK)


def figure_scenario(scenario_id: str, desk: bool = False, runs: int | None = None,
                    base: SimConfig | None = None, points=None) -> Scenario:
    if scenario_id not in FIGURE_IDS:
        raise ValueError(f"unknown scenario {scenario_id!r}")
    kind, online = FIGURE_IDS[scenario_id]
    param, default_points = _FIGURES[kind]
    cfg = base or SimConfig()
    if desk:
        cfg = desk_config(cfg)
    return Scenario(
        id=scenario_id,
        param=param,
        points=tuple(points or default_points),
        algorithms=ONLINE_SET if online else OFFLINE_SET,
        base=cfg,
        runs=runs or (DESK_RUNS if desk else 200),
        desk_scale=desk,
        online=online,
        baseline_only=(Algorithm.DSFRB,) if online else (),
    )


# -- sweep table -------------------------------------------------------------

@dataclass
class Row:
    scenario: str
    x_param: str
    x_value: float
    algorithm: Algorithm
    tfrc: bool
    mean_reward: float
    ci_reward: float
    mean_ratio: float
    ci_ratio: float
    runs: int
    norm_reward: float | None = None
    norm_ratio: float | None = None

    def sort_key(self):
        return (self.scenario, self.x_value, self.algorithm.value, self.tfrc)


@dataclass
class SweepTable:
    rows: list[Row] = field(default_factory=list)
    # (x, algorithm, tfrc) -> (per-run rewards, per-run ratios or None)
    samples: dict = field(default_factory=dict)

    def row(self, x: float, algorithm: Algorithm, tfrc: bool) -> Row:
        for r in self.rows:
            if r.x_value == x and r.algorithm is Algorithm(algorithm) and r.tfrc == tfrc:
                return r
        raise KeyError((x, algorithm, tfrc))

    def series(self, algorithm: Algorithm, tfrc: bool, attr: str = "mean_reward") -> list:
        rows = sorted((r for r in self.rows if r.algorithm is Algorithm(algorithm)
                       and r.tfrc == tfrc), key=lambda r: r.x_value)
        return [getattr(r, attr) for r in rows]


def _summary(samples) -> tuple[float, float]:
    samples = [s for s in samples if s is not None]
    if len(samples) >= 2:
        return confidence_interval(samples)
    if len(samples) == 1:
        return float(samples[0]), float("nan")
    return float("nan"), float("nan")


def normalize(table: SweepTable, baseline=BASELINE) -> SweepTable:
    """Divide every row's means by the baseline row's means at the same x."""
    alg, tfrc = baseline
    for x in sorted({r.x_value for r in table.rows}):
        base = table.row(x, alg, tfrc)
        if base.mean_reward == 0 or base.mean_ratio == 0:
            raise ZeroBaseline(f"zero_baseline at x={x}")
        for r in table.rows:
            if r.x_value == x:
                r.norm_reward = r.mean_reward / base.mean_reward
                r.norm_ratio = r.mean_ratio / base.mean_ratio
    return table


def _point_task(args):
    cfg, seed, run_index, combos = args
    algs = list(dict.fromkeys(a for a, _ in combos))
    modes = sorted({t for _, t in combos}, reverse=True)
    res = simulate(cfg, seed, run_index, algs, modes)
    return {k: v for k, v in res.items() if k in combos}


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, workers)


def run_scenario(scenario: Scenario, seed: int = 0, workers: int | None = None,
                 progress=None) -> SweepTable:
    """Evaluate every (x, algorithm, TFRC mode) over ``scenario.runs`` paired runs."""
    combos = scenario.combos()
    tasks = []
    for x in scenario.points:
        cfg = validate_config(apply_sweep(scenario.base, scenario.param, x))
        tasks.extend((cfg, seed, i, combos) for i in range(scenario.runs))

    n = worker_count(workers)
    if n == 1:
        results = map(_point_task, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=n)
        results = pool.map(_point_task, tasks, chunksize=1)

    table = SweepTable()
    try:
        it = iter(results)
        for x in scenario.points:
            per_run = [next(it) for _ in range(scenario.runs)]
            for alg, tfrc in combos:
                rewards = [m[alg, tfrc].total_reward / MBIT for m in per_run]
                ratios = [m[alg, tfrc].complete_ratio for m in per_run]
                table.samples[x, alg, tfrc] = (rewards, ratios)
                mr, cr = _summary(rewards)
                mq, cq = _summary(ratios)
                table.rows.append(Row(scenario.id, scenario.param, x, alg, tfrc,
                                      mr, cr, mq, cq, scenario.runs))
            if progress is not None:
                print(f"{scenario.id}: {scenario.param}={x:g} done", file=progress)
    finally:
        if n > 1:
            pool.shutdown()

    table.rows.sort(key=Row.sort_key)
    if scenario.online:
        try:
            normalize(table)
        except ZeroBaseline as exc:
            log.warning("normalization skipped: %s", exc)
    return table


def paired_difference(table: SweepTable, x: float, a, b) -> tuple[float, float]:
    """Mean and 95% half-width of per-run reward differences ``a - b``.

    ``a`` and ``b`` are (algorithm, tfrc) pairs.
    """
    ra, _ = table.samples[x, Algorithm(a[0]), a[1]]
    rb, _ = table.samples[x, Algorithm(b[0]), b[1]]
    return confidence_interval(np.subtract(ra, rb))
