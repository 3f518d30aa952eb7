"""Offline (non-causal) scheduling: the request/channel/block MILP and its heuristics.

DSFRB  = deflate -> sequential fixing (completion objective) -> completion repair
DSF_NP = sequential fixing (completion objective) -> completion repair
SF_OP  = sequential fixing (partial-credit objective)

Time is aggregated into blocks of ``offline_block_slots`` slots; a block
assignment is expanded back to slots when the schedule is materialized.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .channel import ChannelParams, expected_rate_bits_per_slot
from .lp import LinearProgram, LpSolution, LpStatus, solve_lp
from .model import Algorithm, RateTable, Request, RunMetrics, Schedule, SimConfig, finalize

INTEGRAL_TOL = 1e-9
# Tiny per-assignment cost so the LP does not hand out channel-blocks that
# carry no value; objective coefficients are normalized to at most 1.
ASSIGNMENT_COST = 1e-7


class PenaltyMode(str, enum.Enum):
    NEW = "NEW"                  # all-or-nothing: reward only completed requests
    TRADITIONAL = "TRADITIONAL"  # linear partial credit for delivered data


@dataclass
class MilpInstance:
    """Block-aggregated allocation problem.

    ``rates[k, c, b]`` are the bits request k would receive from channel c
    over block b (zero outside its window).  ``x_index`` lists the
    (k, c, b) triples that carry an assignment variable.
    """

    requests: list[Request]
    rates: np.ndarray
    window: np.ndarray
    penalty_mode: PenaltyMode
    block_slots: int
    expected_block_rate: float
    slot_rates: RateTable | None = None
    x_index: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        K, C, B = self.rates.shape
        ks, bs = np.nonzero(self.window)
        triples = [(k, c, b) for k, b in zip(ks, bs) for c in range(C)]
        triples.sort()
        self.x_index = np.asarray(triples, dtype=np.int64).reshape(-1, 3)

    @property
    def num_requests(self) -> int:
        return self.rates.shape[0]

    @property
    def num_channels(self) -> int:
        return self.rates.shape[1]

    @property
    def num_blocks(self) -> int:
        return self.rates.shape[2]

    @property
    def num_x(self) -> int:
        return len(self.x_index)

    @property
    def aux_name(self) -> str:
        return "y" if self.penalty_mode is PenaltyMode.NEW else "d"

    @property
    def sizes(self) -> np.ndarray:
        return np.array([r.size_bits for r in self.requests], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.requests], dtype=float)

    def cell_of(self, i: int) -> int:
        _, c, b = self.x_index[i]
        return int(c * self.num_blocks + b)

    def subset(self, keep: list[int]) -> "MilpInstance":
        return MilpInstance(
            requests=[self.requests[k] for k in keep],
            rates=self.rates[keep],
            window=self.window[keep],
            penalty_mode=self.penalty_mode,
            block_slots=self.block_slots,
            expected_block_rate=self.expected_block_rate,
            slot_rates=self.slot_rates,
        )

    def with_mode(self, mode: PenaltyMode) -> "MilpInstance":
        return MilpInstance(self.requests, self.rates, self.window, mode, self.block_slots,
                            self.expected_block_rate, self.slot_rates)

    def to_lp(self, lb=None, ub=None, assignment_cost: float = ASSIGNMENT_COST) -> LinearProgram:
        """LP relaxation over [x..., aux...].

        aux_k is y_k in NEW mode and d_k / Q_k in TRADITIONAL mode; with that
        scaling both modes share one constraint matrix:
            aux_k - sum R x / Q_k <= 0      (demand)
            sum_k x_{k,c,b} <= 1             (one request per channel-block)
        """
        K = self.num_requests
        nx = self.num_x
        Q = self.sizes
        ks, cs, bs = self.x_index.T if nx else (np.empty(0, int),) * 3
        coef = self.rates[ks, cs, bs] / Q[ks] if nx else np.empty(0)

        rows = [ks, np.arange(K)]
        cols = [np.arange(nx), nx + np.arange(K)]
        vals = [-coef, np.ones(K)]
        cells = cs * self.num_blocks + bs
        used, cell_row = np.unique(cells, return_inverse=True)
        rows.append(K + cell_row)
        cols.append(np.arange(nx))
        vals.append(np.ones(nx))
        A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(K + len(used), nx + K))
        b = np.concatenate([np.zeros(K), np.ones(len(used))])

        scale = self.values.max() if K else 1.0
        c = np.concatenate([np.full(nx, -assignment_cost), self.values / scale])
        n = nx + K
        return LinearProgram(c, A, b,
                             np.zeros(n) if lb is None else lb,
                             np.ones(n) if ub is None else ub)

    def lp_objective(self, sol: LpSolution) -> float:
        """Relaxation objective in reward units (bits x unit reward)."""
        return float(self.values @ sol.x[self.num_x:])

    def delivered(self, owner: np.ndarray) -> np.ndarray:
        """Bits each request accrues from a cell -> request map (``-1`` = idle)."""
        flat = self.rates.reshape(self.num_requests, self.num_channels * self.num_blocks)
        out = np.zeros(self.num_requests)
        for k in range(self.num_requests):
            out[k] = flat[k, owner == k].sum()
        return out


def block_rates(requests: list[Request], rate_table: RateTable, block_slots: int,
                num_blocks: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-request bits per (channel, block) inside the request's window."""
    U, C, H = rate_table.bits.shape
    G = block_slots
    padded = np.zeros((U, C, num_blocks * G + 1), dtype=np.float64)
    padded[:, :, 1:min(H, num_blocks * G) + 1] = rate_table.bits[:, :, :num_blocks * G]
    cum = np.cumsum(padded, axis=2)
    K = len(requests)
    rates = np.zeros((K, C, num_blocks))
    window = np.zeros((K, num_blocks), dtype=bool)
    starts = np.arange(num_blocks) * G
    for k, req in enumerate(requests):
        a, d = req.arrival_slot, min(req.deadline_slot, num_blocks * G)
        if d <= a:
            continue
        lo = np.clip(starts, a, d)
        hi = np.clip(starts + G, a, d)
        rates[k] = cum[req.user][:, hi] - cum[req.user][:, lo]
        window[k] = hi > lo
    return rates, window


def build_milp(requests: list[Request], rate_table: RateTable, cfg: SimConfig,
               mode: PenaltyMode = PenaltyMode.NEW) -> MilpInstance:
    G = cfg.offline_block_slots
    num_blocks = -(-rate_table.num_slots // G)
    rates, window = block_rates(requests, rate_table, G, num_blocks)
    r_bar = expected_rate_bits_per_slot(ChannelParams.from_config(cfg))
    return MilpInstance(list(requests), rates, window, mode, G, G * r_bar, rate_table)


def deflate_demands(values, demands, capacity: float, ids=None) -> list[int]:
    """Indices dropped by value-density pruning until demand fits ``capacity``.

    Repeatedly removes the lowest value/demand request; ties go to the larger
    demand, then the smaller id.
    """
    values = list(values)
    demands = list(demands)
    ids = list(range(len(values))) if ids is None else list(ids)
    alive = set(range(len(values)))
    dropped = []
    total = sum(demands)
    while total > capacity and len(alive) > 1:
        k = min(alive, key=lambda i: (values[i] / max(demands[i], 1), -demands[i], ids[i]))
        alive.remove(k)
        dropped.append(k)
        total -= demands[k]
    return dropped


def deflate(instance: MilpInstance, cfg: SimConfig) -> tuple[MilpInstance, list[int]]:
    """Prune the instance when expected demand exceeds the channel-block supply.

    Returns the reduced instance and the dropped request ids.
    """
    if instance.num_requests == 0:
        return instance, []
    demands = [max(1, math.ceil(r.size_bits / instance.expected_block_rate))
               for r in instance.requests]
    capacity = cfg.deflation_load_factor * instance.num_channels * instance.num_blocks
    drop = deflate_demands(instance.values, demands, capacity,
                           [r.id for r in instance.requests])
    keep = [k for k in range(instance.num_requests) if k not in set(drop)]
    return instance.subset(keep), sorted(instance.requests[k].id for k in drop)


@dataclass
class FixingResult:
    owner: np.ndarray              # (channels * blocks,) request index or -1
    lp_solves: int
    first_lp: LpSolution | None
    first_lp_integral: bool


def sequential_fixing(instance: MilpInstance, threshold: float = 0.9, method: str = "highs",
                      repair: bool = True, initial: LpSolution | None = None) -> FixingResult:
    """Round the LP relaxation by repeatedly fixing near-integral assignments.

    Each round fixes every free x >= threshold whose channel-block is still
    open, plus the largest fractional x; the other variables of a taken
    channel-block are fixed to 0.  Stops when the LP solution is integral in
    x.  In NEW mode a completion repair pass follows (see
    :func:`repair_completions`).  ``initial`` is an already solved first
    relaxation of this same instance; it is reused instead of re-solved.
    """
    nx = instance.num_x
    ncells = instance.num_channels * instance.num_blocks
    owner = np.full(ncells, -1, dtype=np.int64)
    if nx == 0:
        return FixingResult(owner, 0, None, True)

    K = instance.num_requests
    lb = np.zeros(nx + K)
    ub = np.ones(nx + K)
    if instance.penalty_mode is PenaltyMode.NEW:
        # a request that cannot finish even with its whole window earns nothing
        ub[nx:][~completable(instance)] = 0.0
    cells = instance.x_index[:, 1] * instance.num_blocks + instance.x_index[:, 2]
    by_cell = _group(cells)
    fixed = np.zeros(nx, dtype=bool)

    def fix(i):
        fixed[i] = True
        lb[i] = 1.0
        owner[cells[i]] = instance.x_index[i, 0]
        for j in by_cell[cells[i]]:
            if j != i:
                ub[j] = 0.0

    def unfix(i):
        fixed[i] = False
        lb[i] = 0.0
        owner[cells[i]] = -1
        for j in by_cell[cells[i]]:
            ub[j] = 1.0

    solves = 0
    first = None
    first_integral = False
    last_batch: list[int] = []
    while True:
        if initial is not None:
            sol, initial = initial, None
        else:
            sol = solve_lp(instance.to_lp(lb, ub), method=method)
            solves += 1
        if sol.status is LpStatus.INFEASIBLE and last_batch:
            keep = last_batch[0]
            for i in last_batch:
                unfix(i)
            if len(last_batch) > 1:
                fix(keep)
                last_batch = [keep]
            else:
                ub[keep] = 0.0
                last_batch = []
            continue
        if sol.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"LP relaxation failed: {sol.status.value}")
        if first is None:
            first = sol
            first_integral = is_integral(sol)

        xv = sol.x[:nx]
        free = ~fixed & (ub[:nx] > 0)
        frac = free & (xv > INTEGRAL_TOL) & (xv < 1 - INTEGRAL_TOL)
        if not frac.any():
            for i in np.flatnonzero(free & (xv >= 1 - INTEGRAL_TOL)):
                if owner[cells[i]] < 0:
                    fix(i)
            break

        batch = []
        order = np.lexsort((np.arange(nx), -xv))
        for i in order:
            if not free[i] or xv[i] < threshold:
                break
            if owner[cells[i]] < 0:
                fix(i)
                batch.append(int(i))
        frac_open = [i for i in np.flatnonzero(frac) if owner[cells[i]] < 0]
        if frac_open:
            i = max(frac_open, key=lambda j: (xv[j], -j))
            fix(i)
            batch.append(int(i))
        # largest member first, so an infeasible resolve keeps it
        last_batch = sorted(batch, key=lambda j: (-xv[j], j))

    if repair and instance.penalty_mode is PenaltyMode.NEW:
        owner = repair_completions(instance, owner)
    return FixingResult(owner, solves, first, first_integral)


def is_integral(sol: LpSolution) -> bool:
    return bool(np.all(np.minimum(sol.x, 1 - sol.x) <= INTEGRAL_TOL))


def _group(keys: np.ndarray) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, key in enumerate(keys.tolist()):
        groups.setdefault(key, []).append(i)
    return groups


class _Packer:
    """Cell bookkeeping shared by the repair moves."""

    def __init__(self, instance: MilpInstance):
        K = instance.num_requests
        self.flat = instance.rates.reshape(K, -1)
        self.Q = instance.sizes
        B = instance.num_blocks
        cells = np.arange(self.flat.shape[1])
        block = cells % B
        self.deadline = np.array([r.deadline_slot for r in instance.requests])
        self.ids = np.array([r.id for r in instance.requests])
        # per request: usable cells, earliest block first, best channel first
        self.edf_cells = []
        self.fast_cells = []
        for k in range(K):
            usable = cells[self.flat[k] > 0]
            self.edf_cells.append(usable[np.lexsort((usable, -self.flat[k, usable], block[usable]))])
            self.fast_cells.append(usable[np.lexsort((usable, -self.flat[k, usable]))])

    def _take(self, k, order, owner) -> bool:
        cand = order[owner[order] < 0]
        cum = np.cumsum(self.flat[k, cand])
        if cum.size == 0 or cum[-1] < self.Q[k]:
            return False
        need = int(np.searchsorted(cum, self.Q[k] - 1e-9)) + 1
        owner[cand[:need]] = k
        return True

    def insert(self, k, owner) -> bool:
        """Add k using free cells only, fastest cells first."""
        return self._take(k, self.fast_cells[k], owner)

    def pack(self, members, ncells) -> np.ndarray | None:
        """Earliest-deadline packing of ``members`` from scratch, or None."""
        owner = np.full(ncells, -1, dtype=np.int64)
        for k in sorted(members, key=lambda k: (self.deadline[k], self.ids[k])):
            if not self._take(k, self.edf_cells[k], owner):
                return None
        return owner


def completable(instance: MilpInstance) -> np.ndarray:
    """Requests whose whole window, on every channel, carries at least their size."""
    return instance.rates.sum(axis=(1, 2)) >= instance.sizes


def repair_completions(instance: MilpInstance, owner: np.ndarray) -> np.ndarray:
    """Local improvement of a channel-block assignment under completion accounting.

    Resources held by incomplete requests earn nothing, so they are released
    and surplus blocks of complete requests are trimmed.  Requests are then
    tried in order of per-bit reward: first in the free blocks, then by
    repacking the complete set plus the newcomer earliest-deadline-first,
    then by swapping out one complete request of lower value.  Every accepted
    move strictly raises the completed value.
    """
    owner = owner.copy()
    K = instance.num_requests
    if K == 0:
        return owner
    pk = _Packer(instance)
    value = instance.values
    reward = np.array([r.unit_reward for r in instance.requests])
    ok = completable(instance)
    ncells = owner.size

    got = instance.delivered(owner)
    for k in range(K):
        if got[k] < pk.Q[k]:
            owner[owner == k] = -1
        else:
            _trim(pk.flat[k], owner, k, pk.Q[k])

    order = [k for k in sorted(range(K), key=lambda k: (-reward[k], -value[k], pk.ids[k]))
             if ok[k]]
    improved = True
    while improved:
        improved = False
        complete = set(np.unique(owner[owner >= 0]).tolist())
        for k in order:
            if k in complete:
                continue
            if pk.insert(k, owner):
                complete.add(k)
                improved = True
                continue
            packed = pk.pack(complete | {k}, ncells)
            if packed is not None:
                owner[:] = packed
                complete.add(k)
                improved = True
                continue
            for j in sorted(complete, key=lambda j: (value[j], pk.ids[j])):
                if value[j] >= value[k]:
                    break
                trial = owner.copy()
                trial[trial == j] = -1
                if not pk.insert(k, trial):
                    trial = pk.pack(complete - {j} | {k}, ncells)
                    if trial is None:
                        continue
                owner[:] = trial
                complete.discard(j)
                complete.add(k)
                if pk.insert(j, owner):
                    complete.add(j)
                improved = True
                break
    return owner


def _trim(rates_k: np.ndarray, owner: np.ndarray, k: int, need: float):
    mine = np.flatnonzero(owner == k)
    total = rates_k[mine].sum()
    for cell in mine[np.lexsort((mine, rates_k[mine]))]:
        if total - rates_k[cell] >= need:
            owner[cell] = -1
            total -= rates_k[cell]


def expand_to_slots(instance: MilpInstance, owner: np.ndarray) -> Schedule:
    """Turn channel-block ownership into a slot-level schedule.

    Within its blocks a request takes slots in time order until its size is
    met; the remaining slots are released.  Without a slot rate table each
    block is treated as one slot.
    """
    C, B, G = instance.num_channels, instance.num_blocks, instance.block_slots
    table = instance.slot_rates
    num_slots = B * G if table is not None else B
    schedule = Schedule.empty(C, num_slots)
    owner2 = owner.reshape(C, B)
    for k, req in enumerate(instance.requests):
        cs, bs = np.nonzero(owner2 == k)
        if cs.size == 0:
            continue
        remaining = req.size_bits
        got = 0
        for b, c in sorted(zip(bs.tolist(), cs.tolist())):
            if table is None:
                slots = [(b, int(instance.rates[k, c, b]))]
            else:
                lo = max(b * G, req.arrival_slot)
                hi = min((b + 1) * G, req.deadline_slot, table.num_slots)
                slots = [(t, int(table.bits[req.user, c, t])) for t in range(lo, hi)]
            for t, r in slots:
                if remaining <= 0:
                    break
                if r <= 0:
                    continue
                schedule.assignment[c, t] = req.id
                step = min(r, remaining)
                got += step
                remaining -= step
            if remaining <= 0:
                break
        schedule.delivered[req.id] = got
    return schedule


def solve_instance(instance: MilpInstance, algorithm: Algorithm, cfg: SimConfig | None = None,
                   method: str = "highs") -> tuple[np.ndarray, FixingResult]:
    """Channel-block ownership chosen by one of the offline algorithms."""
    algorithm = Algorithm(algorithm)
    threshold = cfg.fixing_threshold if cfg else 0.9
    if algorithm is Algorithm.SF_OP:
        res = sequential_fixing(instance.with_mode(PenaltyMode.TRADITIONAL), threshold, method)
        return res.owner, res
    base = instance.with_mode(PenaltyMode.NEW)
    if algorithm is Algorithm.DSF_NP:
        res = sequential_fixing(base, threshold, method)
        return res.owner, res
    if algorithm is not Algorithm.DSFRB:
        raise ValueError(f"{algorithm.value} is not an offline algorithm")
    pre = base.subset(np.flatnonzero(completable(base)).tolist())
    reduced, dropped = deflate(pre, cfg or SimConfig())
    if dropped:
        # an integral relaxation of the whole instance is already optimal
        probe = solve_lp(pre.to_lp(), method=method)
        if probe.status is LpStatus.OPTIMAL and is_integral(probe):
            reduced = pre
            res = sequential_fixing(pre, threshold, method, initial=probe)
        else:
            res = sequential_fixing(reduced, threshold, method)
            res.first_lp, res.first_lp_integral = probe, False
        res.lp_solves += 1
    else:
        res = sequential_fixing(reduced, threshold, method)
    index = {r.id: k for k, r in enumerate(base.requests)}
    to_base = np.array([index[r.id] for r in reduced.requests] + [-1])
    # pruned requests may still use whatever the reduced solve left idle
    owner = repair_completions(base, to_base[res.owner])
    return owner, res


def solve_offline(requests: list[Request], rate_table: RateTable, cfg: SimConfig,
                  algorithm: Algorithm, method: str = "highs") -> tuple[Schedule, RunMetrics]:
    instance = build_milp([r.copy() for r in requests], rate_table, cfg)
    owner, _ = solve_instance(instance, algorithm, cfg, method)
    schedule = expand_to_slots(instance, owner)
    return schedule, finalize(schedule, instance.requests)
