"""Cardinality-constrained set maximization: greedy variants and an exhaustive oracle.

All routines take ``evaluate``, a callable mapping a frozenset of node ids
to a float, and break ties toward the lowest node id.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

Evaluate = Callable[[frozenset], float]

EXHAUSTIVE_BUDGET = 10**6


@dataclass(frozen=True)
class Placement:
    nodes: tuple[int, ...]
    k: int

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("placement contains duplicate nodes")
        if len(self.nodes) > self.k:
            raise ValueError(f"placement has {len(self.nodes)} nodes but k = {self.k}")

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def as_set(self) -> frozenset:
        return frozenset(self.nodes)


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    node: int
    gain: float
    value: float
    evaluations: int


@dataclass
class OptimizerTrace:
    steps: list[TraceStep] = field(default_factory=list)
    bound_violations: int = 0

    @property
    def evaluations(self) -> int:
        return sum(s.evaluations for s in self.steps)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "node", "gain", "value", "evaluations"])
        for s in self.steps:
            writer.writerow([s.iteration, s.node, f"{s.gain:.17g}", f"{s.value:.17g}", s.evaluations])
        return buf.getvalue()


class _Memo:
    def __init__(self, evaluate: Evaluate):
        self.evaluate = evaluate
        self.cache: dict[frozenset, float] = {}

    def __call__(self, nodes) -> float:
        key = frozenset(nodes)
        if key not in self.cache:
            self.cache[key] = float(self.evaluate(key))
        return self.cache[key]


def _prepare(candidates: Iterable[int], k: int) -> list[int]:
    cands = sorted(set(candidates))
    if not cands:
        raise ValueError("candidate set is empty")
    if k < 1:
        raise ValueError("k must be at least 1")
    return cands


def _best(f: _Memo, chosen: frozenset, base: float, pool: Iterable[int]) -> tuple[int, float]:
    best, best_gain = None, -math.inf
    for v in pool:
        gain = f(chosen | {v}) - base
        if gain > best_gain:
            best, best_gain = v, gain
    return best, best_gain


def greedy_naive(evaluate: Evaluate, candidates: Iterable[int], k: int) -> tuple[Placement, OptimizerTrace]:
    """Add the candidate with the largest marginal gain until ``k`` are placed."""
    cands = _prepare(candidates, k)
    f = _Memo(evaluate)
    chosen: list[int] = []
    value = f(frozenset())
    trace = OptimizerTrace()
    remaining = list(cands)
    while len(chosen) < k and remaining:
        v, gain = _best(f, frozenset(chosen), value, remaining)
        chosen.append(v)
        remaining.remove(v)
        value = f(chosen)
        trace.steps.append(TraceStep(len(chosen) - 1, v, gain, value, len(remaining) + 1))
    return Placement(tuple(chosen), k), trace


def greedy_approx_lazy(
    evaluate: Evaluate, candidates: Iterable[int], k: int, epsilon: float = 0.0
) -> tuple[Placement, OptimizerTrace]:
    """Lazy greedy with stale gain bounds in a max-heap.

    The top candidate is re-evaluated until a fresh gain stays ahead of the
    next stale bound. With ``epsilon > 0`` a fresh gain within a factor
    ``1 - epsilon`` of that bound is accepted early. A fresh gain above the
    candidate's own stale bound is a diminishing-returns violation and is
    counted in the trace.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must lie in [0, 1)")
    cands = _prepare(candidates, k)
    f = _Memo(evaluate)
    trace = OptimizerTrace()
    chosen: list[int] = []
    value = f(frozenset())

    heap = [(-(f({v}) - value), v) for v in cands]
    heapq.heapify(heap)
    fresh_at = dict.fromkeys(cands, 0)
    evals = len(cands)

    while len(chosen) < k and heap:
        it = len(chosen)
        while True:
            neg_bound, v = heapq.heappop(heap)
            if fresh_at[v] == it:
                gain = -neg_bound
                break
            gain = f(frozenset(chosen) | {v}) - value
            evals += 1
            fresh_at[v] = it
            if gain > -neg_bound:
                trace.bound_violations += 1
            if not heap:
                break
            if epsilon > 0:
                nxt = -heap[0][0]
                if gain >= nxt - epsilon * abs(nxt):
                    break
            heapq.heappush(heap, (-gain, v))
        chosen.append(v)
        value = f(chosen)
        trace.steps.append(TraceStep(it, v, gain, value, evals))
        evals = 0
    return Placement(tuple(chosen), k), trace


def greedy_lazy(evaluate: Evaluate, candidates: Iterable[int], k: int) -> tuple[Placement, OptimizerTrace]:
    return greedy_approx_lazy(evaluate, candidates, k, 0.0)


def stochastic_sample_size(n_candidates: int, k: int, delta: float) -> int:
    return math.ceil(n_candidates / k * math.log(1.0 / delta))


def greedy_stochastic(
    evaluate: Evaluate, candidates: Iterable[int], k: int, delta: float = 0.01, seed: int = 0
) -> tuple[Placement, OptimizerTrace]:
    """Greedy over a fresh uniform subsample of the remaining candidates each round."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    cands = _prepare(candidates, k)
    f = _Memo(evaluate)
    rng = np.random.default_rng(seed)
    size = stochastic_sample_size(len(cands), k, delta)
    trace = OptimizerTrace()
    chosen: list[int] = []
    value = f(frozenset())
    remaining = list(cands)
    while len(chosen) < k and remaining:
        if size >= len(remaining):
            pool = remaining
        else:
            pool = sorted(int(x) for x in rng.choice(remaining, size=size, replace=False))
        v, gain = _best(f, frozenset(chosen), value, pool)
        chosen.append(v)
        remaining.remove(v)
        value = f(chosen)
        trace.steps.append(TraceStep(len(chosen) - 1, v, gain, value, len(pool)))
    return Placement(tuple(chosen), k), trace


def greedy_remove(evaluate: Evaluate, current: Iterable[int], r: int) -> tuple[Placement, OptimizerTrace]:
    """Drop ``r`` sensors, each time the one whose loss costs the least objective."""
    kept = list(current)
    if r < 0 or r > len(kept):
        raise ValueError(f"cannot remove {r} of {len(kept)} sensors")
    f = _Memo(evaluate)
    trace = OptimizerTrace()
    value = f(kept)
    for it in range(r):
        best, best_value = None, -math.inf
        for v in sorted(kept):
            after = f(set(kept) - {v})
            if after > best_value:
                best, best_value = v, after
        kept.remove(best)
        trace.steps.append(TraceStep(it, best, best_value - value, best_value, len(kept) + 1))
        value = best_value
    return Placement(tuple(kept), len(kept)), trace


def exhaustive(
    evaluate: Evaluate, candidates: Iterable[int], k: int, budget: int = EXHAUSTIVE_BUDGET
) -> tuple[Placement, float]:
    """Best ``k``-subset by enumeration; ties go to the lexicographically smallest."""
    cands = _prepare(candidates, k)
    size = min(k, len(cands))
    if math.comb(len(cands), size) > budget:
        raise ValueError(f"C({len(cands)}, {size}) subsets exceed the budget of {budget}")
    best, best_value = None, -math.inf
    for combo in itertools.combinations(cands, size):
        value = float(evaluate(frozenset(combo)))
        if value > best_value:
            best, best_value = combo, value
    return Placement(best, k), best_value


OPTIMIZERS = ("naive", "lazy", "approx_lazy", "stochastic")


def optimize(
    name: str,
    evaluate: Evaluate,
    candidates: Iterable[int],
    k: int,
    epsilon: float = 0.1,
    delta: float = 0.01,
    seed: int = 0,
) -> tuple[Placement, OptimizerTrace]:
    if name == "naive":
        return greedy_naive(evaluate, candidates, k)
    if name == "lazy":
        return greedy_lazy(evaluate, candidates, k)
    if name == "approx_lazy":
        return greedy_approx_lazy(evaluate, candidates, k, epsilon)
    if name == "stochastic":
        return greedy_stochastic(evaluate, candidates, k, delta, seed)
    raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {name!r}")
