"""Random networks, population perturbation and the benchmark sweeps."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .bayes import OrGateNet, build_bayes_net
from .network import JUNCTION, LEAF, LeafAttributes, WastewaterGraph, reduce
from .objective import METRICS, ObjectiveConfig, PlacementEvaluator
from .optimizer import OPTIMIZERS, Placement, optimize
from .scenario import (
    DEFAULT_BETA,
    HydraulicBatch,
    ScenarioBatch,
    leaf_priors,
    sample_batch_hydraulics,
    sample_scenarios,
)

SWEEP_AXES = ("metric", "optimizer", "lambda", "concentration_threshold", "detection_threshold")
SWEEP_COLUMNS = (
    "axis", "value", "accuracy", "precision", "recall", "f1", "coverage", "combined", "wall_time_ms", "seed",
)
DEFAULT_THRESHOLD = 4.8e5


def derive_seed(master: int, *tags: int) -> int:
    """Deterministic 63-bit child seed for ``(master, *tags)``."""
    state = np.random.SeedSequence([master, *tags]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


@dataclass(frozen=True)
class RandomGraphSpec:
    node_count: int = 25
    redirect_prob: float = 0.2
    population_range: tuple[float, float] = (0.0, 100.0)
    flow_range: tuple[float, float] = (1000.0, 3000.0)
    flow_std_fraction: float = 0.1
    redirect_direction: str = "upstream"
    seed: int = 0

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("node_count must be at least 2")
        if not 0.0 <= self.redirect_prob <= 1.0:
            raise ValueError("redirect_prob must lie in [0, 1]")
        for lo, hi in (self.population_range, self.flow_range):
            if not lo < hi:
                raise ValueError("sampling ranges must have lo < hi")
        if self.population_range[0] < 0 or self.flow_range[0] <= 0:
            raise ValueError("populations must be non-negative and flows positive")
        if self.redirect_direction not in ("upstream", "downstream"):
            raise ValueError("redirect_direction must be 'upstream' or 'downstream'")


def random_tree(spec: RandomGraphSpec) -> tuple[WastewaterGraph, dict[int, LeafAttributes]]:
    """Grow a random sewer tree by attaching nodes one at a time.

    Node 0 is the root. Each new node drains into a uniformly chosen
    existing node, or, with probability ``redirect_prob``, into a random
    upstream neighbour of that node (``downstream`` direction: the node it
    drains into) when one exists.
    """
    rng = np.random.default_rng(spec.seed)
    downstream: dict[int, int] = {}
    upstream: dict[int, list[int]] = {0: []}
    for new in range(1, spec.node_count):
        target = int(rng.integers(new))
        if rng.random() < spec.redirect_prob:
            if spec.redirect_direction == "upstream" and upstream[target]:
                target = upstream[target][int(rng.integers(len(upstream[target])))]
            elif spec.redirect_direction == "downstream" and target in downstream:
                target = downstream[target]
        downstream[new] = target
        upstream[target].append(new)
        upstream[new] = []

    kinds = {v: LEAF if not ups else JUNCTION for v, ups in upstream.items()}
    graph = WastewaterGraph(kinds, tuple(downstream.items()))
    attrs = {}
    for leaf in graph.leaves:
        population = rng.uniform(*spec.population_range)
        flow = rng.uniform(*spec.flow_range)
        attrs[leaf] = LeafAttributes(
            population=float(population), flow_mean=float(flow), flow_std=float(spec.flow_std_fraction * flow)
        )
    return graph, attrs


def perturb_populations(
    attrs: Mapping[int, LeafAttributes], noise_fraction: float, seed: int
) -> dict[int, LeafAttributes]:
    """Scale each population by ``1 + U(-noise, noise)``, floored at zero.

    Explicit Poisson rates are rescaled by the same factor; rates derived
    from population follow automatically.
    """
    if noise_fraction < 0:
        raise ValueError("noise_fraction must be non-negative")
    rng = np.random.default_rng(seed)
    out = {}
    for leaf in sorted(attrs):
        attr = attrs[leaf]
        noise = rng.uniform(-noise_fraction, noise_fraction) if noise_fraction > 0 else 0.0
        population = max(0.0, attr.population + noise * attr.population)
        rate = attr.poisson_rate
        if rate is not None and attr.population > 0:
            rate = rate * population / attr.population
        out[leaf] = replace(attr, population=population, poisson_rate=rate)
    return out


@dataclass
class Instance:
    """A reduced network with its Bayesian model and one scenario batch."""

    graph: WastewaterGraph
    attrs: dict[int, LeafAttributes]
    net: OrGateNet
    batch: ScenarioBatch
    hydraulics: HydraulicBatch
    beta: float = DEFAULT_BETA

    def evaluator(self, config: ObjectiveConfig) -> PlacementEvaluator:
        return PlacementEvaluator(self.net, self.batch, self.hydraulics, config)

    def with_scenarios(self, attrs: Mapping[int, LeafAttributes], count: int, seed: int, source: str = "poisson"):
        """Same network and Bayesian model, scenarios drawn from ``attrs`` instead."""
        batch = sample_scenarios(attrs, count, seed, source, self.beta)
        hydraulics = sample_batch_hydraulics(attrs, batch, self.beta)
        return Instance(self.graph, dict(attrs), self.net, batch, hydraulics, self.beta)


def build_instance(
    graph: WastewaterGraph,
    attrs: Mapping[int, LeafAttributes],
    scenarios: int,
    seed: int,
    source: str = "poisson",
    beta: float = DEFAULT_BETA,
    reduce_graph: bool = True,
) -> Instance:
    if reduce_graph:
        graph, _ = reduce(graph)
    attrs = {v: attrs[v] for v in graph.leaves}
    net = build_bayes_net(graph, leaf_priors(attrs, beta))
    batch = sample_scenarios(attrs, scenarios, seed, source, beta)
    hydraulics = sample_batch_hydraulics(attrs, batch, beta)
    return Instance(graph, attrs, net, batch, hydraulics, beta)


def random_placement(candidates: Sequence[int], k: int, seed: int) -> Placement:
    rng = np.random.default_rng(seed)
    pool = sorted(candidates)
    picked = rng.choice(pool, size=min(k, len(pool)), replace=False)
    return Placement(tuple(sorted(int(v) for v in picked)), k)


# -- sweeps ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    base: ObjectiveConfig = field(default_factory=lambda: ObjectiveConfig(concentration_threshold=DEFAULT_THRESHOLD))
    k: int = 6
    scenarios: int = 1000
    seeds: tuple[int, ...] = (0,)
    optimizer: str = "naive"
    epsilon: float = 0.1
    delta: float = 0.01
    junctions_only: bool = False
    source: str = "poisson"

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        for value in self.values:
            self.point_config(value)
            if self.axis == "optimizer" and value not in OPTIMIZERS:
                raise ValueError(f"optimizer must be one of {OPTIMIZERS}")

    def point_config(self, value) -> ObjectiveConfig:
        if self.axis == "metric":
            return replace(self.base, metric=value)
        if self.axis == "lambda":
            return replace(self.base, lam=float(value))
        if self.axis == "concentration_threshold":
            return replace(self.base, concentration_threshold=float(value))
        if self.axis == "detection_threshold":
            return replace(self.base, detection_threshold=float(value))
        return self.base


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: object
    metrics: dict[str, float]
    coverage: float
    combined: float
    wall_time_ms: float
    seed: int
    placement: tuple[int, ...]

    def as_csv_row(self) -> list[str]:
        value = self.value if isinstance(self.value, str) else f"{self.value:.17g}"
        return [
            self.axis, value,
            *(f"{self.metrics[m]:.17g}" for m in METRICS),
            f"{self.coverage:.17g}", f"{self.combined:.17g}", f"{self.wall_time_ms:.3f}", str(self.seed),
        ]


def _candidates(graph: WastewaterGraph, junctions_only: bool) -> tuple[int, ...]:
    return graph.junctions if junctions_only else graph.nodes


def _optimized(instance: Instance, sweep: SweepSpec, evaluator, name: str, seed: int) -> Placement:
    placement, _ = optimize(
        name, evaluator, _candidates(instance.graph, sweep.junctions_only), sweep.k,
        sweep.epsilon, sweep.delta, derive_seed(seed, 1),
    )
    return placement


def _sweep_point(instance: Instance, sweep: SweepSpec, value, seed: int, fixed: Placement | None) -> SweepRow:
    evaluator = instance.evaluator(sweep.point_config(value))
    start = time.perf_counter()
    if fixed is None:
        name = value if sweep.axis == "optimizer" else sweep.optimizer
        placement = _optimized(instance, sweep, evaluator, name, seed)
    else:
        placement = fixed
    elapsed = (time.perf_counter() - start) * 1e3
    report = evaluator.report(placement)
    return SweepRow(sweep.axis, value, report.metrics, report.coverage_fraction, report.combined, elapsed, seed, placement.nodes)


def run_sweep(
    graph: WastewaterGraph,
    attrs: Mapping[int, LeafAttributes],
    sweep: SweepSpec,
    beta: float = DEFAULT_BETA,
    threads: int = 1,
) -> list[SweepRow]:
    """Optimize and evaluate one placement per (seed, axis value).

    Every point of one seed shares the same scenarios and hydraulic draws.
    On the detection-threshold axis the placement is optimized once at the
    base configuration and re-evaluated at each threshold.
    """
    rows: list[SweepRow] = []
    for seed in sweep.seeds:
        instance = build_instance(graph, attrs, sweep.scenarios, seed, sweep.source, beta)
        fixed = None
        if sweep.axis == "detection_threshold":
            fixed = _optimized(instance, sweep, instance.evaluator(sweep.base), sweep.optimizer, seed)
        points = [(instance, sweep, v, seed, fixed) for v in sweep.values]
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                rows.extend(pool.map(lambda args: _sweep_point(*args), points))
        else:
            rows.extend(_sweep_point(*p) for p in points)
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow(row.as_csv_row())
    return buf.getvalue()


# -- random graph benchmark ------------------------------------------------

@dataclass(frozen=True)
class GraphBenchResult:
    graph_seed: int
    placement: tuple[int, ...]
    optimized: dict[str, float]
    random: dict[str, float]
    optimized_perturbed: dict[str, float]
    random_perturbed: dict[str, float]


def random_graph_benchmark(
    n_graphs: int = 20,
    node_count: int = 25,
    scenarios: int = 500,
    k: int = 6,
    threshold: float = DEFAULT_THRESHOLD,
    noise_fraction: float = 0.5,
    random_trials: int = 20,
    seed: int = 0,
    optimizer: str = "naive",
    beta: float = DEFAULT_BETA,
) -> list[GraphBenchResult]:
    """Optimized vs random placements on random networks, before and after perturbation.

    Placements are optimized on scenarios from the nominal populations and
    then scored, with the nominal Bayesian model, on scenarios drawn from
    perturbed populations.
    """
    config = ObjectiveConfig(metric="f1", concentration_threshold=threshold)
    results = []
    for g in range(n_graphs):
        graph_seed = derive_seed(seed, 0, g)
        graph, attrs = random_tree(RandomGraphSpec(node_count=node_count, seed=graph_seed))
        instance = build_instance(graph, attrs, scenarios, derive_seed(seed, 1, g), beta=beta)
        perturbed_attrs = perturb_populations(instance.attrs, noise_fraction, derive_seed(seed, 2, g))
        perturbed = instance.with_scenarios(perturbed_attrs, scenarios, derive_seed(seed, 3, g))

        nominal_eval = instance.evaluator(config)
        perturbed_eval = perturbed.evaluator(config)
        placement, _ = optimize(optimizer, nominal_eval, instance.graph.nodes, k)
        randoms = [random_placement(instance.graph.nodes, k, derive_seed(seed, 4, g, t)) for t in range(random_trials)]

        def summary(evaluator, placements):
            reports = [evaluator.report(p) for p in placements]
            return {
                "f1": float(np.mean([r.metrics["f1"] for r in reports])),
                "coverage": float(np.mean([r.coverage_fraction for r in reports])),
            }

        results.append(GraphBenchResult(
            graph_seed, placement.nodes,
            summary(nominal_eval, [placement]), summary(nominal_eval, randoms),
            summary(perturbed_eval, [placement]), summary(perturbed_eval, randoms),
        ))
    return results


# -- synthetic campus network ----------------------------------------------

# branch structure after reduction: junction -> its parents ("l" leaves, "j" junctions)
_CAMPUS_BRANCHES = {
    "j1": ("l1", "l2"),
    "j2": ("l3", "l4", "l5"),
    "j3": ("j1", "l6"),
    "j4": ("j2", "l7"),
    "j5": ("l8", "l9"),
    "j6": ("j3", "j4"),
    "j7": ("j5", "l10", "l11"),
    "j8": ("j6", "j7", "l12"),
}
# pass-through manholes inserted below each listed node
_CAMPUS_PASS_THROUGH = {
    "l1": 1, "l3": 2, "l6": 1, "l8": 1, "l10": 1, "l12": 2,
    "j1": 1, "j2": 2, "j3": 1, "j5": 2, "j6": 1,
}
_CAMPUS_POPULATION = (420, 380, 150, 210, 95, 510, 300, 260, 180, 640, 120, 350)


def campus_network(
    liters_per_person: float = 60.0, infections_per_person: float = 2e-4
) -> tuple[WastewaterGraph, dict[int, LeafAttributes]]:
    """Deterministic 35-node residential network; reduces to 20 nodes, 12 of them buildings.

    A synthetic stand-in with realistic dormitory sizes: flows scale with
    population, so the mixed sample at the root is usually too dilute for
    a 4.8e5 copies/L threshold.
    """
    ids: dict[str, int] = {}
    names = [f"l{i}" for i in range(1, 13)] + [f"j{i}" for i in range(1, 9)]
    for name in names:
        ids[name] = len(ids)
    edges = []
    kinds = {ids[n]: LEAF if n.startswith("l") else JUNCTION for n in names}
    for child, parents in _CAMPUS_BRANCHES.items():
        for parent in parents:
            src = ids[parent]
            for _ in range(_CAMPUS_PASS_THROUGH.get(parent, 0)):
                hop = len(kinds)
                kinds[hop] = JUNCTION
                edges.append((src, hop))
                src = hop
            edges.append((src, ids[child]))
    graph = WastewaterGraph(kinds, tuple(edges))
    attrs = {
        ids[f"l{i + 1}"]: LeafAttributes(
            population=float(pop),
            flow_mean=liters_per_person * pop,
            flow_std=0.1 * liters_per_person * pop,
            poisson_rate=infections_per_person * pop,
        )
        for i, pop in enumerate(_CAMPUS_POPULATION)
    }
    return graph, attrs
