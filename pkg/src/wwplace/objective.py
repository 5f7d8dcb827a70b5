"""Localization scores, coverage indicators and the combined placement objective."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .bayes import OrGateNet, posterior
from .concentration import leaf_membership, propagate, propagate_batch
from .network import NetworkError, WastewaterGraph
from .scenario import HydraulicBatch, HydraulicDraw, ScenarioBatch

METRICS = ("accuracy", "precision", "recall", "f1")
COVERAGE_MODES = ("all_sources", "any_source")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Objective settings.

    ``lam`` weights the localization score against the (thresholded)
    coverage indicator: 1 is score only, 0 is coverage only.
    ``concentration_threshold`` is in copies per liter; ``None`` or 0
    disables the concentration requirement.
    """

    metric: str = "f1"
    lam: float = 0.5
    concentration_threshold: float | None = None
    detection_threshold: float = 0.5
    coverage_mode: str = "all_sources"
    conjunctive: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.concentration_threshold is not None and self.concentration_threshold < 0:
            raise ValueError("concentration threshold must be non-negative")
        if not 0.0 <= self.detection_threshold < 1.0:
            raise ValueError("detection threshold must lie in [0, 1)")
        if self.coverage_mode not in COVERAGE_MODES:
            raise ValueError(f"coverage mode must be one of {COVERAGE_MODES}")

    def to_json(self) -> dict:
        return asdict(self)


def metric_scores(pred: np.ndarray, truth: np.ndarray) -> dict[str, np.ndarray]:
    """Per-row accuracy, precision, recall and F1 for boolean ``(rows, leaves)`` arrays.

    A row with no predicted and no actual positives scores 1 on every
    metric; when only one of the two denominators vanishes that metric is 0.
    """
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth shapes differ")
    tp = (pred & truth).sum(axis=-1)
    fp = (pred & ~truth).sum(axis=-1)
    fn = (~pred & truth).sum(axis=-1)
    tn = (~pred & ~truth).sum(axis=-1)
    both_empty = (tp + fp == 0) & (tp + fn == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(2 * tp + fp + fn > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    return {
        "accuracy": (tp + tn) / pred.shape[-1],
        "precision": np.where(both_empty, 1.0, precision),
        "recall": np.where(both_empty, 1.0, recall),
        "f1": np.where(both_empty, 1.0, f1),
    }


def score(predictions: Mapping[int, bool], scenario: Mapping[int, bool], metric: str = "f1") -> float:
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if set(predictions) != set(scenario):
        raise ValueError("predictions and scenario cover different leaves")
    leaves = sorted(scenario)
    pred = np.array([bool(predictions[l]) for l in leaves])
    truth = np.array([bool(scenario[l]) for l in leaves])
    return float(metric_scores(pred, truth)[metric])


def _covering_sensors(graph: WastewaterGraph, placement, leaf: int) -> list[int]:
    return [w for w in placement if leaf in graph.upstream_leaves(w)]


def _check_placement(graph: WastewaterGraph, placement) -> None:
    unknown = [w for w in placement if w not in graph]
    if unknown:
        raise NetworkError("unknown placement node", unknown)


def coverage_indicator(graph: WastewaterGraph, placement, scenario: Mapping[int, bool], mode: str = "all_sources") -> int:
    """1 when the outbreak buildings drain through the sensors, 0 otherwise.

    ``all_sources`` needs every outbreak building covered, ``any_source``
    at least one. A scenario without outbreaks counts as detected.
    """
    return threshold_indicator(graph, placement, scenario, None, None, mode)


def threshold_indicator(
    graph: WastewaterGraph,
    placement,
    scenario: Mapping[int, bool],
    draw: HydraulicDraw | None,
    threshold: float | None,
    mode: str = "all_sources",
    conjunctive: bool = False,
) -> int:
    """Coverage that also needs a sensor sample concentrated enough.

    An outbreak building is detected when at least one sensor downstream of
    it reaches ``threshold``. With ``conjunctive`` every sensor that reads
    positive must reach it as well.
    """
    if mode not in COVERAGE_MODES:
        raise ValueError(f"coverage mode must be one of {COVERAGE_MODES}")
    _check_placement(graph, placement)
    sources = [l for l in graph.leaves if scenario[l]]
    if not sources:
        return 1
    if threshold:
        if draw is None:
            raise ValueError("a hydraulic draw is required for a concentration threshold")
        conc = propagate(graph, draw).concentration
        good = {w for w in placement if conc[w] >= threshold}
    else:
        good = set(placement)

    detected = [any(w in good for w in _covering_sensors(graph, placement, l)) for l in sources]
    ok = all(detected) if mode == "all_sources" else any(detected)
    if ok and conjunctive:
        positive = [w for w in placement if graph.upstream_leaves(w) & set(sources)]
        ok = all(w in good for w in positive)
    return int(ok)


@dataclass(frozen=True)
class EvalReport:
    mean_score: float
    coverage_fraction: float
    combined: float
    scores: np.ndarray = field(repr=False)
    indicators: np.ndarray = field(repr=False)
    metrics: dict[str, float] = field(default_factory=dict)

    @property
    def per_scenario(self) -> list[tuple[float, int]]:
        return list(zip(self.scores.tolist(), self.indicators.astype(int).tolist()))

    def to_json(self, per_scenario: bool = False) -> dict:
        out = {
            "mean_score": self.mean_score,
            "coverage_fraction": self.coverage_fraction,
            "combined": self.combined,
            "metrics": dict(self.metrics),
        }
        if per_scenario:
            out["per_scenario"] = [{"score": s, "indicator": i} for s, i in self.per_scenario]
        return out


class PlacementEvaluator:
    """Evaluate placements against a fixed scenario batch and its hydraulic draws.

    Readings, concentrations and posteriors are computed once and reused,
    so every placement of one optimization run sees the same random
    numbers. Calling the evaluator returns the combined objective and is
    memoized per placement set.
    """

    def __init__(
        self,
        net: OrGateNet,
        batch: ScenarioBatch,
        hydraulics: HydraulicBatch | None = None,
        config: ObjectiveConfig = ObjectiveConfig(),
    ):
        graph = net.graph
        if batch.leaves != graph.leaves:
            raise ValueError("scenario batch and network cover different leaves")
        if len(batch) == 0:
            raise ValueError("scenario batch is empty")
        self.net = net
        self.graph = graph
        self.batch = batch
        self.config = config
        self.truth = batch.outbreaks
        self.member = leaf_membership(graph)
        self.node_index = {v: i for i, v in enumerate(graph.nodes)}
        self.readings = (self.truth.astype(np.int64) @ self.member.T.astype(np.int64)) > 0
        if config.concentration_threshold:
            if hydraulics is None:
                raise ValueError("a concentration threshold needs hydraulic draws")
            conc = propagate_batch(graph, hydraulics)
            self.good = conc >= config.concentration_threshold
        else:
            self.good = np.ones_like(self.readings)
        self._posteriors: dict[tuple, np.ndarray] = {}
        self._reports: dict[frozenset, EvalReport] = {}
        self.evaluations = 0

    def posterior_vector(self, observations: tuple[tuple[int, bool], ...]) -> np.ndarray:
        cached = self._posteriors.get(observations)
        if cached is None:
            probs = posterior(self.net, dict(observations))
            cached = np.array([probs[l] for l in self.graph.leaves])
            self._posteriors[observations] = cached
        return cached

    def predictions(self, placement: Iterable[int]) -> np.ndarray:
        sensors = sorted(set(placement))
        _check_placement(self.graph, sensors)
        cols = [self.node_index[w] for w in sensors]
        tau = self.config.detection_threshold
        if not cols:
            row = self.posterior_vector(()) > tau
            return np.broadcast_to(row, self.truth.shape)
        patterns, inverse = np.unique(self.readings[:, cols], axis=0, return_inverse=True)
        table = np.array([
            self.posterior_vector(tuple(zip(sensors, map(bool, pattern)))) > tau for pattern in patterns
        ])
        return table[inverse.reshape(-1)]

    def indicators(self, placement: Iterable[int]) -> np.ndarray:
        sensors = sorted(set(placement))
        cols = [self.node_index[w] for w in sensors]
        truth = self.truth
        any_outbreak = truth.any(axis=1)
        if not cols:
            return ~any_outbreak
        good = self.good[:, cols]
        covered = (good.astype(np.int64) @ self.member[cols].astype(np.int64)) > 0
        if self.config.coverage_mode == "all_sources":
            ok = (~truth | covered).all(axis=1)
        else:
            ok = (truth & covered).any(axis=1) | ~any_outbreak
        if self.config.conjunctive:
            ok &= (~self.readings[:, cols] | good).all(axis=1)
        return ok

    def report(self, placement: Iterable[int]) -> EvalReport:
        key = frozenset(placement)
        cached = self._reports.get(key)
        if cached is not None:
            return cached
        self.evaluations += 1
        pred = self.predictions(key)
        all_scores = metric_scores(pred, self.truth)
        scores = all_scores[self.config.metric]
        indicators = self.indicators(key)
        lam = self.config.lam
        combined = lam * scores + (1.0 - lam) * indicators
        rep = EvalReport(
            mean_score=float(np.mean(scores)),
            coverage_fraction=float(np.mean(indicators)),
            combined=float(np.mean(combined)),
            scores=scores,
            indicators=indicators,
            metrics={m: float(np.mean(all_scores[m])) for m in METRICS},
        )
        self._reports[key] = rep
        return rep

    def __call__(self, placement: Iterable[int]) -> float:
        return self.report(placement).combined


def evaluate_placement(
    net: OrGateNet,
    placement: Iterable[int],
    batch: ScenarioBatch,
    hydraulics: HydraulicBatch | None = None,
    config: ObjectiveConfig = ObjectiveConfig(),
) -> EvalReport:
    return PlacementEvaluator(net, batch, hydraulics, config).report(placement)


Objective = Callable[[Iterable[int]], float]


def add_objective(evaluate: Objective, current: Iterable[int]) -> Objective:
    """Objective over additions W, scoring ``current | W``."""
    current = frozenset(current)

    def added(extra: Iterable[int]) -> float:
        extra = frozenset(extra)
        if extra & current:
            raise ValueError(f"candidates {sorted(extra & current)} are already placed")
        return evaluate(current | extra)

    return added


def remove_objective(evaluate: Objective, current: Iterable[int]) -> Objective:
    """Objective over removals W, scoring ``current - W``."""
    current = frozenset(current)

    def removed(drop: Iterable[int]) -> float:
        drop = frozenset(drop)
        if not drop <= current:
            raise ValueError(f"nodes {sorted(drop - current)} are not in the current placement")
        return evaluate(current - drop)

    return removed
