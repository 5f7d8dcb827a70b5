"""Outbreak scenarios and the hydraulic draws behind them.

Every random quantity comes from a stream keyed by (seed, purpose, scenario
index, leaf id), so any scenario can be regenerated alone and the order of
generation never matters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
from scipy.special import ndtr, ndtri

from .network import LeafAttributes

DEFAULT_BETA = 1e-3
COPIES_PER_INFECTED = (2.4e6, 4e10)
SOURCES = ("bernoulli", "poisson")

_SCENARIO_STREAM = 0
_HYDRAULIC_STREAM = 1


def stream(seed: int, purpose: int, index: int, leaf: int) -> np.random.Generator:
    return np.random.default_rng([purpose, seed, index, leaf])


def infection_rate(attr: LeafAttributes, beta: float = DEFAULT_BETA) -> float:
    """Expected infected residents per sampling period."""
    if attr.poisson_rate is not None:
        return attr.poisson_rate
    return beta * attr.population


def outbreak_probability(attr: LeafAttributes, beta: float = DEFAULT_BETA) -> float:
    """Bernoulli outbreak prior; falls back to P(Poisson(rate) >= 1)."""
    if attr.outbreak_prior is not None:
        return attr.outbreak_prior
    return -math.expm1(-infection_rate(attr, beta))


def leaf_priors(attrs: Mapping[int, LeafAttributes], beta: float = DEFAULT_BETA) -> dict[int, float]:
    return {v: outbreak_probability(a, beta) for v, a in sorted(attrs.items())}


@dataclass(frozen=True)
class ScenarioBatch:
    """Binary outbreak matrix, one row per scenario, columns in ascending leaf order."""

    leaves: tuple[int, ...]
    outbreaks: np.ndarray
    seed: int
    source: str
    infected: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.outbreaks)

    def scenario(self, index: int) -> dict[int, bool]:
        return dict(zip(self.leaves, map(bool, self.outbreaks[index])))

    def __iter__(self) -> Iterator[dict[int, bool]]:
        return (self.scenario(i) for i in range(len(self)))

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "source": self.source,
            "leaves": list(self.leaves),
            "scenarios": self.outbreaks.astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, document: Mapping, leaves=None) -> "ScenarioBatch":
        rows = np.asarray(document["scenarios"], dtype=int)
        leaves = tuple(document.get("leaves") or leaves or ())
        if rows.ndim != 2 or rows.shape[1] != len(leaves):
            raise ValueError("scenario rows do not match the leaf count")
        if not np.isin(rows, (0, 1)).all():
            raise ValueError("scenario entries must be 0 or 1")
        if document.get("source") not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")
        return cls(leaves, rows.astype(bool), int(document["seed"]), document["source"])


def sample_scenarios(
    attrs: Mapping[int, LeafAttributes],
    count: int,
    seed: int,
    source: str = "poisson",
    beta: float = DEFAULT_BETA,
) -> ScenarioBatch:
    """Draw ``count`` binary outbreak scenarios.

    ``bernoulli`` flips each building with its outbreak prior. ``poisson``
    draws an infected count per building and binarizes it with min(1, n).
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}")
    leaves = tuple(sorted(attrs))
    outbreaks = np.zeros((count, len(leaves)), dtype=bool)
    infected = np.zeros((count, len(leaves)), dtype=np.int64) if source == "poisson" else None
    for j, leaf in enumerate(leaves):
        if source == "bernoulli":
            p = outbreak_probability(attrs[leaf], beta)
        else:
            rate = infection_rate(attrs[leaf], beta)
        for i in range(count):
            rng = stream(seed, _SCENARIO_STREAM, i, leaf)
            if source == "bernoulli":
                outbreaks[i, j] = rng.random() < p
            else:
                n = int(rng.poisson(rate))
                infected[i, j] = n
                outbreaks[i, j] = min(1, n) == 1
    return ScenarioBatch(leaves, outbreaks, seed, source, infected)


# -- hydraulics ------------------------------------------------------------

def sample_positive_normal(mean: float, std: float, rng: np.random.Generator) -> float:
    """Gaussian(mean, std) conditioned on being strictly positive (inverse CDF)."""
    if std == 0:
        if mean <= 0:
            raise ValueError("flow_mean must be positive when flow_std is 0")
        return float(mean)
    lower = -mean / std
    upper_mass = ndtr(-lower)
    if upper_mass <= 0:
        raise ValueError(f"no positive mass for flow N({mean}, {std}^2)")
    while True:
        # 1 - random() lies in (0, 1]; -ndtri(u * P(Z > a)) >= a
        z = -ndtri((1.0 - rng.random()) * upper_mass)
        flow = mean + std * z
        if flow > 0:
            return float(flow)


def sample_zero_truncated_poisson(rate: float, rng: np.random.Generator) -> int:
    """Poisson(rate) conditioned on at least one event."""
    if rate <= 0:
        return 1
    if rate > 10:
        while True:
            n = int(rng.poisson(rate))
            if n >= 1:
                return n
    target = rng.random() * -math.expm1(-rate)
    pmf = math.exp(-rate)
    cumulative = 0.0
    k = 0
    while True:
        k += 1
        pmf *= rate / k
        cumulative += pmf
        if cumulative >= target or pmf < 1e-300:
            return k


def sample_copies(infected: int, rng: np.random.Generator) -> float:
    if infected == 0:
        return 0.0
    lo, hi = COPIES_PER_INFECTED
    return float(rng.uniform(lo, hi, size=infected).sum())


@dataclass(frozen=True)
class HydraulicDraw:
    flows: dict[int, float]
    infected: dict[int, int]
    copies: dict[int, float]


def _leaf_hydraulics(attr: LeafAttributes, outbreak: bool, rng: np.random.Generator, beta: float):
    if attr.flow_mean is None:
        raise ValueError("flow_mean is required to sample hydraulics")
    flow = sample_positive_normal(attr.flow_mean, attr.flow_std, rng)
    infected = sample_zero_truncated_poisson(infection_rate(attr, beta), rng) if outbreak else 0
    return flow, infected, sample_copies(infected, rng)


def sample_hydraulics(
    attrs: Mapping[int, LeafAttributes],
    scenario: Mapping[int, bool],
    seed: int,
    index: int = 0,
    beta: float = DEFAULT_BETA,
) -> HydraulicDraw:
    """Flows for every building, infected counts and shed copies for outbreak buildings."""
    missing = [v for v in attrs if v not in scenario]
    if missing:
        raise ValueError(f"scenario missing leaves {sorted(missing)}")
    flows, infected, copies = {}, {}, {}
    for leaf in sorted(attrs):
        rng = stream(seed, _HYDRAULIC_STREAM, index, leaf)
        try:
            flows[leaf], infected[leaf], copies[leaf] = _leaf_hydraulics(attrs[leaf], bool(scenario[leaf]), rng, beta)
        except ValueError as exc:
            raise ValueError(f"leaf {leaf}: {exc}") from None
    return HydraulicDraw(flows, infected, copies)


@dataclass(frozen=True)
class HydraulicBatch:
    """Per-scenario hydraulic draws as ``(scenarios, leaves)`` arrays."""

    leaves: tuple[int, ...]
    flows: np.ndarray
    infected: np.ndarray
    copies: np.ndarray

    def __len__(self) -> int:
        return len(self.flows)

    def draw(self, index: int) -> HydraulicDraw:
        return HydraulicDraw(
            dict(zip(self.leaves, map(float, self.flows[index]))),
            dict(zip(self.leaves, map(int, self.infected[index]))),
            dict(zip(self.leaves, map(float, self.copies[index]))),
        )

    def to_json(self) -> dict:
        return {
            "leaves": list(self.leaves),
            "flows": self.flows.tolist(),
            "infected": self.infected.tolist(),
            "copies": self.copies.tolist(),
        }


def sample_batch_hydraulics(
    attrs: Mapping[int, LeafAttributes], batch: ScenarioBatch, beta: float = DEFAULT_BETA
) -> HydraulicBatch:
    """Hydraulic draws for every scenario of ``batch``, keyed by the batch seed."""
    if tuple(sorted(attrs)) != batch.leaves:
        raise ValueError("attributes and scenario batch cover different leaves")
    shape = batch.outbreaks.shape
    flows = np.empty(shape)
    infected = np.zeros(shape, dtype=np.int64)
    copies = np.zeros(shape)
    for j, leaf in enumerate(batch.leaves):
        attr = attrs[leaf]
        for i in range(len(batch)):
            rng = stream(batch.seed, _HYDRAULIC_STREAM, i, leaf)
            try:
                flows[i, j], infected[i, j], copies[i, j] = _leaf_hydraulics(
                    attr, bool(batch.outbreaks[i, j]), rng, beta
                )
            except ValueError as exc:
                raise ValueError(f"leaf {leaf}: {exc}") from None
    return HydraulicBatch(batch.leaves, flows, infected, copies)


def save_batch(path: str | Path, batch: ScenarioBatch, hydraulics: HydraulicBatch | None = None) -> None:
    document = batch.to_json()
    if hydraulics is not None:
        document["hydraulics"] = hydraulics.to_json()
    Path(path).write_text(json.dumps(document))


def load_batch(path: str | Path) -> ScenarioBatch:
    return ScenarioBatch.from_json(json.loads(Path(path).read_text()))
