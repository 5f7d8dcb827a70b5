"""Binary OR-gate Bayesian network over a wastewater graph.

Every node carries one boolean: does the wastewater passing through it hold
virus? Leaves are independent Bernoulli variables, junctions are the
noiseless OR of their parents. Exact leaf posteriors under sensor readings
come from a two-pass sum-product sweep over the tree.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from .network import LEAF, NetworkError, WastewaterGraph

BRUTEFORCE_MAX_LEAVES = 20


class ZeroProbabilityEvidence(ValueError):
    """The observed readings cannot occur under the network's priors."""


def or_cpd(n_parents: int) -> np.ndarray:
    """Deterministic OR table, shape ``(2**n_parents, 2)``.

    Row ``r`` enumerates parent states in ``itertools.product((False, True))``
    order; the columns hold P(child=False) and P(child=True).
    """
    rows = list(itertools.product((False, True), repeat=n_parents))
    table = np.zeros((len(rows), 2))
    for r, states in enumerate(rows):
        table[r, int(any(states))] = 1.0
    return table


@dataclass(frozen=True)
class OrGateNet:
    graph: WastewaterGraph
    leaf_priors: Mapping[int, float]

    @cached_property
    def junction_cpds(self) -> dict[int, tuple[tuple[int, ...], np.ndarray]]:
        """Junction id -> (parent ids, OR table)."""
        return {j: (self.graph.upstream[j], or_cpd(len(self.graph.upstream[j]))) for j in self.graph.junctions}

    @property
    def leaves(self) -> tuple[int, ...]:
        return self.graph.leaves


def build_bayes_net(graph: WastewaterGraph, leaf_priors: Mapping[int, float]) -> OrGateNet:
    missing = [v for v in graph.leaves if v not in leaf_priors]
    if missing:
        raise ValueError(f"missing outbreak prior for leaves {missing}")
    extra = [v for v in leaf_priors if v not in graph.leaves]
    if extra:
        raise ValueError(f"priors given for non-leaf nodes {sorted(extra)}")
    bad = [v for v, p in leaf_priors.items() if not 0.0 <= p <= 1.0]
    if bad:
        raise ValueError(f"priors outside [0, 1] for leaves {sorted(bad)}")
    priors = {v: float(leaf_priors[v]) for v in graph.leaves}
    return OrGateNet(graph, priors)


def _check_nodes(graph: WastewaterGraph, nodes) -> None:
    unknown = [w for w in nodes if w not in graph]
    if unknown:
        raise NetworkError("unknown sensor node", unknown)


def simulate_observations(net: OrGateNet, scenario: Mapping[int, bool], placement) -> dict[int, bool]:
    """Noise-free readings: a sensor reads True iff any upstream leaf is infected."""
    graph = net.graph
    _check_nodes(graph, placement)
    missing = [v for v in graph.leaves if v not in scenario]
    if missing:
        raise ValueError(f"scenario missing leaves {missing}")
    return {w: any(scenario[l] for l in graph.upstream_leaves(w)) for w in placement}


def posterior(net: OrGateNet, observations: Mapping[int, bool]) -> dict[int, float]:
    """Exact P(leaf infected | readings) for every leaf.

    Upward pass: for each node, the probability of the readings inside its
    upstream subtree jointly with the node being False / True. Downward
    pass: the matching outside factors. Products of non-negative terms
    only, so no cancellation.
    """
    graph = net.graph
    _check_nodes(graph, observations)
    priors = net.leaf_priors
    upstream = graph.upstream
    zf: dict[int, float] = {}
    zt: dict[int, float] = {}

    for v in graph.postorder:
        if graph.kinds[v] == LEAF:
            f, t = 1.0 - priors[v], priors[v]
        else:
            f, t = _or_messages([zf[u] for u in upstream[v]], [zt[u] for u in upstream[v]])
        obs = observations.get(v)
        if obs is True:
            f = 0.0
        elif obs is False:
            t = 0.0
        zf[v], zt[v] = f, t

    evidence = zf[graph.root] + zt[graph.root]
    if evidence <= 0.0:
        raise ZeroProbabilityEvidence(f"readings {dict(observations)} have probability zero under the priors")

    of = {graph.root: 1.0}
    ot = {graph.root: 1.0}
    for v in reversed(graph.postorder):
        parents = upstream[v]
        if not parents:
            continue
        obs = observations.get(v)
        a = 0.0 if obs is True else of[v]
        t = 0.0 if obs is False else ot[v]
        fs = [zf[u] for u in parents]
        ts = [zt[u] for u in parents]
        for i, u in enumerate(parents):
            rest_f = fs[:i] + fs[i + 1:]
            rest_t = ts[:i] + ts[i + 1:]
            phi, some = _or_messages(rest_f, rest_t)
            of[u] = a * phi + t * some
            ot[u] = t * (phi + some)

    # clip the last-ulp rounding that can push a certain leaf just past 1
    return {l: min(1.0, zt[l] * ot[l] / evidence) for l in graph.leaves}


def _or_messages(fs: list[float], ts: list[float]) -> tuple[float, float]:
    """(P(all False), P(at least one True)) for independent inputs.

    The second term is the telescoped sum over the first True input, which
    avoids computing ``prod(f + t) - prod(f)``.
    """
    all_false = 1.0
    some_true = 0.0
    for f, t in zip(fs, ts):
        some_true = some_true * (f + t) + all_false * t
        all_false *= f
    return all_false, some_true


def posterior_bruteforce(net: OrGateNet, observations: Mapping[int, bool]) -> dict[int, float]:
    """Posterior by summing prior mass over every leaf assignment."""
    graph = net.graph
    _check_nodes(graph, observations)
    leaves = graph.leaves
    n = len(leaves)
    if n > BRUTEFORCE_MAX_LEAVES:
        raise ValueError(f"brute force is capped at {BRUTEFORCE_MAX_LEAVES} leaves, got {n}")
    index = {l: i for i, l in enumerate(leaves)}
    p = np.array([net.leaf_priors[l] for l in leaves])
    obs_masks = [
        (np.array([index[l] for l in graph.upstream_leaves(w)]), bool(val))
        for w, val in sorted(observations.items())
    ]

    total = 0.0
    joint = np.zeros(n)
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        bits = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
        weight = np.prod(np.where(bits, p, 1.0 - p), axis=1)
        ok = np.ones(len(codes), dtype=bool)
        for idx, val in obs_masks:
            ok &= bits[:, idx].any(axis=1) == val
        weight = weight * ok
        total += weight.sum()
        joint += weight @ bits
    if total <= 0.0:
        raise ZeroProbabilityEvidence(f"readings {dict(observations)} have probability zero under the priors")
    return {l: float(joint[index[l]] / total) for l in leaves}


def predict(posteriors: Mapping[int, float], detection_threshold: float = 0.5) -> dict[int, bool]:
    """Flag a building as infected when its posterior strictly exceeds the threshold."""
    if not 0.0 <= detection_threshold < 1.0:
        raise ValueError("detection threshold must lie in [0, 1)")
    return {l: prob > detection_threshold for l, prob in posteriors.items()}
