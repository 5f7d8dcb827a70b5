"""Shared graph builders and independent reference implementations for tests."""

from __future__ import annotations

import itertools

import numpy as np

from wwplace.network import JUNCTION, LEAF, LeafAttributes, WastewaterGraph

# two buildings draining into j1, then into the root j2
L1, L2, J1, J2 = 0, 1, 2, 3


def two_building_graph() -> WastewaterGraph:
    return WastewaterGraph({L1: LEAF, L2: LEAF, J1: JUNCTION, J2: JUNCTION}, ((L1, J1), (L2, J1), (J1, J2)))


def graph_from_parents(parents: dict[int, int]) -> WastewaterGraph:
    """Tree from a child -> downstream map; nodes without upstream are leaves."""
    nodes = set(parents) | set(parents.values())
    has_up = set(parents.values())
    kinds = {v: JUNCTION if v in has_up else LEAF for v in nodes}
    return WastewaterGraph(kinds, tuple(parents.items()))


def random_parents(rng: np.random.Generator, n: int) -> dict[int, int]:
    """Recursive random tree on 0..n-1 rooted at 0 (ids shuffled)."""
    ids = rng.permutation(n).tolist()
    return {ids[i]: ids[int(rng.integers(i))] for i in range(1, n)}


def random_graph(rng: np.random.Generator, n: int) -> WastewaterGraph:
    return graph_from_parents(random_parents(rng, n))


def random_graph_max_leaves(rng: np.random.Generator, n: int, max_leaves: int) -> WastewaterGraph:
    while True:
        g = random_graph(rng, n)
        if len(g.leaves) <= max_leaves:
            return g


def reachable_leaves(graph: WastewaterGraph, node: int) -> set[int]:
    """Upstream leaves by walking every leaf's downstream path (independent of the library's sets)."""
    out = set()
    for leaf in graph.leaves:
        v = leaf
        while True:
            if v == node:
                out.add(leaf)
                break
            if v not in graph.downstream:
                break
            v = graph.downstream[v]
    return out


def enumerate_posterior(graph: WastewaterGraph, priors: dict[int, float], obs: dict[int, bool]) -> dict[int, float]:
    """Plain loop over every leaf assignment; written separately from the library oracle."""
    leaves = graph.leaves
    upstream = {w: reachable_leaves(graph, w) for w in obs}
    total = 0.0
    mass = dict.fromkeys(leaves, 0.0)
    for bits in itertools.product((0, 1), repeat=len(leaves)):
        state = dict(zip(leaves, bits))
        if any(any(state[l] for l in upstream[w]) != val for w, val in obs.items()):
            continue
        p = 1.0
        for l in leaves:
            p *= priors[l] if state[l] else 1.0 - priors[l]
        total += p
        for l in leaves:
            if state[l]:
                mass[l] += p
    return {l: mass[l] / total for l in leaves}


def leaf_attrs(graph: WastewaterGraph, prior: float = 0.2, flow: float = 1000.0, std: float = 0.0) -> dict:
    return {l: LeafAttributes(outbreak_prior=prior, flow_mean=flow, flow_std=std) for l in graph.leaves}
