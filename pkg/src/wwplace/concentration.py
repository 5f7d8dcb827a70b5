"""Mass-balance propagation of virus copies and flow through the network."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .network import LEAF, NetworkError, WastewaterGraph
from .scenario import HydraulicBatch, HydraulicDraw


@dataclass(frozen=True)
class PropagationResult:
    cum_copies: dict[int, float]
    cum_flow: dict[int, float]
    concentration: dict[int, float]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node", "cum_flow", "cum_copies", "concentration"])
        for v in sorted(self.cum_flow):
            writer.writerow([v, f"{self.cum_flow[v]:.17g}", f"{self.cum_copies[v]:.17g}", f"{self.concentration[v]:.17g}"])
        return buf.getvalue()


def propagate(graph: WastewaterGraph, draw: HydraulicDraw) -> PropagationResult:
    """Accumulate copies and flow from the leaves down to the root.

    A node's concentration is its cumulative copies over its cumulative
    flow, i.e. the flow-weighted mix of everything upstream.
    """
    missing = [v for v in graph.leaves if v not in draw.flows or v not in draw.copies]
    if missing:
        raise NetworkError("hydraulic draw is missing leaves", missing)
    copies: dict[int, float] = {}
    flow: dict[int, float] = {}
    conc: dict[int, float] = {}
    for v in graph.postorder:
        if graph.kinds[v] == LEAF:
            copies[v], flow[v] = float(draw.copies[v]), float(draw.flows[v])
        else:
            ups = graph.upstream[v]
            copies[v] = sum(copies[u] for u in ups)
            flow[v] = sum(flow[u] for u in ups)
        if flow[v] <= 0:
            raise NetworkError("non-positive cumulative flow", [v])
        conc[v] = copies[v] / flow[v]
    return PropagationResult(copies, flow, conc)


def meets_threshold(result: PropagationResult, node: int, threshold: float) -> bool:
    """Inclusive comparison: a concentration equal to the threshold is detectable."""
    if node not in result.concentration:
        raise NetworkError("unknown node", [node])
    return result.concentration[node] >= threshold


def leaf_membership(graph: WastewaterGraph) -> np.ndarray:
    """Boolean ``(nodes, leaves)`` matrix: entry [v, l] is True when leaf l drains through v."""
    index = {l: j for j, l in enumerate(graph.leaves)}
    member = np.zeros((len(graph), len(graph.leaves)), dtype=bool)
    for i, v in enumerate(graph.nodes):
        for l in graph.upstream_leaves(v):
            member[i, index[l]] = True
    return member


def propagate_batch(graph: WastewaterGraph, hydraulics: HydraulicBatch) -> np.ndarray:
    """Concentration at every node for every scenario, shape ``(scenarios, nodes)``."""
    if hydraulics.leaves != graph.leaves:
        raise ValueError("hydraulic draws and graph cover different leaves")
    member = leaf_membership(graph).T.astype(float)
    flow = hydraulics.flows @ member
    if (flow <= 0).any():
        raise ValueError("non-positive cumulative flow")
    return (hydraulics.copies @ member) / flow
