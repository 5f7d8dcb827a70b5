"""Wastewater network graphs: validation, pass-through reduction and I/O.

A network is a reverse directed tree. Edges point along the flow, from the
buildings (leaves) toward a single root (the treatment plant). In the
Bayesian-network vocabulary the *parents* of a node are its upstream
neighbours; the node's unique *child* is the downstream neighbour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

LEAF = "leaf"
JUNCTION = "junction"


class NetworkError(ValueError):
    """Invalid network structure or document. ``nodes`` lists the offenders."""

    def __init__(self, message: str, nodes: Iterable[int] = ()):
        self.nodes = tuple(sorted(set(nodes)))
        if self.nodes:
            message = f"{message} (nodes: {', '.join(map(str, self.nodes))})"
        super().__init__(message)


@dataclass(frozen=True)
class LeafAttributes:
    population: float = 0.0
    flow_mean: float | None = None
    flow_std: float = 0.0
    outbreak_prior: float | None = None
    poisson_rate: float | None = None

    def __post_init__(self):
        if self.population < 0:
            raise ValueError("population must be non-negative")
        if self.flow_std < 0:
            raise ValueError("flow_std must be non-negative")
        if self.outbreak_prior is not None and not 0.0 <= self.outbreak_prior <= 1.0:
            raise ValueError("outbreak_prior must lie in [0, 1]")
        if self.poisson_rate is not None and self.poisson_rate < 0:
            raise ValueError("poisson_rate must be non-negative")


@dataclass(frozen=True)
class WastewaterGraph:
    """Immutable reverse directed tree.

    Construction validates every structural invariant; an invalid
    combination of ``kinds`` and ``edges`` raises :class:`NetworkError`.
    """

    kinds: Mapping[int, str]
    edges: tuple[tuple[int, int], ...]
    root: int = field(init=False)

    def __post_init__(self):
        kinds = dict(sorted(self.kinds.items()))
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        object.__setattr__(self, "root", _validate(kinds, self.edges))

    # -- structure ------------------------------------------------------
    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(self.kinds)

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(v for v, k in self.kinds.items() if k == LEAF)

    @cached_property
    def junctions(self) -> tuple[int, ...]:
        return tuple(v for v, k in self.kinds.items() if k == JUNCTION)

    @cached_property
    def downstream(self) -> dict[int, int]:
        """Map each non-root node to the node its flow drains into."""
        return {u: v for u, v in self.edges}

    @cached_property
    def upstream(self) -> dict[int, tuple[int, ...]]:
        """Map each node to its parents (upstream neighbours), ascending."""
        ups: dict[int, list[int]] = {v: [] for v in self.kinds}
        for u, v in self.edges:
            ups[v].append(u)
        return {v: tuple(sorted(us)) for v, us in ups.items()}

    def in_degree(self, node: int) -> int:
        return len(self.upstream[node])

    def out_degree(self, node: int) -> int:
        return 0 if node == self.root else 1

    @cached_property
    def postorder(self) -> tuple[int, ...]:
        """Nodes ordered so every node comes after all of its parents."""
        order: list[int] = []
        stack = [(self.root, False)]
        while stack:
            v, done = stack.pop()
            if done:
                order.append(v)
                continue
            stack.append((v, True))
            for u in reversed(self.upstream[v]):
                stack.append((u, False))
        return tuple(order)

    @cached_property
    def _upstream_leaf_sets(self) -> dict[int, frozenset[int]]:
        sets: dict[int, frozenset[int]] = {}
        for v in self.postorder:
            if self.kinds[v] == LEAF:
                sets[v] = frozenset((v,))
            else:
                sets[v] = frozenset().union(*(sets[u] for u in self.upstream[v]))
        return sets

    def upstream_leaves(self, node: int) -> frozenset[int]:
        """Leaves whose wastewater passes through ``node`` (a leaf maps to itself)."""
        try:
            return self._upstream_leaf_sets[node]
        except KeyError:
            raise NetworkError("unknown node id", [node]) from None

    def path_to_root(self, node: int) -> list[int]:
        if node not in self.kinds:
            raise NetworkError("unknown node id", [node])
        path = [node]
        while path[-1] != self.root:
            path.append(self.downstream[path[-1]])
        return path

    def __contains__(self, node: object) -> bool:
        return node in self.kinds

    def __len__(self) -> int:
        return len(self.kinds)


def _validate(kinds: Mapping[int, str], edges: Iterable[tuple[int, int]]) -> int:
    bad_ids = [v for v in kinds if not isinstance(v, int) or isinstance(v, bool) or v < 0]
    if bad_ids:
        raise NetworkError("node ids must be non-negative integers", [])
    bad_kind = [v for v, k in kinds.items() if k not in (LEAF, JUNCTION)]
    if bad_kind:
        raise NetworkError("node kind must be 'leaf' or 'junction'", bad_kind)
    if len(kinds) < 2:
        raise NetworkError("network needs at least two nodes")

    out_edges: dict[int, list[int]] = {v: [] for v in kinds}
    in_deg = dict.fromkeys(kinds, 0)
    seen: set[tuple[int, int]] = set()
    for u, v in edges:
        missing = [x for x in (u, v) if x not in kinds]
        if missing:
            raise NetworkError("edge references unknown node", missing)
        if u == v:
            raise NetworkError("self-loop", [u])
        if (u, v) in seen:
            raise NetworkError("parallel edge", [u, v])
        seen.add((u, v))
        out_edges[u].append(v)
        in_deg[v] += 1

    cycle = _find_cycle(out_edges)
    if cycle:
        raise NetworkError("cycle detected", cycle)
    branching = [v for v, outs in out_edges.items() if len(outs) > 1]
    if branching:
        raise NetworkError("non-root node with out-degree != 1", branching)
    roots = [v for v, outs in out_edges.items() if not outs]
    if len(roots) != 1:
        raise NetworkError(f"expected exactly one root, found {len(roots)}", roots)
    root = roots[0]

    wrong_leaf = [v for v, k in kinds.items() if k == LEAF and in_deg[v] != 0]
    if wrong_leaf:
        raise NetworkError("leaf nodes must have in-degree 0", wrong_leaf)
    wrong_junction = [v for v, k in kinds.items() if k == JUNCTION and in_deg[v] == 0]
    if wrong_junction:
        raise NetworkError("junction nodes must have in-degree >= 1", wrong_junction)
    return root


def _find_cycle(out_edges: Mapping[int, list[int]]) -> list[int]:
    colour = dict.fromkeys(out_edges, 0)
    for start in out_edges:
        if colour[start]:
            continue
        path = [start]
        iters = [iter(out_edges[start])]
        colour[start] = 1
        while iters:
            nxt = next(iters[-1], None)
            if nxt is None:
                colour[path.pop()] = 2
                iters.pop()
            elif colour[nxt] == 1:
                return path[path.index(nxt):]
            elif colour[nxt] == 0:
                colour[nxt] = 1
                path.append(nxt)
                iters.append(iter(out_edges[nxt]))
    return []


# -- reduction -------------------------------------------------------------

@dataclass(frozen=True)
class ReductionMap:
    kept: frozenset[int]
    removed_to_representative: Mapping[int, int]

    def representative(self, node: int) -> int:
        return node if node in self.kept else self.removed_to_representative[node]

    def to_json(self) -> dict:
        return {
            "kept": sorted(self.kept),
            "removed_to_representative": {
                str(k): v for k, v in sorted(self.removed_to_representative.items())
            },
        }


def _is_pass_through(upstream: Mapping[int, list[int]], downstream: Mapping[int, int], v: int) -> bool:
    return len(upstream[v]) == 1 and v in downstream


def reduce(graph: WastewaterGraph, order: Iterable[int] | None = None) -> tuple[WastewaterGraph, ReductionMap]:
    """Remove every node with exactly one parent and one child.

    Each removed node's parent is wired straight to its child. The sweep
    restarts after each removal until no candidate is left; ``order`` sets
    the scan order (ascending ids by default). Removals are local, so the
    fixed point does not depend on the order.
    """
    upstream = {v: list(us) for v, us in graph.upstream.items()}
    downstream = dict(graph.downstream)
    removed: list[int] = []
    scan = list(graph.nodes if order is None else order)
    if sorted(scan) != list(graph.nodes):
        raise ValueError("order must be a permutation of the graph's nodes")

    alive = set(graph.nodes)
    changed = True
    while changed:
        changed = False
        for v in scan:
            if v in alive and _is_pass_through(upstream, downstream, v):
                parent, child = upstream[v][0], downstream[v]
                downstream[parent] = child
                upstream[child] = [parent if u == v else u for u in upstream[child]]
                del downstream[v], upstream[v]
                alive.discard(v)
                removed.append(v)
                changed = True
                break

    kinds = {v: graph.kinds[v] for v in graph.nodes if v in alive}
    reduced = WastewaterGraph(kinds, tuple(downstream.items()))

    rep = {}
    for v in removed:
        u = v
        while u not in alive:
            (u,) = graph.upstream[u]
        rep[v] = u
    return reduced, ReductionMap(frozenset(alive), rep)


# -- documents -------------------------------------------------------------

_ATTR_KEYS = ("population", "flow_mean", "flow_std", "outbreak_prior", "poisson_rate")


def parse_network(document: Mapping) -> tuple[WastewaterGraph, dict[int, LeafAttributes]]:
    """Build a graph and its leaf attributes from a network document (parsed JSON)."""
    try:
        raw_nodes = document["nodes"]
        raw_edges = document["edges"]
    except (KeyError, TypeError):
        raise NetworkError("document must contain 'nodes' and 'edges' lists") from None

    kinds: dict[int, str] = {}
    attrs: dict[int, LeafAttributes] = {}
    junction_attrs = []
    dupes = []
    for entry in raw_nodes:
        try:
            nid, kind = entry["id"], entry["kind"]
        except (KeyError, TypeError):
            raise NetworkError(f"node entry missing 'id' or 'kind': {entry!r}") from None
        if not isinstance(nid, int) or isinstance(nid, bool) or nid < 0:
            raise NetworkError(f"node id must be a non-negative integer, got {nid!r}")
        if nid in kinds:
            dupes.append(nid)
        kinds[nid] = kind
        present = {k: entry[k] for k in _ATTR_KEYS if entry.get(k) is not None}
        if kind == JUNCTION and present:
            junction_attrs.append(nid)
        elif kind == LEAF:
            if "outbreak_prior" not in present and "poisson_rate" not in present and "population" not in present:
                continue
            try:
                attrs[nid] = LeafAttributes(**{k: float(x) for k, x in present.items()})
            except (ValueError, TypeError) as exc:
                raise NetworkError(f"bad leaf attributes: {exc}", [nid]) from None
    if dupes:
        raise NetworkError("duplicate node id", dupes)
    if junction_attrs:
        raise NetworkError("attributes given on junction nodes", junction_attrs)

    edges = []
    for e in raw_edges:
        try:
            edges.append((int(e["from"]), int(e["to"])))
        except (KeyError, TypeError, ValueError):
            raise NetworkError(f"malformed edge entry: {e!r}") from None

    graph = WastewaterGraph(kinds, tuple(edges))
    missing = [v for v in graph.leaves if v not in attrs]
    if missing:
        raise NetworkError("missing leaf attributes (need outbreak_prior, poisson_rate or population)", missing)
    return graph, attrs


def load_network(path: str | Path) -> tuple[WastewaterGraph, dict[int, LeafAttributes]]:
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkError(f"cannot parse network document {path}: {exc}") from None
    return parse_network(document)


def network_document(graph: WastewaterGraph, attrs: Mapping[int, LeafAttributes] | None = None) -> dict:
    attrs = attrs or {}
    nodes = []
    for v, kind in graph.kinds.items():
        entry: dict = {"id": v, "kind": kind}
        if kind == LEAF and v in attrs:
            for k in _ATTR_KEYS:
                value = getattr(attrs[v], k)
                if value is not None:
                    entry[k] = value
        nodes.append(entry)
    return {"nodes": nodes, "edges": [{"from": u, "to": v} for u, v in graph.edges]}


def subset_attributes(attrs: Mapping[int, LeafAttributes], graph: WastewaterGraph) -> dict[int, LeafAttributes]:
    return {v: attrs[v] for v in graph.leaves}


def with_population(attr: LeafAttributes, population: float, **changes) -> LeafAttributes:
    return replace(attr, population=population, **changes)


# -- DOT -------------------------------------------------------------------

def export_dot(
    graph: WastewaterGraph,
    highlight: Iterable[int] = (),
    labels: Mapping[int, str] | None = None,
    populations: Mapping[int, float] | None = None,
    name: str = "wastewater",
) -> str:
    """Render the graph as Graphviz DOT text.

    Highlighted nodes (sensor placements) get a filled red style. When
    ``populations`` is given, leaf labels carry their share of the total
    population as a percentage with two decimals.
    """
    highlight = set(highlight)
    labels = dict(labels or {})
    unknown = (highlight | set(labels)) - set(graph.kinds)
    if unknown:
        raise NetworkError("annotation references unknown node", unknown)
    total = sum(populations.values()) if populations else 0.0

    lines = [f"digraph {name} {{", "  rankdir=BT;"]
    for v, kind in graph.kinds.items():
        text = labels.get(v, str(v))
        if populations is not None and kind == LEAF:
            share = 100.0 * populations.get(v, 0.0) / total if total > 0 else 0.0
            text = f"{text}\\n{share:.2f}%"
        attrs = [f'label="{text}"', "shape=circle" if kind == LEAF else "shape=box"]
        attrs.append('color="blue"' if kind == LEAF else 'color="darkgreen"')
        if v in highlight:
            attrs.append('style="filled,bold" fillcolor="red"')
        lines.append(f"  {v} [{' '.join(attrs)}];")
    for u, v in graph.edges:
        lines.append(f"  {u} -> {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"
