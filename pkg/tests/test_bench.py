from __future__ import annotations

import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wwplace.bench import (
    SWEEP_COLUMNS,
    RandomGraphSpec,
    SweepSpec,
    build_instance,
    campus_network,
    derive_seed,
    perturb_populations,
    random_placement,
    random_tree,
    run_sweep,
    sweep_csv,
)
from wwplace.network import LEAF, LeafAttributes, WastewaterGraph
from wwplace.objective import ObjectiveConfig


def test_two_node_tree():
    g, attrs = random_tree(RandomGraphSpec(node_count=2))
    assert g.edges == ((1, 0),)
    assert g.kinds[1] == LEAF and set(attrs) == {1}


def test_generated_corpus_is_valid():
    # WastewaterGraph validates on construction; spot-check the attributes too
    for seed in range(1000):
        g, attrs = random_tree(RandomGraphSpec(seed=seed))
        assert len(g) == 25 and g.root == 0
        assert set(attrs) == set(g.leaves)
        for a in attrs.values():
            assert 0 <= a.population <= 100 and 1000 <= a.flow_mean <= 3000
            assert a.flow_std == pytest.approx(0.1 * a.flow_mean)


def test_redirect_zero_is_uniform_attachment():
    # with no redirects every node drains into a uniformly drawn earlier node
    rng = np.random.default_rng(4)
    g, _ = random_tree(RandomGraphSpec(node_count=30, redirect_prob=0.0, seed=4))
    expected = {}
    for new in range(1, 30):
        expected[new] = int(rng.integers(new))
        rng.random()
    assert dict(g.downstream) == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.floats(0, 1), st.sampled_from(["upstream", "downstream"]), st.integers(0, 2**31))
def test_random_tree_invariants(n, p, direction, seed):
    spec = RandomGraphSpec(node_count=n, redirect_prob=p, redirect_direction=direction, seed=seed)
    g, attrs = random_tree(spec)
    assert isinstance(g, WastewaterGraph) and len(g) == n
    assert all(g.out_degree(v) == 1 for v in g.nodes if v != g.root)
    assert random_tree(spec) == (g, attrs)


def test_spec_validation():
    for kwargs in ({"node_count": 1}, {"redirect_prob": 1.5}, {"population_range": (5, 5)},
                   {"redirect_direction": "sideways"}):
        with pytest.raises(ValueError):
            RandomGraphSpec(**kwargs)


def test_perturbation():
    _, attrs = random_tree(RandomGraphSpec(seed=3))
    assert perturb_populations(attrs, 0.0, 1) == attrs
    a = perturb_populations(attrs, 0.5, 9)
    assert a == perturb_populations(attrs, 0.5, 9)
    for leaf in attrs:
        ratio = a[leaf].population / attrs[leaf].population
        assert 0.5 <= ratio <= 1.5
    explicit = {0: LeafAttributes(population=100.0, poisson_rate=0.2, flow_mean=1.0)}
    p = perturb_populations(explicit, 0.5, 2)[0]
    assert p.poisson_rate == pytest.approx(0.2 * p.population / 100.0)
    big = perturb_populations(attrs, 3.0, 1)
    assert all(v.population >= 0 for v in big.values())
    with pytest.raises(ValueError):
        perturb_populations(attrs, -0.1, 0)


def test_derive_seed_is_stable():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(0, 2)
    assert 0 <= derive_seed(123, 4, 5) < 2**63


def test_campus_network_shape():
    g, attrs = campus_network()
    assert len(g) == 35 and len(g.edges) == 34
    assert len(g.leaves) == 12
    assert all(attrs[l].poisson_rate > 0 for l in g.leaves)


def test_random_placement():
    p = random_placement(range(10), 4, 3)
    assert len(p) == 4 and p == random_placement(range(10), 4, 3)
    assert len(random_placement(range(3), 6, 0)) == 3


def small_sweep(axis, values, **kw):
    g, attrs = random_tree(RandomGraphSpec(node_count=12, seed=1))
    base = ObjectiveConfig(concentration_threshold=4.8e5)
    return g, attrs, SweepSpec(axis, tuple(values), base, k=3, scenarios=120, seeds=(0, 1), **kw)


def test_sweep_csv_layout_and_threads():
    g, attrs, sweep = small_sweep("lambda", [0.0, 0.5, 1.0])
    rows = run_sweep(g, attrs, sweep)
    text = sweep_csv(rows)
    table = list(csv.reader(io.StringIO(text)))
    assert tuple(table[0]) == SWEEP_COLUMNS
    assert len(table) == 1 + 2 * 3
    assert [r[1] for r in table[1:4]] == ["0", "0.5", "1"]
    threaded = run_sweep(g, attrs, sweep, threads=3)
    assert [r.placement for r in threaded] == [r.placement for r in rows]
    strip = lambda t: [r[:8] + r[9:] for r in csv.reader(io.StringIO(t))]
    assert strip(sweep_csv(threaded)) == strip(text)


def test_detection_threshold_sweep_keeps_placement():
    g, attrs, sweep = small_sweep("detection_threshold", [0.0, 0.25, 0.5])
    rows = run_sweep(g, attrs, sweep)
    for seed in (0, 1):
        assert len({r.placement for r in rows if r.seed == seed}) == 1


def test_sweep_validation():
    with pytest.raises(ValueError):
        SweepSpec("metric", ())
    with pytest.raises(ValueError):
        SweepSpec("metric", ("auc",))
    with pytest.raises(ValueError):
        SweepSpec("optimizer", ("anneal",))
    with pytest.raises(ValueError):
        SweepSpec("lambda", (2.0,))
    with pytest.raises(ValueError):
        SweepSpec("speed", (1,))


def test_instance_reduces_and_keeps_model_on_rescenario():
    g, attrs = campus_network()
    inst = build_instance(g, attrs, 50, 0)
    assert len(inst.graph) == 20
    other = inst.with_scenarios(perturb_populations(inst.attrs, 0.5, 1), 50, 2)
    assert other.net is inst.net and other.graph is inst.graph
