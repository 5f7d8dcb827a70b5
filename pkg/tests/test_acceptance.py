"""Acceptance criteria, one test per criterion (4 split into its three claims).

Each test records a short ``detail`` line; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the run.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import acceptance_suite as suite

ONE_MINUS_INV_E = 1 - 1 / 2.718281828459045


def test_criterion_01_inference_oracle(record_property):
    """1 exact posterior equals brute force within 1e-9 on 200 random instances, < 30 s"""
    r = suite.result("c1")
    seconds = suite.elapsed("c1")
    record_property("detail", f"max |err| = {r['max_abs_error']:.2e} over {r['instances']} instances, {seconds:.1f} s")
    assert r["instances"] == 200
    assert r["max_abs_error"] <= 1e-9
    assert seconds < 30


def test_criterion_02_reduction(record_property):
    """2 reduction leaves no pass-through nodes, keeps upstream leaves, is idempotent"""
    r = suite.result("c2")
    from helpers import graph_from_parents
    from wwplace.network import reduce

    # l1, l2 -> j1 -> j2 -> j3: exactly j2 goes
    _, mapping = reduce(graph_from_parents({0: 2, 1: 2, 2: 3, 3: 4}))
    record_property("detail", f"{r['graphs']} graphs, {r['removed_total']} nodes removed, failures {r['failures']}")
    assert r["failures"] == []
    assert set(mapping.removed_to_representative) == {3}


def test_criterion_03_mass_conservation(record_property):
    """3 root totals equal leaf sums within 1e-9 relative; junctions mix within parent range"""
    r = suite.result("c3")
    record_property(
        "detail",
        f"flow err {r['flow_rel_error']:.1e}, copies err {r['copies_rel_error']:.1e}, "
        f"range violations {r['range_violations']}",
    )
    assert r["flow_rel_error"] <= 1e-9
    assert r["copies_rel_error"] <= 1e-9
    assert r["range_violations"] == 0


def test_criterion_04a_lazy_matches_naive(record_property):
    """4a lazy greedy returns the naive placement on 20 benchmark instances"""
    r = suite.result("c4")
    violations = sum(row["bound_violations"] for row in r["instances"])
    record_property(
        "detail",
        f"identical on {r['lazy_equal']}/20, lazy/naive value >= {r['min_lazy_over_naive']:.3f}, "
        f"{violations} diminishing-returns violations observed",
    )
    assert r["lazy_equal"] == 20


def test_criterion_04b_approx_lazy_eps0_matches_lazy(record_property):
    """4b approximate-lazy with epsilon 0 returns the lazy placement"""
    r = suite.result("c4")
    record_property("detail", f"identical on {r['approx0_equal_lazy']}/20")
    assert r["approx0_equal_lazy"] == 20


def test_criterion_04c_stochastic_near_naive(record_property):
    """4c stochastic greedy (delta 0.01, 20 seeds) averages >= 0.95 of naive"""
    r = suite.result("c4")
    record_property("detail", f"stochastic / naive = {r['stochastic_ratio']:.4f}")
    assert r["stochastic_ratio"] >= 0.95


def test_criterion_05_greedy_vs_optimum(record_property):
    """5 naive greedy >= (1 - 1/e) of the exhaustive optimum on 20 small instances, < 2 min"""
    r = suite.result("c5")
    seconds = suite.elapsed("c5")
    record_property("detail", f"min greedy/OPT = {r['min_ratio']:.4f}, {seconds:.1f} s")
    assert len(r["instances"]) == 20
    assert all(row["nodes"] <= 12 and row["k"] <= 3 for row in r["instances"])
    assert r["min_ratio"] >= ONE_MINUS_INV_E
    assert seconds < 120


def test_criterion_06_metric_trend(record_property):
    """6 the placement optimized for each metric scores best on that metric"""
    r = suite.result("c6")
    table = r["table"]
    cells = ", ".join(
        f"{m}: own {table[m]['metrics'][m]:.4f} vs best other "
        f"{max(table[o]['metrics'][m] for o in table if o != m):.4f}"
        for m in table
    )
    record_property("detail", cells)
    assert all(r["matched"].values()), r["matched"]


def test_criterion_07_concentration_trend(record_property):
    """7 coverage non-increasing in the threshold; optimized beats root-only at 4.8e5"""
    r = suite.result("c7")
    cov = r["coverage"]
    record_property(
        "detail",
        f"coverage {[round(c, 3) for c in cov]}, root-only {r['root_only']:.3f} vs optimized {r['optimized']:.3f}, "
        f"root below threshold in {r['root_below_fraction']:.1%} of outbreak scenarios",
    )
    assert all(a >= b for a, b in zip(cov, cov[1:]))
    assert r["root_below_fraction"] >= 0.30
    assert r["optimized"] > r["root_only"]


def test_criterion_08_lambda_endpoints(record_property):
    """8 lambda=1 has the better mean score, lambda=0 the better coverage"""
    r = suite.result("c8")
    one, zero = r["1.0"], r["0.0"]
    record_property(
        "detail",
        f"score {one['score']:.4f} (l=1) vs {zero['score']:.4f} (l=0); "
        f"coverage {zero['coverage']:.4f} (l=0) vs {one['coverage']:.4f} (l=1)",
    )
    assert one["score"] >= zero["score"]
    assert zero["coverage"] >= one["coverage"]


def test_criterion_09_random_graph_robustness(record_property):
    """9 optimized beats random on 20 random graphs; perturbation costs < 20%"""
    r = suite.result("c9")
    f1, cov = r["f1"], r["coverage"]
    record_property(
        "detail",
        f"F1 {f1['optimized']:.3f} vs random {f1['random']:.3f}, coverage {cov['optimized']:.3f} vs {cov['random']:.3f}; "
        f"perturbed degradation F1 {f1['degradation']:+.1%}, coverage {cov['degradation']:+.1%}",
    )
    assert f1["optimized"] > f1["random"]
    assert cov["optimized"] > cov["random"]
    assert f1["degradation"] < 0.20
    assert cov["degradation"] < 0.20


def test_criterion_10_determinism_and_budget(record_property, tmp_path):
    """10 criteria 1-9 replay bit-for-bit from the seed manifest in under 10 minutes"""
    results = suite.run_all()
    total = sum(suite.elapsed(name) for name in suite.CRITERIA)
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(suite.MANIFEST))
    here = Path(__file__).parent
    replay = subprocess.run(
        [sys.executable, str(here / "acceptance_suite.py"), str(manifest)],
        capture_output=True, text=True, cwd=here, timeout=600,
    )
    assert replay.returncode == 0, replay.stderr
    expected = suite.digest(results)
    got = replay.stdout.strip().splitlines()[-1]
    record_property("detail", f"digest {expected[:12]} replay {got[:12]}, benchmark time {total:.1f} s")
    assert got == expected
    assert total < 600
