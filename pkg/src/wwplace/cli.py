"""Command-line entry point: ``wwplace <command> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .bayes import build_bayes_net, posterior, predict
from .bench import (
    DEFAULT_THRESHOLD,
    SWEEP_AXES,
    RandomGraphSpec,
    SweepSpec,
    build_instance,
    campus_network,
    random_graph_benchmark,
    random_tree,
    run_sweep,
    sweep_csv,
)
from .network import export_dot, load_network, network_document, reduce
from .objective import COVERAGE_MODES, METRICS, ObjectiveConfig, add_objective
from .optimizer import OPTIMIZERS, greedy_remove, optimize
from .scenario import DEFAULT_BETA, SOURCES, leaf_priors, sample_batch_hydraulics, sample_scenarios, save_batch

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("wwplace")

THREADS_ENV = "WWPLACE_THREADS"


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _manifest(args, outputs, **extra) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    return {"command": args.command, "version": __version__, "config": config, "outputs": sorted(map(str, outputs)), **extra}


def _node_list(text: str | None) -> list[int]:
    if not text:
        return []
    path = Path(text)
    if path.suffix == ".json" and path.exists():
        data = json.loads(path.read_text())
        return [int(v) for v in (data["nodes"] if isinstance(data, dict) else data)]
    return [int(v) for v in text.split(",") if v.strip()]


def _objective_config(args) -> ObjectiveConfig:
    lam = args.lam
    threshold = args.conc_threshold
    if args.objective == "score":
        lam = 1.0 if lam is None else lam
        threshold = None
    elif args.objective == "coverage":
        threshold = None
    elif threshold is None:
        threshold = DEFAULT_THRESHOLD
    return ObjectiveConfig(
        metric=args.metric,
        lam=0.5 if lam is None else lam,
        concentration_threshold=threshold,
        detection_threshold=args.detection_threshold,
        coverage_mode=args.coverage_mode,
        conjunctive=args.conjunctive,
    )


def _instance(args):
    graph, attrs = load_network(args.network)
    return build_instance(graph, attrs, args.scenarios, args.seed, args.source, args.beta, not args.no_reduce)


def _candidates(graph, args, exclude=()):
    pool = graph.junctions if args.candidates == "junctions" else graph.nodes
    return [v for v in pool if v not in set(exclude)]


def _emit_placement(args, instance, config, evaluator, nodes, trace, out: Path, **extra):
    report = evaluator.report(nodes)
    original, _ = load_network(args.network)
    payload = {
        "nodes": list(nodes),
        "k": args.k,
        "objective": config.to_json(),
        "report": report.to_json(),
        **extra,
    }
    outputs = [out / "placement.json", out / "trace.csv", out / "placement.dot"]
    _write_json(outputs[0], payload)
    _write_text(outputs[1], trace.to_csv())
    pops = {v: instance.attrs[v].population for v in instance.graph.leaves}
    _write_text(outputs[2], export_dot(original if args.dot_original else instance.graph, highlight=nodes, populations=pops))
    _write_json(out / "manifest.json", _manifest(args, outputs, seeds={"scenarios": args.seed, "optimizer": args.opt_seed}))
    print(json.dumps({"nodes": list(nodes), **report.to_json()}))


def cmd_place(args) -> None:
    instance = _instance(args)
    config = _objective_config(args)
    evaluator = instance.evaluator(config)
    placement, trace = optimize(
        args.optimizer, evaluator, _candidates(instance.graph, args), args.k, args.epsilon, args.delta, args.opt_seed
    )
    _emit_placement(args, instance, config, evaluator, placement.nodes, trace, Path(args.out))


def cmd_add(args) -> None:
    instance = _instance(args)
    config = _objective_config(args)
    evaluator = instance.evaluator(config)
    current = _node_list(args.current)
    if len(current) >= args.k:
        raise UsageError(f"--k ({args.k}) must exceed the {len(current)} existing sensors")
    # removed pass-through nodes are replaced by their equivalent kept node
    _, mapping = reduce(load_network(args.network)[0]) if not args.no_reduce else (None, None)
    if mapping is not None:
        current = [mapping.representative(v) for v in current]
    added = add_objective(evaluator, current)
    extra, trace = optimize(
        args.optimizer, added, _candidates(instance.graph, args, current), args.k - len(current),
        args.epsilon, args.delta, args.opt_seed,
    )
    nodes = tuple(current) + extra.nodes
    _emit_placement(args, instance, config, evaluator, nodes, trace, Path(args.out), existing=current)


def cmd_remove(args) -> None:
    instance = _instance(args)
    config = _objective_config(args)
    evaluator = instance.evaluator(config)
    current = _node_list(args.current)
    if args.k > len(current):
        raise UsageError(f"--k ({args.k}) exceeds the {len(current)} existing sensors")
    if not args.no_reduce:
        _, mapping = reduce(load_network(args.network)[0])
        current = list(dict.fromkeys(mapping.representative(v) for v in current))
    kept, trace = greedy_remove(evaluator, current, len(current) - args.k)
    removed = [v for v in current if v not in kept.nodes]
    _emit_placement(args, instance, config, evaluator, kept.nodes, trace, Path(args.out), removed=removed)


def cmd_localize(args) -> None:
    graph, attrs = load_network(args.network)
    net = build_bayes_net(graph, leaf_priors(attrs, args.beta))
    raw = json.loads(Path(args.observations).read_text())
    observations = {}
    for key, value in raw.items():
        if not isinstance(value, bool):
            raise UsageError(f"observation for node {key} must be true or false")
        observations[int(key)] = value
    sensors = _node_list(args.placement)
    unsensed = sorted(set(observations) - set(sensors)) if sensors else []
    if unsensed:
        raise UsageError(f"observations at nodes without sensors: {unsensed}")
    probs = posterior(net, observations)
    preds = predict(probs, args.detection_threshold)
    out = Path(args.out)
    outputs = [out / "posterior.json", out / "predictions.json"]
    _write_json(outputs[0], {str(k): v for k, v in probs.items()})
    _write_json(outputs[1], {str(k): v for k, v in preds.items()})
    _write_json(out / "manifest.json", _manifest(args, outputs))
    print(json.dumps({"posterior": {str(k): v for k, v in probs.items()}, "outbreak": sorted(k for k, v in preds.items() if v)}))


def cmd_reduce(args) -> None:
    graph, attrs = load_network(args.network)
    reduced, mapping = reduce(graph)
    out = Path(args.out)
    _write_json(out, network_document(reduced, attrs))
    map_path = Path(args.map) if args.map else out.with_name(out.stem + ".map.json")
    _write_json(map_path, mapping.to_json())
    print(f"{len(graph)} nodes -> {len(reduced)} nodes ({len(graph) - len(reduced)} pass-through removed)")


def cmd_scenarios(args) -> None:
    graph, attrs = load_network(args.network)
    attrs = {v: attrs[v] for v in graph.leaves}
    batch = sample_scenarios(attrs, args.count, args.seed, args.source, args.beta)
    hydraulics = sample_batch_hydraulics(attrs, batch, args.beta) if args.hydraulics else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_batch(out, batch, hydraulics)
    _write_json(out.with_name(out.stem + ".manifest.json"), _manifest(args, [out], seeds={"scenarios": args.seed}))
    print(f"{len(batch)} scenarios, {int(batch.outbreaks.any(axis=1).sum())} with an outbreak")


def cmd_sweep(args) -> None:
    if args.network:
        graph, attrs = load_network(args.network)
    else:
        graph, attrs = random_tree(RandomGraphSpec(node_count=args.nodes, seed=args.graph_seed))
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.axis not in ("metric", "optimizer"):
        values = [float(v) for v in values]
    base = _objective_config(args)
    sweep = SweepSpec(
        axis=args.axis, values=tuple(values), base=base, k=args.k, scenarios=args.scenarios,
        seeds=tuple(int(s) for s in args.seeds.split(",")), optimizer=args.optimizer,
        epsilon=args.epsilon, delta=args.delta, junctions_only=args.candidates == "junctions", source=args.source,
    )
    rows = run_sweep(graph, attrs, sweep, args.beta, args.threads)
    out = Path(args.out)
    outputs = [out / "sweep.csv"]
    _write_text(outputs[0], sweep_csv(rows))
    placements = [{"value": r.value, "seed": r.seed, "nodes": list(r.placement)} for r in rows]
    _write_json(out / "manifest.json", _manifest(args, outputs, seeds={"scenarios": list(sweep.seeds)}, placements=placements))
    sys.stdout.write(sweep_csv(rows))


def cmd_randgraph(args) -> None:
    spec = RandomGraphSpec(
        node_count=args.nodes, redirect_prob=args.redirect_prob, redirect_direction=args.redirect_direction, seed=args.seed
    )
    graph, attrs = random_tree(spec)
    _write_json(Path(args.out), network_document(graph, attrs))
    print(f"{len(graph)} nodes, {len(graph.leaves)} buildings")


def cmd_campus(args) -> None:
    graph, attrs = campus_network(args.liters_per_person, args.infections_per_person)
    _write_json(Path(args.out), network_document(graph, attrs))
    print(f"{len(graph)} nodes, {len(graph.leaves)} buildings")


def cmd_benchmark(args) -> None:
    results = random_graph_benchmark(
        n_graphs=args.graphs, node_count=args.nodes, scenarios=args.scenarios, k=args.k,
        threshold=args.conc_threshold, noise_fraction=args.noise, random_trials=args.random_trials,
        seed=args.seed, optimizer=args.optimizer, beta=args.beta,
    )
    lines = ["graph_seed,solution,model,f1,coverage"]
    for r in results:
        for solution, model, values in (
            ("optimized", "nominal", r.optimized), ("random", "nominal", r.random),
            ("optimized", "perturbed", r.optimized_perturbed), ("random", "perturbed", r.random_perturbed),
        ):
            lines.append(f"{r.graph_seed},{solution},{model},{values['f1']:.17g},{values['coverage']:.17g}")
    out = Path(args.out)
    _write_text(out / "benchmark.csv", "\n".join(lines) + "\n")
    _write_json(out / "manifest.json", _manifest(args, [out / "benchmark.csv"], results=[asdict(r) for r in results]))
    print("\n".join(lines))


# -- argument parsing ------------------------------------------------------

def _add_instance_args(p, network_required=True):
    p.add_argument("--network", required=network_required, help="network JSON document")
    p.add_argument("--scenarios", type=int, default=1000, help="number of outbreak scenarios")
    p.add_argument("--seed", type=int, default=0, help="scenario seed")
    p.add_argument("--source", choices=SOURCES, default="poisson")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help="infections per resident when no rate is given")
    p.add_argument("--no-reduce", action="store_true", help="optimize on the unreduced graph")


def _add_objective_args(p):
    p.add_argument("--objective", choices=("score", "coverage", "thresholded"), default="thresholded")
    p.add_argument("--metric", choices=METRICS, default="f1")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="score weight; 1 = score only, 0 = coverage only (default 0.5, or 1 for --objective score)")
    p.add_argument("--conc-threshold", type=float, default=None,
                   help="minimum copies/L at a detecting sensor, inclusive (default 4.8e5 for thresholded)")
    p.add_argument("--detection-threshold", type=float, default=0.5, help="posterior above which a building is flagged")
    p.add_argument("--coverage-mode", choices=COVERAGE_MODES, default="all_sources")
    p.add_argument("--conjunctive", action="store_true", help="every positive sensor must meet the threshold")


def _add_optimizer_args(p):
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="naive")
    p.add_argument("--epsilon", type=float, default=0.1, help="approx_lazy slack")
    p.add_argument("--delta", type=float, default=0.01, help="stochastic greedy failure probability")
    p.add_argument("--opt-seed", type=int, default=0, help="stochastic greedy seed")
    p.add_argument("--candidates", choices=("all", "junctions"), default="all")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wwplace", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON/TOML file (or a manifest) supplying option defaults")
        p.set_defaults(func=func)
        return p

    for name, func, text in (
        ("place", cmd_place, "optimize a fresh sensor placement"),
        ("add", cmd_add, "extend an existing placement"),
        ("remove", cmd_remove, "drop sensors from an existing placement"),
    ):
        p = command(name, func, text)
        _add_instance_args(p)
        _add_objective_args(p)
        _add_optimizer_args(p)
        p.add_argument("--k", type=int, default=6, help="sensor budget (final placement size)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--dot-original", action="store_true", help="render the unreduced network")
        if name != "place":
            p.add_argument("--current", required=True, help="existing sensors: comma list or placement JSON")

    p = command("localize", cmd_localize, "posterior outbreak probabilities from sensor readings")
    p.add_argument("--network", required=True)
    p.add_argument("--observations", required=True, help="JSON map node id -> true/false")
    p.add_argument("--placement", help="sensor nodes (comma list or placement JSON) to validate readings against")
    p.add_argument("--detection-threshold", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--out", default="out")

    p = command("reduce", cmd_reduce, "remove pass-through nodes")
    p.add_argument("--network", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--map", help="reduction map path (default <out>.map.json)")

    p = command("scenarios", cmd_scenarios, "sample an outbreak scenario batch")
    p.add_argument("--network", required=True)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source", choices=SOURCES, default="poisson")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--hydraulics", action="store_true", help="include flow and copy draws")
    p.add_argument("--out", required=True)

    p = command("sweep", cmd_sweep, "benchmark sweep over one parameter")
    _add_instance_args(p, network_required=False)
    _add_objective_args(p)
    _add_optimizer_args(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--seeds", default="0", help="comma-separated scenario seeds")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--nodes", type=int, default=25, help="random network size when --network is absent")
    p.add_argument("--graph-seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=int(os.environ.get(THREADS_ENV, "1")))
    p.add_argument("--out", default="out")

    p = command("randgraph", cmd_randgraph, "generate a random network")
    p.add_argument("--nodes", type=int, default=25)
    p.add_argument("--redirect-prob", type=float, default=0.2)
    p.add_argument("--redirect-direction", choices=("upstream", "downstream"), default="upstream")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = command("campus", cmd_campus, "write the synthetic 35-node campus network")
    p.add_argument("--liters-per-person", type=float, default=60.0)
    p.add_argument("--infections-per-person", type=float, default=2e-4)
    p.add_argument("--out", required=True)

    p = command("benchmark", cmd_benchmark, "optimized vs random placements on random networks")
    p.add_argument("--graphs", type=int, default=20)
    p.add_argument("--nodes", type=int, default=25)
    p.add_argument("--scenarios", type=int, default=500)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--conc-threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--random-trials", type=int, default=20)
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="naive")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    return parser


def _load_config(path: str) -> dict:
    text = Path(path).read_text()
    data = tomllib.loads(text) if path.endswith(".toml") else json.loads(text)
    if "config" in data and "command" in data:
        data = data["config"]
    return {k.replace("-", "_"): v for k, v in data.items() if k not in ("command", "func")}


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    config_path = pre.parse_known_args(argv)[0].config
    command = next((a for a in argv if not a.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if config_path and command in subparsers:
        defaults = _load_config(config_path)
        sub = subparsers[command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - known - {"verbose"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
        sub.set_defaults(**{k: v for k, v in defaults.items() if k in known})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except (UsageError, OSError, json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
