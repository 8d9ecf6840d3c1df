"""Scenario files, experiment orchestration, and CSV emission.

Scenario files are versioned JSON documents (conventionally ``.scn``):

    {
      "version": 1,
      "name": "sixnode-fixed",
      "description": "...",
      "nodes": [0, 1, 2],
      "edges": [[0, 1, 15], [1, 2, "5/2"]],
      "commodities": [{"id": 0, "source": 0, "dest": 2,
                       "rate": 15.0, "dummy_packets": 0}],
      "initial_dag": "by_id" | "optimal" | [[tail, head], ...],
      "lfbp": {"thresholds": [60], "periods": [150, 50],
               "delta": null, "rescale_every": 32},
      "topology": {"fail_prob": 1e-4, "recover_prob": 1e-3} | null,
      "dummy_scale": null | 500,
      "load_factors": [0.5],
      "horizon": 200000,
      "seeds": [1]
    }

Capacities may be integers or fraction strings.  ``dummy_scale`` S adds
floor(S / rho) startup packets to every commodity source, lfbp runs only.

Summary CSV columns (one row per run):
    scenario,policy,rho,seed,horizon,arrivals,delivered,delivered_net,
    avg_backlog,avg_backlog_net,final_backlog,reversal_events,
    edges_reversed,topo_events,live_fraction
Bucketed trace CSV columns (optional, one row per slot bucket):
    slot_bucket,policy,load,total_backlog_avg,delivered,reversals,live_edges
Every row carries the seed needed to reproduce it exactly.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .graph import (
    InvariantViolation,
    Network,
    as_rational,
    erdos_renyi_network,
    orient_by_ranking,
)
from .flow import max_flow_undirected
from .protocol import LfbpParams
from .reversal import converge, default_max_iters
from .sim import (
    BUCKET_FIELDS,
    SUMMARY_FIELDS,
    CommoditySpec,
    MetricsReport,
    TopologyProcess,
    run,
)

SCHEMA_VERSION = 1


class ValidationError(ValueError):
    """A scenario file failed validation; the message names the field."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    network: Network
    commodities: tuple[CommoditySpec, ...]
    initial_dag: object  # "by_id" | "optimal" | tuple of (tail, head)
    lfbp_params: LfbpParams | None
    topology: TopologyProcess | None
    load_factors: tuple[float, ...]
    horizon: int
    seeds: tuple[int, ...]
    dummy_scale: float | None = None
    description: str = ""

    def with_lfbp_params(self, params: LfbpParams) -> "ScenarioConfig":
        return replace(self, lfbp_params=params)


def _field(data: dict, key: str, kind, where: str):
    if key not in data:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ValidationError(f"{where}.{key}: expected {kind}, got {type(value).__name__}")
    return value


def scenario_from_dict(data: dict, where: str = "scenario") -> ScenarioConfig:
    version = _field(data, "version", int, where)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"{where}.version: unsupported schema version {version}")
    name = _field(data, "name", str, where)
    nodes = _field(data, "nodes", list, where)
    raw_edges = _field(data, "edges", list, where)
    edges = []
    for pos, item in enumerate(raw_edges):
        if not isinstance(item, list) or len(item) != 3:
            raise ValidationError(f"{where}.edges[{pos}]: expected [i, j, capacity]")
        i, j, cap = item
        try:
            cap = as_rational(cap)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{where}.edges[{pos}].capacity: {exc}") from exc
        edges.append((i, j, cap))

    raw_commodities = _field(data, "commodities", list, where)
    if not raw_commodities:
        raise ValidationError(f"{where}.commodities: at least one commodity required")
    commodities = []
    for pos, item in enumerate(raw_commodities):
        cwhere = f"{where}.commodities[{pos}]"
        try:
            commodities.append(
                CommoditySpec(
                    id=_field(item, "id", int, cwhere),
                    source=_field(item, "source", int, cwhere),
                    dest=_field(item, "dest", int, cwhere),
                    rate=float(_field(item, "rate", (int, float), cwhere)),
                    dummy_packets=int(item.get("dummy_packets", 0)),
                )
            )
        except ValueError as exc:
            raise ValidationError(f"{cwhere}: {exc}") from exc

    try:
        network = Network.build(nodes, edges, commodities[0].source, commodities[0].dest)
    except ValueError as exc:
        raise ValidationError(f"{where}.edges: {exc}") from exc
    for pos, c in enumerate(commodities):
        if c.source not in network.nodes or c.dest not in network.nodes:
            raise ValidationError(f"{where}.commodities[{pos}]: unknown source/dest node")

    initial = data.get("initial_dag", "by_id")
    if isinstance(initial, list):
        pairs = []
        for pos, pair in enumerate(initial):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ValidationError(f"{where}.initial_dag[{pos}]: expected [tail, head]")
            pairs.append((pair[0], pair[1]))
        from .graph import orient_explicit

        try:
            orient_explicit(network, pairs)  # acyclicity / coverage check
        except ValueError as exc:
            raise ValidationError(f"{where}.initial_dag: {exc}") from exc
        initial = tuple(pairs)
    elif initial not in ("by_id", "optimal"):
        raise ValidationError(f"{where}.initial_dag: expected 'by_id', 'optimal' or pair list")

    lfbp_params = None
    if data.get("lfbp") is not None:
        lwhere = f"{where}.lfbp"
        raw = data["lfbp"]
        try:
            lfbp_params = LfbpParams(
                thresholds=tuple(as_rational(t) for t in raw.get("thresholds", [60])),
                periods=tuple(int(p) for p in raw.get("periods", [50])),
                delta=as_rational(raw["delta"]) if raw.get("delta") is not None else None,
                rescale_every=int(raw.get("rescale_every", 32)),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{lwhere}: {exc}") from exc

    topology = None
    if data.get("topology") is not None:
        twhere = f"{where}.topology"
        raw = data["topology"]
        try:
            topology = TopologyProcess(
                fail_prob=float(_field(raw, "fail_prob", (int, float), twhere)),
                recover_prob=float(_field(raw, "recover_prob", (int, float), twhere)),
            )
        except ValueError as exc:
            raise ValidationError(f"{twhere}: {exc}") from exc

    load_factors = tuple(float(r) for r in _field(data, "load_factors", list, where))
    if not load_factors or any(r <= 0 for r in load_factors):
        raise ValidationError(f"{where}.load_factors: all load factors must be > 0")
    horizon = _field(data, "horizon", int, where)
    if horizon < 0:
        raise ValidationError(f"{where}.horizon: must be nonnegative")
    seeds = tuple(int(s) for s in _field(data, "seeds", list, where))
    if not seeds:
        raise ValidationError(f"{where}.seeds: at least one seed required")
    dummy_scale = data.get("dummy_scale")
    if dummy_scale is not None:
        dummy_scale = float(dummy_scale)
        if dummy_scale < 0:
            raise ValidationError(f"{where}.dummy_scale: must be nonnegative")

    return ScenarioConfig(
        name=name,
        network=network,
        commodities=tuple(commodities),
        initial_dag=initial,
        lfbp_params=lfbp_params,
        topology=topology,
        load_factors=load_factors,
        horizon=horizon,
        seeds=seeds,
        dummy_scale=dummy_scale,
        description=str(data.get("description", "")),
    )


def scenario_to_dict(config: ScenarioConfig) -> dict:
    def cap_repr(c):
        return c if isinstance(c, int) else str(c)

    return {
        "version": SCHEMA_VERSION,
        "name": config.name,
        "description": config.description,
        "nodes": sorted(config.network.nodes),
        "edges": [[i, j, cap_repr(cap)] for (i, j), cap in sorted(config.network.capacity.items())],
        "commodities": [
            {
                "id": c.id,
                "source": c.source,
                "dest": c.dest,
                "rate": c.rate,
                "dummy_packets": c.dummy_packets,
            }
            for c in config.commodities
        ],
        "initial_dag": list(map(list, config.initial_dag))
        if isinstance(config.initial_dag, tuple)
        else config.initial_dag,
        "lfbp": None
        if config.lfbp_params is None
        else {
            "thresholds": [cap_repr(t) for t in config.lfbp_params.thresholds],
            "periods": list(config.lfbp_params.periods),
            "delta": cap_repr(config.lfbp_params.delta)
            if config.lfbp_params.delta is not None
            else None,
            "rescale_every": config.lfbp_params.rescale_every,
        },
        "topology": None
        if config.topology is None
        else {"fail_prob": config.topology.fail_prob, "recover_prob": config.topology.recover_prob},
        "dummy_scale": config.dummy_scale,
        "load_factors": list(config.load_factors),
        "horizon": config.horizon,
        "seeds": list(config.seeds),
    }


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    return scenario_from_dict(data, where=path.name)


def write_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(config), indent=2) + "\n")


def bundled_scenario(name: str) -> ScenarioConfig:
    """Load one of the scenarios shipped with the package."""
    ref = resources.files("lfbp").joinpath("scenarios", name)
    if not ref.is_file():
        raise ValidationError(f"no bundled scenario named {name!r}")
    return scenario_from_dict(json.loads(ref.read_text()), where=name)


def bundled_scenario_names() -> list[str]:
    folder = resources.files("lfbp").joinpath("scenarios")
    return sorted(p.name for p in folder.iterdir() if p.name.endswith(".scn"))


def _run_cell(args):
    config, policy, rho, seed, horizon, bucket = args
    return run(config, policy, horizon, rho=rho, seed=seed, bucket=bucket)


def sweep(
    config: ScenarioConfig,
    policies=("bp", "lfbp"),
    out_path=None,
    *,
    jobs: int = 1,
    horizon: int | None = None,
    bucket: int = 0,
) -> list[MetricsReport]:
    """Run every (load, policy, seed) cell and emit one summary row per run.

    Cells execute independently (optionally in a worker pool); results are
    merged in deterministic key order regardless of completion order.
    """
    cells = [
        (config, policy, rho, seed, horizon, bucket)
        for rho in config.load_factors
        for policy in policies
        for seed in config.seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_cell, cells))
    else:
        reports = [_run_cell(cell) for cell in cells]
    reports.sort(key=lambda r: (r.rho, r.policy, r.seed))
    if out_path is not None:
        write_summary_csv(reports, out_path)
        if bucket:
            write_trace_csv(reports, Path(out_path).with_suffix(".trace.csv"))
            write_reversal_events_csv(reports, Path(out_path).with_suffix(".reversals.csv"))
    return reports


def write_summary_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        for report in reports:
            writer.writerow(report.to_row())


def write_trace_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["seed"] + BUCKET_FIELDS)
        writer.writeheader()
        for report in reports:
            for row in report.buckets:
                writer.writerow({"seed": report.seed, **row})


REVERSAL_FIELDS = ["rho", "seed", "slot", "commodity", "edges_reversed", "marked"]


def write_reversal_events_csv(reports, path) -> None:
    """One row per epoch with marks: which nodes were flagged, how many links flipped."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REVERSAL_FIELDS)
        writer.writeheader()
        for report in reports:
            for slot, commodity, flips, marked in report.reversal_log:
                writer.writerow(
                    {
                        "rho": repr(report.rho),
                        "seed": report.seed,
                        "slot": slot,
                        "commodity": commodity,
                        "edges_reversed": flips,
                        "marked": ";".join(str(n) for n in marked),
                    }
                )


def er_batch(
    samples: int,
    n_range: tuple[int, int] = (10, 50),
    p: float = 0.5,
    cap_range: tuple[int, int] = (1, 10),
    seed=0,
    out_path=None,
) -> dict:
    """Convergence statistics over random graphs: sample connected graphs with
    uniform integer capacities, start from a random orientation, and converge
    at the network max-flow rate.  Every sample is checked against the
    iteration bound."""
    import random as _random

    if samples < 1:
        raise ValueError("need at least one sample")
    rng = _random.Random(f"{seed}|er-batch")
    rows = []
    total_iters = 0
    max_iters_seen = 0
    for k in range(samples):
        n = rng.randint(*n_range)
        net = erdos_renyi_network(n, p, rng, cap_low=cap_range[0], cap_high=cap_range[1])
        ranking = list(sorted(net.nodes))
        rng.shuffle(ranking)
        dag0 = orient_by_ranking(net, {node: pos for node, pos in zip(sorted(net.nodes), ranking)})
        fmax = max_flow_undirected(net)
        bound = default_max_iters(dag0, fmax)
        trace = converge(dag0, fmax, max_iters=bound, record_overload=False)
        iters = trace.iterations
        if iters > bound:
            raise InvariantViolation(f"sample {k}: {iters} iterations exceeds bound {bound}")
        total_iters += iters
        max_iters_seen = max(max_iters_seen, iters)
        rows.append(
            {
                "sample": k,
                "n": n,
                "edges": len(net.capacity),
                "fmax": str(fmax),
                "iterations": iters,
                "bound": bound,
            }
        )
    stats = {
        "samples": samples,
        "mean_iterations": total_iters / samples,
        "max_iterations": max_iters_seen,
        "rows": rows,
    }
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["sample", "n", "edges", "fmax", "iterations", "bound"])
            writer.writeheader()
            writer.writerows(rows)
    return stats


def _load_arg_scenario(value: str) -> ScenarioConfig:
    path = Path(value)
    if path.exists():
        return load_scenario(path)
    try:
        return bundled_scenario(value)
    except ValidationError:
        raise ValidationError(f"scenario not found (no file or bundled name): {value}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lfbp",
        description="Loop-free backpressure experiments: single runs, sweeps, and random-graph convergence batches.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario cell")
    p_run.add_argument("--scenario", required=True, help="scenario file or bundled name")
    p_run.add_argument("--policy", choices=("bp", "lfbp"), default="lfbp")
    p_run.add_argument("--horizon", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--rho", type=float, default=None)
    p_run.add_argument("--out", default=None, help="summary CSV path")
    p_run.add_argument("--trace-bucket", type=int, default=0, help="bucket size for per-slot trace rows")

    p_sweep = sub.add_parser("sweep", help="paired policy sweep over load factors and seeds")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--policy", action="append", choices=("bp", "lfbp"), default=None)
    p_sweep.add_argument("--horizon", type=int, default=None)
    p_sweep.add_argument("--out", required=True, help="summary CSV path")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--trace-bucket", type=int, default=0)

    p_er = sub.add_parser("er-batch", help="random-graph convergence statistics")
    p_er.add_argument("--samples", type=int, default=1000)
    p_er.add_argument("--n-min", type=int, default=10)
    p_er.add_argument("--n-max", type=int, default=50)
    p_er.add_argument("--p", type=float, default=0.5)
    p_er.add_argument("--cap-min", type=int, default=1)
    p_er.add_argument("--cap-max", type=int, default=10)
    p_er.add_argument("--seed", type=int, default=0)
    p_er.add_argument("--out", default=None)

    p_val = sub.add_parser("validate", help="schema-check a scenario file")
    p_val.add_argument("--scenario", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = _load_arg_scenario(args.scenario)
            report = run(
                config,
                args.policy,
                args.horizon,
                rho=args.rho,
                seed=args.seed,
                bucket=args.trace_bucket,
            )
            if args.out:
                write_summary_csv([report], args.out)
                if args.trace_bucket:
                    write_trace_csv([report], Path(args.out).with_suffix(".trace.csv"))
                if report.reversal_log:
                    write_reversal_events_csv([report], Path(args.out).with_suffix(".reversals.csv"))
            row = report.to_row()
            print(",".join(str(row[k]) for k in SUMMARY_FIELDS))
        elif args.command == "sweep":
            config = _load_arg_scenario(args.scenario)
            policies = tuple(args.policy) if args.policy else ("bp", "lfbp")
            reports = sweep(
                config,
                policies,
                args.out,
                jobs=args.jobs,
                horizon=args.horizon,
                bucket=args.trace_bucket,
            )
            print(f"wrote {len(reports)} summary rows to {args.out}")
        elif args.command == "er-batch":
            stats = er_batch(
                args.samples,
                (args.n_min, args.n_max),
                args.p,
                (args.cap_min, args.cap_max),
                seed=args.seed,
                out_path=args.out,
            )
            print(
                f"samples={stats['samples']} mean_iterations={stats['mean_iterations']:.3f} "
                f"max_iterations={stats['max_iterations']}"
            )
        elif args.command == "validate":
            config = _load_arg_scenario(args.scenario)
            print(f"ok: {config.name} ({len(config.network.nodes)} nodes, {len(config.network.capacity)} edges)")
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
