"""Slot-driven stochastic simulation: arrivals, backpressure forwarding,
random link failures, and per-run metrics.

The engine is synchronous: all transmission decisions in a slot are taken
from start-of-slot queue values (after that slot's arrivals), then applied
together.  Queues hold integer packets, so capacities must be integers here;
the analytical modules accept general rationals.

Policies: ``bp`` is classical backpressure on the bidirected live network
(loop-prone); ``lfbp`` constrains forwarding to a per-commodity acyclic
orientation maintained by threshold-driven link reversals.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .graph import DagOrientation, Network, apply_topology_event


@dataclass(frozen=True)
class CommoditySpec:
    """One source-destination traffic demand with a Poisson arrival rate."""

    id: int
    source: int
    dest: int
    rate: float  # base packets/slot, scaled by the load factor at run time
    dummy_packets: int = 0

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError(f"commodity {self.id}: source equals destination")
        if self.rate < 0:
            raise ValueError(f"commodity {self.id}: negative rate")
        if self.dummy_packets < 0:
            raise ValueError(f"commodity {self.id}: negative dummy packet count")


@dataclass(frozen=True)
class TopologyProcess:
    """Per-slot independent link failure/recovery probabilities."""

    fail_prob: float
    recover_prob: float

    def __post_init__(self):
        for name in ("fail_prob", "recover_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {p}")


@dataclass
class MetricsReport:
    scenario: str
    policy: str
    rho: float
    seed: int
    horizon: int
    arrivals: int
    delivered: int
    delivered_net: int
    avg_backlog: float
    avg_backlog_net: float
    final_backlog: int
    reversal_events: int
    edges_reversed: int
    topo_events: int
    live_fraction: float
    delivered_by_commodity: tuple[int, ...]
    arrivals_by_commodity: tuple[int, ...]
    reversal_log: list = field(default_factory=list)
    buckets: list = field(default_factory=list)
    arrival_paths: list | None = None
    final_dags: tuple | None = None

    def to_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "policy": self.policy,
            "rho": repr(self.rho),
            "seed": self.seed,
            "horizon": self.horizon,
            "arrivals": self.arrivals,
            "delivered": self.delivered,
            "delivered_net": self.delivered_net,
            "avg_backlog": repr(self.avg_backlog),
            "avg_backlog_net": repr(self.avg_backlog_net),
            "final_backlog": self.final_backlog,
            "reversal_events": self.reversal_events,
            "edges_reversed": self.edges_reversed,
            "topo_events": self.topo_events,
            "live_fraction": repr(self.live_fraction),
        }


SUMMARY_FIELDS = [
    "scenario",
    "policy",
    "rho",
    "seed",
    "horizon",
    "arrivals",
    "delivered",
    "delivered_net",
    "avg_backlog",
    "avg_backlog_net",
    "final_backlog",
    "reversal_events",
    "edges_reversed",
    "topo_events",
    "live_fraction",
]

BUCKET_FIELDS = [
    "slot_bucket",
    "policy",
    "load",
    "total_backlog_avg",
    "delivered",
    "reversals",
    "live_edges",
]


def _stream(seed, label: str) -> random.Random:
    return random.Random(f"{seed}|{label}")


def poisson_draw(rng: random.Random, mean: float) -> int:
    """Poisson sample by CDF inversion; always consumes exactly one uniform
    so parallel runs stay on identical sample paths."""
    u = rng.random()
    if mean <= 0.0:
        return 0
    p = math.exp(-mean)
    c = p
    k = 0
    while u > c:
        k += 1
        p *= mean / k
        c += p
        if k > 100_000:  # numerically unreachable for desk-scale means
            break
    return k


class SimState:
    """Mutable per-run simulation state; one writer, never shared."""

    def __init__(
        self,
        net: Network,
        commodities: list[CommoditySpec],
        policy: str,
        rho: float,
        seed,
        *,
        topology: TopologyProcess | None = None,
        initial_dags: list[DagOrientation] | None = None,
        dummies: list[int] | None = None,
        record_arrivals: bool = False,
    ):
        if policy not in ("bp", "lfbp"):
            raise ValueError(f"unknown policy {policy!r}")
        if policy == "lfbp" and not initial_dags:
            raise ValueError("lfbp policy requires per-commodity initial orientations")
        if rho <= 0:
            raise ValueError("load factor must be positive")
        self.net = net
        self.commodities = commodities
        self.policy = policy
        self.rho = rho
        self.seed = seed
        self.topology = topology

        self.node_of = sorted(net.nodes)
        self.idx = {node: i for i, node in enumerate(self.node_of)}
        self.n = len(self.node_of)
        self.edge_list = sorted(net.capacity)
        self.m = len(self.edge_list)
        self.cap_int = []
        for e in self.edge_list:
            cap = Fraction(net.capacity[e])
            if cap.denominator != 1:
                raise ValueError(
                    f"simulator requires integer capacities; edge {e} has {cap}"
                )
            self.cap_int.append(int(cap))
        self.edge_index = {e: i for i, e in enumerate(self.edge_list)}

        ncom = len(commodities)
        self.src_idx = [self.idx[c.source] for c in commodities]
        self.dst_idx = [self.idx[c.dest] for c in commodities]
        self.means = [rho * c.rate for c in commodities]
        self.queues = [[0] * self.n for _ in range(ncom)]
        self.dummies = list(dummies) if dummies is not None else [c.dummy_packets for c in commodities]
        self.backlog_now = 0
        for y, d in enumerate(self.dummies):
            self.queues[y][self.src_idx[y]] += d
            self.backlog_now += d

        self.dags = list(initial_dags) if initial_dags is not None else None
        if self.dags is not None:
            live0 = self.dags[0].live
            for dag in self.dags:
                if dag.live != live0:
                    raise ValueError("all commodity orientations must share one live mask")
            self.live_mask = [e in live0 for e in self.edge_list]
        else:
            self.live_mask = [True] * self.m
        self.live_order = [i for i in range(self.m) if self.live_mask[i]]

        self.marks = [[False] * self.n for _ in range(ncom)]
        self.epoch = 0
        self.epoch_left = 0  # set by the lfbp driver

        self.arr_rngs = [_stream(seed, f"arrivals|{c.id}") for c in commodities]
        self.topo_rng = _stream(seed, "topology")
        self.tie_rng = _stream(seed, "tiebreak")  # reserved; policies are deterministic

        self.t = 0
        self.arrivals = [0] * ncom
        self.delivered = [0] * ncom
        self.backlog_integral = 0
        self.backlog_net_integral = 0
        self.live_integral = 0
        self.reversal_events = 0
        self.edges_reversed = 0
        self.topo_events = 0
        self.reversal_log: list = []
        self.arrival_record = [[] for _ in range(ncom)] if record_arrivals else None

        self.edge_plan: list = [None] * self.m
        self.plans_dirty = True
        self.rebuild_plans()

    def rebuild_plans(self) -> None:
        ncom = len(self.commodities)
        for e_idx in range(self.m):
            if not self.live_mask[e_idx]:
                self.edge_plan[e_idx] = None
                continue
            a, b = self.edge_list[e_idx]
            ia, ib = self.idx[a], self.idx[b]
            cap = self.cap_int[e_idx]
            options = []
            if self.policy == "bp":
                for y in range(ncom):
                    options.append((y, ia, ib))
                    options.append((y, ib, ia))
            else:
                edge = self.edge_list[e_idx]
                for y, dag in enumerate(self.dags):
                    head = dag.heads.get(edge)
                    if head is None:
                        continue
                    tail = edge[0] if edge[1] == head else edge[1]
                    options.append((y, self.idx[tail], self.idx[head]))
            self.edge_plan[e_idx] = (cap, tuple(options))
        self.plans_dirty = False

    def total_backlog(self) -> int:
        return sum(sum(q) for q in self.queues)


def arrivals_step(state: SimState) -> SimState:
    """Inject Poisson arrivals at each commodity's source."""
    for y in range(len(state.commodities)):
        k = poisson_draw(state.arr_rngs[y], state.means[y])
        if state.arrival_record is not None:
            state.arrival_record[y].append(k)
        if k:
            state.queues[y][state.src_idx[y]] += k
            state.arrivals[y] += k
            state.backlog_now += k
    return state


def bp_step(state: SimState) -> SimState:
    """One backpressure transmission round.

    Per live link, the commodity (and direction) with the largest positive
    queue differential wins the slot; each node then serves its winning links
    in descending differential order without overdrawing its start-of-slot
    backlog.  Ties prefer the lower neighbor ID, then the lower commodity.
    """
    queues = state.queues
    snaps = [q.copy() for q in queues]
    node_of = state.node_of
    sends_by_tail: dict[int, list] = {}
    for e_idx in state.live_order:
        cap, options = state.edge_plan[e_idx]
        best_d = 0
        best = None
        for y, u, v in options:
            d = snaps[y][u] - snaps[y][v]
            if d > best_d:
                best_d = d
                best = (y, u, v)
        if best is None:
            continue
        y, u, v = best
        sends_by_tail.setdefault(u, []).append((-best_d, node_of[v], y, v, cap))
    dst_idx = state.dst_idx
    delivered = state.delivered
    for u in sorted(sends_by_tail):
        plans = sends_by_tail[u]
        plans.sort()
        avail: dict[int, int] = {}
        for _negd, _vid, y, v, cap in plans:
            a = avail.get(y)
            if a is None:
                a = snaps[y][u]
            send = cap if cap < a else a
            if send <= 0:
                avail[y] = a
                continue
            avail[y] = a - send
            queues[y][u] -= send
            if v == dst_idx[y]:
                delivered[y] += send
                state.backlog_now -= send
            else:
                queues[y][v] += send
    return state


def topology_step(state: SimState) -> SimState:
    """Fail live links / revive dead ones; one uniform draw per edge per slot
    regardless of state, so sample paths are comparable across runs."""
    proc = state.topology
    if proc is None:
        return state
    rng_random = state.topo_rng.random
    fail, recover = proc.fail_prob, proc.recover_prob
    dirty = False
    for e_idx in range(state.m):
        r = rng_random()
        if state.live_mask[e_idx]:
            if r < fail:
                state.live_mask[e_idx] = False
                state.topo_events += 1
                dirty = True
                if state.dags is not None:
                    edge = state.edge_list[e_idx]
                    for y in range(len(state.dags)):
                        state.dags[y] = apply_topology_event(state.dags[y], "remove", edge)
        else:
            if r < recover:
                state.live_mask[e_idx] = True
                state.topo_events += 1
                dirty = True
                if state.dags is not None:
                    edge = state.edge_list[e_idx]
                    for y in range(len(state.dags)):
                        state.dags[y] = apply_topology_event(state.dags[y], "add", edge)
    if dirty:
        state.live_order = [i for i in range(state.m) if state.live_mask[i]]
        state.rebuild_plans()
    return state


def build_initial_dags(config, policy: str) -> list[DagOrientation] | None:
    """Per-commodity starting orientations for the lfbp policy."""
    if policy != "lfbp":
        return None
    from .graph import initial_dag, orient_explicit
    from .flow import optimal_dag

    net = config.network
    mode = config.initial_dag
    dags = []
    for _ in config.commodities:
        if mode == "by_id":
            dags.append(initial_dag(net))
        elif mode == "optimal":
            dags.append(optimal_dag(net))
        elif isinstance(mode, (list, tuple)):
            dags.append(orient_explicit(net, mode))
        else:
            raise ValueError(f"unknown initial orientation mode {mode!r}")
    return dags


def run(
    config,
    policy: str,
    horizon: int | None = None,
    *,
    rho: float | None = None,
    seed=None,
    bucket: int = 0,
    record_arrivals: bool = False,
) -> MetricsReport:
    """Simulate one (policy, load, seed) cell of a scenario.

    Identical (config, seed) pairs produce identical trajectories, and the
    arrival streams depend only on (seed, commodity), so bp and lfbp runs
    consume the same arrival sample paths.
    """
    policy = policy.lower()
    horizon = config.horizon if horizon is None else horizon
    rho = config.load_factors[0] if rho is None else rho
    seed = config.seeds[0] if seed is None else seed

    params = None
    dummies = None
    if policy == "lfbp":
        from .protocol import LfbpParams, mark_step, epoch_reversal

        params = config.lfbp_params or LfbpParams()
        dummies = []
        for c in config.commodities:
            extra = int(config.dummy_scale / rho) if config.dummy_scale else 0
            dummies.append(c.dummy_packets + extra)

    state = SimState(
        config.network,
        config.commodities,
        policy,
        rho,
        seed,
        topology=config.topology,
        initial_dags=build_initial_dags(config, policy),
        dummies=dummies,
        record_arrivals=record_arrivals,
    )
    if policy == "lfbp":
        if params.delta is not None:
            from dataclasses import replace as _replace

            state.dags = [_replace(d, delta=params.delta) for d in state.dags]
        state.epoch_left = params.period(0)

    buckets = []
    bucket_backlog = 0
    ncom = len(config.commodities)
    for t in range(horizon):
        arrivals_step(state)
        bp_step(state)
        if policy == "lfbp":
            mark_step(state, params)
            state.epoch_left -= 1
            if state.epoch_left <= 0:
                epoch_reversal(state, params)
        if state.topology is not None:
            topology_step(state)
        state.t = t + 1
        state.backlog_integral += state.backlog_now
        net_backlog = state.backlog_now
        for y in range(ncom):
            out = state.dummies[y] - state.delivered[y]
            if out > 0:
                net_backlog -= out
        state.backlog_net_integral += net_backlog
        state.live_integral += len(state.live_order)
        if bucket:
            bucket_backlog += state.backlog_now
            if (t + 1) % bucket == 0:
                buckets.append(
                    {
                        "slot_bucket": t + 1,
                        "policy": policy,
                        "load": repr(rho),
                        "total_backlog_avg": repr(bucket_backlog / bucket),
                        "delivered": sum(state.delivered),
                        "reversals": state.edges_reversed,
                        "live_edges": len(state.live_order),
                    }
                )
                bucket_backlog = 0

    total_arr = sum(state.arrivals)
    total_del = sum(state.delivered)
    dummy_total = sum(state.dummies)
    return MetricsReport(
        scenario=getattr(config, "name", ""),
        policy=policy,
        rho=rho,
        seed=seed,
        horizon=horizon,
        arrivals=total_arr,
        delivered=total_del,
        delivered_net=max(0, total_del - dummy_total),
        avg_backlog=(state.backlog_integral / horizon) if horizon else 0.0,
        avg_backlog_net=(state.backlog_net_integral / horizon) if horizon else 0.0,
        final_backlog=state.backlog_now,
        reversal_events=state.reversal_events,
        edges_reversed=state.edges_reversed,
        topo_events=state.topo_events,
        live_fraction=(state.live_integral / (horizon * state.m)) if horizon and state.m else 1.0,
        delivered_by_commodity=tuple(state.delivered),
        arrivals_by_commodity=tuple(state.arrivals),
        reversal_log=state.reversal_log,
        buckets=buckets,
        arrival_paths=state.arrival_record,
        final_dags=tuple(state.dags) if state.dags is not None else None,
    )
