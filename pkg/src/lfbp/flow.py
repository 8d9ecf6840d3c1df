"""Exact max-flow / min-cut computations over orientations and raw networks.

Shortest-augmenting-path max-flow (BFS) on exact rational capacities, the
unique smallest min-cut via residual reachability, construction of a
throughput-optimal orientation from an undirected max-flow, and the cut
granularity constant used to bound link-reversal iteration counts.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .graph import (
    DagOrientation,
    InvariantViolation,
    Network,
    Rational,
    topological_order,
)

# Exhaustive subset enumeration stays tractable only at desk scale.
MAX_EXHAUSTIVE_EDGES = 20


@dataclass(frozen=True)
class FlowAllocation:
    """Per-directed-edge flow values plus the net flow delivered at the sink."""

    flow: dict[tuple[int, int], Rational]
    value: Rational


@dataclass(frozen=True)
class CutPartition:
    """A source-side / sink-side node partition and its directed crossing capacity."""

    source_side: frozenset[int]
    sink_side: frozenset[int]
    capacity: Rational


def _solve(nodes: Iterable[int], arcs: Iterable[tuple[int, int, Rational]], s: int, t: int):
    """Edmonds-Karp on merged arcs.  Returns (value, residual, reachable-from-s)."""
    res: dict[int, dict[int, Rational]] = {n: {} for n in nodes}
    for u, v, cap in arcs:
        if cap <= 0:
            continue
        row = res[u]
        row[v] = row.get(v, 0) + cap
        res[v].setdefault(u, 0)
    value: Rational = 0
    while True:
        parent: dict[int, int] = {s: s}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            if u == t:
                break
            for v, r in res[u].items():
                if r > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            break
        bottleneck = None
        v = t
        while v != s:
            u = parent[v]
            r = res[u][v]
            if bottleneck is None or r < bottleneck:
                bottleneck = r
            v = u
        v = t
        while v != s:
            u = parent[v]
            res[u][v] -= bottleneck
            res[v][u] = res[v].get(u, 0) + bottleneck
            v = u
        value += bottleneck
    reach = {s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for v, r in res[u].items():
            if r > 0 and v not in reach:
                reach.add(v)
                queue.append(v)
    return value, res, reach


def max_flow(dag: DagOrientation, src: int | None = None, dst: int | None = None) -> FlowAllocation:
    """Max-flow over the live directed edges of an orientation."""
    src = dag.net.source if src is None else src
    dst = dag.net.dest if dst is None else dst
    if src == dst:
        raise ValueError("source and destination must differ")
    arcs = list(dag.directed_edges())
    value, res, _ = _solve(dag.net.nodes, arcs, src, dst)
    flow = {}
    for tail, head, cap in arcs:
        used = cap - res[tail].get(head, 0) if cap > 0 else 0
        flow[(tail, head)] = used if used > 0 else 0
    return FlowAllocation(flow=flow, value=value)


def _undirected_arcs(net: Network) -> list[tuple[int, int, Rational]]:
    arcs = []
    for (i, j), cap in net.capacity.items():
        arcs.append((i, j, cap))
        arcs.append((j, i, cap))
    return arcs


def max_flow_undirected(net: Network, src: int | None = None, dst: int | None = None) -> Rational:
    """Max-flow when every undirected edge is usable in either direction."""
    src = net.source if src is None else src
    dst = net.dest if dst is None else dst
    value, _, _ = _solve(net.nodes, _undirected_arcs(net), src, dst)
    return value


def smallest_min_cut(dag: DagOrientation, src: int | None = None, dst: int | None = None) -> CutPartition:
    """The min-cut whose source side has the fewest nodes (unique).

    Computed as the residual-reachable set after a max-flow; that set is
    contained in every min-cut source side, hence minimal and unique.
    """
    src = dag.net.source if src is None else src
    dst = dag.net.dest if dst is None else dst
    value, _, reach = _solve(dag.net.nodes, list(dag.directed_edges()), src, dst)
    source_side = frozenset(reach)
    return CutPartition(
        source_side=source_side,
        sink_side=frozenset(dag.net.nodes) - source_side,
        capacity=value,
    )


def cut_capacity(dag: DagOrientation, side_a: Iterable[int], side_b: Iterable[int]) -> Rational:
    """Total capacity of live directed edges going from side_a into side_b."""
    side_a, side_b = set(side_a), set(side_b)
    if side_a & side_b:
        raise ValueError(f"cut sides overlap on {sorted(side_a & side_b)}")
    total: Rational = 0
    for tail, head, cap in dag.directed_edges():
        if tail in side_a and head in side_b:
            total += cap
    return total


def _trim_cycles(support: dict[int, dict[int, Rational]]) -> None:
    """Cancel positive flow on directed cycles, lowest-ID-first DFS order."""
    while True:
        cycle = _find_cycle(support)
        if cycle is None:
            return
        slack = min(support[u][v] for u, v in cycle)
        for u, v in cycle:
            support[u][v] -= slack
            if support[u][v] == 0:
                del support[u][v]


def _find_cycle(support: dict[int, dict[int, Rational]]) -> list[tuple[int, int]] | None:
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[int, int] = {}
    for root in sorted(support):
        if color.get(root, WHITE) != WHITE:
            continue
        color[root] = GRAY
        path = [root]
        iters = [iter(sorted(support.get(root, ())))]
        while path:
            try:
                nxt = next(iters[-1])
            except StopIteration:
                color[path.pop()] = BLACK
                iters.pop()
                continue
            c = color.get(nxt, WHITE)
            if c == GRAY:
                cyc_nodes = path[path.index(nxt):] + [nxt]
                return list(zip(cyc_nodes, cyc_nodes[1:]))
            if c == WHITE:
                color[nxt] = GRAY
                path.append(nxt)
                iters.append(iter(sorted(support.get(nxt, ()))))
    return None


def optimal_dag(net: Network) -> DagOrientation:
    """An orientation whose max-flow matches the undirected max-flow.

    Solve the undirected max-flow, cancel any flow circulating on directed
    cycles, orient flow-carrying edges along the flow, and orient idle edges
    consistently with a deterministic topological order of the flow support.
    """
    s, d = net.source, net.dest
    _, res, _ = _solve(net.nodes, _undirected_arcs(net), s, d)
    support: dict[int, dict[int, Rational]] = {}
    for (i, j), cap in net.capacity.items():
        net_flow = cap - res[i].get(j, cap)  # f_ij - f_ji after arc merging
        if net_flow > 0:
            support.setdefault(i, {})[j] = net_flow
        elif net_flow < 0:
            support.setdefault(j, {})[i] = -net_flow
    _trim_cycles(support)

    pairs = [(u, v) for u, row in support.items() for v in row]
    order = topological_order(net.nodes, pairs)
    if order is None:
        raise InvariantViolation("trimmed flow support still cyclic")
    position = {n: pos for pos, n in enumerate(order)}

    heads = {}
    for i, j in net.capacity:
        if support.get(i, {}).get(j, 0) > 0:
            heads[(i, j)] = j
        elif support.get(j, {}).get(i, 0) > 0:
            heads[(i, j)] = i
        else:
            heads[(i, j)] = j if position[i] < position[j] else i
    return DagOrientation(
        net=net,
        heads=heads,
        states={n: position[n] for n in net.nodes},
        version=0,
        step=0,
        delta=len(order) + 1,
    )


def delta_bound(net: Network, method: str = "auto") -> Fraction:
    """Smallest positive difference between capacities of any two cuts.

    ``exhaustive`` enumerates all subset sums of the edge capacities (desk
    scale only).  ``analytic`` returns the 1/D lower bound from the least
    common denominator D of the capacities; it is a bound, not the exact
    value.  ``auto`` picks exhaustive when the edge count permits.
    """
    caps = list(net.capacity.values())
    if not caps or all(c == 0 for c in caps):
        raise ValueError("degenerate network: no positive capacity, delta undefined")
    if method == "auto":
        method = "exhaustive" if len(caps) <= MAX_EXHAUSTIVE_EDGES else "analytic"
    if method == "analytic":
        denom = math.lcm(*(Fraction(c).denominator for c in caps))
        return Fraction(1, denom)
    if method != "exhaustive":
        raise ValueError(f"unknown method {method!r}")
    if len(caps) > MAX_EXHAUSTIVE_EDGES:
        raise ValueError(f"exhaustive mode limited to {MAX_EXHAUSTIVE_EDGES} edges")
    sums = {Fraction(0)}
    for c in caps:
        c = Fraction(c)
        sums |= {s + c for s in sums}
    ordered = sorted(sums)
    best = None
    for a, b in zip(ordered, ordered[1:]):
        gap = b - a
        if gap > 0 and (best is None or gap < best):
            best = gap
    if best is None:
        raise ValueError("degenerate network: all subset sums equal")
    return best
