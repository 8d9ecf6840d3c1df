"""Oracle-driven link reversal: flip links pointing into the overloaded set.

One step reverses every live link that goes from a non-overloaded node into
the overloaded set (the smallest min-cut source side); iterating yields a
sequence of strictly improving orientations that terminates at one supporting
the offered rate, or at the network's own max-flow when the rate is
infeasible.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable

from .graph import (
    DEFAULT_RESCALE_EVERY,
    DagOrientation,
    InvariantViolation,
    Rational,
    as_rational,
    check_state_consistency,
    maybe_rescale,
    update_states_after_reversal,
)
from .flow import CutPartition, delta_bound, max_flow_undirected, smallest_min_cut
from .overload import OverloadVector, lex_min_overload


@dataclass(frozen=True)
class TraceEntry:
    version: int
    dag: DagOrientation
    max_flow_value: Rational
    overloaded: frozenset[int] | None
    reversed_edges: tuple[tuple[int, int], ...]  # pre-reversal (tail, head)
    overload: OverloadVector | None = None


@dataclass
class ReversalTrace:
    entries: list[TraceEntry]

    @property
    def final(self) -> DagOrientation:
        return self.entries[-1].dag

    @property
    def iterations(self) -> int:
        """Number of steps that actually reversed links."""
        return sum(1 for e in self.entries if e.reversed_edges)

    def csv_rows(self) -> list[dict]:
        rows = []
        for e in self.entries:
            rows.append(
                {
                    "k": e.version,
                    "max_flow": str(e.max_flow_value),
                    "overloaded_size": len(e.overloaded) if e.overloaded else 0,
                    "edges_reversed": len(e.reversed_edges),
                    "reversed": ";".join(f"{u}->{v}" for u, v in e.reversed_edges),
                }
            )
        return rows

    def write_csv(self, path) -> None:
        rows = self.csv_rows()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["k"])
            writer.writeheader()
            writer.writerows(rows)


def reverse_toward(dag: DagOrientation, overloaded: Iterable[int], rescale_every: int = DEFAULT_RESCALE_EVERY):
    """Reverse all live links entering ``overloaded`` from outside, then update
    the topological states.  Returns (new dag, reversed (tail, head) pairs).

    Acyclicity survives for any node set: afterwards every boundary link
    leaves the set, so no cycle can cross it, and both sides are unchanged
    inside.
    """
    overloaded = set(overloaded)
    flips = []
    heads = dict(dag.heads)
    for edge, head in dag.heads.items():
        tail = edge[0] if edge[1] == head else edge[1]
        if tail not in overloaded and head in overloaded:
            heads[edge] = tail
            flips.append((tail, head))
    if not flips:
        return dag, ()
    k = dag.step + 1
    out = replace(dag, heads=heads, version=dag.version + 1)
    out = update_states_after_reversal(out, overloaded, k, out.delta)
    out = maybe_rescale(out, rescale_every)
    check_state_consistency(out)
    return out, tuple(sorted(flips))


def reversal_step(
    dag: DagOrientation, rate: Rational, rescale_every: int = DEFAULT_RESCALE_EVERY
):
    """One link-reversal iteration against the smallest min-cut.

    Returns (dag', reversed edges, cut).  When the rate is already supported
    the input comes back untouched with cut None; when no usable link
    qualifies for reversal the input comes back with the cut attached --
    in that case the orientation already achieves the network max-flow.

    A link counts as usable only with positive capacity: if every edge
    entering the overloaded side is zero-capacity, the undirected and
    directed cut values coincide, so nothing can improve and flipping dead
    wires would only churn the orientation without progress.
    """
    cut = smallest_min_cut(dag)
    if as_rational(rate) <= cut.capacity:
        return dag, (), None
    if not _has_usable_entering(dag, cut.source_side):
        return dag, (), cut
    new_dag, flips = reverse_toward(dag, cut.source_side, rescale_every)
    return new_dag, flips, cut


def _has_usable_entering(dag: DagOrientation, inside) -> bool:
    return any(
        cap > 0
        for tail, head, cap in dag.directed_edges()
        if tail not in inside and head in inside
    )


def default_max_iters(dag: DagOrientation, rate: Rational) -> int:
    """Iteration budget: ceil(|N| f_max / delta) plus |N| slack.

    The cut-granularity bound covers the iterations needed to reach a
    max-flow-achieving orientation (delta from the analytic 1/D bound when
    exhaustive enumeration is infeasible); an infeasible rate can then grow
    the overloaded side for up to |N| further reversals before no usable
    link remains.
    """
    n = len(dag.net.nodes)
    fmax = max_flow_undirected(dag.net)
    if fmax == 0:
        return n
    try:
        delta = delta_bound(dag.net, method="auto")
    except ValueError:
        return n
    return math.ceil(Fraction(n) * Fraction(fmax) / delta) + n


def converge(
    dag0: DagOrientation,
    rate: Rational,
    max_iters: int | None = None,
    record_overload: bool = True,
    rescale_every: int = DEFAULT_RESCALE_EVERY,
) -> ReversalTrace:
    """Iterate reversal steps until the orientation supports the rate or no
    link qualifies.  The trace keeps one entry per visited orientation."""
    if max_iters is None:
        max_iters = default_max_iters(dag0, rate)
    entries: list[TraceEntry] = []
    dag = dag0
    for _ in range(max_iters + 1):
        cut = smallest_min_cut(dag)
        overload = lex_min_overload(dag, rate) if record_overload else None
        if as_rational(rate) <= cut.capacity:
            entries.append(TraceEntry(dag.version, dag, cut.capacity, None, (), overload))
            return ReversalTrace(entries)
        if not _has_usable_entering(dag, cut.source_side):
            # Nothing useful to reverse: the orientation already meets the
            # network max-flow and the excess rate is simply infeasible.
            entries.append(
                TraceEntry(dag.version, dag, cut.capacity, cut.source_side, (), overload)
            )
            return ReversalTrace(entries)
        new_dag, flips = reverse_toward(dag, cut.source_side, rescale_every)
        entries.append(
            TraceEntry(dag.version, dag, cut.capacity, cut.source_side, flips, overload)
        )
        dag = new_dag
    raise InvariantViolation(
        f"link reversal did not converge within {max_iters} iterations"
    )
