"""Distributed loop-free backpressure: threshold marking plus epoch reversals.

Nodes watch their own backlog; crossing the epoch's threshold marks the queue
overloaded for the rest of the epoch.  When the epoch timer expires, every
link from an unmarked node to a marked node is reversed (per commodity), the
topological states are updated, and all marks clear.  Only local queue
information drives the decisions; the engine executes nodes synchronously.
"""
from __future__ import annotations

from dataclasses import dataclass

from .graph import DEFAULT_RESCALE_EVERY, Rational
from .reversal import reverse_toward
from . import sim


@dataclass(frozen=True)
class LfbpParams:
    """Detection thresholds R_k, epoch lengths T_k (last value repeats), the
    state-update constant, and the automatic rescale cadence."""

    thresholds: tuple = (60,)
    periods: tuple[int, ...] = (50,)
    delta: Rational | None = None
    rescale_every: int = DEFAULT_RESCALE_EVERY

    def __post_init__(self):
        if not self.thresholds or not self.periods:
            raise ValueError("thresholds and periods must be non-empty")
        if any(t <= 0 for t in self.thresholds):
            raise ValueError("thresholds must be positive")
        if any(p < 1 for p in self.periods):
            raise ValueError("periods must be at least one slot")

    def threshold(self, epoch: int):
        return self.thresholds[min(epoch, len(self.thresholds) - 1)]

    def period(self, epoch: int) -> int:
        return self.periods[min(epoch, len(self.periods) - 1)]


def mark_step(state: sim.SimState, params: LfbpParams) -> sim.SimState:
    """Mark queues above the current threshold; marks stick until epoch end."""
    limit = params.threshold(state.epoch)
    for y in range(len(state.commodities)):
        marks = state.marks[y]
        queue = state.queues[y]
        for i in range(state.n):
            if not marks[i] and queue[i] > limit:
                marks[i] = True
    return state


def epoch_reversal(state: sim.SimState, params: LfbpParams) -> sim.SimState:
    """Per commodity, reverse links from unmarked into marked nodes, then
    clear marks and start the next epoch."""
    changed = False
    for y, dag in enumerate(state.dags):
        marked = {state.node_of[i] for i, flag in enumerate(state.marks[y]) if flag}
        if marked:
            new_dag, flips = reverse_toward(dag, marked, params.rescale_every)
            state.reversal_log.append(
                (state.t, state.commodities[y].id, len(flips), tuple(sorted(marked)))
            )
            if flips:
                state.dags[y] = new_dag
                state.edges_reversed += len(flips)
                state.reversal_events += 1
                changed = True
        if any(state.marks[y]):
            state.marks[y] = [False] * state.n
    state.epoch += 1
    state.epoch_left = params.period(state.epoch)
    if changed:
        state.rebuild_plans()
    return state


def lfbp_run(
    config,
    params: LfbpParams | None = None,
    horizon: int | None = None,
    *,
    rho: float | None = None,
    seed=None,
    bucket: int = 0,
    record_arrivals: bool = False,
) -> sim.MetricsReport:
    """Run the loop-free policy on a scenario (thin wrapper over the engine)."""
    if params is not None:
        config = config.with_lfbp_params(params)
    return sim.run(
        config,
        "lfbp",
        horizon,
        rho=rho,
        seed=seed,
        bucket=bucket,
        record_arrivals=record_arrivals,
    )
