"""Integer solutions on top of the column-generation relaxation.

Two routes from fractional to integral:

* ``restricted_master_heuristic`` — freeze the pool and solve the integer
  set-partitioning over it by branch-and-bound (aircraft may stay unused,
  their rows are "at most one").
* ``diving`` — depth-first fixing of the most fractional route, re-running
  column generation on the shrinking residual problem, with one-step
  backtracking and a permanent taboo list capped at a configured size.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .master import Column, MasterState, Solution, column_generation
from .model import ConnectionGraph, Instance, route_operational_cost
from .scenario import ScenarioSet, route_delay_cost
from .simplex import OPTIMAL, solve_lp

log = logging.getLogger("tailassign.heuristics")

INT_TOL = 1e-7


def _assemble(
    chosen: list[Column],
    graph: ConnectionGraph,
    instance: Instance,
    scenarios: ScenarioSet,
) -> Solution:
    by_id = {k.id: k for k in instance.aircraft}
    routes: dict[int, tuple[int, ...]] = {}
    op = delay = 0.0
    for col in chosen:
        routes[col.aircraft] = col.route
        op += route_operational_cost(col.route, by_id[col.aircraft], graph)
        delay += route_delay_cost(col.route, scenarios, graph, instance.delay_cost)
    return Solution(routes=routes, operational=op, delay=delay)


# ---------------------------------------------------------------------------
# restricted master heuristic: integer program over the frozen pool
# ---------------------------------------------------------------------------


def _pool_lp(
    columns: list[Column],
    leg_ids: list[int],
    aircraft_ids: list[int],
    big: float,
):
    """LP over a frozen pool: legs exactly once, each aircraft at most once."""
    leg_row = {l: i for i, l in enumerate(leg_ids)}
    air_row = {k: len(leg_ids) + i for i, k in enumerate(aircraft_ids)}
    m = len(leg_ids) + len(aircraft_ids)
    n = m + len(columns)
    a = np.zeros((m, n))
    a[np.arange(m), np.arange(m)] = 1.0
    c = np.zeros(n)
    c[: len(leg_ids)] = big          # artificials on leg rows
    # aircraft rows get genuine (free) slack: the "at most one" sense
    for j, col in enumerate(columns):
        jj = m + j
        c[jj] = col.cost
        for leg in col.legs:
            a[leg_row[leg], jj] = 1.0
        a[air_row[col.aircraft], jj] = 1.0
    res = solve_lp(c, a, np.ones(m))
    if res.status != OPTIMAL:
        return None
    return res.objective, res.x[m:], float(res.x[: len(leg_ids)].sum())


def restricted_master_heuristic(
    state: MasterState,
    graph: ConnectionGraph,
    instance: Instance,
    scenarios: ScenarioSet,
    *,
    time_limit: float | None = None,
) -> Solution | None:
    """Best integer assignment buildable from the pooled columns, or None.

    Branch-and-bound over the pool: at each node the LP relaxation is
    re-solved on the columns still allowed, the variable nearest one half is
    branched on (fix-to-one child explored first), and nodes are cut once
    their bound cannot beat the incumbent.
    """
    t0 = time.monotonic()
    pool = list(state.columns)
    best: list[Column] | None = None
    best_cost = np.inf
    # stack entries: (forced column indices, banned column indices)
    stack: list[tuple[tuple[int, ...], frozenset[int]]] = [((), frozenset())]
    while stack:
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            log.warning("pool heuristic stopped on the time limit")
            break
        forced, banned = stack.pop()
        covered: set[int] = set()
        used: set[int] = set()
        forced_cost = 0.0
        for j in forced:
            covered |= pool[j].legs
            used.add(pool[j].aircraft)
            forced_cost += pool[j].cost
        active = [
            j
            for j, col in enumerate(pool)
            if j not in banned
            and col.aircraft not in used
            and not (col.legs & covered)
        ]
        legs_left = sorted(set(state.leg_ids) - covered)
        fleet_left = [k for k in state.aircraft_ids if k not in used]
        if not legs_left and not fleet_left:
            if forced_cost < best_cost - 1e-9:
                best, best_cost = [pool[j] for j in forced], forced_cost
            continue
        solved = _pool_lp([pool[j] for j in active], legs_left, fleet_left, state.big)
        if solved is None:
            continue
        objective, values, artificial = solved
        if forced_cost + objective >= best_cost - 1e-9:
            continue
        fractional = [
            (abs(v - 0.5), pool[active[i]].aircraft, pool[active[i]].route, i)
            for i, v in enumerate(values)
            if INT_TOL < v < 1.0 - INT_TOL
        ]
        if not fractional:
            if artificial > INT_TOL:
                continue  # integral only because artificials plug the holes
            chosen = forced + tuple(
                active[i] for i, v in enumerate(values) if v > 0.5
            )
            cost = sum(pool[j].cost for j in chosen)
            if cost < best_cost - 1e-9:
                best, best_cost = [pool[j] for j in chosen], cost
            continue
        fractional.sort()
        j_branch = active[fractional[0][3]]
        stack.append((forced, banned | {j_branch}))       # y = 0, explored later
        stack.append((forced + (j_branch,), banned))      # y = 1, explored first
    if best is None:
        return None
    return _assemble(best, graph, instance, scenarios)


# ---------------------------------------------------------------------------
# diving with limited backtracking
# ---------------------------------------------------------------------------


@dataclass
class DiveResult:
    solution: Solution | None
    root_lp: float
    gap: float | None
    backtracks: int
    taboo_exhausted: bool
    timed_out: bool
    trace: list[dict] = field(default_factory=list)
    root_state: MasterState | None = None

    @property
    def succeeded(self) -> bool:
        return self.solution is not None


class _TabooFull(Exception):
    pass


class _Deadline(Exception):
    pass


def _integral_pick(state: MasterState) -> list[Column] | None:
    """The y=1 columns when the node LP is already integral, else None."""
    if not state.feasible:
        return None
    chosen = []
    for col, v in zip(state.columns, state.values):
        if INT_TOL < v < 1.0 - INT_TOL:
            return None
        if v > 0.5:
            chosen.append(col)
    return chosen


def diving(
    graph: ConnectionGraph,
    instance: Instance,
    scenarios: ScenarioSet,
    *,
    taboo_capacity: int = 15,
    time_limit: float | None = None,
    meet: str = "convex",
    root_state: MasterState | None = None,
) -> DiveResult:
    """Dive on the most fractional route variable, with one-step backtracking.

    Fixing a route removes its aircraft and every activity it covers; the
    residual problem is priced on pruned subgraphs but keeps the root's
    completion bounds (still valid: residual completions are a subset).  A
    child whose relaxation cannot cover the remaining legs is abandoned, the
    offending route goes on a permanent taboo list, and the parent tries its
    next candidate; the dive fails once the list outgrows its capacity.
    """
    if taboo_capacity < 0:
        raise ValueError("taboo capacity must be nonnegative")
    t0 = time.monotonic()

    def deadline_left() -> float | None:
        if time_limit is None:
            return None
        left = time_limit - (time.monotonic() - t0)
        if left <= 0:
            raise _Deadline
        return left

    root = root_state
    if root is None:
        root = column_generation(
            graph, instance, scenarios, meet=meet, time_limit=time_limit
        )
    if not root.feasible:
        raise InfeasibleError("the relaxation cannot cover every leg")
    root_lp = root.lp_value

    taboo: set[tuple[int, tuple[int, ...]]] = set()
    shared_pool: dict[tuple[int, tuple[int, ...]], Column] = {
        c.key(): c for c in root.columns
    }
    trace: list[dict] = []
    counters = {"backtracks": 0, "node": 0}

    def prune_arcs(arc_ids: frozenset[int], gone: frozenset[int]) -> frozenset[int]:
        return frozenset(
            aid
            for aid in arc_ids
            if graph.arcs[aid].tail not in gone and graph.arcs[aid].head not in gone
        )

    def dive_node(
        state: MasterState,
        fixed: list[Column],
        fleet: list,
        leg_ids: list[int],
        arc_sets: dict[int, frozenset[int]],
        depth: int,
    ) -> list[Column] | None:
        counters["node"] += 1
        node_id = counters["node"]
        trace.append(
            {
                "node": node_id,
                "depth": depth,
                "lp_value": state.lp_value,
                "fixed_aircraft": "",
                "fixed_route": "",
                "backtracks": counters["backtracks"],
            }
        )
        whole = _integral_pick(state)
        if whole is not None:
            return fixed + whole
        for col, value in state.fractional():
            if col.key() in taboo:
                continue
            deadline_left()
            gone = frozenset(col.route)
            child_fleet = [k for k in fleet if k.id != col.aircraft]
            child_legs = [l for l in leg_ids if l not in col.legs]
            trace.append(
                {
                    "node": node_id,
                    "depth": depth,
                    "lp_value": state.lp_value,
                    "fixed_aircraft": col.aircraft,
                    "fixed_route": "-".join(map(str, col.route)),
                    "backtracks": counters["backtracks"],
                }
            )
            if not child_fleet:
                if not child_legs:
                    return fixed + [col]
                fail = True
                child = None
            else:
                child_arcs = {
                    k.id: prune_arcs(arc_sets[k.id], gone) for k in child_fleet
                }
                seed = [
                    c
                    for c in shared_pool.values()
                    if c.aircraft in {k.id for k in child_fleet}
                ]
                try:
                    child = column_generation(
                        graph,
                        instance,
                        scenarios,
                        aircraft=child_fleet,
                        arc_sets=child_arcs,
                        leg_ids=child_legs,
                        initial_columns=seed,
                        bounds=root.bounds,
                        big=root.big,
                        meet=meet,
                        time_limit=deadline_left(),
                    )
                    fail = not child.feasible
                except InfeasibleError:
                    fail = True
                    child = None
            if not fail:
                for c in child.columns:
                    shared_pool.setdefault(c.key(), c)
                done = dive_node(
                    child,
                    fixed + [col],
                    child_fleet,
                    child_legs,
                    child_arcs,
                    depth + 1,
                )
                if done is not None:
                    return done
            # child infeasible (or its whole subtree failed): taboo + next
            counters["backtracks"] += 1
            taboo.add(col.key())
            log.debug(
                "backtrack at depth %d: taboo %d/%d", depth, len(taboo), taboo_capacity
            )
            if len(taboo) > taboo_capacity:
                raise _TabooFull
        return None

    taboo_exhausted = timed_out = False
    chosen: list[Column] | None = None
    try:
        chosen = dive_node(
            root,
            [],
            list(instance.aircraft),
            list(root.leg_ids),
            {k.id: graph.subgraphs[k.id] for k in instance.aircraft},
            depth=0,
        )
    except _TabooFull:
        taboo_exhausted = True
    except _Deadline:
        timed_out = True

    if chosen is None:
        return DiveResult(
            solution=None,
            root_lp=root_lp,
            gap=None,
            backtracks=counters["backtracks"],
            taboo_exhausted=taboo_exhausted,
            timed_out=timed_out,
            trace=trace,
            root_state=root,
        )
    solution = _assemble(chosen, graph, instance, scenarios)
    denom = max(abs(root_lp), 1e-9)
    gap = (solution.total - root_lp) / denom
    return DiveResult(
        solution=solution,
        root_lp=root_lp,
        gap=gap,
        backtracks=counters["backtracks"],
        taboo_exhausted=taboo_exhausted,
        timed_out=timed_out,
        trace=trace,
        root_state=root,
    )
