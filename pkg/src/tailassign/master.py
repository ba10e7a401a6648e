"""Restricted master problem and the column-generation loop.

The master is the LP relaxation of a set-partitioning model: pick one route
per aircraft (convexity rows, = 1) so that every leg is covered exactly once
(leg rows, = 1), minimizing route costs.  High-cost artificial slacks keep
the restricted LP feasible while the pool is still poor; their cost is frozen
per run so the LP value decreases monotonically as columns arrive.  Pricing
supplies, per aircraft, the route of minimum reduced cost under the current
duals; the loop stops when nothing attractive is left.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .model import ConnectionGraph, Instance, route_operational_cost
from .pricing import CompletionBounds, PricingProblem, solve_pricing
from .pwl import PwlFunction
from .scenario import ScenarioSet, route_delay_cost
from .simplex import OPTIMAL, solve_lp

log = logging.getLogger("tailassign.master")

ADMIT_TOL = 1e-6
# high enough that artificials lose to any real cover, low enough that their
# cost in the basis does not drown reduced costs in float noise
ARTIFICIAL_FACTOR = 1e3


@dataclass
class Solution:
    """An integer assignment: one route per (used) aircraft, with cost split."""

    routes: dict[int, tuple[int, ...]]
    operational: float
    delay: float

    @property
    def total(self) -> float:
        return self.operational + self.delay


@dataclass(frozen=True)
class Column:
    """One candidate route with its full (operational + expected delay) cost."""

    aircraft: int
    route: tuple[int, ...]
    cost: float
    legs: frozenset[int]

    def key(self) -> tuple[int, tuple[int, ...]]:
        return (self.aircraft, self.route)


def make_column(
    graph: ConnectionGraph,
    aircraft,
    route,
    scenarios: ScenarioSet,
    costfn: PwlFunction,
) -> Column:
    """Build a column, recomputing its cost from first principles."""
    route = tuple(route)
    op = route_operational_cost(route, aircraft, graph)
    delay = route_delay_cost(route, scenarios, graph, costfn)
    legs = frozenset(v for v in route if graph.is_leg(v))
    return Column(aircraft.id, route, op + delay, legs)


@dataclass
class RmpSolution:
    objective: float
    values: np.ndarray            # one weight per column, pool order
    leg_duals: dict[int, float]
    aircraft_duals: dict[int, float]
    basis: list[int]
    artificial_level: float       # total weight still on artificial slacks


def solve_rmp_lp(
    columns: list[Column],
    leg_ids: list[int],
    aircraft_ids: list[int],
    big: float,
    basis: list[int] | None = None,
    artificials: bool = True,
) -> RmpSolution:
    """LP relaxation over the given pool.

    With ``artificials`` (the default), slack columns at cost ``big`` occupy
    indices 0..rows-1, keeping the LP feasible on a thin pool and keeping a
    previous basis meaningful when the pool has only grown.  Without them the
    pool must cover on its own — used once at convergence, because duals
    computed with huge costs in the basis carry float noise at that scale.
    """
    leg_row = {l: i for i, l in enumerate(leg_ids)}
    air_row = {k: len(leg_ids) + i for i, k in enumerate(aircraft_ids)}
    m = len(leg_ids) + len(aircraft_ids)
    offset = m if artificials else 0
    n = offset + len(columns)
    a = np.zeros((m, n))
    c = np.zeros(n)
    if artificials:
        a[np.arange(m), np.arange(m)] = 1.0
        c[:m] = big
    for j, col in enumerate(columns):
        jj = offset + j
        c[jj] = col.cost
        for leg in col.legs:
            a[leg_row[leg], jj] = 1.0
        a[air_row[col.aircraft], jj] = 1.0
    res = solve_lp(c, a, np.ones(m), basis=basis)
    if res.status != OPTIMAL:
        raise InfeasibleError(f"restricted master LP came back {res.status}")
    return RmpSolution(
        objective=res.objective,
        values=res.x[offset:].copy(),
        leg_duals={l: float(res.duals[i]) for l, i in leg_row.items()},
        aircraft_duals={k: float(res.duals[i]) for k, i in air_row.items()},
        basis=res.basis,
        artificial_level=float(res.x[:offset].sum()) if artificials else 0.0,
    )


@dataclass
class MasterState:
    """Everything the colgen loop knows when it stops."""

    columns: list[Column]
    values: np.ndarray
    lp_value: float
    leg_duals: dict[int, float]
    aircraft_duals: dict[int, float]
    leg_ids: list[int]
    aircraft_ids: list[int]
    big: float
    converged: bool
    iterations: int
    artificial_level: float
    problems: dict[int, PricingProblem]
    bounds: dict[int, CompletionBounds]
    iteration_log: list[dict] = field(default_factory=list)
    basis: list[int] | None = None

    @property
    def feasible(self) -> bool:
        return self.artificial_level <= 1e-7

    def pools(self) -> dict[int, list[Column]]:
        out: dict[int, list[Column]] = {k: [] for k in self.aircraft_ids}
        for col in self.columns:
            out[col.aircraft].append(col)
        return out

    def fractional(self) -> list[tuple[Column, float]]:
        """Columns with weight meaningfully between 0 and 1, heaviest first."""
        out = [
            (col, float(v))
            for col, v in zip(self.columns, self.values)
            if 1e-9 < v < 1.0 - 1e-9
        ]
        out.sort(key=lambda cv: (-cv[1], cv[0].aircraft, cv[0].route))
        return out


def column_generation(
    graph: ConnectionGraph,
    instance: Instance,
    scenarios: ScenarioSet,
    *,
    aircraft=None,
    arc_sets: dict[int, frozenset[int]] | None = None,
    leg_ids=None,
    initial_columns=(),
    problems: dict[int, PricingProblem] | None = None,
    bounds: dict[int, CompletionBounds] | None = None,
    big: float | None = None,
    meet: str = "convex",
    max_iterations: int = 1000,
    time_limit: float | None = None,
    pricing_width: int = 8,
) -> MasterState:
    """Generate routes until no aircraft offers reduced cost below -1e-6.

    ``aircraft``/``arc_sets``/``leg_ids`` restrict the problem to a residual
    (used while diving); ``problems``/``bounds`` let callers reuse pricing
    data built at an ancestor node — stale bounds stay valid because a
    residual's completions are a subset of the original ones.
    """
    t0 = time.monotonic()
    fleet = list(aircraft if aircraft is not None else instance.aircraft)
    aircraft_ids = [k.id for k in fleet]
    by_id = {k.id: k for k in fleet}
    if arc_sets is None:
        arc_sets = {k.id: graph.subgraphs[k.id] for k in fleet}
    if leg_ids is None:
        leg_ids = [a.id for a in instance.activities if a.is_leg]
    leg_ids = sorted(leg_ids)

    if problems is None:
        problems = {}
    for k in fleet:
        if k.id not in problems:
            problems[k.id] = PricingProblem(
                graph, k, arc_sets[k.id], scenarios, instance.delay_cost
            )
    if bounds is None:
        bounds = {}
    for k in fleet:
        if k.id not in bounds:
            bounds[k.id] = problems[k.id].compute_bounds(meet)

    columns: list[Column] = []
    seen: set[tuple[int, tuple[int, ...]]] = set()
    leg_set = set(leg_ids)

    def admit(col: Column) -> bool:
        if col.key() in seen or not col.legs <= leg_set:
            return False
        seen.add(col.key())
        columns.append(col)
        return True

    for col in initial_columns:
        if col.aircraft in by_id:
            admit(col)
    for k in fleet:
        if not any(col.aircraft == k.id for col in columns):
            seeded = solve_pricing(problems[k.id], {}, 0.0, bounds=bounds[k.id])
            if seeded.route is None:
                raise InfeasibleError(f"aircraft {k.id} has no feasible route")
            admit(
                make_column(
                    graph, by_id[k.id], seeded.route, scenarios, instance.delay_cost
                )
            )

    if big is None:
        big = ARTIFICIAL_FACTOR * (1.0 + sum(c.cost for c in columns))

    state = MasterState(
        columns=columns,
        values=np.zeros(len(columns)),
        lp_value=np.inf,
        leg_duals={},
        aircraft_duals={},
        leg_ids=leg_ids,
        aircraft_ids=aircraft_ids,
        big=big,
        converged=False,
        iterations=0,
        artificial_level=np.inf,
        problems=problems,
        bounds=bounds,
    )

    def price_round(rmp: RmpSolution) -> int:
        added = 0
        dual_scale = max(
            [1.0]
            + [abs(v) for v in rmp.leg_duals.values()]
            + [abs(v) for v in rmp.aircraft_duals.values()]
        )
        for k in fleet:
            res = solve_pricing(
                problems[k.id],
                rmp.leg_duals,
                rmp.aircraft_duals[k.id],
                bounds=bounds[k.id],
                cutoff=-ADMIT_TOL,
                keep=pricing_width,
            )
            if res.route is None:
                continue
            for route, claimed in ((res.route, res.reduced_cost), *res.alternates):
                col = make_column(
                    graph, by_id[k.id], route, scenarios, instance.delay_cost
                )
                check = (
                    col.cost
                    - sum(rmp.leg_duals.get(l, 0.0) for l in col.legs)
                    - rmp.aircraft_duals[k.id]
                )
                # both sides cancel sums of dual-sized terms, so scale the
                # tripwire with the duals or it trips on float noise alone
                if abs(check - claimed) > 1e-7 * max(abs(check), dual_scale):
                    raise AssertionError(
                        f"pricing cost drift: claimed {claimed}, "
                        f"recomputed {check}"
                    )
                if check < -ADMIT_TOL and admit(col):
                    added += 1
        return added

    basis: list[int] | None = None
    for it in range(max_iterations):
        t_master = time.monotonic()
        rmp = solve_rmp_lp(columns, leg_ids, aircraft_ids, big, basis=basis)
        basis = rmp.basis
        t_pricing = time.monotonic()
        added = price_round(rmp)
        if added == 0 and rmp.artificial_level <= 1e-7:
            # the artificial-cost scale can blur the duals just enough to
            # hide an improving route; certify on a clean re-solve instead
            try:
                clean = solve_rmp_lp(
                    columns, leg_ids, aircraft_ids, big, artificials=False
                )
            except InfeasibleError:
                clean = None
            if clean is not None:
                rmp = clean
                added = price_round(rmp)
        done = time.monotonic()
        state.iteration_log.append(
            {
                "iteration": it,
                "lp_value": rmp.objective,
                "columns_added": added,
                "master_seconds": t_pricing - t_master,
                "pricing_seconds": done - t_pricing,
            }
        )
        log.debug(
            "iter %d lp=%.6f added=%d pool=%d", it, rmp.objective, added, len(columns)
        )
        state.values = rmp.values
        state.lp_value = rmp.objective
        state.leg_duals = rmp.leg_duals
        state.aircraft_duals = rmp.aircraft_duals
        state.artificial_level = rmp.artificial_level
        state.iterations = it + 1
        state.basis = basis
        if added == 0:
            state.converged = True
            break
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            log.warning("column generation stopped on the time limit")
            break
    if len(state.values) < len(columns):
        state.values = np.concatenate(
            [state.values, np.zeros(len(columns) - len(state.values))]
        )
    return state
