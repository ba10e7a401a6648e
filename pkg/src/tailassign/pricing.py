"""Route pricing: minimum reduced-cost source-sink path for one aircraft.

Forward labels carry the reduced cost accumulated so far plus the propagated
delay per scenario; componentwise dominance discards partial routes that
cannot beat a cheaper-and-earlier sibling.  A reverse sweep over the acyclic
connection graph precomputes, per vertex, a lower bound on the cost of any
completion: an operational part, one convex piecewise-linear function per
scenario turning incoming delay into remaining delay cost, and the largest
dual mass a completion can still collect.  The search pops labels best-first
on (cost so far + completion bound) and prunes against the incumbent.

Costs are charged when *leaving* an activity: stepping along (v, w) pays v's
operational cost, the connection cost, the sample-average delay cost of v
(legs only), and collects v's dual.  The sink therefore closes the route with
everything already counted.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from math import inf

import numpy as np

from .errors import InputError
from .model import SINK, SOURCE, Aircraft, ConnectionGraph, _has_path
from .pwl import (
    PwlFunction,
    compose_affine,
    compose_prop,
    constant,
    convex_meet,
    convex_minorant_thin,
    evaluate_many,
    is_convex,
    add as pwl_add,
    pointwise_min,
    segment_slopes,
)
from .scenario import ScenarioSet

DOM_TOL = 1e-9
MAX_BOUND_BREAKS = 32


@dataclass(eq=False)
class ForwardLabel:
    """Partial route resource: cost so far and per-scenario propagated delay."""

    vertex: int
    cost: float
    delays: np.ndarray
    parent: "ForwardLabel | None"
    length: int
    alive: bool = True

    def route(self) -> tuple[int, ...]:
        out: list[int] = []
        lab: ForwardLabel | None = self
        while lab is not None:
            if lab.vertex >= 0:
                out.append(lab.vertex)
            lab = lab.parent
        return tuple(reversed(out))


@dataclass(frozen=True)
class BackwardBound:
    """Completion bound at one vertex (vertex's own contribution included)."""

    vertex: int
    op_bound: float
    delay_fns: tuple[PwlFunction, ...]
    dual_mass: float


def dominates(a: ForwardLabel, b: ForwardLabel) -> bool:
    """a renders b useless: no dearer and no later in every scenario."""
    if a.vertex != b.vertex:
        raise InputError("dominance only compares labels at the same vertex")
    if a.cost > b.cost + DOM_TOL:
        return False
    return bool(np.all(a.delays <= b.delays + DOM_TOL))


def forward_extend(
    label: ForwardLabel,
    head: int,
    slack: float,
    *,
    xi: np.ndarray,
    is_leg: bool,
    vertex_cost: float,
    arc_cost: float,
    dual: float,
    costfn: PwlFunction,
) -> ForwardLabel:
    """Step along one arc; ``xi``/``is_leg``/costs/dual describe the tail."""
    cost = label.cost + vertex_cost + arc_cost
    if is_leg:
        if len(xi):
            cost += float(evaluate_many(costfn, xi + label.delays).mean())
        cost -= dual
    delays = np.maximum(xi + label.delays - slack, 0.0)
    return ForwardLabel(head, cost, delays, label, label.length + 1)


@dataclass
class PricingStats:
    created: int = 0
    popped: int = 0
    dominated: int = 0
    bound_pruned: int = 0


@dataclass
class PricingResult:
    route: tuple[int, ...] | None
    reduced_cost: float
    infeasible: bool = False
    stats: PricingStats = field(default_factory=PricingStats)
    # runner-up routes, each with its reduced cost, best first
    alternates: tuple[tuple[tuple[int, ...], float], ...] = ()


class _Packed:
    """Per-vertex batch evaluator: S piecewise linear functions at S points."""

    def __init__(self, fns: tuple[PwlFunction, ...]):
        s = len(fns)
        k = max(len(f.xs) for f in fns)
        self.xs = np.full((s, k), inf)
        self.ys = np.zeros((s, k))
        self.slopes = np.zeros((s, k + 1))
        for i, f in enumerate(fns):
            n = len(f.xs)
            self.xs[i, :n] = f.xs
            self.ys[i, :n] = f.ys
            sl = segment_slopes(f)
            self.slopes[i, : n + 1] = sl
            self.slopes[i, n + 1 :] = sl[-1]
        self.rows = np.arange(s)

    def mean_at(self, x: np.ndarray) -> float:
        idx = np.sum(self.xs <= x[:, None], axis=1)
        a = np.maximum(idx - 1, 0)
        vals = self.ys[self.rows, a] + (x - self.xs[self.rows, a]) * self.slopes[
            self.rows, idx
        ]
        return float(vals.mean())


class _VertexPool:
    """Non-dominated labels at one vertex, vectorized for the dominance test."""

    def __init__(self, n_scen: int):
        self._n = 0
        cap = 16
        self._cost = np.empty(cap)
        self._delays = np.empty((cap, n_scen))
        self._alive = np.empty(cap, dtype=bool)
        self._labels: list[ForwardLabel] = []

    def covered(self, cost: float, delays: np.ndarray) -> bool:
        n = self._n
        if n == 0:
            return False
        hits = (
            (self._cost[:n] <= cost + DOM_TOL)
            & self._alive[:n]
            & np.all(self._delays[:n] <= delays + DOM_TOL, axis=1)
        )
        return bool(hits.any())

    def insert(self, label: ForwardLabel) -> int:
        """Add the label, retiring anything it dominates; returns retire count."""
        n = self._n
        retired = 0
        if n:
            dead = (
                (label.cost <= self._cost[:n] + DOM_TOL)
                & self._alive[:n]
                & np.all(label.delays <= self._delays[:n] + DOM_TOL, axis=1)
            )
            for i in np.flatnonzero(dead):
                self._alive[i] = False
                self._labels[i].alive = False
                retired += 1
        if n == len(self._cost):
            self._cost = np.concatenate([self._cost, np.empty(n)])
            self._delays = np.concatenate([self._delays, np.empty((n, self._delays.shape[1]))])
            self._alive = np.concatenate([self._alive, np.empty(n, dtype=bool)])
        self._cost[n] = label.cost
        self._delays[n] = label.delays
        self._alive[n] = True
        self._labels.append(label)
        self._n = n + 1
        return retired


class CompletionBounds:
    """Dual-independent completion bounds for one aircraft's subgraph."""

    def __init__(self, op_bound, delay_fns, meet: str):
        self.op_bound: dict[int, float] = op_bound
        self.delay_fns: dict[int, tuple[PwlFunction, ...]] = delay_fns
        self.meet = meet
        self._packed: dict[int, _Packed] = {
            v: _Packed(fns) for v, fns in delay_fns.items() if fns
        }

    def mean_delay_bound(self, vertex: int, delays: np.ndarray) -> float:
        packed = self._packed.get(vertex)
        if packed is None:
            return 0.0
        return packed.mean_at(delays)


class PricingProblem:
    """One aircraft's pricing data, reusable across dual updates."""

    def __init__(
        self,
        graph: ConnectionGraph,
        aircraft: Aircraft,
        arc_ids,
        scenarios: ScenarioSet,
        costfn: PwlFunction,
    ):
        self.graph = graph
        self.aircraft = aircraft
        self.arc_ids = frozenset(arc_ids)
        self.scenarios = scenarios
        self.costfn = costfn
        self.n_scen = scenarios.count

        adj = graph.out_arcs(self.arc_ids)
        order = [
            v
            for v in graph.vertex_order()
            if v in adj or v == SINK
        ]
        self.order = order  # topological, SOURCE first when present
        self.heads: dict[int, np.ndarray] = {}
        self.slacks: dict[int, np.ndarray] = {}
        self.arc_costs: dict[int, np.ndarray] = {}
        for v, aids in adj.items():
            arcs = [graph.arcs[a] for a in aids]
            self.heads[v] = np.array([a.head for a in arcs], dtype=int)
            self.slacks[v] = np.array([a.slack for a in arcs])
            self.arc_costs[v] = np.array(
                [aircraft.arc_cost(a.tail, a.head) for a in arcs]
            )
        self.xi: dict[int, np.ndarray] = {}
        self.is_leg: dict[int, bool] = {}
        self.vertex_cost: dict[int, float] = {}
        zero = np.zeros(self.n_scen)
        for v in order:
            if v < 0:
                self.xi[v] = zero
                self.is_leg[v] = False
                self.vertex_cost[v] = 0.0
            else:
                self.xi[v] = scenarios.xi[:, scenarios.col(v)] if self.n_scen else zero
                self.is_leg[v] = graph.is_leg(v)
                self.vertex_cost[v] = (
                    aircraft.leg_costs.get(v, 0.0) if self.is_leg[v] else 0.0
                )

    # -- completion bounds ------------------------------------------------

    def compute_bounds(self, meet: str = "convex") -> CompletionBounds:
        if meet not in ("convex", "exact"):
            raise InputError(f"unknown meet mode {meet!r}")
        if meet == "convex" and not is_convex(self.costfn):
            raise InputError(
                "convex meet needs a convex delay cost function; use meet='exact'"
            )
        zero_fns = tuple(constant(0.0) for _ in range(self.n_scen))
        op: dict[int, float] = {SINK: 0.0}
        fns: dict[int, tuple[PwlFunction, ...]] = {SINK: zero_fns}
        for v in reversed(self.order):
            if v == SINK:
                continue
            heads = self.heads.get(v)
            if heads is None:
                continue
            best_op = inf
            merged: list[PwlFunction] | None = None
            for head, slack, a_cost in zip(
                heads, self.slacks[v], self.arc_costs[v]
            ):
                head = int(head)
                if head not in op:
                    continue  # dead end: no completion through this arc
                cand_op = op[head] + self.vertex_cost[v] + a_cost
                best_op = min(best_op, cand_op)
                cand_fns = [
                    self._backward_delay_fn(v, s, fns[head][s], slack, meet)
                    for s in range(self.n_scen)
                ]
                if merged is None:
                    merged = cand_fns
                else:
                    combine = convex_meet if meet == "convex" else pointwise_min
                    merged = [combine(a, b) for a, b in zip(merged, cand_fns)]
            if best_op == inf:
                continue  # vertex cannot reach the sink
            assert merged is not None
            if meet == "convex":
                merged = [convex_minorant_thin(f, MAX_BOUND_BREAKS) for f in merged]
            op[v] = best_op
            fns[v] = tuple(merged)
        return CompletionBounds(op, fns, meet)

    def _backward_delay_fn(
        self, v: int, s: int, fn_head: PwlFunction, slack: float, meet: str
    ) -> PwlFunction:
        xi = float(self.xi[v][s])
        out = compose_prop(fn_head, 0.0, slack - xi)
        if self.is_leg[v]:
            out = pwl_add(out, compose_affine(self.costfn, xi))
        if meet == "convex" and len(out.xs) > MAX_BOUND_BREAKS:
            out = convex_minorant_thin(out, MAX_BOUND_BREAKS)
        return out

    def dual_mass(self, lambdas: dict[int, float]) -> dict[int, float]:
        """Largest collectable remaining dual sum per vertex (itself included)."""
        mass: dict[int, float] = {SINK: 0.0}
        for v in reversed(self.order):
            if v == SINK:
                continue
            heads = self.heads.get(v)
            if heads is None:
                continue
            best = -inf
            for head in heads:
                m = mass.get(int(head))
                if m is not None and m > best:
                    best = m
            if best == -inf:
                continue
            own = lambdas.get(v, 0.0) if self.is_leg[v] else 0.0
            mass[v] = best + own
        return mass

    def vertex_bounds(
        self, lambdas: dict[int, float], meet: str = "convex"
    ) -> dict[int, BackwardBound]:
        """Per-vertex combined view (recomputes; meant for tests/inspection)."""
        bounds = self.compute_bounds(meet)
        mass = self.dual_mass(lambdas)
        return {
            v: BackwardBound(v, bounds.op_bound[v], bounds.delay_fns[v], mass[v])
            for v in bounds.op_bound
        }


def bidirectional_cost(label: ForwardLabel, bound: BackwardBound) -> float:
    """Best possible total reduced cost of any completion of the label."""
    if bound.vertex != label.vertex:
        return inf
    mean = 0.0
    if bound.delay_fns:
        mean = float(
            np.mean([f(d) for f, d in zip(bound.delay_fns, label.delays)])
        )
    return label.cost + bound.op_bound + mean - bound.dual_mass


def solve_pricing(
    problem: PricingProblem,
    lambdas: dict[int, float],
    mu: float,
    *,
    bounds: CompletionBounds | None = None,
    cutoff: float = inf,
    use_dominance: bool = True,
    keep: int = 1,
) -> PricingResult:
    """Cheapest route by reduced cost, or none below the cutoff.

    ``bounds`` enables best-first ordering and incumbent pruning; without it
    the search degenerates to plain label enumeration (testing mode).  The
    returned reduced cost includes the aircraft dual ``mu``; a route is only
    returned when its reduced cost is strictly below ``cutoff``.  With
    ``keep`` > 1 the ``keep`` cheapest routes below the cutoff are retained
    (pruning then works against the keep-th best) and the runners-up come
    back in ``alternates``.
    """
    if keep < 1:
        raise InputError("keep must be at least 1")
    stats = PricingStats()
    mass = problem.dual_mass(lambdas) if bounds is not None else {}

    def key(label: ForwardLabel) -> float:
        if bounds is None:
            return label.cost
        b_op = bounds.op_bound.get(label.vertex)
        if b_op is None:
            return inf
        return (
            label.cost
            + b_op
            + bounds.mean_delay_bound(label.vertex, label.delays)
            - mass.get(label.vertex, 0.0)
        )

    # max-heap (negated costs) of the `keep` cheapest sink arrivals so far;
    # once full, its worst member is the pruning threshold
    finals: list[tuple[float, int, ForwardLabel]] = []
    roof = cutoff + mu  # threshold in accumulated-cost space

    def c_star() -> float:
        return -finals[0][0] if len(finals) == keep else roof

    source = ForwardLabel(SOURCE, 0.0, np.zeros(problem.n_scen), None, 0)
    seq = 0
    heap: list[tuple[float, int, int, ForwardLabel]] = []
    k0 = key(source)
    if k0 < roof:
        heap.append((k0, 0, seq, source))
    pools: dict[int, _VertexPool] = {}

    while heap:
        psi, _, _, label = heapq.heappop(heap)
        if not label.alive:
            continue
        if bounds is not None and psi >= c_star():
            break
        stats.popped += 1
        v = label.vertex
        heads = problem.heads.get(v)
        if heads is None:
            continue
        xi = problem.xi[v]
        leave = problem.vertex_cost[v]
        if problem.is_leg[v]:
            if problem.n_scen:
                leave += float(
                    evaluate_many(problem.costfn, xi + label.delays).mean()
                )
            leave -= lambdas.get(v, 0.0)
        new_delays = np.maximum(
            xi[None, :] + label.delays[None, :] - problem.slacks[v][:, None], 0.0
        )
        new_costs = label.cost + leave + problem.arc_costs[v]
        for i, head in enumerate(heads):
            head = int(head)
            child = ForwardLabel(
                head, float(new_costs[i]), new_delays[i], label, label.length + 1
            )
            stats.created += 1
            if head == SINK:
                if child.cost < c_star():
                    seq += 1
                    heapq.heappush(finals, (-child.cost, seq, child))
                    if len(finals) > keep:
                        heapq.heappop(finals)
                continue
            k = key(child)
            if bounds is not None and k >= c_star():
                stats.bound_pruned += 1
                continue
            if use_dominance:
                pool = pools.get(head)
                if pool is None:
                    pool = pools[head] = _VertexPool(problem.n_scen)
                if pool.covered(child.cost, child.delays):
                    stats.dominated += 1
                    continue
                stats.dominated += pool.insert(child)
            seq += 1
            heapq.heappush(heap, (k, child.length, seq, child))

    if not finals:
        feasible = _has_path(problem.graph, problem.arc_ids)
        return PricingResult(None, inf, infeasible=not feasible, stats=stats)
    ranked = sorted((label.cost, label.route()) for _, _, label in finals)
    best_cost, best_route = ranked[0]
    return PricingResult(
        best_route,
        best_cost - mu,
        stats=stats,
        alternates=tuple((route, cost - mu) for cost, route in ranked[1:]),
    )
