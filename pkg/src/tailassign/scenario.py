"""Delay scenarios: sampling, propagation along routes, and solution costs.

Each scenario assigns every activity an intrinsic departure disruption
(boarding, fueling, ...) and an intrinsic arrival disruption (winds, runway
congestion, ...).  Delays travel along a route: an activity departs late by
its own disruption plus whatever part of the predecessor's arrival delay the
schedule buffer cannot absorb.  Costs charge the arrival delay of legs
through a piecewise linear non-decreasing function; maintenance slots
propagate delay but cost nothing unless explicitly enabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, InputError
from .model import (
    LEG,
    MAINTENANCE,
    Activity,
    Aircraft,
    ConnectionGraph,
    Instance,
    preprocess,
    route_operational_cost,
)
from .pwl import PwlFunction, evaluate_many, make_pwl


@dataclass(eq=False)
class ScenarioSet:
    """Sampled disruptions: matrices indexed (scenario, activity)."""

    activity_ids: tuple[int, ...]
    dep: np.ndarray
    arr: np.ndarray

    def __post_init__(self) -> None:
        self.dep = np.asarray(self.dep, dtype=float).reshape(-1, len(self.activity_ids))
        self.arr = np.asarray(self.arr, dtype=float).reshape(-1, len(self.activity_ids))
        if self.dep.shape != self.arr.shape:
            raise InputError("departure and arrival matrices differ in shape")
        if self.dep.size and self.dep.min() < 0:
            raise InputError("departure disruptions must be non-negative")
        self.xi = self.dep + self.arr
        self._col = {aid: i for i, aid in enumerate(self.activity_ids)}

    @property
    def count(self) -> int:
        return self.dep.shape[0]

    def col(self, activity_id: int) -> int:
        try:
            return self._col[activity_id]
        except KeyError:
            raise InputError(f"no scenario data for activity {activity_id}") from None

    @classmethod
    def empty(cls, instance: Instance) -> "ScenarioSet":
        ids = tuple(a.id for a in instance.activities)
        z = np.zeros((0, len(ids)))
        return cls(ids, z, z.copy())


def propagate_route(
    route, scenarios: ScenarioSet, graph: ConnectionGraph
) -> np.ndarray:
    """Arrival delays, shape (scenarios, len(route)).

    The first activity has no inbound propagation; afterwards the part of the
    previous arrival delay exceeding the connection's schedule buffer carries
    over.  Buffers can be negative (schedule planned tighter than flown).
    """
    out = np.zeros((scenarios.count, len(route)))
    carried = np.zeros(scenarios.count)
    prev = None
    for i, vid in enumerate(route):
        c = scenarios.col(vid)
        if prev is not None:
            aid = graph.arc_between(prev, vid)
            if aid is None:
                raise InputError(f"({prev}, {vid}) is not a connection arc")
            slack = graph.arcs[aid].slack
            carried = np.maximum(out[:, i - 1] - slack, 0.0)
        dep_delay = scenarios.dep[:, c] + carried
        out[:, i] = dep_delay + scenarios.arr[:, c]
        prev = vid
    return out


def route_delay_cost(
    route,
    scenarios: ScenarioSet,
    graph: ConnectionGraph,
    costfn: PwlFunction,
    include_maintenance: bool = False,
) -> float:
    """Sample-average delay cost of one route (legs only by default)."""
    if scenarios.count == 0 or not route:
        return 0.0
    delays = propagate_route(route, scenarios, graph)
    total = 0.0
    for i, vid in enumerate(route):
        if include_maintenance or graph.is_leg(vid):
            total += evaluate_many(costfn, delays[:, i]).sum()
    return total / scenarios.count


@dataclass(frozen=True)
class CostBreakdown:
    operational: float
    delay: float

    @property
    def total(self) -> float:
        return self.operational + self.delay


def solution_cost(
    routes: dict[int, tuple[int, ...]],
    instance: Instance,
    scenarios: ScenarioSet,
    graph: ConnectionGraph,
    include_maintenance: bool = False,
) -> CostBreakdown:
    """Cost of a full assignment; validates that routes partition the legs."""
    legs = {a.id for a in instance.activities if a.is_leg}
    seen: list[int] = []
    for r in routes.values():
        seen.extend(v for v in r if graph.is_leg(v))
    dup = sorted({v for v in seen if seen.count(v) > 1})
    missing = sorted(legs - set(seen))
    if dup or missing:
        raise InfeasibleError(
            f"routes do not partition the legs (duplicated {dup}, missing {missing})"
        )
    by_id = {k.id: k for k in instance.aircraft}
    if set(routes) != set(by_id):
        raise InfeasibleError("every aircraft needs exactly one route")
    op = 0.0
    delay = 0.0
    for kid, r in sorted(routes.items()):
        op += route_operational_cost(r, by_id[kid], graph)
        delay += route_delay_cost(
            r, scenarios, graph, instance.delay_cost, include_maintenance
        )
    return CostBreakdown(op, delay)


# ---------------------------------------------------------------------------
# synthetic instances


def default_delay_cost() -> PwlFunction:
    # free below 15 minutes of positive... no: slope 1 from 0, stiffer later
    return make_pwl([(0.0, 0.0), (15.0, 15.0), (60.0, 150.0)], 0.0, 8.0)


@dataclass(frozen=True)
class DelayConfig:
    """Distribution knobs for scenario sampling (minutes)."""

    dep_zero_prob: float = 0.6
    dep_mean: float = 12.0
    arr_mean: float = 10.0
    arr_shift: float = 5.0
    arr_floor: float = -10.0


@dataclass(frozen=True)
class GeneratorConfig:
    aircraft: int = 3
    legs: int = 18
    airports: int = 4
    horizon_days: float = 2.0
    maintenances_per_aircraft: int = 1
    leg_minutes: tuple[int, int] = (60, 180)
    min_turn: tuple[int, int] = (25, 40)
    sched_turn: tuple[int, int] = (30, 50)
    extra_gap: tuple[int, int] = (0, 90)
    maintenance_minutes: tuple[int, int] = (120, 240)
    leg_cost: tuple[float, float] = (80.0, 160.0)
    idle_cost_per_minute: float = 0.35
    connection_cost_base: float = 2.0
    efficiency_spread: float = 0.12
    hub_bias: float = 0.5
    mandatory_connections: int = 0
    delay: DelayConfig = field(default_factory=DelayConfig)
    delay_cost: PwlFunction = field(default_factory=default_delay_cost)
    max_retries: int = 20


def generate_instance(config: GeneratorConfig, seed: int) -> Instance:
    """Deterministic synthetic schedule that is feasible by construction.

    Each aircraft gets a closed rotation of legs (optionally interrupted by
    maintenance slots at its current airport); the union of rotations is the
    published schedule.  The builder validates its own rotation against the
    final connection graph and retries with a derived seed if a config makes
    that impossible.
    """
    last_err: Exception | None = None
    for attempt in range(config.max_retries):
        rng = np.random.default_rng(np.random.PCG64(seed * 1_000_003 + attempt))
        try:
            return _generate_once(config, rng)
        except (InfeasibleError, InputError) as err:  # pragma: no cover - rare
            last_err = err
    raise InfeasibleError(
        f"could not build a feasible instance for this config: {last_err}"
    )


def _generate_once(config: GeneratorConfig, rng: np.random.Generator) -> Instance:
    airports = [f"A{i}" for i in range(config.airports)]
    hub = airports[0]
    counts = [config.legs // config.aircraft] * config.aircraft
    for i in range(config.legs % config.aircraft):
        counts[i] += 1

    activities: list[Activity] = []
    rotations: list[list[int]] = []
    maint_ids: list[list[int]] = []
    next_id = 0

    for k in range(config.aircraft):
        n_legs = counts[k]
        if n_legs == 0:
            raise InputError("every aircraft needs at least one leg")
        slots = set()
        if config.maintenances_per_aircraft and n_legs > 1:
            slots = set(
                rng.choice(
                    np.arange(1, n_legs),
                    size=min(config.maintenances_per_aircraft, n_legs - 1),
                    replace=False,
                )
            )
        here = airports[int(rng.integers(len(airports)))]
        t = float(rng.integers(0, 180))
        rotation: list[int] = []
        my_maint: list[int] = []
        prev_arr: float | None = None
        for pos in range(n_legs):
            chain: list[str] = [LEG]
            if pos in slots:
                chain.insert(0, MAINTENANCE)
            for kind in chain:
                min_turn = float(rng.integers(*_incl(config.min_turn)))
                sched_turn = float(rng.integers(*_incl(config.sched_turn)))
                if prev_arr is None:
                    dep = t
                else:
                    extra = float(rng.integers(*_incl(config.extra_gap)))
                    dep = prev_arr + max(min_turn, sched_turn + extra)
                if kind == MAINTENANCE:
                    dur = float(rng.integers(*_incl(config.maintenance_minutes)))
                    act = Activity(
                        next_id, MAINTENANCE, here, here, dep, dep + dur,
                        min_turn, sched_turn,
                    )
                    my_maint.append(next_id)
                else:
                    if here != hub and rng.random() < config.hub_bias:
                        to = hub
                    else:
                        others = [a for a in airports if a != here]
                        to = others[int(rng.integers(len(others)))]
                    dur = float(rng.integers(*_incl(config.leg_minutes)))
                    act = Activity(
                        next_id, LEG, here, to, dep, dep + dur, min_turn, sched_turn
                    )
                    here = to
                activities.append(act)
                rotation.append(next_id)
                next_id += 1
                prev_arr = act.arr_time
        rotations.append(rotation)
        maint_ids.append(my_maint)

    # costs; connectable pairs mirror the graph's arc condition
    base_leg_cost = {
        a.id: rng.uniform(*config.leg_cost) for a in activities if a.is_leg
    }
    effs = 1.0 + rng.uniform(
        -config.efficiency_spread, config.efficiency_spread, size=config.aircraft
    )
    pairs = [
        (u, v)
        for u in activities
        for v in activities
        if u.id != v.id
        and u.arr_airport == v.dep_airport
        and u.arr_time + v.min_turn <= v.dep_time
    ]
    aircraft: list[Aircraft] = []
    for k in range(config.aircraft):
        leg_costs = {
            lid: round(c * effs[k], 6) for lid, c in base_leg_cost.items()
        }
        arc_costs = {}
        for u, v in pairs:
            idle = v.dep_time - u.arr_time
            cost = config.connection_cost_base + config.idle_cost_per_minute * idle
            arc_costs[(u.id, v.id)] = round(cost * effs[k], 6)
        aircraft.append(
            Aircraft(
                id=k,
                first_activity=rotations[k][0],
                maintenances=tuple(maint_ids[k]),
                leg_costs=leg_costs,
                arc_costs=arc_costs,
            )
        )

    mandatory: list[tuple[int, int]] = []
    if config.mandatory_connections:
        links = [
            (r[i], r[i + 1])
            for r in rotations
            for i in range(len(r) - 1)
        ]
        take = min(config.mandatory_connections, len(links))
        picked = rng.choice(np.arange(len(links)), size=take, replace=False)
        mandatory = [links[int(i)] for i in sorted(picked)]

    instance = Instance(
        activities=activities,
        aircraft=aircraft,
        mandatory_connections=mandatory,
        delay_cost=config.delay_cost,
    )
    _check_reference_solution(instance, rotations)
    return instance


def _incl(rng_pair: tuple[int, int]) -> tuple[int, int]:
    lo, hi = rng_pair
    return (int(lo), int(hi) + 1)


def _check_reference_solution(instance: Instance, rotations: list[list[int]]) -> None:
    """Prove feasibility: the built-in rotation must be a valid solution."""
    graph = preprocess(instance)
    routes = {k.id: tuple(rotations[i]) for i, k in enumerate(instance.aircraft)}
    solution_cost(routes, instance, ScenarioSet.empty(instance), graph)


def generate_scenarios(
    instance: Instance,
    count: int,
    seed: int,
    config: DelayConfig | None = None,
) -> ScenarioSet:
    """Sample disruption scenarios; identical seeds give identical samples."""
    cfg = config or DelayConfig()
    ids = tuple(a.id for a in instance.activities)
    rng = np.random.default_rng(np.random.PCG64(seed))
    n = len(ids)
    dep = rng.exponential(cfg.dep_mean, size=(count, n))
    dep[rng.random(size=(count, n)) < cfg.dep_zero_prob] = 0.0
    arr = np.maximum(
        rng.exponential(cfg.arr_mean, size=(count, n)) - cfg.arr_shift,
        cfg.arr_floor,
    )
    return ScenarioSet(ids, np.round(dep, 3), np.round(arr, 3))
