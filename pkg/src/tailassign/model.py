"""Schedule data model and the activity connection graph.

Activities are flight legs and maintenance slots.  Two activities u, v are
connectable when v departs from the airport where u arrives and there is at
least the minimum turn time between them; the resulting digraph is acyclic
(departure times strictly increase along arcs).  Each aircraft sees a
filtered subgraph that encodes its start position, its mandatory maintenance
visits, and the exclusivity of other aircraft's fixed activities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf

from .errors import InfeasibleError, InputError
from .pwl import PwlFunction

SOURCE = -1
SINK = -2

LEG = "leg"
MAINTENANCE = "maintenance"


@dataclass(frozen=True)
class Activity:
    id: int
    kind: str
    dep_airport: str
    arr_airport: str
    dep_time: float  # minutes
    arr_time: float
    min_turn: float     # smallest ground time needed before this activity
    sched_turn: float   # ground time the schedule plans before this activity

    def __post_init__(self) -> None:
        if self.id < 0:
            raise InputError(f"activity id must be non-negative, got {self.id}")
        if self.kind not in (LEG, MAINTENANCE):
            raise InputError(f"unknown activity kind {self.kind!r}")
        if self.arr_time <= self.dep_time:
            raise InputError(f"activity {self.id}: arrival must follow departure")
        if self.kind == MAINTENANCE and self.dep_airport != self.arr_airport:
            raise InputError(f"maintenance {self.id} must stay at one airport")
        if self.min_turn < 0 or self.sched_turn < 0:
            raise InputError(f"activity {self.id}: turn times must be >= 0")

    @property
    def is_leg(self) -> bool:
        return self.kind == LEG


@dataclass(frozen=True)
class Aircraft:
    id: int
    first_activity: int
    maintenances: tuple[int, ...]
    leg_costs: dict[int, float]
    arc_costs: dict[tuple[int, int], float]

    def arc_cost(self, u: int, v: int) -> float:
        return self.arc_costs.get((u, v), 0.0)


@dataclass
class Instance:
    activities: list[Activity]
    aircraft: list[Aircraft]
    mandatory_connections: list[tuple[int, int]]
    delay_cost: PwlFunction

    def __post_init__(self) -> None:
        ids = [a.id for a in self.activities]
        if len(set(ids)) != len(ids):
            dups = sorted({i for i in ids if ids.count(i) > 1})
            raise InputError(f"duplicate activity ids: {dups}")
        kids = [k.id for k in self.aircraft]
        if len(set(kids)) != len(kids):
            raise InputError("duplicate aircraft ids")
        known = set(ids)
        owner: dict[int, int] = {}
        for k in self.aircraft:
            if k.first_activity not in known:
                raise InputError(f"aircraft {k.id}: unknown first activity")
            for m in k.maintenances:
                if m not in known:
                    raise InputError(f"aircraft {k.id}: unknown maintenance {m}")
                if owner.setdefault(m, k.id) != k.id:
                    raise InputError(f"maintenance {m} assigned to two aircraft")
        by_id = {a.id: a for a in self.activities}
        for m, k in owner.items():
            if by_id[m].kind != MAINTENANCE:
                raise InputError(f"activity {m} listed as maintenance but is a leg")
        orphans = sorted(
            a.id for a in self.activities
            if a.kind == MAINTENANCE and a.id not in owner
        )
        if orphans:
            raise InputError(f"maintenances without an aircraft: {orphans}")
        for u, v in self.mandatory_connections:
            if u not in known or v not in known:
                raise InputError(f"mandatory connection ({u}, {v}) off the schedule")

    @property
    def legs(self) -> list[Activity]:
        return [a for a in self.activities if a.is_leg]

    def activity(self, aid: int) -> Activity:
        for a in self.activities:
            if a.id == aid:
                return a
        raise KeyError(aid)


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    slack: float  # head scheduled buffer minus actual gap; +inf on dummy arcs


@dataclass(frozen=True, eq=False)
class ConnectionGraph:
    activities: tuple[Activity, ...]
    arcs: tuple[Arc, ...]
    active: frozenset[int]                      # arc ids still in the pool
    subgraphs: dict[int, frozenset[int]]        # aircraft id -> arc ids
    index: dict[tuple[int, int], int] = field(repr=False)
    act_by_id: dict[int, Activity] = field(repr=False)
    maintenance_owner: dict[int, int] = field(repr=False)
    first_owner: dict[int, int] = field(repr=False)

    def dep_time(self, vid: int) -> float:
        if vid == SOURCE:
            return -inf
        if vid == SINK:
            return inf
        return self.act_by_id[vid].dep_time

    def arr_time(self, vid: int) -> float:
        if vid == SOURCE:
            return -inf
        if vid == SINK:
            return inf
        return self.act_by_id[vid].arr_time

    def is_leg(self, vid: int) -> bool:
        return vid >= 0 and self.act_by_id[vid].is_leg

    def arc_between(self, u: int, v: int) -> int | None:
        return self.index.get((u, v))

    def out_arcs(self, arc_ids) -> dict[int, list[int]]:
        """Adjacency (tail vertex -> sorted arc ids) over a given arc subset."""
        adj: dict[int, list[int]] = {}
        for aid in sorted(arc_ids):
            adj.setdefault(self.arcs[aid].tail, []).append(aid)
        return adj

    def in_arcs(self, arc_ids) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {}
        for aid in sorted(arc_ids):
            adj.setdefault(self.arcs[aid].head, []).append(aid)
        return adj

    def vertex_order(self) -> list[int]:
        """Topological vertex order: source, activities by departure, sink."""
        acts = sorted(self.activities, key=lambda a: (a.dep_time, a.id))
        return [SOURCE, *(a.id for a in acts), SINK]


def build_graph(instance: Instance) -> ConnectionGraph:
    """Connection digraph over all activities plus the two dummy endpoints."""
    acts = sorted(instance.activities, key=lambda a: (a.dep_time, a.id))
    arcs: list[Arc] = []
    # dummy source/sink arcs carry no propagation: infinite slack
    arcs.append(Arc(SOURCE, SINK, inf))
    for a in acts:
        arcs.append(Arc(SOURCE, a.id, inf))
    for u in acts:
        for v in acts:
            if u.id == v.id or u.arr_airport != v.dep_airport:
                continue
            if u.arr_time + v.min_turn <= v.dep_time:
                slack = v.dep_time - u.arr_time - v.sched_turn
                arcs.append(Arc(u.id, v.id, slack))
    for a in acts:
        arcs.append(Arc(a.id, SINK, inf))

    by_id = {a.id: a for a in instance.activities}
    arcs.sort(key=lambda arc: (
        -inf if arc.tail == SOURCE else by_id[arc.tail].dep_time,
        inf if arc.head == SINK else by_id[arc.head].dep_time,
        arc.tail,
        arc.head,
    ))
    index = {(arc.tail, arc.head): i for i, arc in enumerate(arcs)}
    owner = {m: k.id for k in instance.aircraft for m in k.maintenances}
    first = {k.first_activity: k.id for k in instance.aircraft}
    return ConnectionGraph(
        activities=tuple(acts),
        arcs=tuple(arcs),
        active=frozenset(range(len(arcs))),
        subgraphs={},
        index=index,
        act_by_id=by_id,
        maintenance_owner=owner,
        first_owner=first,
    )


def build_subgraph(graph: ConnectionGraph, aircraft: Aircraft) -> frozenset[int]:
    """Arc ids this aircraft may use.

    Removes: arcs touching other aircraft's maintenances or first activities,
    source arcs other than the one to the aircraft's first activity, other
    arcs into the first activity, and arcs that would make one of the
    aircraft's own maintenance visits impossible (see ``_bypasses``).
    Raises InfeasibleError when no source-sink path survives.
    """
    k = aircraft.id
    sigma = aircraft.first_activity
    keep: list[int] = []
    for aid in sorted(graph.active):
        arc = graph.arcs[aid]
        u, v = arc.tail, arc.head
        if _foreign(graph, u, k) or _foreign(graph, v, k):
            continue
        if u == SOURCE and v != sigma:
            continue
        if v == sigma and u != SOURCE:
            continue
        if any(
            _bypasses(graph, u, v, m)
            for m in aircraft.maintenances
            if u != m and v != m
        ):
            continue
        keep.append(aid)
    sub = frozenset(keep)
    if not _has_path(graph, sub):
        raise InfeasibleError(
            f"aircraft {k}: no feasible route through its fixed activities"
        )
    return sub


def _foreign(graph: ConnectionGraph, vid: int, k: int) -> bool:
    """Vertex fixed to a different aircraft (maintenance or start activity)."""
    if vid < 0:
        return False
    if graph.maintenance_owner.get(vid, k) != k:
        return True
    return graph.first_owner.get(vid, k) != k


def _bypasses(graph: ConnectionGraph, u: int, v: int, m: int) -> bool:
    """True when using arc (u, v) makes visiting maintenance m impossible.

    m can precede u on some path only if m arrives before u departs; m can
    follow v only if v arrives before m departs.  When neither holds, any
    route through (u, v) skips m.
    """
    r_m = graph.arr_time(m)
    d_m = graph.dep_time(m)
    can_precede = r_m <= graph.dep_time(u)
    can_follow = graph.arr_time(v) <= d_m
    return not can_precede and not can_follow


def _has_path(graph: ConnectionGraph, arc_ids: frozenset[int]) -> bool:
    adj = graph.out_arcs(arc_ids)
    seen = {SOURCE}
    stack = [SOURCE]
    while stack:
        u = stack.pop()
        if u == SINK:
            return True
        for aid in adj.get(u, ()):  # heads sorted by arc order
            w = graph.arcs[aid].head
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def build_all_subgraphs(graph: ConnectionGraph, instance: Instance) -> ConnectionGraph:
    subs = {k.id: build_subgraph(graph, k) for k in instance.aircraft}
    return ConnectionGraph(
        activities=graph.activities,
        arcs=graph.arcs,
        active=graph.active,
        subgraphs=subs,
        index=graph.index,
        act_by_id=graph.act_by_id,
        maintenance_owner=graph.maintenance_owner,
        first_owner=graph.first_owner,
    )


def apply_mandatory_connections(
    graph: ConnectionGraph, instance: Instance
) -> ConnectionGraph:
    """Force listed connections: drop every other arc leaving their tails."""
    banned: set[int] = set()
    for u, v in instance.mandatory_connections:
        if graph.arc_between(u, v) is None or graph.arc_between(u, v) not in graph.active:
            raise InputError(f"mandatory connection ({u}, {v}) is not a usable arc")
        for aid in graph.active:
            arc = graph.arcs[aid]
            if arc.tail == u and arc.head != v:
                banned.add(aid)
    active = frozenset(graph.active - banned)
    subs = {k: frozenset(s - banned) for k, s in graph.subgraphs.items()}
    for k, sub in subs.items():
        if not _has_path(graph, sub):
            raise InfeasibleError(
                f"mandatory connections leave aircraft {k} without a route"
            )
    return ConnectionGraph(
        activities=graph.activities,
        arcs=graph.arcs,
        active=active,
        subgraphs=subs,
        index=graph.index,
        act_by_id=graph.act_by_id,
        maintenance_owner=graph.maintenance_owner,
        first_owner=graph.first_owner,
    )


def preprocess(instance: Instance) -> ConnectionGraph:
    """build_graph + per-aircraft subgraphs + mandatory connection filter."""
    graph = build_all_subgraphs(build_graph(instance), instance)
    if instance.mandatory_connections:
        graph = apply_mandatory_connections(graph, instance)
    return graph


def route_vertices(route) -> list[int]:
    """Route as the full vertex sequence including the dummy endpoints."""
    return [SOURCE, *route, SINK]


def route_operational_cost(
    route, aircraft: Aircraft, graph: ConnectionGraph
) -> float:
    """Leg costs plus connection costs along the route (delays excluded).

    ``route`` is the ordered activity ids, dummies implied.  The route must
    be a path in the aircraft's subgraph when one is attached to the graph.
    """
    allowed = graph.subgraphs.get(aircraft.id, graph.active)
    total = 0.0
    verts = route_vertices(route)
    for u, v in zip(verts, verts[1:]):
        aid = graph.arc_between(u, v)
        if aid is None or aid not in allowed:
            raise ValueError(
                f"aircraft {aircraft.id}: ({u}, {v}) is not a usable connection"
            )
        total += aircraft.arc_cost(u, v)
    for vid in route:
        if graph.is_leg(vid):
            total += aircraft.leg_costs.get(vid, 0.0)
    return total
