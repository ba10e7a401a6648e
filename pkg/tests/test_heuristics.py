"""Diving and the pool heuristic against exhaustive oracles."""

import itertools

import pytest

from tailassign.heuristics import diving, restricted_master_heuristic
from tailassign.master import column_generation, make_column
from tailassign.model import SINK, SOURCE, preprocess
from tailassign.scenario import (
    GeneratorConfig,
    generate_instance,
    generate_scenarios,
    solution_cost,
)


def tiny(seed, aircraft=2, legs=7, scenarios=3):
    config = GeneratorConfig(aircraft=aircraft, legs=legs)
    instance = generate_instance(config, seed=seed)
    graph = preprocess(instance)
    scen = generate_scenarios(instance, scenarios, seed=seed + 4000)
    return instance, graph, scen


def all_routes(graph, aircraft):
    adj = graph.out_arcs(graph.subgraphs[aircraft.id])
    routes = []

    def walk(v, path):
        if v == SINK:
            routes.append(tuple(x for x in path if x != SINK))
            return
        for aid in adj.get(v, ()):
            head = graph.arcs[aid].head
            walk(head, path + [head])

    walk(SOURCE, [])
    return routes


def exhaustive_optimum(instance, graph, scen):
    """Cross product of per-aircraft routes, leg-partition filter, min cost."""
    legs = frozenset(a.id for a in instance.activities if a.is_leg)
    per_aircraft = [all_routes(graph, k) for k in instance.aircraft]
    best, best_routes = None, None
    for combo in itertools.product(*per_aircraft):
        covered = []
        for route in combo:
            covered.extend(v for v in route if graph.is_leg(v))
        if len(covered) != len(legs) or set(covered) != legs:
            continue
        routes = {k.id: r for k, r in zip(instance.aircraft, combo)}
        cost = solution_cost(routes, instance, scen, graph).total
        if best is None or cost < best - 1e-12:
            best, best_routes = cost, routes
    return best, best_routes


@pytest.mark.parametrize("seed", range(10))
def test_sandwich_on_tiny_instances(seed):
    instance, graph, scen = tiny(seed)
    exact, _ = exhaustive_optimum(instance, graph, scen)
    assert exact is not None
    result = diving(graph, instance, scen)
    assert result.succeeded
    state = result.root_state
    rmh = restricted_master_heuristic(state, graph, instance, scen)
    assert rmh is not None
    c_low = result.root_lp
    assert c_low <= exact + 1e-6
    assert exact <= result.solution.total + 1e-6
    assert result.solution.total <= rmh.total + 1e-6
    assert result.gap >= -1e-9


@pytest.mark.parametrize("seed", range(6))
def test_dive_solution_is_a_valid_partition(seed):
    instance, graph, scen = tiny(seed, aircraft=3, legs=11)
    result = diving(graph, instance, scen)
    assert result.succeeded
    breakdown = solution_cost(result.solution.routes, instance, scen, graph)
    assert breakdown.operational == pytest.approx(
        result.solution.operational, abs=1e-6
    )
    assert breakdown.delay == pytest.approx(result.solution.delay, abs=1e-6)


def test_single_aircraft_dive_matches_exhaustive():
    instance, graph, scen = tiny(2, aircraft=1, legs=6)
    exact, routes = exhaustive_optimum(instance, graph, scen)
    result = diving(graph, instance, scen)
    assert result.succeeded
    assert result.solution.total == pytest.approx(exact, abs=1e-6)
    assert result.gap == pytest.approx(0.0, abs=1e-6)


def test_rmh_matches_pool_bruteforce():
    instance, graph, scen = tiny(5, aircraft=3, legs=10)
    state = column_generation(graph, instance, scen)
    got = restricted_master_heuristic(state, graph, instance, scen)
    # brute force over the same pool: one-or-none column per aircraft
    pools = state.pools()
    legs = frozenset(state.leg_ids)
    best = None
    for combo in itertools.product(*([None, *pool] for pool in pools.values())):
        cols = [c for c in combo if c is not None]
        covered = [l for c in cols for l in c.legs]
        if len(covered) != len(legs) or set(covered) != legs:
            continue
        cost = sum(c.cost for c in cols)
        if best is None or cost < best:
            best = cost
    assert best is not None
    assert got is not None
    assert got.total == pytest.approx(best, abs=1e-6)


def test_rmh_degrades_when_pool_lacks_the_optimum():
    instance, graph, scen = tiny(1)
    exact, routes = exhaustive_optimum(instance, graph, scen)
    state = column_generation(graph, instance, scen)
    goners = set(routes.items())
    state.columns = [c for c in state.columns if (c.aircraft, c.route) not in goners]
    got = restricted_master_heuristic(state, graph, instance, scen)
    if got is not None:
        assert got.total >= exact - 1e-9


def test_rmh_returns_pooled_integral_optimum():
    instance, graph, scen = tiny(7)
    exact, routes = exhaustive_optimum(instance, graph, scen)
    state = column_generation(graph, instance, scen)
    for k in instance.aircraft:
        state.columns.append(
            make_column(graph, k, routes[k.id], scen, instance.delay_cost)
        )
    got = restricted_master_heuristic(state, graph, instance, scen)
    assert got is not None
    assert got.total == pytest.approx(exact, abs=1e-6)


def test_child_colgen_with_root_bounds_matches_fresh_bounds():
    """Stale completion bounds must not change the residual relaxation."""
    instance, graph, scen = tiny(6, aircraft=3, legs=12)
    root = column_generation(graph, instance, scen)
    fixed = max(
        zip(root.columns, root.values), key=lambda cv: (cv[1], -cv[0].aircraft)
    )[0]
    rest = [k for k in instance.aircraft if k.id != fixed.aircraft]
    leg_ids = [l for l in root.leg_ids if l not in fixed.legs]
    arc_sets = {
        k.id: frozenset(
            aid
            for aid in graph.subgraphs[k.id]
            if graph.arcs[aid].tail not in fixed.route
            and graph.arcs[aid].head not in fixed.route
        )
        for k in rest
    }

    def run(bounds):
        return column_generation(
            graph,
            instance,
            scen,
            aircraft=rest,
            arc_sets=dict(arc_sets),
            leg_ids=list(leg_ids),
            bounds=bounds,
            big=root.big,
        )

    stale = run(dict(root.bounds))
    fresh = run(None)
    assert stale.converged and fresh.converged
    if stale.feasible and fresh.feasible:
        assert stale.lp_value == pytest.approx(fresh.lp_value, abs=1e-6)


def test_taboo_capacity_must_be_nonnegative():
    instance, graph, scen = tiny(0)
    with pytest.raises(ValueError):
        diving(graph, instance, scen, taboo_capacity=-1)


def _failing_colgen(n_failures):
    """Wrap column_generation to declare the first n child nodes infeasible."""
    from tailassign import heuristics as h
    from tailassign.errors import InfeasibleError

    real = h.column_generation
    calls = {"n": 0}

    def shim(*args, **kwargs):
        if kwargs.get("aircraft") is not None:  # child nodes only
            calls["n"] += 1
            if calls["n"] <= n_failures:
                raise InfeasibleError("synthetic dead end")
        return real(*args, **kwargs)

    return shim


def test_backtracking_taboos_the_failed_fix_and_recovers(monkeypatch):
    instance, graph, scen = tiny(4, aircraft=3, legs=12)
    plain = diving(graph, instance, scen)
    assert plain.succeeded and plain.backtracks == 0
    monkeypatch.setattr(
        "tailassign.heuristics.column_generation", _failing_colgen(2)
    )
    bumpy = diving(graph, instance, scen, root_state=plain.root_state)
    assert bumpy.succeeded
    assert bumpy.backtracks == 2
    assert not bumpy.taboo_exhausted
    # same relaxation, so still a valid solution no worse than the bound
    assert bumpy.solution.total >= plain.root_lp - 1e-6


def test_overflowing_the_taboo_list_fails_the_dive(monkeypatch):
    instance, graph, scen = tiny(4, aircraft=3, legs=12)
    plain = diving(graph, instance, scen)
    monkeypatch.setattr(
        "tailassign.heuristics.column_generation", _failing_colgen(10**9)
    )
    dead = diving(
        graph, instance, scen, root_state=plain.root_state, taboo_capacity=1
    )
    assert not dead.succeeded
    assert dead.taboo_exhausted
    assert dead.solution is None
    assert dead.backtracks == 2  # capacity 1: second taboo entry overflows


def test_dive_trace_is_recorded():
    instance, graph, scen = tiny(3, aircraft=3, legs=10)
    result = diving(graph, instance, scen)
    assert result.succeeded
    assert result.trace
    assert {"node", "depth", "lp_value", "fixed_aircraft", "fixed_route", "backtracks"} \
        <= set(result.trace[0])
