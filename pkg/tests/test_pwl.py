import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tailassign import pwl
from tailassign.pwl import (
    PwlFunction,
    add,
    compose_affine,
    compose_prop,
    constant,
    convex_meet,
    convex_minorant_thin,
    debug_format,
    evaluate,
    evaluate_many,
    is_convex,
    make_pwl,
    pointwise_min,
    segment_slopes,
)


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * (1.0 + max(abs(a), abs(b)))


def delay_cost_fn():
    # slopes 0 below zero, then 1, then 3 after x=15
    return make_pwl([(0.0, 0.0), (15.0, 15.0)], 0.0, 3.0)


def grid_around(f, extra=(), n=41, pad=10.0):
    xs = list(f.xs) + list(extra)
    lo, hi = min(xs) - pad, max(xs) + pad
    return np.linspace(lo, hi, n)


# random generator used by both the unit tests and the acceptance run
def random_pwl(rng, nondecreasing=False, convex=False, max_breaks=6):
    n = rng.integers(1, max_breaks + 1)
    xs = np.sort(rng.uniform(-50, 50, size=n))
    # enforce strict spacing
    xs = xs + np.arange(n) * 1e-3
    if convex:
        k = n + 1
        slopes = np.sort(rng.uniform(-4, 4, size=k))
        if nondecreasing:
            slopes = np.maximum(slopes, 0.0)
        y0 = rng.uniform(-20, 20)
        ys = [y0]
        for i in range(n - 1):
            ys.append(ys[-1] + slopes[i + 1] * (xs[i + 1] - xs[i]))
        return make_pwl(list(zip(xs, ys)), slopes[0], slopes[-1])
    slopes = rng.uniform(-4, 4, size=n + 1)
    if nondecreasing:
        slopes = np.abs(slopes)
    y0 = rng.uniform(-20, 20)
    ys = [y0]
    for i in range(n - 1):
        ys.append(ys[-1] + slopes[i + 1] * (xs[i + 1] - xs[i]))
    return make_pwl(list(zip(xs, ys)), slopes[0], slopes[-1])


def test_evaluate_delay_cost_examples():
    f = delay_cost_fn()
    assert evaluate(f, -5.0) == 0.0
    assert evaluate(f, 0.0) == 0.0
    assert evaluate(f, 10.0) == 10.0
    assert evaluate(f, 15.0) == 15.0
    assert evaluate(f, 20.0) == 30.0  # 15 + 5*3


def test_evaluate_matches_vectorised():
    rng = np.random.default_rng(0)
    for _ in range(50):
        f = random_pwl(rng)
        xs = grid_around(f)
        vec = evaluate_many(f, xs)
        for x, v in zip(xs, vec):
            assert close(evaluate(f, x), v)


def test_add_grid_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        f, g = random_pwl(rng), random_pwl(rng)
        h = add(f, g)
        for x in grid_around(f, extra=g.xs + h.xs):
            assert close(evaluate(h, x), evaluate(f, x) + evaluate(g, x))


def test_compose_affine_shift():
    f = delay_cost_fn()
    g = compose_affine(f, 7.0)
    for x in np.linspace(-30, 40, 71):
        assert close(evaluate(g, x), evaluate(f, x + 7.0))


def test_compose_prop_spec_example():
    # ramp max(x, 0) with xi=0, slack=10 becomes max(x-10, 0)
    ramp = make_pwl([(0.0, 0.0)], 0.0, 1.0)
    h = compose_prop(ramp, 0.0, 10.0)
    for x, want in [(-5, 0.0), (10, 0.0), (15, 5.0), (30, 20.0)]:
        assert close(evaluate(h, x), want)


def test_compose_prop_grid_oracle():
    rng = np.random.default_rng(2)
    for _ in range(200):
        f = random_pwl(rng, nondecreasing=True)
        xi = rng.uniform(-20, 20)
        slack = rng.uniform(-10, 30)
        h = compose_prop(f, xi, slack)
        for x in grid_around(h, extra=f.xs):
            want = evaluate(f, xi + max(x - slack, 0.0))
            assert close(evaluate(h, x), want)


def test_compose_prop_infinite_slack_is_constant():
    f = delay_cost_fn()
    h = compose_prop(f, 12.0, float("inf"))
    assert close(evaluate(h, -100.0), 12.0)
    assert close(evaluate(h, 1e6), 12.0)


def test_compose_prop_rejects_decreasing():
    f = make_pwl([(0.0, 0.0)], 0.0, -1.0)
    with pytest.raises(ValueError):
        compose_prop(f, 0.0, 1.0)


def test_pointwise_min_grid_oracle():
    rng = np.random.default_rng(3)
    for _ in range(300):
        f, g = random_pwl(rng), random_pwl(rng)
        h = pointwise_min(f, g)
        for x in grid_around(h, extra=tuple(f.xs) + tuple(g.xs), n=81, pad=40.0):
            assert close(evaluate(h, x), min(evaluate(f, x), evaluate(g, x)))


def test_pointwise_min_tail_crossings():
    f = make_pwl([(0.0, 0.0)], -1.0, 1.0)   # V at 0
    g = constant(5.0)
    h = pointwise_min(f, g)
    # crossings at -5 and +5
    assert close(evaluate(h, -10.0), 5.0)
    assert close(evaluate(h, -5.0), 5.0)
    assert close(evaluate(h, 0.0), 0.0)
    assert close(evaluate(h, 5.0), 5.0)
    assert close(evaluate(h, 100.0), 5.0)


def test_convex_meet_matches_hull_oracle():
    # independent oracle: Andrew's monotone chain over densely sampled points
    rng = np.random.default_rng(4)
    for _ in range(200):
        f = random_pwl(rng, convex=True)
        g = random_pwl(rng, convex=True)
        ls = max(f.left_slope, g.left_slope)
        rs = min(f.right_slope, g.right_slope)
        if ls > rs + 1e-9:
            with pytest.raises(ValueError):
                convex_meet(f, g)
            continue
        h = convex_meet(f, g)
        assert is_convex(h)
        assert len(h.xs) <= len(f.xs) + len(g.xs)
        # below both inputs everywhere
        for x in grid_around(h, extra=tuple(f.xs) + tuple(g.xs), n=61, pad=30.0):
            hv = evaluate(h, x)
            assert hv <= evaluate(f, x) + 1e-7 * (1 + abs(hv))
            assert hv <= evaluate(g, x) + 1e-7 * (1 + abs(hv))
        # largest: every breakpoint of h lies on min(f, g)
        for x, y in zip(h.xs, h.ys):
            assert close(y, min(evaluate(f, x), evaluate(g, x)), tol=1e-7)
        # oracle: on a wide window, h equals the lower convex hull of sampled
        # min(f,g) within discretisation error
        window = np.linspace(min(h.xs) - 20, max(h.xs) + 20, 400)
        mins = np.minimum(evaluate_many(f, window), evaluate_many(g, window))
        hv = evaluate_many(h, window)
        assert np.all(hv <= mins + 1e-7 * (1 + np.abs(mins)))
        hull = _lower_hull_oracle(list(zip(window, mins)))
        # hull of samples is an upper approximation of the true envelope on
        # the window interior; compare at hull vertices
        for x, y in hull[1:-1]:
            assert evaluate(h, x) <= y + 1e-6 * (1 + abs(y))


def _lower_hull_oracle(points):
    """Andrew's monotone chain (lower hull), written independently of pwl.py."""
    pts = sorted(points)
    hull = []
    for p in pts:
        while len(hull) >= 2 and (
            (hull[-1][0] - hull[-2][0]) * (p[1] - hull[-2][1])
            - (hull[-1][1] - hull[-2][1]) * (p[0] - hull[-2][0])
        ) <= 0:
            hull.pop()
        hull.append(p)
    return hull


def test_convex_meet_absorption_and_idempotence():
    f = delay_cost_fn()
    assert convex_meet(f, f) == f
    g = add(f, constant(5.0))  # strictly above f
    assert convex_meet(f, g) == f


def test_convex_meet_commutative():
    rng = np.random.default_rng(5)
    for _ in range(100):
        f = random_pwl(rng, convex=True, nondecreasing=True)
        g = random_pwl(rng, convex=True, nondecreasing=True)
        if max(f.left_slope, g.left_slope) > min(f.right_slope, g.right_slope):
            continue
        h1, h2 = convex_meet(f, g), convex_meet(g, f)
        for x in grid_around(h1, n=31):
            assert close(evaluate(h1, x), evaluate(h2, x), tol=1e-7)


def test_convex_meet_rejects_nonconvex():
    zigzag = make_pwl([(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)], 0.0, 0.0)
    with pytest.raises(ValueError):
        convex_meet(zigzag, constant(0.0))


def test_unbounded_envelope_rejected():
    f = constant(0.0)
    g = make_pwl([(0.0, 0.0)], 1.0, 1.0)  # identity
    with pytest.raises(ValueError):
        convex_meet(f, g)


@given(st.floats(-100, 100), st.floats(-100, 100))
@settings(max_examples=200)
def test_constant_everywhere(c, x):
    assert evaluate(constant(c), x) == c


@given(
    st.lists(
        st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=5
    ),
    st.floats(-3, 3),
    st.floats(-3, 3),
    st.floats(-60, 60),
)
@settings(max_examples=300, deadline=None)
def test_add_commutes_hypothesis(points, ls, rs, x):
    try:
        f = make_pwl(points, ls, rs)
    except ValueError:
        return
    g = make_pwl([(0.0, 1.0), (5.0, 2.0)], 0.0, 0.5)
    assert close(evaluate(add(f, g), x), evaluate(add(g, f), x), tol=1e-7)


def test_debug_format_golden():
    f = delay_cost_fn()
    assert debug_format(f) == "slopes=[0, 1, 3] breaks=[(0, 0), (15, 15)]"


def test_make_pwl_coalesces_collinear():
    f = make_pwl([(0.0, 0.0), (5.0, 5.0), (10.0, 10.0)], 0.0, 1.0)
    assert len(f.xs) == 1  # the 5 and 10 points do not bend


def test_breakpoint_growth_bound_add():
    rng = np.random.default_rng(6)
    for _ in range(100):
        f, g = random_pwl(rng), random_pwl(rng)
        assert len(add(f, g).xs) <= len(f.xs) + len(g.xs)


def test_thinning_gives_small_convex_minorant():
    rng = np.random.default_rng(31)
    for _ in range(200):
        f = random_pwl(rng, convex=True, max_breaks=12)
        thin = convex_minorant_thin(f, 4)
        assert len(thin.xs) <= 4
        assert is_convex(thin)
        assert thin.left_slope == pytest.approx(f.left_slope)
        assert thin.right_slope == pytest.approx(f.right_slope)
        for x in np.linspace(min(f.xs) - 30, max(f.xs) + 30, 60):
            assert evaluate(thin, x) <= evaluate(f, x) + 1e-7


def test_thinning_under_cap_is_identity():
    f = make_pwl([(0.0, 0.0), (15.0, 15.0)], 0.0, 3.0)
    assert convex_minorant_thin(f, 8) is f


def test_thinning_rejects_nonconvex():
    vee = make_pwl([(0.0, 0.0), (1.0, 5.0), (2.0, 0.0)], -1.0, 1.0)
    with pytest.raises(ValueError):
        convex_minorant_thin(vee, 2)
