"""Piecewise linear functions on the real line.

A function is stored as a strictly increasing breakpoint list plus the two
tail slopes, so the whole real line is covered.  The class is closed under
everything the delay-cost machinery needs: addition, horizontal shift, hinge
composition, pointwise minimum and the convex lower envelope used to merge
per-vertex cost bounds.  Objects are immutable and safe to share.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from math import inf, isfinite

import numpy as np

X_TOL = 1e-9      # abscissae closer than this are the same point
SLOPE_TOL = 1e-9  # slopes closer than this are the same slope


@dataclass(frozen=True)
class PwlFunction:
    """Continuous piecewise linear function, canonical breakpoint form.

    ``left_slope`` applies below the first breakpoint, ``right_slope``
    above the last one.  Breakpoints are (x, value) pairs.
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    left_slope: float
    right_slope: float

    def __post_init__(self) -> None:
        if len(self.xs) == 0 or len(self.xs) != len(self.ys):
            raise ValueError("need at least one breakpoint and matching values")
        for v in (*self.xs, *self.ys, self.left_slope, self.right_slope):
            if not isfinite(v):
                raise ValueError("breakpoints and slopes must be finite")
        for a, b in zip(self.xs, self.xs[1:]):
            if b - a <= X_TOL:
                raise ValueError("breakpoint abscissae must be strictly increasing")

    def __call__(self, x: float) -> float:
        return evaluate(self, x)

    @property
    def breakpoints(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.xs, self.ys))


def make_pwl(points, left_slope: float, right_slope: float) -> PwlFunction:
    """Build a canonical function from (x, y) pairs, merging redundant points."""
    pts = sorted((float(x), float(y)) for x, y in points)
    if not pts:
        raise ValueError("need at least one breakpoint")
    merged: list[tuple[float, float]] = []
    for x, y in pts:
        if merged and x - merged[-1][0] <= X_TOL:
            continue
        merged.append((x, y))
    # one pass: drop points that do not bend (slopes on both sides equal)
    if len(merged) > 1:
        kept = []
        n = len(merged)
        for i, (x, y) in enumerate(merged):
            if i == 0:
                before = left_slope
            else:
                x0, y0 = merged[i - 1]
                before = (y - y0) / (x - x0)
            if i == n - 1:
                after = right_slope
            else:
                x1, y1 = merged[i + 1]
                after = (y1 - y) / (x1 - x)
            if abs(before - after) > SLOPE_TOL:
                kept.append((x, y))
        if not kept:
            kept = [merged[0]]
        merged = kept
    xs, ys = zip(*merged)
    return PwlFunction(tuple(xs), tuple(ys), float(left_slope), float(right_slope))


def constant(value: float) -> PwlFunction:
    return PwlFunction((0.0,), (float(value),), 0.0, 0.0)


def segment_slopes(f: PwlFunction) -> list[float]:
    """All slopes left to right: tail, interior segments, tail."""
    out = [f.left_slope]
    for (x0, y0), (x1, y1) in zip(zip(f.xs, f.ys), zip(f.xs[1:], f.ys[1:])):
        out.append((y1 - y0) / (x1 - x0))
    out.append(f.right_slope)
    return out


def is_convex(f: PwlFunction) -> bool:
    s = segment_slopes(f)
    return all(b >= a - SLOPE_TOL for a, b in zip(s, s[1:]))


def is_nondecreasing(f: PwlFunction) -> bool:
    return min(segment_slopes(f)) >= -SLOPE_TOL


def evaluate(f: PwlFunction, x: float) -> float:
    i = bisect_right(f.xs, x)
    if i == 0:
        return f.ys[0] + (x - f.xs[0]) * f.left_slope
    j = i - 1
    if i == len(f.xs):
        slope = f.right_slope
    else:
        slope = (f.ys[i] - f.ys[j]) / (f.xs[i] - f.xs[j])
    return f.ys[j] + (x - f.xs[j]) * slope


def evaluate_many(f: PwlFunction, x: np.ndarray) -> np.ndarray:
    """Vectorised ``evaluate`` over a numpy array."""
    xs = np.asarray(f.xs)
    ys = np.asarray(f.ys)
    slopes = np.asarray(segment_slopes(f))  # length len(xs) + 1
    x = np.asarray(x, dtype=float)
    idx = np.searchsorted(xs, x, side="right")
    anchor = np.clip(idx - 1, 0, len(xs) - 1)
    return ys[anchor] + (x - xs[anchor]) * slopes[idx]


def _merged_grid(f: PwlFunction, g: PwlFunction) -> list[float]:
    grid: list[float] = []
    for x in sorted((*f.xs, *g.xs)):
        if not grid or x - grid[-1] > X_TOL:
            grid.append(x)
    return grid


def add(f: PwlFunction, g: PwlFunction) -> PwlFunction:
    grid = _merged_grid(f, g)
    pts = [(x, evaluate(f, x) + evaluate(g, x)) for x in grid]
    return make_pwl(pts, f.left_slope + g.left_slope, f.right_slope + g.right_slope)


def compose_affine(f: PwlFunction, shift: float) -> PwlFunction:
    """x ↦ f(x + shift)."""
    pts = [(x - shift, y) for x, y in zip(f.xs, f.ys)]
    return make_pwl(pts, f.left_slope, f.right_slope)


def compose_prop(f: PwlFunction, xi: float, slack: float) -> PwlFunction:
    """x ↦ f(xi + max(x − slack, 0)); ``f`` must be non-decreasing.

    ``slack`` may be +inf, in which case the result is the constant f(xi).
    """
    if not is_nondecreasing(f):
        raise ValueError("composition requires a non-decreasing function")
    y0 = evaluate(f, xi)
    if slack == inf:
        return constant(y0)
    pts = [(slack, y0)]
    pts += [(x - xi + slack, y) for x, y in zip(f.xs, f.ys) if x > xi + X_TOL]
    return make_pwl(pts, 0.0, f.right_slope)


def pointwise_min(f: PwlFunction, g: PwlFunction) -> PwlFunction:
    """Exact pointwise minimum; crossings become breakpoints."""
    grid = _merged_grid(f, g)
    pts: list[tuple[float, float]] = []

    def diff(x: float) -> float:
        return evaluate(f, x) - evaluate(g, x)

    for a, b in zip(grid, grid[1:]):
        da, db = diff(a), diff(b)
        pts.append((a, min(evaluate(f, a), evaluate(g, a))))
        if (da > X_TOL and db < -X_TOL) or (da < -X_TOL and db > X_TOL):
            x = a + da * (b - a) / (da - db)
            if a + X_TOL < x < b - X_TOL:
                pts.append((x, evaluate(f, x)))
    xe = grid[-1]
    pts.append((xe, min(evaluate(f, xe), evaluate(g, xe))))

    # left tail: who is lower as x → −inf, and do the tails cross?
    x0 = grid[0]
    d0 = diff(x0)
    if abs(d0) <= X_TOL:
        left = max(f.left_slope, g.left_slope)
    else:
        lo, hi = (f, g) if d0 < 0 else (g, f)
        s_lo, s_hi = lo.left_slope, hi.left_slope
        if s_hi > s_lo + SLOPE_TOL:
            xc = x0 - abs(d0) / (s_hi - s_lo)
            pts.append((xc, evaluate(lo, x0) + s_lo * (xc - x0)))
            left = s_hi
        else:
            left = s_lo
    d1 = diff(xe)
    if abs(d1) <= X_TOL:
        right = min(f.right_slope, g.right_slope)
    else:
        lo, hi = (f, g) if d1 < 0 else (g, f)
        s_lo, s_hi = lo.right_slope, hi.right_slope
        if s_lo > s_hi + SLOPE_TOL:
            xc = xe + abs(d1) / (s_lo - s_hi)
            pts.append((xc, evaluate(lo, xe) + s_lo * (xc - xe)))
            right = s_hi
        else:
            right = s_lo
    return make_pwl(pts, left, right)


def convex_meet(f: PwlFunction, g: PwlFunction) -> PwlFunction:
    """Convex lower envelope of min(f, g): the largest convex minorant of both.

    Breakpoint count never exceeds the sum of the inputs'.  Raises when an
    input is not convex or when the envelope is unbounded below (tails cross).
    """
    if not is_convex(f) or not is_convex(g):
        raise ValueError("convex meet requires convex operands")
    left = max(f.left_slope, g.left_slope)
    right = min(f.right_slope, g.right_slope)
    if left > right + SLOPE_TOL:
        raise ValueError("lower envelope is unbounded below")

    pts: list[tuple[float, float]] = []
    for x, y in sorted((*zip(f.xs, f.ys), *zip(g.xs, g.ys))):
        if pts and x - pts[-1][0] <= X_TOL:
            if y < pts[-1][1]:
                pts[-1] = (pts[-1][0], y)
        else:
            pts.append((x, y))

    # lower convex hull, strict turns only
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            s12 = (y2 - y1) / (x2 - x1)
            s2p = (p[1] - y2) / (p[0] - x2)
            if s2p <= s12 + SLOPE_TOL:
                hull.pop()
            else:
                break
        hull.append(p)

    # trim against the tail slopes: the envelope follows the tail line up to
    # the supporting vertex (argmin of y − slope·x)
    def argmin_support(slope: float, prefer_right: bool) -> int:
        vals = [y - slope * x for x, y in hull]
        m = min(vals)
        tol = X_TOL * (1.0 + abs(m))
        idxs = [i for i, v in enumerate(vals) if v <= m + tol]
        return idxs[-1] if prefer_right else idxs[0]

    i_left = argmin_support(left, prefer_right=True)
    i_right = argmin_support(right, prefer_right=False)
    if i_right < i_left:
        i_right = i_left
    kept = hull[i_left : i_right + 1]
    return make_pwl(kept, left, right)


def convex_minorant_thin(f: PwlFunction, max_breaks: int) -> PwlFunction:
    """Convex minorant of ``f`` with at most ``max_breaks`` breakpoints.

    Keeps an evenly spaced subset of the segment lines of ``f`` (always
    including both tails, so the behaviour at ±inf is unchanged) and returns
    their upper envelope.  Every kept line supports the convex ``f`` from
    below, hence so does the envelope.
    """
    if max_breaks < 1:
        raise ValueError("need room for at least one breakpoint")
    if len(f.xs) <= max_breaks:
        return f
    if not is_convex(f):
        raise ValueError("thinning requires a convex function")

    slopes = segment_slopes(f)
    # line i has slope slopes[i] and passes through an endpoint of segment i
    anchors = [(f.xs[0], f.ys[0])] + list(zip(f.xs, f.ys))
    lines = [(s, y - s * x) for s, (x, y) in zip(slopes, anchors)]
    idx = sorted(
        {int(round(t)) for t in np.linspace(0, len(lines) - 1, max_breaks + 1)}
    )
    picked = [lines[i] for i in idx]

    # upper envelope of lines with increasing slopes
    kept: list[tuple[float, float]] = []
    for s, b in picked:
        if kept and abs(s - kept[-1][0]) <= SLOPE_TOL:
            continue
        while len(kept) >= 2:
            s1, b1 = kept[-2]
            s2, b2 = kept[-1]
            # drop the middle line when the new one overtakes it before
            # it overtakes its predecessor
            if (b1 - b) / (s - s1) <= (b1 - b2) / (s2 - s1) + X_TOL:
                kept.pop()
            else:
                break
        kept.append((s, b))

    if len(kept) == 1:
        s, b = kept[0]
        return PwlFunction((0.0,), (b,), s, s)
    pts = []
    for (s1, b1), (s2, b2) in zip(kept, kept[1:]):
        x = (b1 - b2) / (s2 - s1)
        pts.append((x, s1 * x + b1))
    return make_pwl(pts, kept[0][0], kept[-1][0])


def debug_format(f: PwlFunction) -> str:
    """One-line text form: all slopes left to right plus the breakpoints."""
    slopes = ", ".join("%.12g" % s for s in segment_slopes(f))
    breaks = ", ".join("(%.12g, %.12g)" % (x, y) for x, y in zip(f.xs, f.ys))
    return f"slopes=[{slopes}] breaks=[{breaks}]"
