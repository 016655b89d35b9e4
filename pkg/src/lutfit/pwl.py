"""Real-valued piecewise-linear tables: construction, evaluation and fitness.

An N-entry table has N-1 breakpoints. Segment selection for input x:
index = number of breakpoints <= x, so inputs left of the first breakpoint
use segment 0 and inputs at or right of the last use segment N-1. The two
boundary segments extrapolate linearly outside the fitting range.
"""

import math
from dataclasses import dataclass

import numpy as np

from .fxp import fxp_round
from .nonlin import NonLinSpec, eval_ref

# Fitness grid step, and the minimum spacing kept between breakpoints
# (and between a breakpoint and a range endpoint) so segment slopes stay
# well defined after mutation.
FITNESS_STEP = 0.01
MIN_GAP = 2 * FITNESS_STEP


class GapError(ValueError):
    """Breakpoints too close together (or too close to the range ends)."""


@dataclass(frozen=True)
class BreakpointSet:
    """Strictly ascending breakpoints inside a search range."""

    points: tuple[float, ...]
    search_range: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.search_range
        pts = self.points
        if not pts:
            raise ValueError("at least one breakpoint required")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError(f"breakpoints must be strictly ascending: {pts}")
        if pts[0] < lo or pts[-1] > hi:
            raise ValueError(f"breakpoints {pts} outside range ({lo}, {hi})")

    def __len__(self) -> int:
        return len(self.points)


def repair_points(values, search_range: tuple[float, float], min_gap: float = MIN_GAP) -> np.ndarray:
    """Sort values and enforce the minimum spacing inside the range.

    Points are clipped min_gap inside the range ends (the ends act as
    virtual interpolation nodes), then pushed apart left-to-right with a
    right-to-left fixup if the last point overflows.
    """
    pts = np.sort(np.asarray(values, dtype=float))
    lo, hi = search_range
    n = pts.size
    if hi - lo < (n + 1) * min_gap:
        raise GapError(f"range ({lo}, {hi}) cannot hold {n} points at gap {min_gap}")
    np.clip(pts, lo + min_gap, hi - min_gap, out=pts)
    for k in range(1, n):
        if pts[k] < pts[k - 1] + min_gap:
            pts[k] = pts[k - 1] + min_gap
    if pts[-1] > hi - min_gap:
        pts[-1] = hi - min_gap
        for k in range(n - 2, -1, -1):
            if pts[k] > pts[k + 1] - min_gap:
                pts[k] = pts[k + 1] - min_gap
            else:
                break
    return pts


def repaired_breakpoints(values, search_range, min_gap: float = MIN_GAP) -> BreakpointSet:
    pts = repair_points(values, search_range, min_gap)
    return BreakpointSet(points=tuple(pts.tolist()), search_range=search_range)


@dataclass(frozen=True)
class PwlTable:
    """Slopes/intercepts of an N-entry pwl plus its N-1 breakpoints."""

    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    breakpoints: BreakpointSet
    spec: NonLinSpec

    def __post_init__(self):
        n = len(self.slopes)
        if len(self.intercepts) != n or len(self.breakpoints) != n - 1:
            raise ValueError(
                f"inconsistent table: {n} slopes, {len(self.intercepts)} intercepts, "
                f"{len(self.breakpoints)} breakpoints"
            )

    @property
    def entries(self) -> int:
        return len(self.slopes)


def derive_table(spec: NonLinSpec, bps: BreakpointSet, ref=None, min_gap: float = MIN_GAP) -> PwlTable:
    """Table whose segments interpolate the reference exactly at the breakpoints.

    The boundary segments interpolate through the range endpoints, which act
    as virtual breakpoints, so the table is continuous on the whole range.
    ref overrides the reference function (used by tests with stub targets).
    """
    lo, hi = spec.search_range
    if bps.search_range != spec.search_range:
        raise ValueError(
            f"breakpoint range {bps.search_range} does not match spec range {spec.search_range}"
        )
    nodes = np.empty(len(bps) + 2)
    nodes[0] = lo
    nodes[1:-1] = bps.points
    nodes[-1] = hi
    gaps = np.diff(nodes)
    if gaps.min() < min_gap - 1e-12:
        raise GapError(f"segment narrower than {min_gap}: gaps {gaps.tolist()}")
    f = ref if ref is not None else (lambda v: eval_ref(spec, v))
    fv = np.asarray(f(nodes), dtype=float)
    slopes = np.diff(fv) / gaps
    intercepts = fv[:-1] - slopes * nodes[:-1]
    return PwlTable(
        slopes=tuple(slopes.tolist()),
        intercepts=tuple(intercepts.tolist()),
        breakpoints=bps,
        spec=spec,
    )


def eval_pwl(table: PwlTable, x):
    """Evaluate the table at x (scalar or ndarray); tails extrapolate."""
    pts = np.asarray(table.breakpoints.points)
    idx = np.searchsorted(pts, x, side="right")
    slopes = np.asarray(table.slopes)
    intercepts = np.asarray(table.intercepts)
    y = slopes[idx] * x + intercepts[idx]
    if np.isscalar(x):
        return float(y)
    return y


def fitness_grid(search_range: tuple[float, float], step: float) -> tuple[np.ndarray, int]:
    """Evaluation grid from lo to hi inclusive; returns (points, interval count)."""
    lo, hi = search_range
    count = int(math.floor((hi - lo) / step + 1e-9))
    return np.linspace(lo, hi, count + 1), count


def fitness_mse(table: PwlTable, spec: NonLinSpec, step: float = FITNESS_STEP, ref=None) -> float:
    """Mean squared error of the table on the step-spaced range grid.

    The sum of squared errors is divided by (hi - lo) / step, matching the
    optimizer's running-mean accumulation.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    xs, count = fitness_grid(spec.search_range, step)
    f = ref if ref is not None else (lambda v: eval_ref(spec, v))
    err = eval_pwl(table, xs) - np.asarray(f(xs), dtype=float)
    return float(err @ err) / count


def fxp_round_table(table: PwlTable, frac_bits: int) -> PwlTable:
    """Round slopes and intercepts to frac_bits fractional bits; breakpoints stay real.

    Each intercept is recomputed against its rounded slope, anchored at the
    segment midpoint, before its own rounding. Rounding both independently
    would shift every segment by the slope error times the full input
    magnitude, which dominates all other error sources away from zero; the
    midpoint anchor is the least-squares-optimal compensation.
    """
    lo, hi = table.spec.search_range
    nodes = (lo,) + table.breakpoints.points + (hi,)
    slopes_q = []
    intercepts_q = []
    for i, (k, b) in enumerate(zip(table.slopes, table.intercepts)):
        mid = 0.5 * (nodes[i] + nodes[i + 1])
        kq = fxp_round(k, frac_bits)
        slopes_q.append(kq)
        intercepts_q.append(fxp_round(b + (k - kq) * mid, frac_bits))
    return PwlTable(
        slopes=tuple(slopes_q),
        intercepts=tuple(intercepts_q),
        breakpoints=table.breakpoints,
        spec=table.spec,
    )
