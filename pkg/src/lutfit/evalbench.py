"""Accuracy evaluation of fitted tables under quantization.

Scale-carrying operators are scored on the dequantized input grid: for a
scale S the inputs are x = S*q for every representable q whose dequantized
value lies in the operator's fitted range, and the integer-datapath output
S * int_pwl(q) is compared against the exact function. Wide-range operators
are scored across the inner range and every finite sub-range of their
multi-range scaling plan, through the fixed-point table.

Also hosts the exhaustive breakpoint-enumeration oracle used to bound the
genetic search from below in tests.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .intsim import DatapathConfig, int_pwl
from .nonlin import NonLinSpec, eval_ref
from .pwl import (
    FITNESS_STEP,
    MIN_GAP,
    BreakpointSet,
    PwlTable,
    derive_table,
    fitness_grid,
)
from .quant import (
    PowTwoScale,
    QuantSpec,
    RangeScalingPlan,
    eval_qpwl_real,
    fxp_quantize_table,
    quantize_table,
    select_subrange,
)


@dataclass(frozen=True)
class ScaleSweepReport:
    """Per-scale and averaged quantization-aware MSE of one table."""

    per_scale: tuple[tuple[int, float], ...]
    average_mse: float
    spec: NonLinSpec
    entry_count: int
    method: str

    def __post_init__(self):
        mean = sum(m for _, m in self.per_scale) / len(self.per_scale)
        if not math.isclose(mean, self.average_mse, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError("average_mse does not match per_scale mean")


# Default evaluation sweep. Scales coarser than 2^-1 quantize breakpoints
# onto grids no rounding-mutation setting trains against (and a 16-entry
# table cannot even hold 15 distinct integer breakpoints), so the sweep
# tops out at 2^-1; pass explicit exponents to go beyond.
DEFAULT_SCALE_EXPONENTS = tuple(range(-6, 0))


def eval_range_q(spec: NonLinSpec, scale: PowTwoScale, qs: QuantSpec) -> tuple[int, int]:
    """Inclusive q bounds whose dequantized values fall in the fitted range."""
    lo, hi = spec.search_range
    s = scale.value
    q_min = max(qs.q_lo, int(math.ceil(lo / s - 1e-9)))
    q_max = min(qs.q_hi, int(math.floor(hi / s + 1e-9)))
    if q_min > q_max:
        raise ValueError(
            f"no representable inputs in range {spec.search_range} at scale 2^{scale.exponent}"
        )
    return q_min, q_max


def quant_aware_mse(
    table: PwlTable,
    spec: NonLinSpec,
    scale: PowTwoScale,
    qs: QuantSpec,
    datapath: DatapathConfig,
    ref=None,
) -> float:
    """MSE of the integer datapath on the dequantized grid at one scale.

    Inputs are x = S*q stepped over every q whose dequantized value lies in
    the fitted range; the error is S * int_pwl(q) - f(x).
    """
    if not spec.scale_carrying:
        raise ValueError(f"{spec.kind.value} is wide-range; use wide_range_mse")
    qtable = quantize_table(table, scale, qs, frac_bits=datapath.frac_bits)
    q_min, q_max = eval_range_q(spec, scale, qs)
    s = scale.value
    f = ref if ref is not None else (lambda v: eval_ref(spec, v))
    total = 0.0
    for q in range(q_min, q_max + 1):
        x = s * q
        err = s * int_pwl(q, qtable, datapath) - float(f(x))
        total += err * err
    return total / (q_max - q_min + 1)


def sweep_scales(
    table: PwlTable,
    spec: NonLinSpec,
    exponents=DEFAULT_SCALE_EXPONENTS,
    qs: QuantSpec = QuantSpec(8),
    datapath: DatapathConfig = DatapathConfig(),
    method: str = "rm",
) -> ScaleSweepReport:
    """quant_aware_mse across a list of scale exponents plus their average."""
    exponents = tuple(exponents)
    if not exponents:
        raise ValueError("at least one exponent required")
    per_scale = tuple(
        (e, quant_aware_mse(table, spec, PowTwoScale(e), qs, datapath)) for e in exponents
    )
    return ScaleSweepReport(
        per_scale=per_scale,
        average_mse=sum(m for _, m in per_scale) / len(per_scale),
        spec=spec,
        entry_count=table.entries,
        method=method,
    )


def wide_range_mse(
    table: PwlTable,
    spec: NonLinSpec,
    plan: RangeScalingPlan,
    sample_count: int = 1024,
    frac_bits: int = 5,
    bits: int = 8,
) -> float:
    """Pooled MSE of a wide-range operator through its fixed-point table.

    Samples the inner range at the fitness-grid step and each finite
    sub-range at sample_count uniform points; every sample is folded in by
    select_subrange, evaluated on the fixed-point table and rescaled.
    """
    if spec.scale_carrying:
        raise ValueError(f"{spec.kind.value} is scale-carrying; use sweep_scales")
    qtable = fxp_quantize_table(table, frac_bits=frac_bits, bits=bits)
    xs = [fitness_grid(plan.inner_range, FITNESS_STEP)[0]]
    for sr in plan.sub_ranges:
        if math.isfinite(sr.hi):
            xs.append(sr.lo + (sr.hi - sr.lo) * np.arange(sample_count) / sample_count)
    samples = np.concatenate(xs)
    folded = np.empty_like(samples)
    rescales = np.empty_like(samples)
    for k, x in enumerate(samples):
        scale, rescale = select_subrange(float(x), plan)
        folded[k] = float(x) * scale.value
        rescales[k] = rescale
    err = rescales * eval_qpwl_real(qtable, folded) - eval_ref(spec, samples)
    return float(err @ err) / samples.size


def brute_force_oracle(
    spec: NonLinSpec,
    n_breakpoints: int,
    grid_step: float,
    ref=None,
    budget: int = 100_000,
) -> PwlTable:
    """Exhaustively optimal table over grid-restricted breakpoint tuples.

    Enumerates every ascending n_breakpoints-tuple on the grid_step lattice
    spanning the search range (endpoints included in the candidate count;
    tuples violating the minimum spacing are skipped) and returns the table
    with minimal fitness_mse, first-found on ties. Refuses combinatorial
    budgets above `budget`.
    """
    if n_breakpoints > 2:
        raise ValueError(f"oracle supports n_breakpoints <= 2, got {n_breakpoints}")
    lo, hi = spec.search_range
    count = int(math.floor((hi - lo) / grid_step + 1e-9))
    grid = np.linspace(lo, hi, count + 1)
    n_combos = math.comb(grid.size, n_breakpoints)
    if n_combos > budget:
        raise ValueError(f"{n_combos} candidate tuples exceed the budget of {budget}")

    xs, denom = fitness_grid(spec.search_range, FITNESS_STEP)
    f = ref if ref is not None else (lambda v: eval_ref(spec, v))
    fx = np.asarray(f(xs), dtype=float)
    best_mse = math.inf
    best_pts = None
    for pts in combinations(grid.tolist(), n_breakpoints):
        nodes = np.array([lo, *pts, hi])
        gaps = np.diff(nodes)
        if gaps.min() < MIN_GAP - 1e-12:
            continue
        fv = np.asarray(f(nodes), dtype=float)
        slopes = np.diff(fv) / gaps
        intercepts = fv[:-1] - slopes * nodes[:-1]
        idx = np.searchsorted(nodes[1:-1], xs, side="right")
        err = slopes[idx] * xs + intercepts[idx] - fx
        mse = float(err @ err) / denom
        if mse < best_mse:
            best_mse = mse
            best_pts = pts
    if best_pts is None:
        raise ValueError("no valid breakpoint tuple on the grid")
    bps = BreakpointSet(points=tuple(best_pts), search_range=spec.search_range)
    return derive_table(spec, bps, ref=ref)
