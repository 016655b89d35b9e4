"""Quantization of fitted tables for integer-only LUT datapaths.

Scale-carrying operators (gelu/hswish/exp) receive inputs as S*q with a
power-of-two S: their breakpoints are quantized to integers against S while
slopes and intercepts keep their fixed-point form (the intercept shift by
the scale exponent happens at runtime in the datapath).

Wide-range operators (div/rsqrt) receive fixed-point intermediates instead,
so all table fields are rounded to a fixed-point format, and inputs beyond
the fitted range are folded back into it by per-sub-range power-of-two
scales with an output rescale of S' (div) or sqrt(S') (rsqrt).
"""

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .fxp import int_bounds, round_half_up, saturate, to_mantissa
from .nonlin import DomainError, Kind, NonLinSpec
from .pwl import PwlTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuantSpec:
    """Integer format of the quantized input."""

    bits: int
    signed: bool = True

    def __post_init__(self):
        if self.bits < 2:
            raise ValueError(f"bits must be >= 2, got {self.bits}")

    @property
    def q_lo(self) -> int:
        return int_bounds(self.bits, self.signed)[0]

    @property
    def q_hi(self) -> int:
        return int_bounds(self.bits, self.signed)[1]


INT8 = QuantSpec(bits=8, signed=True)
INT16 = QuantSpec(bits=16, signed=True)


@dataclass(frozen=True)
class PowTwoScale:
    """Scaling factor S = 2^exponent."""

    exponent: int

    @property
    def value(self) -> float:
        return math.ldexp(1.0, self.exponent)


def quantize(x: float, scale: PowTwoScale, qs: QuantSpec) -> int:
    """x -> clip(round(x / S), q_lo, q_hi), rounding half up."""
    q = int(round_half_up(x / scale.value))
    return min(max(q, qs.q_lo), qs.q_hi)


def dequantize(q, scale: PowTwoScale):
    """q -> q * S, exact (both factors dyadic)."""
    if isinstance(q, (int, float)):
        return math.ldexp(q, scale.exponent)
    return np.asarray(q, dtype=float) * scale.value


@dataclass(frozen=True)
class QPwlTable:
    """Quantized table ready for the integer datapath or export.

    slopes_fxp / intercepts_fxp are integer mantissas at frac_bits
    fractional bits. breakpoints_q are plain integers compared against q for
    scale-carrying operators, or frac_bits mantissas for wide-range ones
    (scale is None in that case). source_segments maps each stored entry
    back to its segment index in the originating real-valued table; entries
    whose quantized breakpoints collided are dropped (keep-first).
    """

    slopes_fxp: tuple[int, ...]
    intercepts_fxp: tuple[int, ...]
    breakpoints_q: tuple[int, ...]
    frac_bits: int
    spec: NonLinSpec
    scale: PowTwoScale | None = None
    source_segments: tuple[int, ...] = ()
    saturated: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.slopes_fxp)
        if len(self.intercepts_fxp) != n or len(self.breakpoints_q) != n - 1:
            raise ValueError(
                f"inconsistent table: {n} slopes, {len(self.intercepts_fxp)} intercepts, "
                f"{len(self.breakpoints_q)} breakpoints"
            )
        if any(b <= a for a, b in zip(self.breakpoints_q, self.breakpoints_q[1:])):
            raise ValueError(f"quantized breakpoints not strictly ascending: {self.breakpoints_q}")
        if self.source_segments and len(self.source_segments) != n:
            raise ValueError("source_segments must map every stored entry")

    @property
    def entries(self) -> int:
        return len(self.slopes_fxp)

    @property
    def dropped_segments(self) -> tuple[int, ...]:
        if not self.source_segments:
            return ()
        kept = set(self.source_segments)
        total = max(self.source_segments) + 1
        return tuple(i for i in range(total) if i not in kept)

    @property
    def slopes_real(self) -> tuple[float, ...]:
        s = math.ldexp(1.0, -self.frac_bits)
        return tuple(v * s for v in self.slopes_fxp)

    @property
    def intercepts_real(self) -> tuple[float, ...]:
        s = math.ldexp(1.0, -self.frac_bits)
        return tuple(v * s for v in self.intercepts_fxp)

    @property
    def breakpoints_real(self) -> tuple[float, ...]:
        """Breakpoint positions in the input domain of the original function."""
        if self.scale is not None:
            return tuple(dequantize(p, self.scale) for p in self.breakpoints_q)
        s = math.ldexp(1.0, -self.frac_bits)
        return tuple(v * s for v in self.breakpoints_q)


def _collapse(bps_q, slopes, intercepts, context: str):
    """Drop segments whose quantized breakpoints collide (keep first value).

    A run of m equal breakpoints leaves the m-1 segments between them
    unreachable: the region at or above the shared value belongs to the
    segment right of the whole run, so the kept entry list maps each region
    past every duplicate.
    """
    kept_b = []
    for b in bps_q:
        if not kept_b or b > kept_b[-1]:
            kept_b.append(b)
    kept_segments = [0] + [bisect_right(bps_q, b) for b in kept_b]
    dropped = sorted(set(range(len(slopes))) - set(kept_segments))
    if dropped:
        logger.warning("%s: collapsed %d duplicate quantized breakpoints (segments %s dropped)",
                       context, len(dropped), dropped)
    return (
        tuple(kept_b),
        tuple(slopes[i] for i in kept_segments),
        tuple(intercepts[i] for i in kept_segments),
        tuple(kept_segments),
    )


def quantize_table(
    table: PwlTable, scale: PowTwoScale, qs: QuantSpec, frac_bits: int = 5
) -> QPwlTable:
    """Quantize a scale-carrying table's breakpoints against S.

    Breakpoints become clip(round(p / S)) integers; slopes and intercepts
    are stored as frac_bits mantissas unchanged (the runtime shifter applies
    the intercept's division by S). Colliding breakpoints are collapsed with
    a warning, shrinking the effective entry count.
    """
    if not table.spec.scale_carrying:
        raise ValueError(f"{table.spec.kind.value} is wide-range; use fxp_quantize_table")
    s = scale.value
    bps_q = [
        min(max(int(round_half_up(p / s)), qs.q_lo), qs.q_hi)
        for p in table.breakpoints.points
    ]
    slopes = [to_mantissa(k, frac_bits) for k in table.slopes]
    intercepts = [to_mantissa(b, frac_bits) for b in table.intercepts]
    bps_kept, slopes_kept, intercepts_kept, segments = _collapse(
        bps_q, slopes, intercepts, f"{table.spec.kind.value}@2^{scale.exponent}"
    )
    return QPwlTable(
        slopes_fxp=slopes_kept,
        intercepts_fxp=intercepts_kept,
        breakpoints_q=bps_kept,
        frac_bits=frac_bits,
        spec=table.spec,
        scale=scale,
        source_segments=segments,
    )


def fxp_quantize_table(table: PwlTable, frac_bits: int = 5, bits: int = 8) -> QPwlTable:
    """Round a wide-range table's fields to frac_bits fixed point at bits width.

    Values outside the representable range saturate; every saturation is
    recorded in the result.
    """
    if table.spec.scale_carrying:
        raise ValueError(f"{table.spec.kind.value} is scale-carrying; use quantize_table")
    saturated = []

    def convert(values, label):
        out = []
        for i, v in enumerate(values):
            m = to_mantissa(v, frac_bits)
            clamped = saturate(m, bits)
            if clamped != m:
                saturated.append(f"{label}[{i}]")
            out.append(clamped)
        return out

    slopes = convert(table.slopes, "slope")
    intercepts = convert(table.intercepts, "intercept")
    bps = convert(table.breakpoints.points, "breakpoint")
    if saturated:
        logger.warning("%s: saturated fields %s at %d-bit fxp", table.spec.kind.value,
                       saturated, bits)
    bps_kept, slopes_kept, intercepts_kept, segments = _collapse(
        bps, slopes, intercepts, f"{table.spec.kind.value}@fxp{bits}.{frac_bits}"
    )
    return QPwlTable(
        slopes_fxp=slopes_kept,
        intercepts_fxp=intercepts_kept,
        breakpoints_q=bps_kept,
        frac_bits=frac_bits,
        spec=table.spec,
        scale=None,
        source_segments=segments,
        saturated=tuple(saturated),
    )


def eval_qpwl_real(qtable: QPwlTable, x):
    """Real-domain evaluation of a quantized table (dequantized parameters).

    Segment selection uses the dequantized breakpoint positions; the output
    is slope*x + intercept with the stored fixed-point parameter values.
    """
    pts = np.asarray(qtable.breakpoints_real)
    idx = np.searchsorted(pts, x, side="right")
    slopes = np.asarray(qtable.slopes_real)
    intercepts = np.asarray(qtable.intercepts_real)
    y = slopes[idx] * x + intercepts[idx]
    if np.isscalar(x):
        return float(y)
    return y


def float_segment_index(table: PwlTable, x: float) -> int:
    """Segment the real-valued table selects for input x."""
    return int(np.searchsorted(np.asarray(table.breakpoints.points), x, side="right"))


def breakpoint_deviation(
    table: PwlTable, qtable: QPwlTable, qs: QuantSpec
) -> tuple[int, ...]:
    """Quantized inputs whose integer segment differs from the float choice.

    For each q in [q_lo, q_hi] the segment implied by the quantized
    breakpoints (mapped back to original segment numbering) is compared with
    the segment the real table selects at S*q. The returned q values are the
    measurable form of breakpoint deviation under scale S.
    """
    if qtable.scale is None:
        raise ValueError("deviation analysis requires a scale-carrying table")
    s = qtable.scale.value
    qpts = np.asarray(qtable.breakpoints_q)
    fpts = np.asarray(table.breakpoints.points)
    segments = np.asarray(qtable.source_segments or tuple(range(qtable.entries)))
    q_values = np.arange(qs.q_lo, qs.q_hi + 1)
    int_idx = np.searchsorted(qpts, q_values, side="right")
    float_idx = np.searchsorted(fpts, s * q_values, side="right")
    deviated = q_values[segments[int_idx] != float_idx]
    return tuple(int(q) for q in deviated)


@dataclass(frozen=True)
class SubRange:
    """[lo, hi) slice of the wide input domain with its fold-in scale."""

    lo: float
    hi: float
    scale: PowTwoScale


@dataclass(frozen=True)
class RangeScalingPlan:
    """Multi-range input scaling setup for a wide-range operator.

    Sub-ranges tile [inner hi, +inf); inputs inside the inner range pass
    through unscaled. The final sub-range is open-ended: its scaled inputs
    may exceed the fitted range and clamp into the last table segment.
    """

    inner_range: tuple[float, float]
    sub_ranges: tuple[SubRange, ...]
    op_kind: Kind

    def __post_init__(self):
        if self.op_kind not in (Kind.DIV, Kind.RSQRT):
            raise ValueError(f"plan only applies to div/rsqrt, got {self.op_kind.value}")
        lo, hi = self.inner_range
        if lo <= 0:
            raise ValueError(f"inner range must be positive, got {self.inner_range}")
        if not self.sub_ranges:
            raise ValueError("at least one sub-range required")
        prev_hi = hi
        for sr in self.sub_ranges:
            if sr.lo != prev_hi:
                raise ValueError(
                    f"sub-ranges must tile contiguously from {hi}: got lo={sr.lo}, expected {prev_hi}"
                )
            if not sr.hi > sr.lo:
                raise ValueError(f"empty sub-range [{sr.lo}, {sr.hi})")
            prev_hi = sr.hi
            if math.isfinite(sr.hi):
                s = sr.scale.value
                if sr.lo * s < lo - 1e-12 or sr.hi * s > hi + 1e-12:
                    raise ValueError(
                        f"sub-range [{sr.lo}, {sr.hi}) * 2^{sr.scale.exponent} "
                        f"does not map into {self.inner_range}"
                    )
        if not math.isinf(self.sub_ranges[-1].hi):
            raise ValueError("last sub-range must extend to +inf")


def select_subrange(x: float, plan: RangeScalingPlan) -> tuple[PowTwoScale, float]:
    """Fold-in scale and output rescale factor for input x.

    Inside the inner range: identity scale, rescale 1. Otherwise the
    containing sub-range's scale S' and the rescale S' (div) or sqrt(S')
    (rsqrt); the caller computes rescale * pwl(x * S').
    """
    if x <= 0:
        raise DomainError(f"{plan.op_kind.value} input must be positive, got {x}")
    lo, hi = plan.inner_range
    if x < lo:
        raise DomainError(f"input {x} below inner range [{lo}, {hi}]")
    if x <= hi:
        return PowTwoScale(0), 1.0
    for sr in plan.sub_ranges:
        if sr.lo <= x < sr.hi:
            if plan.op_kind is Kind.DIV:
                return sr.scale, sr.scale.value
            return sr.scale, math.sqrt(sr.scale.value)
    raise DomainError(f"input {x} not covered by plan")  # unreachable: last hi is +inf


_PLANS: dict[str, RangeScalingPlan] = {
    "div-int8": RangeScalingPlan(
        inner_range=(0.5, 4.0),
        sub_ranges=(
            SubRange(4.0, 32.0, PowTwoScale(-3)),
            SubRange(32.0, 256.0, PowTwoScale(-6)),
            SubRange(256.0, math.inf, PowTwoScale(-6)),
        ),
        op_kind=Kind.DIV,
    ),
    "rsqrt-int8": RangeScalingPlan(
        inner_range=(0.25, 4.0),
        sub_ranges=(
            SubRange(4.0, 64.0, PowTwoScale(-4)),
            SubRange(64.0, 1024.0, PowTwoScale(-8)),
            SubRange(1024.0, math.inf, PowTwoScale(-12)),
        ),
        op_kind=Kind.RSQRT,
    ),
}


def get_plan(name: str) -> RangeScalingPlan:
    """Built-in multi-range scaling preset by name."""
    try:
        return _PLANS[name]
    except KeyError:
        raise KeyError(f"unknown plan {name!r}; available: {sorted(_PLANS)}") from None


def default_plan(kind: Kind) -> RangeScalingPlan:
    return get_plan(f"{Kind(kind).value}-int8")
