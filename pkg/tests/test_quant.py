import logging
import math

import numpy as np
import pytest

from lutfit.nonlin import DomainError, Kind, default_spec, eval_ref
from lutfit.pwl import BreakpointSet, derive_table, fxp_round_table, repaired_breakpoints
from lutfit.quant import (
    INT8,
    PowTwoScale,
    QPwlTable,
    QuantSpec,
    RangeScalingPlan,
    SubRange,
    breakpoint_deviation,
    default_plan,
    dequantize,
    eval_qpwl_real,
    fxp_quantize_table,
    get_plan,
    quantize,
    quantize_table,
    select_subrange,
)

GELU = default_spec(Kind.GELU)
DIV = default_spec(Kind.DIV)
RSQRT = default_spec(Kind.RSQRT)


def test_quant_spec_bounds():
    assert (INT8.q_lo, INT8.q_hi) == (-128, 127)
    assert QuantSpec(16).q_lo == -32768
    u8 = QuantSpec(8, signed=False)
    assert (u8.q_lo, u8.q_hi) == (0, 255)


def test_quantize_examples():
    assert quantize(0.37, PowTwoScale(-3), INT8) == 3
    assert quantize(100.0, PowTwoScale(-3), INT8) == 127
    assert quantize(-100.0, PowTwoScale(-3), INT8) == -128
    for q in (-128, -5, 0, 17, 127):
        assert quantize(q * 2 ** -4, PowTwoScale(-4), INT8) == q


def test_dequantize_exact():
    assert dequantize(3, PowTwoScale(-3)) == 0.375
    assert dequantize(0, PowTwoScale(9)) == 0.0
    assert dequantize(-7, PowTwoScale(2)) == -28.0


def test_round_trip_half_step_bound():
    rng = np.random.default_rng(13)
    for e in (-6, -3, 0, 2):
        scale = PowTwoScale(e)
        s = scale.value
        for x in rng.uniform(-120 * s, 120 * s, size=100):
            back = dequantize(quantize(float(x), scale, INT8), scale)
            assert abs(back - x) <= s / 2 + 1e-15


def gelu_table(points=(-2.5, -1.25, 0.5, 1.75)):
    bps = BreakpointSet(points=points, search_range=GELU.search_range)
    return fxp_round_table(derive_table(GELU, bps), 5)


def test_quantize_table_breakpoint_arithmetic():
    table = gelu_table(points=(-1.37, 0.5, 2.0))
    qt = quantize_table(table, PowTwoScale(-2), INT8)
    assert qt.breakpoints_q[0] == -5  # round(-1.37 / 0.25) = round(-5.48)
    assert qt.breakpoints_q[1] == 2
    assert qt.breakpoints_q[2] == 8
    assert qt.scale == PowTwoScale(-2)
    assert qt.source_segments == (0, 1, 2, 3)


def test_quantize_table_unit_scale_rounds_directly():
    table = gelu_table(points=(-2.5, -1.25, 0.75, 2.25))
    qt = quantize_table(table, PowTwoScale(0), INT8)
    assert qt.breakpoints_q == (-2, -1, 1, 2)  # ties round toward +inf


def test_quantize_table_slopes_are_lambda_mantissas():
    table = gelu_table()
    qt = quantize_table(table, PowTwoScale(-5), INT8, frac_bits=5)
    assert qt.slopes_fxp == tuple(int(round(k * 32)) for k in table.slopes)
    assert qt.intercepts_fxp == tuple(int(round(b * 32)) for b in table.intercepts)
    assert qt.frac_bits == 5


def test_quantize_table_collapses_duplicates(caplog):
    table = gelu_table(points=(0.26, 0.3, 1.5))
    with caplog.at_level(logging.WARNING, logger="lutfit.quant"):
        qt = quantize_table(table, PowTwoScale(0), INT8)
    # 0.26 and 0.3 both round to 0; the segment between them is unreachable
    assert qt.breakpoints_q == (0, 2)
    assert qt.dropped_segments == (1,)
    assert qt.source_segments == (0, 2, 3)
    assert qt.entries == 3
    assert any("collapsed" in r.message for r in caplog.records)


def test_quantize_table_collapse_maps_region_past_duplicates():
    # both breakpoints clip to q_lo; everything at or above q_lo belongs to
    # the segment right of the whole run
    table = gelu_table(points=(-3.5, -3.0, 1.0))
    qt = quantize_table(table, PowTwoScale(-6), INT8)
    assert qt.breakpoints_q == (-128, 64)
    assert qt.source_segments == (0, 2, 3)
    # q = -100 >= -128 must use original segment 2's parameters
    x = dequantize(-100, PowTwoScale(-6))
    assert eval_qpwl_real(qt, x) == pytest.approx(
        table.slopes[2] * x + table.intercepts[2], abs=1e-12
    )


def test_quantize_table_rejects_wide_range():
    bps = BreakpointSet(points=(1.0, 2.0), search_range=DIV.search_range)
    table = fxp_round_table(derive_table(DIV, bps), 5)
    with pytest.raises(ValueError):
        quantize_table(table, PowTwoScale(0), INT8)


def test_fitted_gelu_breakpoints_stay_distinct_at_natural_scale():
    rng = np.random.default_rng(0)
    for _ in range(5):
        bps = repaired_breakpoints(rng.uniform(-4, 4, size=7), GELU.search_range)
        qt = quantize_table(fxp_round_table(derive_table(GELU, bps), 5), PowTwoScale(-5), INT8)
        assert len(set(qt.breakpoints_q)) == len(qt.breakpoints_q)


def div_table(points=(0.75, 1.0, 1.5, 2.5)):
    bps = BreakpointSet(points=points, search_range=DIV.search_range)
    return fxp_round_table(derive_table(DIV, bps), 5)


def test_fxp_quantize_table_rounds_breakpoints():
    # built directly: 0.515625 sits too close to the range edge for derive
    from lutfit.pwl import PwlTable

    table = PwlTable(
        slopes=(-2.0, -1.0, -0.5, -0.25),
        intercepts=(3.0, 2.0, 1.5, 1.0),
        breakpoints=BreakpointSet(points=(0.515625, 1.0, 2.0), search_range=DIV.search_range),
        spec=DIV,
    )
    qt = fxp_quantize_table(table, frac_bits=5, bits=8)
    assert qt.breakpoints_real[0] == 0.53125  # nearest multiple of 1/32
    assert qt.breakpoints_real[1] == 1.0  # on-grid values unchanged
    assert qt.scale is None


def test_fxp_quantize_table_div_plan_fits_without_saturation():
    rng = np.random.default_rng(2)
    for _ in range(5):
        bps = repaired_breakpoints(rng.uniform(0.5, 4.0, size=7), DIV.search_range)
        table = fxp_round_table(derive_table(DIV, bps), 5)
        qt = fxp_quantize_table(table, frac_bits=5, bits=8)
        assert qt.saturated == ()
        for v in qt.slopes_fxp + qt.intercepts_fxp + qt.breakpoints_q:
            assert -128 <= v <= 127


def test_fxp_quantize_table_records_saturation():
    table = div_table()
    inflated = type(table)(
        slopes=(100.0,) + table.slopes[1:],
        intercepts=table.intercepts,
        breakpoints=table.breakpoints,
        spec=table.spec,
    )
    qt = fxp_quantize_table(inflated, frac_bits=5, bits=8)
    assert "slope[0]" in qt.saturated
    assert qt.slopes_fxp[0] == 127


def test_fxp_quantize_table_rejects_scale_carrying():
    with pytest.raises(ValueError):
        fxp_quantize_table(gelu_table(), 5, 8)


def test_plan_presets_match_configuration():
    div = get_plan("div-int8")
    assert div.inner_range == (0.5, 4.0)
    assert [(sr.lo, sr.hi, sr.scale.exponent) for sr in div.sub_ranges] == [
        (4.0, 32.0, -3),
        (32.0, 256.0, -6),
        (256.0, math.inf, -6),
    ]
    rsqrt = get_plan("rsqrt-int8")
    assert rsqrt.inner_range == (0.25, 4.0)
    assert [(sr.lo, sr.hi, sr.scale.exponent) for sr in rsqrt.sub_ranges] == [
        (4.0, 64.0, -4),
        (64.0, 1024.0, -8),
        (1024.0, math.inf, -12),
    ]
    with pytest.raises(KeyError):
        get_plan("div-int4")


def test_plan_validation():
    with pytest.raises(ValueError):
        RangeScalingPlan(
            inner_range=(0.5, 4.0),
            sub_ranges=(SubRange(5.0, math.inf, PowTwoScale(-3)),),  # gap at 4..5
            op_kind=Kind.DIV,
        )
    with pytest.raises(ValueError):
        RangeScalingPlan(
            inner_range=(0.5, 4.0),
            sub_ranges=(SubRange(4.0, 32.0, PowTwoScale(-1)),),  # maps outside inner
            op_kind=Kind.DIV,
        )
    with pytest.raises(ValueError):
        RangeScalingPlan(
            inner_range=(0.5, 4.0),
            sub_ranges=(SubRange(4.0, 32.0, PowTwoScale(-3)),),  # not open-ended
            op_kind=Kind.DIV,
        )


def test_select_subrange_div_example():
    plan = get_plan("div-int8")
    scale, rescale = select_subrange(100.0, plan)
    assert scale.exponent == -6 and rescale == 2 ** -6
    assert 0.5 <= 100.0 * scale.value <= 4.0
    assert 100.0 * scale.value == 1.5625


def test_select_subrange_rsqrt_power_of_two_composition():
    plan = get_plan("rsqrt-int8")
    scale, rescale = select_subrange(256.0, plan)
    assert scale.exponent == -8 and rescale == 0.0625
    assert 256.0 * scale.value == 1.0
    assert rescale * (1.0 / math.sqrt(1.0)) == 1.0 / math.sqrt(256.0)


def test_select_subrange_identity_inside_inner_range():
    plan = get_plan("div-int8")
    for x in (0.5, 2.0, 4.0):
        scale, rescale = select_subrange(x, plan)
        assert scale.exponent == 0 and rescale == 1.0


def test_select_subrange_domain_errors():
    plan = get_plan("div-int8")
    for x in (0.0, -3.0, 0.25):
        with pytest.raises(DomainError):
            select_subrange(x, plan)


def test_composition_identity_exact():
    # rescale * f(x * S') == f(x) bit-exactly for power-of-two folds
    rng = np.random.default_rng(17)
    for kind in (Kind.DIV, Kind.RSQRT):
        spec = default_spec(kind)
        plan = default_plan(kind)
        boundaries = [sr.lo for sr in plan.sub_ranges]
        interior = list(rng.uniform(4.0, 2000.0, size=200))
        for x in boundaries + interior:
            scale, rescale = select_subrange(float(x), plan)
            assert rescale * eval_ref(spec, float(x) * scale.value) == eval_ref(spec, float(x))


def test_breakpoint_deviation_detects_round_down():
    table = gelu_table(points=(1.3,))
    qt = quantize_table(table, PowTwoScale(0), INT8)
    assert qt.breakpoints_q == (1,)
    # float path puts x=1 below the breakpoint, integer path at/above it
    assert breakpoint_deviation(table, qt, INT8) == (1,)


def test_breakpoint_deviation_empty_for_grid_aligned():
    table = gelu_table(points=(-2.0, 1.0, 3.0))
    qt = quantize_table(table, PowTwoScale(0), INT8)
    assert breakpoint_deviation(table, qt, INT8) == ()


def test_eval_qpwl_real_wide_range_matches_dequantized_params():
    table = div_table()
    qt = fxp_quantize_table(table, frac_bits=5, bits=8)
    xs = np.linspace(0.5, 4.0, 57)
    ys = eval_qpwl_real(qt, xs)
    for x, y in zip(xs, ys):
        idx = int(np.searchsorted(qt.breakpoints_real, x, side="right"))
        assert y == pytest.approx(
            qt.slopes_real[idx] * x + qt.intercepts_real[idx], abs=1e-15
        )


def test_qpwl_table_validation():
    with pytest.raises(ValueError):
        QPwlTable(
            slopes_fxp=(1, 2),
            intercepts_fxp=(0, 0),
            breakpoints_q=(3, 3),
            frac_bits=5,
            spec=GELU,
        )
    with pytest.raises(ValueError):
        QPwlTable(
            slopes_fxp=(1, 2, 3),
            intercepts_fxp=(0, 0),
            breakpoints_q=(3,),
            frac_bits=5,
            spec=GELU,
        )
