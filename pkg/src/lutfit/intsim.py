"""Bit-accurate simulation of the integer LUT datapath.

The hardware selects a segment by comparing the quantized input q against
the stored integer breakpoints, multiplies by the fixed-point slope and adds
the intercept shifted by the scale exponent:

    y = k_fxp * q + (b_fxp >> e)

where a negative e is an exact left shift and a positive e rounds the
dropped bits half up. The result carries frac_bits fractional
bits and the implicit scale S, so S * y approximates f(S * q). All
intermediates are checked against the configured accumulator width; an
overflow is a configuration error, never a silent wrap.
"""

from bisect import bisect_right
from dataclasses import dataclass

from .fxp import fits, int_bounds, shift_right_round
from .quant import QPwlTable


class AccumulatorOverflow(OverflowError):
    """An intermediate exceeded the configured accumulator width."""


@dataclass(frozen=True)
class DatapathConfig:
    """Bit widths of the simulated datapath.

    acc_bits defaults to input_bits + param_bits + 8, leaving headroom for
    the runtime intercept shift (scale exponents down to -8).
    """

    input_bits: int = 8
    param_bits: int = 16
    frac_bits: int = 5
    acc_bits: int | None = None

    def __post_init__(self):
        if self.input_bits < 1 or self.param_bits < 1:
            raise ValueError("input_bits and param_bits must be >= 1")
        if self.frac_bits < 0:
            raise ValueError(f"frac_bits must be >= 0, got {self.frac_bits}")
        if self.acc_bits is not None and self.acc_bits < self.input_bits + self.param_bits:
            raise ValueError(
                f"acc_bits {self.acc_bits} below input_bits + param_bits "
                f"({self.input_bits + self.param_bits})"
            )

    @property
    def effective_acc_bits(self) -> int:
        if self.acc_bits is not None:
            return self.acc_bits
        return self.input_bits + self.param_bits + 8


def segment_index(q: int, table: QPwlTable) -> int:
    """Table entry selected for quantized input q (pure integer compares)."""
    return bisect_right(table.breakpoints_q, q)


def _check_widths(table: QPwlTable, cfg: DatapathConfig):
    if table.frac_bits != cfg.frac_bits:
        raise ValueError(
            f"table has {table.frac_bits} fractional bits, datapath expects {cfg.frac_bits}"
        )
    for label, values in (("slope", table.slopes_fxp), ("intercept", table.intercepts_fxp)):
        for v in values:
            if not fits(v, cfg.param_bits):
                raise ValueError(
                    f"{label} mantissa {v} exceeds param_bits={cfg.param_bits}"
                )


def int_pwl(q: int, table: QPwlTable, cfg: DatapathConfig) -> float:
    """Integer-datapath output for input q, as the exact fixed-point value.

    The return value has frac_bits fractional bits and carries the table's
    implicit scale: S * int_pwl(q) approximates f(S * q).
    """
    if table.scale is None:
        raise ValueError("integer datapath requires a scale-carrying table")
    in_lo, in_hi = int_bounds(cfg.input_bits)
    if not in_lo <= q <= in_hi:
        raise ValueError(f"q={q} outside {cfg.input_bits}-bit input range")
    _check_widths(table, cfg)
    i = segment_index(q, table)
    product = table.slopes_fxp[i] * q
    shifted_b = shift_right_round(table.intercepts_fxp[i], table.scale.exponent)
    acc = product + shifted_b
    acc_bits = cfg.effective_acc_bits
    for name, value in (("product", product), ("shifted intercept", shifted_b), ("sum", acc)):
        if not fits(value, acc_bits):
            raise AccumulatorOverflow(
                f"{name} {value} exceeds acc_bits={acc_bits} "
                f"(q={q}, segment={i}, scale=2^{table.scale.exponent})"
            )
    return acc / float(1 << cfg.frac_bits)
