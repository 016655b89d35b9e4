"""Fixed-point helpers shared by the optimizer, quantizer and simulator.

The project-wide rounding mode is round-half-up (ties toward +inf, i.e.
floor(x + 0.5), the add-and-truncate rounding hardware implements); every
conversion goes through these helpers so exports stay bit-exact. Ties
toward +inf also keep half-grid breakpoints out of their own deviation
zones after quantization, which ties away from zero would not.
"""

import numpy as np


def round_half_up(x):
    """Round to nearest integer, ties toward +inf. Works on scalars and arrays."""
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def fxp_round(x, frac_bits: int):
    """Snap x to the 2^-frac_bits grid (nearest, ties toward +inf)."""
    scale = float(1 << frac_bits) if frac_bits >= 0 else 2.0 ** frac_bits
    out = round_half_up(x * scale) / scale
    if np.isscalar(x):
        return float(out)
    return out


def to_mantissa(x, frac_bits: int):
    """Integer mantissa of x at frac_bits fractional bits.

    Exact for values already on the grid; otherwise rounds half up.
    """
    m = round_half_up(np.asarray(x, dtype=float) * float(1 << frac_bits))
    if m.ndim == 0:
        return int(m)
    return m.astype(np.int64)


def int_bounds(bits: int, signed: bool = True) -> tuple[int, int]:
    """(lo, hi) representable range of a bits-wide integer."""
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    if signed:
        return -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    return 0, (1 << bits) - 1


def saturate(value: int, bits: int, signed: bool = True) -> int:
    """Clamp an integer into the bits-wide representable range."""
    lo, hi = int_bounds(bits, signed)
    return min(max(int(value), lo), hi)


def fits(value: int, bits: int, signed: bool = True) -> bool:
    lo, hi = int_bounds(bits, signed)
    return lo <= value <= hi


def shift_right_round(value: int, shift: int) -> int:
    """Arithmetic right shift rounding the dropped bits half up.

    shift <= 0 is an exact left shift. Python's arithmetic shift floors,
    so adding half the dropped weight first gives round-half-up exactly.
    """
    if shift <= 0:
        return int(value) << (-shift)
    return (int(value) + (1 << (shift - 1))) >> shift


def to_twos_complement_hex(value: int, bits: int) -> str:
    """Two's-complement hex encoding of value at the given field width."""
    if not fits(value, bits, signed=True):
        raise ValueError(f"{value} not representable in {bits} signed bits")
    width = (bits + 3) // 4
    return format(int(value) & ((1 << bits) - 1), f"0{width}X")
