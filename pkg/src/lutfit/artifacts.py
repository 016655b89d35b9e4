"""Artifact serialization: fitted tables, quantized tables, hardware exports.

Two JSON artifact kinds exist: "fit" holds a real-valued fitted table
(fixed-point-rounded slopes/intercepts, real breakpoints) and "qtable"
holds a quantized table. Both carry provenance (config hash, seed, tool
version) and round-trip bit-exactly. The C header and hex mem-init formats
are one-way hardware exports.

All writes go through a temp file and an atomic rename, so a failed export
never leaves a partial artifact behind.
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass

from . import __version__
from .fxp import fits
from .nonlin import Kind, NonLinSpec
from .pwl import BreakpointSet, PwlTable
from .quant import PowTwoScale, QPwlTable

SCHEMA_VERSION = 1

EXPORT_FORMATS = ("data", "header", "memh")


@dataclass(frozen=True)
class Provenance:
    config_hash: str
    seed: int
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "tool_version": self.tool_version,
        }


def atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _spec_to_dict(spec: NonLinSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "search_range": list(spec.search_range),
        "scale_carrying": spec.scale_carrying,
    }


def _spec_from_dict(data: dict) -> NonLinSpec:
    return NonLinSpec(
        kind=Kind(data["kind"]),
        search_range=tuple(data["search_range"]),
        scale_carrying=data["scale_carrying"],
    )


def fit_artifact_text(table: PwlTable, provenance: Provenance) -> str:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "artifact_kind": "fit",
        "function": _spec_to_dict(table.spec),
        "slopes": list(table.slopes),
        "intercepts": list(table.intercepts),
        "breakpoints": list(table.breakpoints.points),
        "provenance": provenance.to_dict(),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def qtable_artifact_text(qtable: QPwlTable, provenance: Provenance) -> str:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "artifact_kind": "qtable",
        "function": _spec_to_dict(qtable.spec),
        "slopes_fxp": list(qtable.slopes_fxp),
        "intercepts_fxp": list(qtable.intercepts_fxp),
        "breakpoints_q": list(qtable.breakpoints_q),
        "frac_bits": qtable.frac_bits,
        "scale_exponent": None if qtable.scale is None else qtable.scale.exponent,
        "source_segments": list(qtable.source_segments),
        "saturated": list(qtable.saturated),
        "provenance": provenance.to_dict(),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_fit_artifact(path: str, table: PwlTable, provenance: Provenance):
    atomic_write(path, fit_artifact_text(table, provenance))


def write_qtable_artifact(path: str, qtable: QPwlTable, provenance: Provenance):
    atomic_write(path, qtable_artifact_text(qtable, provenance))


def read_artifact(path: str):
    """Load a JSON artifact; returns (table, provenance dict).

    The table is a PwlTable for "fit" artifacts and a QPwlTable for
    "qtable" artifacts.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported artifact schema_version {data.get('schema_version')}")
    kind = data.get("artifact_kind")
    if kind not in ("fit", "qtable"):
        raise ValueError(f"unknown artifact_kind {kind!r}")
    spec = _spec_from_dict(data["function"])
    provenance = data.get("provenance", {})
    if kind == "fit":
        table = PwlTable(
            slopes=tuple(data["slopes"]),
            intercepts=tuple(data["intercepts"]),
            breakpoints=BreakpointSet(
                points=tuple(data["breakpoints"]), search_range=spec.search_range
            ),
            spec=spec,
        )
        return table, provenance
    exponent = data["scale_exponent"]
    qtable = QPwlTable(
        slopes_fxp=tuple(data["slopes_fxp"]),
        intercepts_fxp=tuple(data["intercepts_fxp"]),
        breakpoints_q=tuple(data["breakpoints_q"]),
        frac_bits=data["frac_bits"],
        spec=spec,
        scale=None if exponent is None else PowTwoScale(exponent),
        source_segments=tuple(data["source_segments"]),
        saturated=tuple(data["saturated"]),
    )
    return qtable, provenance


def _c_int_type(bits: int) -> str:
    for width in (8, 16, 32, 64):
        if bits <= width:
            return f"int{width}_t"
    raise ValueError(f"no integer type for {bits} bits")


def render_c_header(
    qtable: QPwlTable,
    provenance: Provenance,
    name: str,
    slope_bits: int = 16,
    intercept_bits: int = 16,
    breakpoint_bits: int = 8,
) -> str:
    """C header with the integer arrays plus frac-bits/scale-exponent macros."""
    prefix = name.upper()
    lines = [
        f"/* {name}: {qtable.entries}-entry pwl table",
        f" * generated by lutfit {provenance.tool_version}",
        f" * config {provenance.config_hash} seed {provenance.seed}",
        " */",
        "#include <stdint.h>",
        "",
        f"#define {prefix}_ENTRIES {qtable.entries}",
        f"#define {prefix}_FRAC_BITS {qtable.frac_bits}",
    ]
    if qtable.scale is not None:
        lines.append(f"#define {prefix}_SCALE_EXP {qtable.scale.exponent}")
    for label, values, bits in (
        ("SLOPES", qtable.slopes_fxp, slope_bits),
        ("INTERCEPTS", qtable.intercepts_fxp, intercept_bits),
        ("BREAKPOINTS", qtable.breakpoints_q, breakpoint_bits),
    ):
        for v in values:
            if not fits(v, bits):
                raise ValueError(f"{label.lower()} value {v} does not fit {bits} bits")
        body = ", ".join(str(v) for v in values)
        lines.append(
            f"static const {_c_int_type(bits)} {prefix}_{label}[{len(values)}] = {{{body}}};"
        )
    return "\n".join(lines) + "\n"


def render_memh(
    qtable: QPwlTable,
    provenance: Provenance,
    slope_bits: int = 16,
    intercept_bits: int = 16,
    breakpoint_bits: int = 8,
) -> str:
    """Hex memory-init text: one packed line per LUT entry.

    Fields are {slope, intercept, breakpoint}, two's complement at the
    declared widths, most-significant field first, entry 0 first. The last
    entry has no breakpoint of its own; its breakpoint field is zero.
    """
    total_bits = slope_bits + intercept_bits + breakpoint_bits
    digits = math.ceil(total_bits / 4)
    lines = [
        f"// lutfit {provenance.tool_version} memh export, "
        f"config {provenance.config_hash} seed {provenance.seed}",
        f"// {qtable.entries} entries; fields msb-first: "
        f"slope[{slope_bits}] intercept[{intercept_bits}] breakpoint[{breakpoint_bits}], "
        f"two's complement; {qtable.frac_bits} fractional bits"
        + ("" if qtable.scale is None else f"; scale exponent {qtable.scale.exponent}"),
        "// last entry's breakpoint field is padding (zero)",
    ]
    for i in range(qtable.entries):
        slope = qtable.slopes_fxp[i]
        intercept = qtable.intercepts_fxp[i]
        breakpoint = qtable.breakpoints_q[i] if i < qtable.entries - 1 else 0
        for label, v, bits in (
            ("slope", slope, slope_bits),
            ("intercept", intercept, intercept_bits),
            ("breakpoint", breakpoint, breakpoint_bits),
        ):
            if not fits(v, bits):
                raise ValueError(f"{label} value {v} does not fit {bits} bits")
        word = (
            ((slope & ((1 << slope_bits) - 1)) << (intercept_bits + breakpoint_bits))
            | ((intercept & ((1 << intercept_bits) - 1)) << breakpoint_bits)
            | (breakpoint & ((1 << breakpoint_bits) - 1))
        )
        lines.append(format(word, f"0{digits}X"))
    return "\n".join(lines) + "\n"
