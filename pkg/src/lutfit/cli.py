"""Command-line entry point: fit, eval and export subcommands."""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .artifacts import (
    EXPORT_FORMATS,
    Provenance,
    atomic_write,
    read_artifact,
    render_c_header,
    render_memh,
    write_fit_artifact,
    write_qtable_artifact,
)
from .config import (
    ConfigError,
    RunConfig,
    config_hash,
    default_run_config,
    load_config,
)
from .evalbench import sweep_scales, wide_range_mse
from .evolve import MutationKind, evolve
from .nonlin import Kind
from .pwl import PwlTable, fitness_mse
from .quant import (
    PowTwoScale,
    QPwlTable,
    QuantSpec,
    fxp_quantize_table,
    quantize_table,
)


def _fit_one(spec, ga_cfg):
    log: list = []
    table = evolve(spec, ga_cfg, log=log)
    return ga_cfg.seed, table, log


def _artifact_stem(cfg: RunConfig) -> str:
    return f"{cfg.function.value}_{cfg.entries}e"


def cmd_fit(cfg: RunConfig, jobs: int = 1) -> list[str]:
    """Fit one table per seed; writes per-seed artifacts, a best-of-seeds
    artifact and a generation-by-generation fitness log. Returns the paths."""
    spec = cfg.spec()
    chash = config_hash(cfg)
    ga_cfgs = [replace(cfg.ga, seed=seed) for seed in cfg.seeds]
    if jobs > 1 and len(ga_cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, [spec] * len(ga_cfgs), ga_cfgs))
    else:
        results = [_fit_one(spec, g) for g in ga_cfgs]

    stem = _artifact_stem(cfg)
    written = []
    best_seed, best_table, best_mse = None, None, None
    log_rows = []
    for seed, table, log in results:
        path = os.path.join(cfg.out_dir, f"{stem}_seed{seed}.fit.json")
        write_fit_artifact(path, table, Provenance(chash, seed))
        written.append(path)
        mse = fitness_mse(table, spec)
        if best_mse is None or mse < best_mse:
            best_seed, best_table, best_mse = seed, table, mse
        log_rows.extend((seed, gen, value) for gen, value in log)

    best_path = os.path.join(cfg.out_dir, f"{stem}_best.fit.json")
    write_fit_artifact(best_path, best_table, Provenance(chash, best_seed))
    written.append(best_path)

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["seed", "generation", "best_mse"])
    writer.writerows(log_rows)
    log_path = os.path.join(cfg.out_dir, f"{stem}_fitlog.csv")
    atomic_write(log_path, buf.getvalue())
    written.append(log_path)
    return written


def cmd_eval(cfg: RunConfig, table_path: str) -> list[str]:
    """Evaluate a fitted table artifact; writes a per-scale CSV and a JSON
    summary for scale-carrying operators, a JSON summary for wide-range ones."""
    table, provenance = read_artifact(table_path)
    if not isinstance(table, PwlTable):
        raise ConfigError(f"{table_path} is not a fitted-table artifact")
    if table.spec.kind != cfg.function:
        raise ConfigError(
            f"artifact function {table.spec.kind.value} does not match config "
            f"function {cfg.function.value}"
        )
    stem, _ = os.path.splitext(os.path.basename(table_path))
    stem = stem.removesuffix(".fit")
    written = []
    summary = {
        "function": table.spec.kind.value,
        "entries": table.entries,
        "method": "rm" if cfg.ga.mutation_kind is MutationKind.ROUNDING else "gaussian",
        "source": os.path.basename(table_path),
        "provenance": provenance,
    }
    if table.spec.scale_carrying:
        report = sweep_scales(
            table,
            table.spec,
            exponents=cfg.scale_exponents,
            qs=cfg.quant,
            datapath=cfg.datapath,
            method=summary["method"],
        )
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["scale_exp", "mse"])
        for e, mse in report.per_scale:
            writer.writerow([e, repr(mse)])
        csv_path = os.path.join(cfg.out_dir, f"{stem}_scales.csv")
        atomic_write(csv_path, buf.getvalue())
        written.append(csv_path)
        summary["per_scale"] = {str(e): mse for e, mse in report.per_scale}
        summary["average_mse"] = report.average_mse
    else:
        plan = cfg.scaling_plan()
        summary["plan"] = cfg.plan if isinstance(cfg.plan, str) else "inline"
        summary["mse"] = wide_range_mse(
            table,
            table.spec,
            plan,
            frac_bits=cfg.datapath.frac_bits,
            bits=cfg.quant.bits,
        )
    report_path = os.path.join(cfg.out_dir, f"{stem}_report.json")
    atomic_write(report_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(report_path)
    return written


def cmd_export(
    table_path: str,
    fmt: str,
    out_dir: str,
    scale_exp: int | None = None,
    frac_bits: int = 5,
    quant_bits: int = 8,
    slope_bits: int = 16,
    intercept_bits: int = 16,
    breakpoint_bits: int = 8,
    name: str | None = None,
) -> str:
    """Export a table artifact in one of the hardware formats; returns the path."""
    if fmt not in EXPORT_FORMATS:
        raise ConfigError(
            f"unsupported format {fmt!r}; supported formats: {', '.join(EXPORT_FORMATS)}"
        )
    table, prov_dict = read_artifact(table_path)
    provenance = Provenance(
        config_hash=prov_dict.get("config_hash", "unknown"),
        seed=prov_dict.get("seed", -1),
        tool_version=prov_dict.get("tool_version", "unknown"),
    )
    if isinstance(table, QPwlTable):
        qtable = table
    elif table.spec.scale_carrying:
        if scale_exp is None:
            raise ConfigError(
                f"{table.spec.kind.value} export requires --scale-exp (power-of-two exponent)"
            )
        qtable = quantize_table(
            table, PowTwoScale(scale_exp), QuantSpec(quant_bits), frac_bits=frac_bits
        )
    else:
        qtable = fxp_quantize_table(table, frac_bits=frac_bits, bits=quant_bits)

    stem, _ = os.path.splitext(os.path.basename(table_path))
    stem = stem.removesuffix(".fit").removesuffix(".qtable")
    name = name or stem
    if fmt == "data":
        path = os.path.join(out_dir, f"{stem}.qtable.json")
        write_qtable_artifact(path, qtable, provenance)
    elif fmt == "header":
        path = os.path.join(out_dir, f"{stem}.h")
        atomic_write(
            path,
            render_c_header(
                qtable, provenance, name, slope_bits, intercept_bits, breakpoint_bits
            ),
        )
    else:
        path = os.path.join(out_dir, f"{stem}.memh")
        atomic_write(
            path,
            render_memh(qtable, provenance, slope_bits, intercept_bits, breakpoint_bits),
        )
    return path


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError:
        raise ConfigError(f"invalid field seeds: {text!r}") from None


def _parse_scales(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError:
        raise ConfigError(f"invalid field scale_exponents: {text!r}") from None


def _build_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        if getattr(args, "function", None) and Kind(args.function) != cfg.function:
            raise ConfigError(
                f"--function {args.function} conflicts with config function "
                f"{cfg.function.value}"
            )
        if getattr(args, "entries", None) and args.entries != cfg.entries:
            raise ConfigError(
                f"--entries {args.entries} conflicts with config entries {cfg.entries}"
            )
    else:
        if not getattr(args, "function", None):
            raise ConfigError("missing field function: pass --function or --config")
        cfg = default_run_config(args.function, args.entries or 8)
    ga = cfg.ga
    if getattr(args, "mutation", None):
        kind = MutationKind.GAUSSIAN if args.mutation == "gaussian" else MutationKind.ROUNDING
        ga = replace(ga, mutation_kind=kind)
    if getattr(args, "iterations", None) is not None:
        ga = replace(ga, iterations=args.iterations)
    cfg = replace(cfg, ga=ga)
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=_parse_seeds(args.seeds))
    if getattr(args, "scales", None):
        cfg = replace(cfg, scale_exponents=_parse_scales(args.scales))
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lutfit",
        description="Fit, evaluate and export piecewise-linear LUT approximations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    functions = [k.value for k in Kind]

    p_fit = sub.add_parser("fit", help="run the genetic search and write table artifacts")
    p_fit.add_argument("--function", choices=functions)
    p_fit.add_argument("--entries", type=int, choices=(8, 16))
    p_fit.add_argument("--seeds", help="comma-separated RNG seeds (default: 0)")
    p_fit.add_argument("--mutation", choices=("gaussian", "rm"))
    p_fit.add_argument("--iterations", type=int)
    p_fit.add_argument("--config", help="JSON run-config file")
    p_fit.add_argument("--out", help="output directory (default: out)")
    p_fit.add_argument("--jobs", type=int, default=1, help="parallel seed fits")

    p_eval = sub.add_parser("eval", help="quantization-aware accuracy report for a table")
    p_eval.add_argument("--table", required=True, help="fitted-table artifact")
    p_eval.add_argument("--function", choices=functions)
    p_eval.add_argument("--entries", type=int, choices=(8, 16))
    p_eval.add_argument("--scales", help="comma-separated scale exponents")
    p_eval.add_argument("--config", help="JSON run-config file")
    p_eval.add_argument("--out", help="output directory (default: out)")

    p_export = sub.add_parser("export", help="write a hardware export of a table")
    p_export.add_argument("--table", required=True, help="table artifact to export")
    p_export.add_argument("--format", required=True, help="data, header or memh")
    p_export.add_argument("--scale-exp", type=int, default=None)
    p_export.add_argument("--frac-bits", type=int, default=5)
    p_export.add_argument("--quant-bits", type=int, default=8)
    p_export.add_argument("--slope-bits", type=int, default=16)
    p_export.add_argument("--intercept-bits", type=int, default=16)
    p_export.add_argument("--breakpoint-bits", type=int, default=8)
    p_export.add_argument("--name", help="identifier prefix for the header export")
    p_export.add_argument("--out", default="out", help="output directory")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            cfg = _build_config(args)
            written = cmd_fit(cfg, jobs=args.jobs)
        elif args.command == "eval":
            if args.function is None and args.config is None:
                table, _ = read_artifact(args.table)
                args.function = table.spec.kind.value
            cfg = _build_config(args)
            written = cmd_eval(cfg, args.table)
        else:
            written = [
                cmd_export(
                    args.table,
                    args.format,
                    args.out,
                    scale_exp=args.scale_exp,
                    frac_bits=args.frac_bits,
                    quant_bits=args.quant_bits,
                    slope_bits=args.slope_bits,
                    intercept_bits=args.intercept_bits,
                    breakpoint_bits=args.breakpoint_bits,
                    name=args.name,
                )
            ]
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
