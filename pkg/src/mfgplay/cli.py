"""Command-line entry point: ``mfgplay run | list-problems | validate | schema``.

Exit codes: 0 converged, 2 stopped at the iteration cap, 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .catalog import CATALOG, rho0_constant_init
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    build_family,
    config_from_dict,
    dump_config,
    json_schema,
    resolve,
    schedule_object,
)
from .errors import MFGError
from .play import (
    HierarchySpec,
    IterationRecord,
    RunResult,
    run_fictitious_play,
    run_hierarchical,
)

logger = logging.getLogger("mfgplay")

CSV_HEADER = ["k", "level", "delta", "gain", "consec_residue", "fp_residue", "ref_error", "cosine", "btls_trials", "wall_s"]

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_row(rec: IterationRecord) -> list[str]:
    return [
        _cell(rec.k),
        _cell(rec.level),
        _cell(rec.delta),
        _cell(rec.gain),
        _cell(rec.consec_residue),
        _cell(rec.fp_residue),
        _cell(rec.ref_error),
        _cell(rec.cosine),
        _cell(rec.btls_trials),
        _cell(rec.wall_s),
    ]


def write_iterations(path: Path, records: list[IterationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(record_row(rec))


def write_fields(directory: Path, result: RunResult) -> list[Path]:
    grid = result.problem.grid
    rho, phi = result.state.rho, result.phi
    if grid.dim == 1:
        path = directory / "fields.csv"
        x = grid.axes[0]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "t", "rho", "phi"])
            for n, t in enumerate(grid.times):
                for i, xi in enumerate(x):
                    w.writerow([repr(float(xi)), repr(float(t)), repr(float(rho[n, i])), repr(float(phi[n, i]))])
        return [path]
    paths = []
    for name, arr in (("rho", rho), ("phi", phi)):
        p = directory / f"{name}.f64"
        np.ascontiguousarray(arr, dtype="<f8").tofile(p)
        paths.append(p)
    meta = {
        "fields": ["rho", "phi"],
        "files": {"rho": "rho.f64", "phi": "phi.f64"},
        "dtype": "float64",
        "byte_order": "little",
        "ordering": "row-major (C order)",
        "axes": ["t", "x1", "x2"],
        "shape": list(grid.field_shape),
        "extents": {
            "t": [0.0, grid.T],
            "x1": [grid.x_min[0], grid.x_max[0]],
            "x2": [grid.x_min[1], grid.x_max[1]],
        },
    }
    side = directory / "fields.json"
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return paths + [side]


def execute(cfg: RunConfig, out_dir: Path | None = None, echo=print) -> int:
    """Run a resolved config and write its outputs; returns the exit code."""
    out = Path(out_dir or cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(dump_config(cfg))
    family = build_family(cfg)
    schedule = schedule_object(cfg.schedule)
    newton = cfg.newton_options()
    levels = cfg.hierarchy.levels
    if levels == 0:
        problem = family(0)
        init = {"rho_init": rho0_constant_init(problem)} if cfg.init == "rho0" else {}
        result = run_fictitious_play(problem, schedule, cfg.eps, cfg.k_max, newton=newton, **init)
        records, converged, final = result.records, result.converged, result
    else:
        if cfg.init == "rho0":
            logger.info("hierarchical runs start from a zero value function on the coarsest grid")
        h = run_hierarchical(family, HierarchySpec(levels, cfg.eps, cfg.k_max), schedule, newton=newton)
        records, converged, final = h.records, h.converged, h.final
    write_iterations(out / "iterations.csv", records)
    if cfg.outputs.fields:
        write_fields(out, final)
    last = records[-1]
    echo(
        f"{'converged' if converged else 'not converged'}: {len(records)} iterations, "
        f"|gain| = {abs(last.gain):.3e}, outputs in {out}"
    )
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _load(args) -> RunConfig:
    data: dict = {}
    if args.config:
        text = Path(args.config).read_text()
        loaded = yaml.safe_load(text)
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config document must be a mapping")
        data = loaded or {}
    if getattr(args, "problem", None):
        data["problem"] = args.problem
    data = apply_overrides(data, args.set or [])
    if "problem" not in data:
        raise ConfigError("problem: required (give a config file or --problem)")
    return resolve(config_from_dict(data))


def list_problems() -> str:
    width = max(len(n) for n in CATALOG)
    return "\n".join(f"{name.ljust(width)}  {entry.summary}" for name, entry in CATALOG.items())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfgplay", description="Fictitious-play solver for discrete mean-field games.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", nargs="?", help="YAML config file")
        p.add_argument("--problem", help="catalog problem name (overrides the config)")
        p.add_argument("--set", action="append", metavar="PATH=VALUE", help="override a config value by dotted path")

    run = sub.add_parser("run", help="solve and write iterations.csv, fields and the resolved config")
    add_common(run)
    run.add_argument("-o", "--out", help="output directory (overrides outputs.directory)")
    val = sub.add_parser("validate", help="validate a config and print it fully resolved")
    add_common(val)
    sub.add_parser("list-problems", help="list the built-in problems")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "list-problems":
            print(list_problems())
            return EXIT_OK
        if args.command == "schema":
            print(json.dumps(json_schema(), indent=2))
            return EXIT_OK
        cfg = _load(args)
        if args.command == "validate":
            print(dump_config(cfg), end="")
            return EXIT_OK
        return execute(cfg, Path(args.out) if args.out else None)
    except (ConfigError, MFGError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
