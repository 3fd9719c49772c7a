"""Command line interface: ``polystokes <command> [options]``.

Commands
    mesh gen       write a mesh of a family in the plain-text mesh format
    count          DOF and nonzero counts of the global matrix
    run            one assembled and solved problem
    study          a refinement sweep with errors, rates and iteration counts
    export-matrix  the global matrix in MatrixMarket coordinate format

Settings come from an optional YAML file (``--config``) and are overridden
by flags.  Unknown flags or config keys print the usage and exit with 2.
"""

from __future__ import annotations

import argparse
import sys

from . import driver
from .assembly import SCHEMES
from .discretize import assemble_system
from .mesh import MeshError, write_mesh
from .sparse_la import count_dofs_mnzs, export_matrix_market

# flag destination -> config key
_FLAG_KEYS = {
    "scheme": "scheme",
    "strategy": "strategy",
    "k": "k",
    "levels": "levels",
    "smoother_iters": "smoother.iters",
    "coarse": "coarse.kind",
    "coarse_rtol": "coarse.rtol",
    "outer_rtol": "outer.rtol",
    "outer_maxit": "outer.maxit",
    "seed": "seed",
    "family": "family",
    "sizes": "sizes",
    "case": "case",
    "eta": "eta",
    "timings": "timings",
}


def _add_problem_flags(p: argparse.ArgumentParser, solver: bool = True) -> None:
    p.add_argument("--config", help="YAML file with settings (flags override it)")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--strategy", help="uncond, v-cond or vp-cond for hho-dp")
    p.add_argument("--k", type=int, help="polynomial degree")
    p.add_argument("--seed", type=int, help="seed of the randomized mesh families")
    p.add_argument("--eta", type=float, help="HHO weak-Dirichlet penalty (default 3 (k+1)^2)")
    if not solver:
        return
    p.add_argument("--levels", help="comma-separated level degrees, finest first, e.g. 3,2,1")
    p.add_argument("--smoother-iters", type=int)
    p.add_argument("--coarse", choices=("lu", "gmres-ilu"), help="coarsest-level solver")
    p.add_argument("--coarse-rtol", type=float)
    p.add_argument("--outer-rtol", type=float)
    p.add_argument("--outer-maxit", type=int)
    p.add_argument("--case", choices=tuple(driver.CASES), help="manufactured solution")
    p.add_argument("--no-timings", dest="timings", action="store_const", const=False,
                   help="print '-' for timings so reports are reproducible byte for byte")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("md", "csv"), default="md", help="stdout format")
    p.add_argument("--csv", dest="csv_path", help="also write the CSV table to this file")
    p.add_argument("--md", dest="md_path", help="also write the Markdown table to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polystokes", description="2D polytopal Stokes solvers (HHO, DG) with p-multilevel FGMRES.")
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen", help="generate a mesh file")
    gen.add_argument("--mesh", required=True, help="family:n, e.g. trapz:8 or graded-tri:16")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", help="output file (default stdout)")

    count = sub.add_parser("count", help="DOF/MNZ report")
    count.add_argument("--mesh", required=True, help="family:n or file:path")
    _add_problem_flags(count, solver=False)
    count.add_argument("--all", action="store_true", help="report every scheme and strategy")
    count.add_argument("--format", choices=("md", "csv"), default="md")

    run = sub.add_parser("run", help="solve one problem")
    run.add_argument("--mesh", required=True, help="family:n or file:path")
    _add_problem_flags(run)
    _add_output_flags(run)

    study = sub.add_parser("study", help="refinement sweep")
    study.add_argument("--family", choices=driver.FAMILIES)
    study.add_argument("--sizes", help="comma-separated cells per side (default 2,4,...,128)")
    _add_problem_flags(study)
    _add_output_flags(study)

    exp = sub.add_parser("export-matrix", help="write the global matrix")
    exp.add_argument("--mesh", required=True, help="family:n or file:path")
    _add_problem_flags(exp, solver=False)
    exp.add_argument("--out", required=True, help="output .mtx file")
    exp.add_argument("--rhs", help="also write the right-hand side, one value per line")
    return parser


def _config(args, parser) -> driver.RunConfig:
    try:
        mapping = driver.load_config(args.config) if getattr(args, "config", None) else {}
        cfg = driver.config_from_mapping(mapping)
        overrides = {}
        for dest, key in _FLAG_KEYS.items():
            val = getattr(args, dest, None)
            if val is not None:
                overrides[key] = val
        return driver.config_from_mapping(overrides, base=cfg)
    except (driver.ConfigError, OSError) as exc:
        parser.error(str(exc))


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)


def _report(args, rows, timings: bool) -> None:
    csv_text = driver.format_csv(rows, timings)
    md_text = driver.format_markdown(rows, timings)
    sys.stdout.write(csv_text if args.format == "csv" else md_text)
    _emit(csv_text, args.csv_path)
    _emit(md_text, args.md_path)


def _cmd_mesh(args, parser) -> int:
    mesh = driver.mesh_from_spec(args.mesh, args.seed)
    write_mesh(mesh, args.out if args.out else sys.stdout)
    return 0


def _cmd_count(args, parser) -> int:
    cfg = _config(args, parser)
    mesh = driver.mesh_from_spec(args.mesh, cfg.seed)
    if args.all:
        combos = [("hho-dp", s) for s in ("uncond", "v-cond", "vp-cond")] + [("hho-hp", None), ("dg", None)]
    else:
        combos = [(cfg.scheme, cfg.strategy)]
    counts = [count_dofs_mnzs(mesh, s, st, cfg.k) for s, st in combos]
    if args.format == "csv":
        keys = list(counts[0])
        lines = [",".join(keys)] + [",".join(str(c[k]) for k in keys) for c in counts]
        sys.stdout.write("\n".join(lines) + "\n")
    else:
        sys.stdout.write(driver.count_table(counts))
    return 0


def _cmd_run(args, parser) -> int:
    cfg = _config(args, parser)
    mesh = driver.mesh_from_spec(args.mesh, cfg.seed)
    row = driver.run_case(mesh, cfg)
    _report(args, [row], cfg.timings)
    return 0 if not row.error else 1


def _cmd_study(args, parser) -> int:
    cfg = _config(args, parser)
    report = driver.convergence_study(cfg)
    _report(args, report.rows, cfg.timings)
    return 0


def _cmd_export(args, parser) -> int:
    cfg = _config(args, parser)
    mesh = driver.mesh_from_spec(args.mesh, cfg.seed)
    system = assemble_system(mesh, cfg.scheme, cfg.strategy, cfg.k, data=driver.CASES["smooth"](), eta=cfg.eta)
    export_matrix_market(system.A, args.out)
    if args.rhs:
        with open(args.rhs, "w") as fh:
            fh.writelines(f"{v:.17e}\n" for v in system.b)
    sys.stdout.write(f"wrote {system.n} x {system.n} matrix with {system.nnz} stored entries to {args.out}\n")
    return 0


_COMMANDS = {"mesh": _cmd_mesh, "count": _cmd_count, "run": _cmd_run, "study": _cmd_study, "export-matrix": _cmd_export}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, parser)
    except (driver.ConfigError, MeshError, OSError) as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
