"""Convergence studies, solver runs and their tabular reports.

A study walks a refinement sequence of one mesh family, assembles and
solves the manufactured Stokes problem on every mesh and records one row
per mesh: errors, observed rates, outer and coarse iteration counts, matrix
sizes and timings.  Rows are written as CSV or as an aligned Markdown table.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .assembly import normalize
from .discretize import assemble_system
from .manufactured import ManufacturedCase, PolynomialCase, error_norms
from .mesh import NEUMANN, Mesh, apply_grading, classify_boundary, gen_quad_family, gen_tri_family, read_mesh
from .plevels import COARSE_KINDS, LevelConfig, solve
from .sparse_la import SolverError

CSV_COLUMNS = (
    "cells", "e_u", "e_Gu", "e_p", "e_Du", "rate_u", "rate_Gu", "rate_p",
    "its", "its_coarse", "dofs", "mnzs", "t_asm_s", "t_sol_s",
)

FAMILIES = ("trapz", "uniform", "tri", "delaunay", "graded-tri", "graded-quad")
GRADED = ("graded-tri", "graded-quad")
CASES = {"smooth": ManufacturedCase, "polynomial": PolynomialCase}
DEFAULT_SIZES = (2, 4, 8, 16, 32, 64, 128)


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a run or study.

    Dotted names are the keys of the structured config file, e.g.
    ``smoother.iters`` is ``smoother: {iters: 2}`` in YAML.
    """

    scheme: str = "hho-dp"
    strategy: str | None = None
    k: int = 3
    levels: tuple[int, ...] | None = None
    smoother_iters: int = 2
    coarse_kind: str = "lu"
    coarse_rtol: float = 1e-3
    outer_rtol: float = 1e-13
    outer_maxit: int = 1000
    seed: int = 0
    family: str = "trapz"
    sizes: tuple[int, ...] = DEFAULT_SIZES
    case: str = "smooth"
    eta: float | None = None
    timings: bool = True

    def __post_init__(self):
        scheme, strategy = normalize(self.scheme, self.strategy)
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "strategy", strategy)
        if self.k < 0 or (scheme == "dg" and self.k < 1):
            raise ConfigError(f"degree k={self.k} is not valid for {scheme}")
        if self.levels is not None:
            levels = tuple(int(v) for v in self.levels)
            if levels[0] != self.k:
                raise ConfigError(f"levels must start at k={self.k}, got {levels}")
            object.__setattr__(self, "levels", levels)
        if self.coarse_kind not in COARSE_KINDS:
            raise ConfigError(f"coarse.kind must be one of {', '.join(COARSE_KINDS)}")
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {', '.join(FAMILIES)}")
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {', '.join(CASES)}")
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if not self.sizes or min(self.sizes) < 1:
            raise ConfigError("sizes must be positive integers")

    def level_config(self) -> LevelConfig:
        base = LevelConfig.default_for(self.k) if self.levels is None else LevelConfig(degrees=self.levels)
        return replace(
            base,
            smoother_iters=self.smoother_iters,
            coarse=self.coarse_kind,
            coarse_rtol=self.coarse_rtol,
        )


_KEY_MAP = {
    "scheme": "scheme",
    "strategy": "strategy",
    "k": "k",
    "levels": "levels",
    "smoother.iters": "smoother_iters",
    "coarse.kind": "coarse_kind",
    "coarse.rtol": "coarse_rtol",
    "outer.rtol": "outer_rtol",
    "outer.maxit": "outer_maxit",
    "seed": "seed",
    "family": "family",
    "sizes": "sizes",
    "case": "case",
    "eta": "eta",
    "timings": "timings",
}
CONFIG_KEYS = tuple(_KEY_MAP)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        else:
            out[name] = val
    return out


def parse_int_list(value) -> tuple[int, ...]:
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        try:
            return tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"expected a comma-separated integer list, got {value!r}") from exc
    if isinstance(value, int):
        return (value,)
    return tuple(int(v) for v in value)


def config_from_mapping(mapping: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a config from nested or dotted keys; unknown keys raise :class:`ConfigError`."""
    flat = _flatten(mapping or {})
    unknown = sorted(set(flat) - set(_KEY_MAP))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}; valid keys: {', '.join(CONFIG_KEYS)}")
    values = {}
    for key, val in flat.items():
        name = _KEY_MAP[key]
        if val is not None and name in ("levels", "sizes"):
            val = parse_int_list(val)
        values[name] = val
    base = RunConfig() if base is None else base
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> dict:
    import yaml

    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("the config file must hold a mapping")
    return data


# ----------------------------------------------------------------------
# meshes


def make_mesh(family: str, n: int, seed: int = 0) -> Mesh:
    """Mesh ``n`` of ``family`` with Dirichlet faces and a Neumann right side."""
    if family == "trapz":
        m = gen_quad_family(n, kind="trapezoidal")
    elif family == "uniform":
        m = gen_quad_family(n, kind="uniform")
    elif family == "tri":
        m = gen_tri_family(n, "split-quad")
    elif family == "delaunay":
        m = gen_tri_family(n, "delaunay-like", seed=seed)
    elif family == "graded-tri":
        m = apply_grading(n, "tri", seed=seed)
    elif family == "graded-quad":
        m = apply_grading(n, "quad", seed=seed)
    else:
        raise ConfigError(f"unknown mesh family {family!r}; expected one of {', '.join(FAMILIES)}")
    return classify_boundary(m)


def mesh_from_spec(spec: str, seed: int = 0) -> Mesh:
    """``family:n`` (e.g. ``trapz:16``) or ``file:path`` for a mesh file."""
    family, sep, arg = spec.partition(":")
    if not sep:
        raise ConfigError(f"mesh spec {spec!r} must look like family:n or file:path")
    if family == "file":
        mesh = read_mesh(arg)
        # files without explicit Neumann faces get the default right side
        return mesh if mesh.count_tag(NEUMANN) else classify_boundary(mesh)
    try:
        n = int(arg)
    except ValueError as exc:
        raise ConfigError(f"mesh size in {spec!r} is not an integer") from exc
    return make_mesh(family, n, seed)


def mesh_size(mesh: Mesh, family: str) -> float:
    """Mesh size for rates: max h_T, or card(T_h)^(-1/2) on graded families."""
    if family in GRADED:
        return mesh.n_elements ** -0.5
    return float(np.max(mesh.h_T))


# ----------------------------------------------------------------------
# runs and studies


@dataclass
class StudyRow:
    cells: int
    h: float
    e_u: float = math.nan
    e_Gu: float = math.nan
    e_p: float = math.nan
    e_Du: float = math.nan
    rate_u: float = math.nan
    rate_Gu: float = math.nan
    rate_p: float = math.nan
    its: int = 0
    its_coarse: float = 0.0
    dofs: int = 0
    mnzs: int = 0
    t_asm_s: float = math.nan
    t_sol_s: float = math.nan
    converged: bool = False
    error: str = ""


@dataclass
class StudyReport:
    config: RunConfig
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        return format_csv(self.rows, self.config.timings)

    def to_markdown(self) -> str:
        return format_markdown(self.rows, self.config.timings)


def run_case(mesh: Mesh, config: RunConfig, h: float | None = None) -> StudyRow:
    """Assemble, solve and measure one mesh; failures are recorded in the row."""
    row = StudyRow(cells=mesh.n_elements, h=float(np.max(mesh.h_T)) if h is None else h)
    case = CASES[config.case]()
    try:
        system = assemble_system(mesh, config.scheme, config.strategy, config.k, data=case, eta=config.eta)
    except (ValueError, np.linalg.LinAlgError) as exc:
        row.error = f"assembly failed: {exc}"
        return row
    row.dofs, row.mnzs, row.t_asm_s = system.n, system.nnz, system.t_assembly
    t0 = time.perf_counter()
    try:
        x, report = solve(system, config.level_config(), rtol=config.outer_rtol, max_it=config.outer_maxit)
    except (SolverError, ValueError) as exc:
        row.error = f"solve failed: {exc}"
        row.t_sol_s = time.perf_counter() - t0
        return row
    row.t_sol_s = time.perf_counter() - t0
    row.its, row.its_coarse, row.converged = report.iterations, report.coarse_per_outer, report.converged
    if not report.converged:
        row.error = f"not converged in {report.iterations} iterations (residual {report.residual:.2e})"
    errs = error_norms(system, x, case)
    row.e_u, row.e_Gu, row.e_p, row.e_Du = errs["e_u"], errs["e_Gu"], errs["e_p"], errs["e_Du"]
    return row


def observed_rate(e_c: float, e_f: float, h_c: float, h_f: float, scale: float = 1.0) -> float:
    """log(e_c / e_f) / log(h_c / h_f), or NaN when an error is at round-off level."""
    floor = 1e2 * np.finfo(float).eps * scale
    if not (e_c > floor and e_f > floor) or h_c == h_f:
        return math.nan
    return math.log(e_c / e_f) / math.log(h_c / h_f)


def fill_rates(rows: list[StudyRow], scales: dict | None = None) -> None:
    scales = scales or {}
    for prev, row in zip(rows, rows[1:]):
        for key in ("u", "Gu", "p"):
            e = f"e_{key}"
            rate = observed_rate(getattr(prev, e), getattr(row, e), prev.h, row.h, scales.get(e, 1.0))
            setattr(row, f"rate_{key}", rate)


def _exact_scales(case) -> dict:
    """L2 norms of the exact fields on (-1, 1)^2, for the round-off floor."""
    g = np.polynomial.legendre.leggauss(12)
    X, Y = np.meshgrid(g[0], g[0])
    W = np.outer(g[1], g[1]).ravel()
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    u, G, p = case.exact_fields(pts)
    return {
        "e_u": math.sqrt(W @ (u**2).sum(1)),
        "e_Gu": math.sqrt(W @ (G**2).sum((1, 2))),
        "e_p": math.sqrt(W @ p**2),
    }


def convergence_study(config: RunConfig, progress=None) -> StudyReport:
    """Run ``config.sizes`` of ``config.family`` and compute the rates."""
    report = StudyReport(config)
    for n in config.sizes:
        mesh = make_mesh(config.family, n, config.seed)
        row = run_case(mesh, config, mesh_size(mesh, config.family))
        report.rows.append(row)
        if progress is not None:
            progress(row)
    fill_rates(report.rows, _exact_scales(CASES[config.case]()))
    return report


# ----------------------------------------------------------------------
# formatting


def _fmt(name: str, value, timings: bool) -> str:
    if name in ("t_asm_s", "t_sol_s"):
        return f"{value:.3f}" if timings and not math.isnan(value) else "-"
    if name in ("cells", "its", "dofs", "mnzs"):
        return str(int(value))
    if name == "its_coarse":
        return f"{value:.1f}"
    if isinstance(value, float) and math.isnan(value):
        return "-"
    if name.startswith("rate_"):
        return f"{value:.2f}"
    return f"{value:.3e}"


def format_csv(rows: list[StudyRow], timings: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(c, getattr(row, c), timings) for c in CSV_COLUMNS])
    return buf.getvalue()


def markdown_table(header, body) -> str:
    """Aligned Markdown table; numeric-looking columns are right aligned."""
    cols = list(zip(header, *body)) if body else [(h,) for h in header]
    widths = [max(len(str(c)) for c in col) for col in cols]
    lines = ["| " + " | ".join(str(h).rjust(w) for h, w in zip(header, widths)) + " |"]
    lines.append("|" + "|".join("-" * (w + 1) + ":" for w in widths) + "|")
    for r in body:
        lines.append("| " + " | ".join(str(v).rjust(w) for v, w in zip(r, widths)) + " |")
    return "\n".join(lines) + "\n"


def format_markdown(rows: list[StudyRow], timings: bool = True) -> str:
    body = []
    notes = []
    for i, row in enumerate(rows):
        cells = [_fmt(c, getattr(row, c), timings) for c in CSV_COLUMNS]
        if row.error:
            cells[CSV_COLUMNS.index("its")] += "*"
            notes.append(f"* row {i + 1} ({row.cells} cells): {row.error}")
        body.append(cells)
    out = markdown_table(CSV_COLUMNS, body)
    if notes:
        out += "\n" + "\n".join(notes) + "\n"
    return out


def count_table(counts: list[dict]) -> str:
    keys = ("scheme", "strategy", "k", "cells", "faces", "dofs", "mnzs", "formula_dofs", "formula_mnzs",
            "face_element_ratio", "dof_threshold", "mnz_ratio", "mnz_threshold")
    body = []
    for c in counts:
        body.append([f"{c[k]:.3f}" if isinstance(c[k], float) else str(c[k]) for k in keys])
    return markdown_table(keys, body)


def row_dict(row: StudyRow) -> dict:
    return asdict(row)


__all__ = [
    "CSV_COLUMNS", "CONFIG_KEYS", "FAMILIES", "ConfigError", "RunConfig", "StudyRow", "StudyReport",
    "config_from_mapping", "load_config", "make_mesh", "mesh_from_spec", "mesh_size", "run_case",
    "observed_rate", "fill_rates", "convergence_study", "format_csv", "format_markdown", "count_table",
    "markdown_table", "parse_int_list", "row_dict",
]
