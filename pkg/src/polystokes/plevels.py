"""p-multilevel V-cycle preconditioner for flexible GMRES.

Levels share the mesh and lower the polynomial degree: ``k_0 > k_1 > ... >
k_L``.  With hierarchical orthonormal bases, restriction keeps the leading
coefficients of every entity block (the L2 projection) and prolongation
pads them with zeros (its transpose).  Coarse operators are inherited from
the fine one as ``A_{l+1} = R A_l P``, which is a sub-block extraction; the
condensed fine matrix is used directly, so coarse levels are never
condensed again.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import DofLayout
from .sparse_la import Ilu0, SolverError, SolverReport, SparseLU, fgmres, gmres


class LevelError(ValueError):
    pass


COARSE_KINDS = ("lu", "gmres-ilu")


@dataclass(frozen=True)
class LevelConfig:
    """Degrees per level and solver settings.

    ``coarse="lu"`` solves the coarsest level with the sparse direct LU;
    ``"gmres-ilu"`` runs ILU(0)-preconditioned GMRES to ``coarse_rtol``.
    """

    degrees: tuple[int, ...] = (3, 2, 1)
    smoother_iters: int = 2
    coarse: str = "lu"
    coarse_rtol: float = 1e-3
    coarse_maxit: int = 1000
    ordering: str = "nd"

    def __post_init__(self):
        d = tuple(int(v) for v in self.degrees)
        object.__setattr__(self, "degrees", d)
        if not d:
            raise LevelError("at least one level is required")
        if any(a <= b for a, b in zip(d, d[1:])):
            raise LevelError("level degrees must be strictly decreasing")
        if d[-1] < 0:
            raise LevelError("degrees must be non-negative")
        if self.smoother_iters < 1:
            raise LevelError("the smoother needs at least one iteration")
        if self.coarse not in COARSE_KINDS:
            raise LevelError(f"unknown coarse solver {self.coarse!r}; expected one of {', '.join(COARSE_KINDS)}")

    @classmethod
    def default_for(cls, k: int, **kw) -> "LevelConfig":
        """3 -> 2 -> 1 style defaults: (k, k//2 or k-1, 1) with duplicates removed."""
        if k >= 6:
            degs = (k, k // 2, 1)
        elif k >= 3:
            degs = (k, k - 1, 1)
        elif k == 2:
            degs = (2, 1)
        else:
            degs = (k,)
        return cls(degrees=degs, **kw)


def restrict_vector(x: np.ndarray, layout: DofLayout, kc: int) -> np.ndarray:
    """Coefficients of the L2 projection onto degree ``kc`` (truncation)."""
    if len(x) != layout.n:
        raise LevelError("vector does not match the layout")
    return x[layout.keep(kc)]


def prolong_vector(y: np.ndarray, layout: DofLayout, kc: int) -> np.ndarray:
    """Injection of a degree-``kc`` vector into ``layout`` (zero padding)."""
    keep = layout.keep(kc)
    if len(y) != int(keep.sum()):
        raise LevelError("vector does not match the coarse layout")
    x = np.zeros(layout.n)
    x[keep] = y
    return x


def transfer_matrix(layout: DofLayout, kc: int) -> sp.csr_matrix:
    """Explicit prolongation matrix (fine x coarse)."""
    idx = np.flatnonzero(layout.keep(kc))
    return sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(layout.n, len(idx)))


def inherit_operator(A: sp.csr_matrix, layout: DofLayout, kc: int) -> sp.csr_matrix:
    """Galerkin coarse operator ``R A P`` by sub-block extraction."""
    keep = np.flatnonzero(layout.keep(kc))
    Ac = sp.csr_matrix(A)[keep][:, keep]
    Ac.sort_indices()
    return Ac


@dataclass(eq=False)
class Level:
    k: int
    layout: DofLayout
    A: sp.csr_matrix
    smoother: Ilu0 | None = None
    coarse: object = None


@dataclass(eq=False)
class LevelHierarchy:
    config: LevelConfig
    levels: list = field(default_factory=list)
    coarse_iterations: int = 0
    t_setup: float = 0.0

    @classmethod
    def build(cls, A: sp.csr_matrix, layout: DofLayout, config: LevelConfig) -> "LevelHierarchy":
        t0 = time.perf_counter()
        if config.degrees[0] != layout.k:
            raise LevelError(f"finest level degree {config.degrees[0]} differs from the system degree {layout.k}")
        if layout.scheme == "dg" and config.degrees[-1] < 1:
            raise LevelError("DG levels must keep k >= 1")
        h = cls(config)
        Al = sp.csr_matrix(A)
        lay = layout
        for i, k in enumerate(config.degrees):
            if i > 0:
                Al = inherit_operator(Al, lay, k)
                lay = lay.coarsen(k)
            h.levels.append(Level(k, lay, Al))
        for lv in h.levels[:-1]:
            lv.smoother = Ilu0(lv.A)
        last = h.levels[-1]
        try:
            if config.coarse == "lu":
                last.coarse = SparseLU(last.A, config.ordering)
            else:
                last.coarse = Ilu0(last.A)
        except SolverError as exc:
            raise SolverError(f"coarse level (k={last.k}): {exc}") from exc
        h.t_setup = time.perf_counter() - t0
        return h

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def _coarse_solve(self, d: np.ndarray) -> np.ndarray:
        last = self.levels[-1]
        if self.config.coarse == "lu":
            return last.coarse.solve(d)
        res = gmres(last.A, d, M=last.coarse, max_it=self.config.coarse_maxit, rtol=self.config.coarse_rtol)
        self.coarse_iterations += res.iterations
        return res.x

    def vcycle(self, d: np.ndarray, level: int = 0) -> np.ndarray:
        """One V-cycle applied to the defect ``d`` of ``level``; returns the correction."""
        if level == self.n_levels - 1:
            return self._coarse_solve(d)
        lv = self.levels[level]
        s = self.config.smoother_iters
        x = gmres(lv.A, d, M=lv.smoother, max_it=s, rtol=0.0).x
        kc = self.levels[level + 1].k
        r = d - lv.A @ x
        keep = lv.layout.keep(kc)
        x[keep] += self.vcycle(r[keep], level + 1)
        x += gmres(lv.A, d - lv.A @ x, M=lv.smoother, max_it=s, rtol=0.0).x
        return x

    __call__ = vcycle


def solve(system, config: LevelConfig | None = None, rtol: float = 1e-13, max_it: int = 1000) -> tuple[np.ndarray, SolverReport]:
    """FGMRES on the assembled system, preconditioned by one V-cycle per iteration."""
    config = LevelConfig.default_for(system.k) if config is None else config
    t0 = time.perf_counter()
    h = LevelHierarchy.build(system.A, system.layout, config)
    x, report = fgmres(system.A, system.b, M=h.vcycle, max_it=max_it, rtol=rtol)
    report.coarse_iterations = h.coarse_iterations
    report.t_assembly = system.t_assembly
    report.t_solve = time.perf_counter() - t0
    return x, report
