"""Sparse linear algebra: ILU(0), GMRES, flexible GMRES and a sparse direct LU.

Matrices are :class:`scipy.sparse.csr_matrix` objects with sorted indices;
scipy provides storage and matrix-vector products, the factorizations and
Krylov solvers are implemented here.

* :class:`Ilu0` is the incomplete LU factorization restricted to the
  pattern of ``A`` (no pivoting).
* :func:`gmres` is right-preconditioned GMRES without restarts, with
  classical Gram-Schmidt applied twice and Givens rotations.
* :func:`fgmres` is the flexible variant; it stores the preconditioned
  directions and checks convergence on the true residual.
* :class:`SparseLU` is a left-looking LU with threshold partial pivoting
  that prefers the diagonal (the Gilbert-Peierls algorithm), applied after
  a symmetric fill-reducing ordering.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .assembly import DofLayout, formula_counts, structural_nnz
from .mesh import Mesh


class SolverError(RuntimeError):
    pass


class ZeroPivotError(SolverError):
    pass


class SingularMatrixError(SolverError):
    pass


# ----------------------------------------------------------------------
# CSR helpers


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_structurally_symmetric(A: sp.csr_matrix) -> bool:
    P = A.copy()
    P.data = np.ones_like(P.data)
    D = (P - P.T).tocsr()
    D.eliminate_zeros()
    return D.nnz == 0


@numba.njit(cache=True)
def _diag_pointers(indptr, indices):
    n = len(indptr) - 1
    d = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                d[i] = p
                break
    return d


# ----------------------------------------------------------------------
# ILU(0)


@numba.njit(cache=True)
def _ilu0_kernel(indptr, indices, vals, diag):
    n = len(indptr) - 1
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            pos[indices[p]] = p
        for p in range(indptr[i], diag[i]):
            k = indices[p]
            vals[p] /= vals[diag[k]]
            lik = vals[p]
            for q in range(diag[k] + 1, indptr[k + 1]):
                r = pos[indices[q]]
                if r >= 0:
                    vals[r] -= lik * vals[q]
        for p in range(indptr[i], indptr[i + 1]):
            pos[indices[p]] = -1
        piv = vals[diag[i]]
        if piv == 0.0 or not np.isfinite(piv):
            return i
    return -1


@numba.njit(cache=True)
def _lu_solve_csr(indptr, indices, vals, diag, b):
    n = len(indptr) - 1
    x = b.copy()
    for i in range(n):
        s = x[i]
        for p in range(indptr[i], diag[i]):
            s -= vals[p] * x[indices[p]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for p in range(diag[i] + 1, indptr[i + 1]):
            s -= vals[p] * x[indices[p]]
        x[i] = s / vals[diag[i]]
    return x


class Ilu0:
    """ILU(0) of a CSR matrix; ``L`` (unit lower) and ``U`` share ``A``'s pattern."""

    def __init__(self, A):
        A = as_csr(A)
        self.n = A.shape[0]
        self.indptr = A.indptr.astype(np.int64)
        self.indices = A.indices.astype(np.int64)
        self.diag = _diag_pointers(self.indptr, self.indices)
        missing = np.flatnonzero(self.diag < 0)
        if len(missing):
            raise ZeroPivotError(
                f"ILU(0): row {missing[0]} has no stored diagonal; reorder or store the diagonal explicitly"
            )
        self.vals = A.data.astype(float).copy()
        bad = _ilu0_kernel(self.indptr, self.indices, self.vals, self.diag)
        if bad >= 0:
            raise ZeroPivotError(f"ILU(0): zero pivot in row {bad}; try a different ordering")

    def solve(self, b: np.ndarray) -> np.ndarray:
        return _lu_solve_csr(self.indptr, self.indices, self.vals, self.diag, np.asarray(b, float))

    __call__ = solve

    def factors(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Explicit (L, U) for inspection."""
        A = sp.csr_matrix((self.vals, self.indices, self.indptr), shape=(self.n, self.n))
        L = sp.tril(A, -1).tocsr() + sp.identity(self.n, format="csr")
        U = sp.triu(A).tocsr()
        return L, U


# ----------------------------------------------------------------------
# Krylov solvers


def _operator(A):
    if callable(A) and not sp.issparse(A) and not isinstance(A, np.ndarray):
        return A
    return lambda v: A @ v


def _identity(v):
    return v


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residuals: list
    converged: bool


def _givens(a: float, b: float) -> tuple[float, float]:
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def _cgs2(V: np.ndarray, j: int, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Vj = V[: j + 1]
    h = Vj @ w
    w = w - h @ Vj
    h2 = Vj @ w
    w = w - h2 @ Vj
    return w, h + h2


def _grow_rows(X: np.ndarray, rows: int) -> np.ndarray:
    Y = np.zeros((rows, X.shape[1]))
    Y[: len(X)] = X
    return Y


def _arnoldi_solve(A, M, b, x0, max_it, rtol, flexible, norm_ref):
    """Shared GMRES/FGMRES cycle; returns (x, its, residual estimates, converged)."""
    op = _operator(A)
    prec = _identity if M is None else M
    n = len(b)
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    r = b - op(x) if x0 is not None else b.copy()
    beta = float(np.linalg.norm(r))
    res = [beta]
    if norm_ref == 0.0:
        return x, 0, res, True
    if beta <= rtol * norm_ref:
        return x, 0, res, True
    m = max_it
    # Krylov bases grow on demand so a large iteration budget costs nothing up front
    cap = min(m, 32)
    V = np.zeros((cap + 1, n))
    Z = np.zeros((cap, n)) if flexible else None
    H = np.zeros((m + 1, m))
    cs, sn = np.zeros(m), np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r / beta
    its = 0
    converged = False
    for j in range(m):
        if j + 1 > cap:
            cap = min(m, 2 * cap)
            V = _grow_rows(V, cap + 1)
            if flexible:
                Z = _grow_rows(Z, cap)
        z = prec(V[j])
        if flexible:
            Z[j] = z
        w = op(z)
        w, h = _cgs2(V, j, w)
        hn = float(np.linalg.norm(w))
        H[: j + 1, j] = h
        H[j + 1, j] = hn
        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        its = j + 1
        res.append(abs(g[j + 1]))
        if abs(g[j + 1]) <= rtol * norm_ref:
            converged = True
            break
        if hn <= 1e-300 * max(beta, 1.0):
            converged = True  # happy breakdown: the Krylov space is invariant
            break
        V[j + 1] = w / hn
    y = np.linalg.solve(np.triu(H[:its, :its]), g[:its]) if its else np.zeros(0)
    if flexible:
        x = x + y @ Z[:its]
    else:
        x = x + prec(y @ V[:its])
    return x, its, res, converged


def gmres(A, b, M=None, x0=None, max_it: int = 100, rtol: float = 1e-10) -> GmresResult:
    """Right-preconditioned GMRES without restarts.

    Stops when the residual estimate drops below ``rtol * ||b||`` or after
    ``max_it`` iterations (``rtol = 0`` gives a fixed number of iterations).
    With right preconditioning the estimate is the true residual of the
    iterate up to rounding.
    """
    b = np.asarray(b, float)
    nb = float(np.linalg.norm(b))
    x, its, res, conv = _arnoldi_solve(A, M, b, x0, max_it, rtol, False, nb)
    return GmresResult(x, its, res, conv)


@dataclass
class SolverReport:
    iterations: int = 0
    coarse_iterations: int = 0
    residual: float = np.nan
    converged: bool = False
    t_assembly: float = 0.0
    t_solve: float = 0.0
    history: list = field(default_factory=list)

    @property
    def coarse_per_outer(self) -> float:
        return self.coarse_iterations / self.iterations if self.iterations else 0.0


def fgmres(A, b, M=None, x0=None, max_it: int = 1000, rtol: float = 1e-13, cycle: int | None = None) -> tuple[np.ndarray, SolverReport]:
    """Flexible GMRES; ``M`` may change from one application to the next.

    Convergence is declared on the true relative residual ``||b - A x|| /
    ||b||``.  When the Arnoldi estimate reaches the tolerance but the true
    residual does not, the iteration continues from the current iterate.
    ``cycle`` bounds the Krylov dimension of one sweep (default: the whole
    iteration budget).
    """
    t0 = time.perf_counter()
    op = _operator(A)
    b = np.asarray(b, float)
    nb = float(np.linalg.norm(b))
    x = np.zeros_like(b) if x0 is None else np.array(x0, float)
    report = SolverReport()
    if nb == 0.0:
        report.converged, report.residual = True, 0.0
        report.t_solve = time.perf_counter() - t0
        return np.zeros_like(b), report
    total = 0
    true = float(np.linalg.norm(b - op(x))) / nb
    report.history.append(true)
    while total < max_it and true > rtol:
        budget = max_it - total if cycle is None else min(cycle, max_it - total)
        x, its, res, _ = _arnoldi_solve(A, M, b, x, budget, rtol, True, nb)
        total += its
        report.history.extend(r / nb for r in res[1:])
        new = float(np.linalg.norm(b - op(x))) / nb
        if its == 0 or (new >= true and its < budget):
            true = new
            break
        true = new
    report.iterations = total
    report.residual = true
    report.converged = bool(true <= rtol)
    report.t_solve = time.perf_counter() - t0
    return x, report


# ----------------------------------------------------------------------
# orderings


def _pattern(A) -> sp.csr_matrix:
    A = as_csr(A)
    P = (abs(A) + abs(A).T).tocsr()
    P.data[:] = 1.0
    P.sort_indices()
    return P


def rcm_ordering(A) -> np.ndarray:
    """Reverse Cuthill-McKee ordering of the symmetrized pattern."""
    return np.asarray(reverse_cuthill_mckee(_pattern(A), symmetric_mode=True), dtype=np.int64)


@numba.njit(cache=True)
def _bfs(indptr, indices, part, pid, start, level, queue):
    """BFS restricted to nodes with part == pid; returns visited count."""
    level[start] = 0
    queue[0] = start
    head, tail = 0, 1
    while head < tail:
        v = queue[head]
        head += 1
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if part[u] == pid and level[u] < 0:
                level[u] = level[v] + 1
                queue[tail] = u
                tail += 1
    return tail


def nested_dissection(A, leaf: int = 64, balance: float = 0.3) -> np.ndarray:
    """Nested-dissection ordering from BFS level-set separators.

    Each subgraph is split at the BFS level (from a pseudo-peripheral node)
    that balances the two sides; separators are numbered after both halves.
    """
    P = _pattern(A)
    n = P.shape[0]
    indptr, indices = P.indptr.astype(np.int64), P.indices.astype(np.int64)
    part = np.zeros(n, dtype=np.int64)
    level = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    next_pid = 1
    # stack of (node array, output slot end); separators fill from the back
    stack = [(np.arange(n), n)]
    while stack:
        nodes, end = stack.pop()
        if len(nodes) <= leaf:
            order[end - len(nodes):end] = nodes
            continue
        pid = next_pid
        next_pid += 1
        part[nodes] = pid
        # connected components first
        level[nodes] = -1
        cnt = _bfs(indptr, indices, part, pid, nodes[0], level, queue)
        if cnt < len(nodes):
            comp = queue[:cnt].copy()
            rest = nodes[level[nodes] < 0]
            level[nodes] = -1
            stack.append((comp, end))
            stack.append((rest, end - cnt))
            continue
        # pseudo-peripheral start: repeat BFS from the farthest node
        start = nodes[0]
        ecc = -1
        for _ in range(4):
            level[nodes] = -1
            cnt = _bfs(indptr, indices, part, pid, start, level, queue)
            far = queue[cnt - 1]
            if level[far] <= ecc:
                break
            ecc = level[far]
            start = far
        level[nodes] = -1
        _bfs(indptr, indices, part, pid, start, level, queue)
        lv = level[nodes]
        counts = np.bincount(lv)
        if len(counts) < 3:
            order[end - len(nodes):end] = nodes
            continue
        # smallest level among those leaving a reasonably balanced split
        cum = np.cumsum(counts)
        below, above = cum - counts, len(nodes) - cum
        ok = (below >= balance * len(nodes)) & (above >= balance * len(nodes))
        ok[0] = ok[-1] = False
        if ok.any():
            cand = np.flatnonzero(ok)
            mid = int(cand[np.argmin(counts[cand])])
        else:
            mid = int(np.searchsorted(cum, len(nodes) / 2))
            mid = min(max(mid, 1), len(counts) - 2)
        sep = nodes[lv == mid]
        lo = nodes[lv < mid]
        hi = nodes[lv > mid]
        order[end - len(sep):end] = sep
        e2 = end - len(sep)
        stack.append((lo, e2))
        stack.append((hi, e2 - len(lo)))
        level[nodes] = -1
    return order


ORDERINGS = ("natural", "rcm", "nd")


def ordering(A, kind: str) -> np.ndarray:
    if kind == "natural":
        return np.arange(A.shape[0], dtype=np.int64)
    if kind == "rcm":
        return rcm_ordering(A)
    if kind == "nd":
        return nested_dissection(A)
    raise ValueError(f"unknown ordering {kind!r}; expected one of {', '.join(ORDERINGS)}")


# ----------------------------------------------------------------------
# sparse LU (left-looking, threshold partial pivoting)


@numba.njit(cache=True)
def _grow_i(a, need):
    if need <= len(a):
        return a
    b = np.empty(max(need, 2 * len(a)), dtype=a.dtype)
    b[: len(a)] = a
    return b


@numba.njit(cache=True)
def _grow_f(a, need):
    if need <= len(a):
        return a
    b = np.empty(max(need, 2 * len(a)), dtype=a.dtype)
    b[: len(a)] = a
    return b


@numba.njit(cache=True)
def _reach(Lp, Li, Ap, Ai, col, xi, pstack, mark, stamp, pinv, n):
    """Nonzero pattern of L \\ A[:, col] in topological order, in xi[top:n]."""
    top = n
    for p0 in range(Ap[col], Ap[col + 1]):
        j0 = Ai[p0]
        if mark[j0] == stamp:
            continue
        head = 0
        xi[0] = j0
        while head >= 0:
            j = xi[head]
            jn = pinv[j]
            if mark[j] != stamp:
                mark[j] = stamp
                pstack[head] = 0 if jn < 0 else Lp[jn] + 1
            done = True
            p2 = 0 if jn < 0 else Lp[jn + 1]
            for p in range(pstack[head], p2):
                i = Li[p]
                if mark[i] == stamp:
                    continue
                pstack[head] = p
                head += 1
                xi[head] = i
                done = False
                break
            if done:
                head -= 1
                top -= 1
                xi[top] = j
    return top


@numba.njit(cache=True)
def _lu_kernel(n, Ap, Ai, Ax, q, tol, lnz0, unz0):
    Lp = np.zeros(n + 1, dtype=np.int64)
    Up = np.zeros(n + 1, dtype=np.int64)
    Li = np.empty(lnz0, dtype=np.int64)
    Lx = np.empty(lnz0)
    Ui = np.empty(unz0, dtype=np.int64)
    Ux = np.empty(unz0)
    pinv = np.full(n, -1, dtype=np.int64)
    x = np.zeros(n)
    xi = np.empty(2 * n, dtype=np.int64)
    pstack = np.empty(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    lnz = 0
    unz = 0
    for k in range(n):
        Lp[k] = lnz
        Up[k] = unz
        Li = _grow_i(Li, lnz + n)
        Lx = _grow_f(Lx, lnz + n)
        Ui = _grow_i(Ui, unz + n)
        Ux = _grow_f(Ux, unz + n)
        col = q[k]
        top = _reach(Lp, Li, Ap, Ai, col, xi, pstack, mark, k, pinv, n)
        for p in range(top, n):
            x[xi[p]] = 0.0
        for p in range(Ap[col], Ap[col + 1]):
            x[Ai[p]] = Ax[p]
        for px in range(top, n):
            j = xi[px]
            J = pinv[j]
            if J < 0:
                continue
            xj = x[j]  # unit diagonal stored first in column J
            for p in range(Lp[J] + 1, Lp[J + 1]):
                x[Li[p]] -= Lx[p] * xj
        ipiv = -1
        a = -1.0
        for p in range(top, n):
            i = xi[p]
            if pinv[i] < 0:
                t = abs(x[i])
                if t > a:
                    a = t
                    ipiv = i
            else:
                Ui[unz] = pinv[i]
                Ux[unz] = x[i]
                unz += 1
        if ipiv == -1 or a <= 0.0:
            return k, Lp, Li, Lx, Up, Ui, Ux, pinv
        if pinv[col] < 0 and abs(x[col]) >= a * tol:
            ipiv = col
        pivot = x[ipiv]
        Ui[unz] = k
        Ux[unz] = pivot
        unz += 1
        pinv[ipiv] = k
        Li[lnz] = ipiv
        Lx[lnz] = 1.0
        lnz += 1
        for p in range(top, n):
            i = xi[p]
            if pinv[i] < 0:
                Li[lnz] = i
                Lx[lnz] = x[i] / pivot
                lnz += 1
            x[i] = 0.0
    Lp[n] = lnz
    Up[n] = unz
    for p in range(lnz):
        Li[p] = pinv[Li[p]]
    return -1, Lp, Li[:lnz], Lx[:lnz], Up, Ui[:unz], Ux[:unz], pinv


@numba.njit(cache=True)
def _lu_apply(n, Lp, Li, Lx, Up, Ui, Ux, pinv, q, b):
    x = np.empty(n)
    for i in range(n):
        x[pinv[i]] = b[i]
    for j in range(n):  # unit lower, diagonal first
        xj = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[Li[p]] -= Lx[p] * xj
    for j in range(n - 1, -1, -1):  # upper, diagonal last
        x[j] /= Ux[Up[j + 1] - 1]
        xj = x[j]
        for p in range(Up[j], Up[j + 1] - 1):
            x[Ui[p]] -= Ux[p] * xj
    out = np.empty(n)
    for k in range(n):
        out[q[k]] = x[k]
    return out


class SparseLU:
    """Sparse direct LU: ``P A Q = L U`` with a fill-reducing column order ``Q``.

    Rows are pivoted by threshold partial pivoting (``tol`` in (0, 1]);
    the diagonal entry is kept whenever it is within ``tol`` of the largest
    candidate, so symmetric orderings are mostly preserved.
    """

    def __init__(self, A, ordering_kind: str = "nd", tol: float = 0.01):
        A = as_csr(A)
        self.n = n = A.shape[0]
        self.ordering = ordering_kind
        self.q = ordering(A, ordering_kind)
        C = A.tocsc()
        C.sort_indices()
        nnz = max(C.nnz, 1)
        k, Lp, Li, Lx, Up, Ui, Ux, pinv = _lu_kernel(
            n, C.indptr.astype(np.int64), C.indices.astype(np.int64), C.data.astype(float),
            self.q, tol, 4 * nnz + n, 4 * nnz + n,
        )
        if k >= 0:
            raise SingularMatrixError(f"sparse LU: matrix is singular (no pivot in column step {k})")
        self._f = (Lp, Li, Lx, Up, Ui, Ux, pinv)

    @property
    def fill(self) -> int:
        """Stored entries of L and U."""
        Lp, _, _, Up, _, _, _ = self._f
        return int(Lp[-1] + Up[-1])

    def solve(self, b: np.ndarray) -> np.ndarray:
        Lp, Li, Lx, Up, Ui, Ux, pinv = self._f
        return _lu_apply(self.n, Lp, Li, Lx, Up, Ui, Ux, pinv, self.q, np.asarray(b, float))

    __call__ = solve


# ----------------------------------------------------------------------
# counting and export


def count_dofs_mnzs(mesh: Mesh, scheme: str, strategy: str | None, k: int, d: int = 2) -> dict:
    """Formula-based and actual matrix dimension and nonzero counts.

    ``dofs``/``mnzs`` are the counts of the assembled CSR matrix (obtained
    from the topology, without computing entries).  The ratios compare
    ``card F_h / card T_h`` with ``(k + d) / d`` (fewer face than element
    unknowns when below) and the stencil-weighted ratio with its square.
    """
    layout = DofLayout.for_mesh(mesh, scheme, strategy, k)
    f_dofs, f_mnz = formula_counts(mesh, scheme, strategy, k, d)
    nT, nF = mesh.n_elements, mesh.n_faces
    cTF = np.where(mesh.face_elements[:, 1] >= 0, 2.0, 1.0)
    stencil = float(np.mean((2 * cTF - 1) / (cTF + 1)))
    return {
        "scheme": layout.scheme,
        "strategy": layout.strategy,
        "k": k,
        "cells": nT,
        "faces": nF,
        "dofs": layout.n,
        "mnzs": structural_nnz(mesh, layout),
        "formula_dofs": f_dofs,
        "formula_mnzs": f_mnz,
        "face_element_ratio": nF / nT,
        "dof_threshold": (k + d) / d,
        "mnz_ratio": nF / nT * stencil,
        "mnz_threshold": ((k + d) / d) ** 2,
    }


def export_matrix_market(A, path) -> None:
    """Write ``A`` as a 1-based coordinate file with a MatrixMarket header."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), field="real", symmetry="general")
