"""Quadrature rules and hierarchical L2-orthonormal modal bases.

Element bases are obtained by modified Gram-Schmidt on the scaled
monomials ((x - x_T) / h_T)^a ((y - y_T) / h_T)^b, ordered by total degree.
Face bases use the scaled arc-length coordinate (x - x_F) . t_F / h_F.
Because the orthogonalisation proceeds column by column, truncating a
degree-l basis to its first dim(P^l') functions yields the degree-l' basis
built on the same quadrature, bit for bit.  This is what makes the
p-multilevel transfer operators plain coefficient truncation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import roots_jacobi


class BasisError(ValueError):
    pass


def dim_p2(k: int) -> int:
    """dim P^k in two variables."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def dim_p1(k: int) -> int:
    """dim P^k in one variable."""
    return k + 1 if k >= 0 else 0


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


@functools.lru_cache(maxsize=None)
def _gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


@functools.lru_cache(maxsize=None)
def reference_triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) tensor rule on {s, t >= 0, s + t <= 1}."""
    n = degree // 2 + 1
    u, wu = _gauss_legendre_01(n)
    x, wv = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (x + 1)
    wv = 0.25 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([(U * (1 - V)).ravel(), V.ravel()], axis=1)
    wts = np.outer(wu, wv).ravel()
    return pts, wts


def segment_rule(a: np.ndarray, b: np.ndarray, degree: int) -> QuadratureRule:
    s, w = _gauss_legendre_01(degree // 2 + 1)
    a, b = np.asarray(a, float), np.asarray(b, float)
    length = float(np.linalg.norm(b - a))
    return QuadratureRule(a + s[:, None] * (b - a), w * length)


def triangle_rule(v0, v1, v2, degree: int) -> QuadratureRule:
    ref, w = reference_triangle_rule(degree)
    v0, v1, v2 = (np.asarray(v, float) for v in (v0, v1, v2))
    J = np.stack([v1 - v0, v2 - v0], axis=1)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return QuadratureRule(v0 + ref @ J.T, w * abs(det))


def polygon_rule(vertices: np.ndarray, degree: int, center: np.ndarray | None = None) -> QuadratureRule:
    """Centroid-fan rule; triangles are integrated directly."""
    p = np.asarray(vertices, float)
    if len(p) == 3:
        return triangle_rule(p[0], p[1], p[2], degree)
    c = _centroid(p) if center is None else center
    ref, w = reference_triangle_rule(degree)
    q = np.roll(p, -1, axis=0)
    e1, e2 = p - c, q - c
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if (det <= 0).any():
        raise BasisError("polygon is not star-shaped with respect to its centroid")
    pts = c + ref[None, :, 0:1] * e1[:, None, :] + ref[None, :, 1:2] * e2[:, None, :]
    wts = w[None, :] * det[:, None]
    return QuadratureRule(pts.reshape(-1, 2), wts.ravel())


def _centroid(p: np.ndarray) -> np.ndarray:
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return np.array([((x + xn) * cr).sum(), ((y + yn) * cr).sum()]) / (6 * a)


def make_quadrature(entity: np.ndarray, exact_degree: int) -> QuadratureRule:
    """Rule for a segment (2 vertices) or a polygon (>= 3 CCW vertices)."""
    if exact_degree < 0:
        raise BasisError("exact_degree must be non-negative")
    p = np.asarray(entity, float)
    if len(p) == 2:
        return segment_rule(p[0], p[1], exact_degree)
    return polygon_rule(p, exact_degree)


# --------------------------------------------------------------------------
# monomials

@functools.lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> tuple[np.ndarray, np.ndarray]:
    px, py = [], []
    for m in range(degree + 1):
        for j in range(m + 1):
            px.append(m - j)
            py.append(j)
    return np.array(px), np.array(py)


def _powers(x: np.ndarray, degree: int) -> np.ndarray:
    out = np.empty((degree + 1,) + x.shape)
    out[0] = 1.0
    for m in range(1, degree + 1):
        out[m] = out[m - 1] * x
    return out


@numba.njit(cache=True)
def _mgs(V):
    """Two-pass modified Gram-Schmidt; returns (C, ok) with V @ C orthonormal."""
    nq, m = V.shape
    Q = V.copy()
    C = np.eye(m)
    for j in range(m):
        nrm0 = np.sqrt(np.sum(Q[:, j] ** 2))
        for _sweep in range(2):
            for i in range(j):
                r = 0.0
                for q in range(nq):
                    r += Q[q, i] * Q[q, j]
                for q in range(nq):
                    Q[q, j] -= r * Q[q, i]
                for q in range(i + 1):
                    C[q, j] -= r * C[q, i]
        nrm = np.sqrt(np.sum(Q[:, j] ** 2))
        if not nrm > 1e-11 * nrm0:
            return C, j
        for q in range(nq):
            Q[q, j] /= nrm
        for q in range(j + 1):
            C[q, j] /= nrm
    return C, -1


@dataclass(frozen=True, eq=False)
class LocalBasis:
    """Orthonormal basis of P^degree on an element (``tangent is None``) or a face."""

    center: np.ndarray
    scale: float
    degree: int
    coeffs: np.ndarray
    tangent: np.ndarray | None = None

    @property
    def is_face(self) -> bool:
        return self.tangent is not None

    @property
    def dim(self) -> int:
        return dim_p1(self.degree) if self.is_face else dim_p2(self.degree)

    def truncate(self, degree: int) -> "LocalBasis":
        if degree > self.degree:
            raise BasisError("cannot raise the degree of a basis by truncation")
        n = dim_p1(degree) if self.is_face else dim_p2(degree)
        return LocalBasis(self.center, self.scale, degree, self.coeffs[:n, :n], self.tangent)

    def monomials(self, points: np.ndarray) -> np.ndarray:
        d = (np.asarray(points, float) - self.center) / self.scale
        if self.is_face:
            return _powers(d @ self.tangent, self.degree).T
        px, py = monomial_exponents(self.degree)
        X, Y = _powers(d[:, 0], self.degree), _powers(d[:, 1], self.degree)
        return (X[px] * Y[py]).T

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values, shape (n_points, dim)."""
        return self.monomials(points) @ self.coeffs

    def grad(self, points: np.ndarray) -> np.ndarray:
        """Basis gradients, shape (n_points, dim, 2); elements only."""
        if self.is_face:
            raise BasisError("face bases have no 2D gradient")
        d = (np.asarray(points, float) - self.center) / self.scale
        px, py = monomial_exponents(self.degree)
        X, Y = _powers(d[:, 0], self.degree), _powers(d[:, 1], self.degree)
        gx = (px[:, None] * X[np.maximum(px - 1, 0)] * Y[py]).T / self.scale
        gy = (py[:, None] * X[px] * Y[np.maximum(py - 1, 0)]).T / self.scale
        return np.stack([gx @ self.coeffs, gy @ self.coeffs], axis=2)


def build_orthonormal_basis(
    entity: np.ndarray,
    degree: int,
    quad: QuadratureRule | None = None,
    name: str = "entity",
) -> LocalBasis:
    """Orthonormalise scaled monomials on a polygon or a segment.

    ``quad`` must integrate polynomials of degree ``2 * degree`` exactly; by
    default a rule of that exactness is built.  The scaling uses the area
    centroid and diameter of the entity.
    """
    p = np.asarray(entity, float)
    if degree < 0:
        raise BasisError("degree must be non-negative")
    if quad is None:
        quad = make_quadrature(p, 2 * degree)
    if len(p) == 2:
        t = p[1] - p[0]
        h = float(np.linalg.norm(t))
        if h == 0:
            raise BasisError(f"degenerate {name}: zero length")
        basis = LocalBasis(p.mean(axis=0), h, degree, np.eye(degree + 1), t / h)
    else:
        d = p[:, None, :] - p[None, :, :]
        h = float(np.sqrt((d**2).sum(-1).max()))
        basis = LocalBasis(_centroid(p), h, degree, np.eye(dim_p2(degree)))
    V = np.sqrt(quad.weights)[:, None] * basis.monomials(quad.points)
    C, fail = _mgs(V)
    if fail >= 0:
        raise BasisError(f"numerically singular Gram matrix on {name} (mode {fail})")
    return LocalBasis(basis.center, basis.scale, degree, C, basis.tangent)


def l2_project(f, basis: LocalBasis, quad: QuadratureRule) -> np.ndarray:
    """Coefficients c_i = int f phi_i; ``f`` maps points to values.

    Vector-valued ``f`` (values of shape (n_points, m)) yields an array of
    shape (dim, m), one column per component.
    """
    vals = np.asarray(f(quad.points), float)
    phi = basis.eval(quad.points)
    return phi.T @ (quad.weights.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals)


def mass_matrix(basis: LocalBasis, quad: QuadratureRule, other: LocalBasis | None = None) -> np.ndarray:
    """Matrix of int phi_i psi_j (the Gram matrix when ``other`` is None)."""
    a = basis.eval(quad.points)
    b = a if other is None else other.eval(quad.points)
    return a.T @ (quad.weights[:, None] * b)
