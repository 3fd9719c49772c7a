"""The smooth manufactured Stokes solution on (-1, 1)^2 and error norms.

    u_1 = -e^x (y cos y + sin y),   u_2 = e^x y sin y,   p = 2 e^x sin y.

The velocity is divergence free and -Lap u + grad p = 0, so the body force
vanishes.  Dirichlet data is the trace of ``u``; the Neumann traction is
``g_N = -n . grad u + p n`` (row ``i`` holding ``sum_a n_a d_a u_i``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretize import StokesSystem
from .hho_local import HhoLocalSpace
from .poly_basis import build_orthonormal_basis, dim_p2, polygon_rule


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form exact fields; callables take points of shape (n, 2)."""

    def velocity(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        ex, y = np.exp(x[:, 0]), x[:, 1]
        return np.stack([-ex * (y * np.cos(y) + np.sin(y)), ex * y * np.sin(y)], axis=1)

    def velocity_gradient(self, x: np.ndarray) -> np.ndarray:
        """Entry (a, b) is d_a u_b, shape (n, 2, 2)."""
        x = np.atleast_2d(x)
        ex, y = np.exp(x[:, 0]), x[:, 1]
        c, s = np.cos(y), np.sin(y)
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = -ex * (y * c + s)
        G[:, 1, 0] = -ex * (2 * c - y * s)
        G[:, 0, 1] = ex * y * s
        G[:, 1, 1] = ex * (s + y * c)
        return G

    def pressure(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return 2 * np.exp(x[:, 0]) * np.sin(x[:, 1])

    def exact_fields(self, x):
        return self.velocity(x), self.velocity_gradient(x), self.pressure(x)

    # load interface of the local kernels
    def f(self, x: np.ndarray) -> np.ndarray:
        return np.zeros((len(np.atleast_2d(x)), 2))

    def g_dirichlet(self, x: np.ndarray) -> np.ndarray:
        return self.velocity(x)

    def g_neumann(self, x: np.ndarray, n: np.ndarray) -> np.ndarray:
        G = self.velocity_gradient(x)
        return -np.einsum("a,qab->qb", n, G) + self.pressure(x)[:, None] * n


@dataclass(frozen=True)
class PolynomialCase:
    """Exact polynomial Stokes pair used for exactness checks.

    ``u = (y^2, x^2)`` and ``p = x + y`` give ``f = -Lap u + grad p = (-1, -1)``.
    """

    def velocity(self, x):
        x = np.atleast_2d(x)
        return np.stack([x[:, 1] ** 2, x[:, 0] ** 2], axis=1)

    def velocity_gradient(self, x):
        x = np.atleast_2d(x)
        G = np.zeros((len(x), 2, 2))
        G[:, 1, 0] = 2 * x[:, 1]
        G[:, 0, 1] = 2 * x[:, 0]
        return G

    def pressure(self, x):
        x = np.atleast_2d(x)
        return x[:, 0] + x[:, 1]

    def exact_fields(self, x):
        return self.velocity(x), self.velocity_gradient(x), self.pressure(x)

    def f(self, x):
        return np.full((len(np.atleast_2d(x)), 2), -1.0)

    def g_dirichlet(self, x):
        return self.velocity(x)

    def g_neumann(self, x, n):
        G = self.velocity_gradient(x)
        return -np.einsum("a,qab->qb", n, G) + self.pressure(x)[:, None] * n


def _element_fields(system: StokesSystem, t: int, xl: np.ndarray):
    """Coefficients of (velocity, its degree, gradient source, its degree, pressure, element velocity, its degree)."""
    k = system.k
    if system.scheme == "dg":
        P = dim_p2(k)
        u = xl[:2 * P].reshape(2, P)
        return u, k, u, k, xl[2 * P:3 * P], u, k
    nfaces = len(system.mesh.elements[t])
    if system.scheme == "hho-dp":
        sp = HhoLocalSpace(k, k, nfaces)
        p = xl[sp.n_velocity:sp.n_velocity + sp.n_pressure]
    else:
        sp = HhoLocalSpace(k, k + 1, nfaces)
        p = xl[sp.n_velocity + nfaces * sp.n_face:]
    ne = sp.n_elem
    uT = xl[:2 * ne].reshape(2, ne)
    R = system.reconstructions[t]
    rec = np.stack([R @ xl[sp.vector_index(c)] for c in range(2)])
    if system.scheme == "hho-dp":
        # the reconstruction is the velocity field of the equal-order scheme
        return rec, k + 1, rec, k + 1, p, uT, sp.k_elem
    return uT, sp.k_elem, rec, k + 1, p, uT, sp.k_elem


def error_norms(system: StokesSystem, x: np.ndarray, case, quad_degree: int | None = None) -> dict:
    """L2 errors of velocity, velocity gradient, pressure and the element divergence.

    For ``hho-dp`` the velocity is the reconstruction ``P^{k+1} u``; for
    ``hho-hp`` and ``dg`` it is the element velocity.  The gradient error
    uses the reconstruction for both HHO schemes and the broken gradient for
    DG.  ``e_Du`` is the L2 norm of the divergence of the element velocity.
    """
    mesh = system.mesh
    qd = 2 * system.k + 8 if quad_degree is None else quad_degree
    locs = system.local_solutions(x)
    acc = np.zeros(4)
    for t, xl in enumerate(locs):
        poly = mesh.vertices[mesh.elements[t]]
        quad = polygon_rule(poly, qd, center=mesh.centroids[t])
        u, ku, g, kg, p, ue, ke = _element_fields(system, t, xl)
        kmax = max(ku, kg, ke, system.k)
        basis = build_orthonormal_basis(poly, kmax, quad)
        phi = basis.eval(quad.points)
        dphi = basis.grad(quad.points)
        w = quad.weights
        ex_u, ex_g, ex_p = case.exact_fields(quad.points)
        uh = phi[:, :u.shape[1]] @ u.T
        gh = np.einsum("qja,bj->qab", dphi[:, :g.shape[1], :], g)
        ph = phi[:, :len(p)] @ p
        divh = np.einsum("qja,aj->q", dphi[:, :ue.shape[1], :], ue)
        acc[0] += w @ ((uh - ex_u) ** 2).sum(1)
        acc[1] += w @ ((gh - ex_g) ** 2).sum((1, 2))
        acc[2] += w @ (ph - ex_p) ** 2
        acc[3] += w @ divh**2
    e = np.sqrt(acc)
    return {"e_u": e[0], "e_Gu": e[1], "e_p": e[2], "e_Du": e[3]}
