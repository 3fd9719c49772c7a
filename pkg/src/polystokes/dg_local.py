"""Element and face kernels of the BR2 discontinuous Galerkin Stokes scheme.

Unknowns of one element are ordered ``[u_x | u_y | p]``, each block holding
the coefficients of P^k(T) in the orthonormal element basis.  Jumps follow
the orientation of the face: on an interior face with left element T and
right element T', ``[v] = v_T - v_T'`` and ``n = n_F`` points from T into
T'.  On a Dirichlet face the jump is ``2 (v_T - g_D)``.

The assembled system is the symmetric saddle-point matrix
``[[A, B^T], [B, -C]]`` where

* ``A`` is the symmetric BR2 form (volume gradient, consistency and
  symmetry terms, lifted-jump penalty with weight ``eta_F``),
* ``b(v, q) = -int q div v + sum_{F^i} int {q} [v].n + sum_{F^D} int q v.n``,
* ``C`` is the pressure-jump stabilisation ``sum_{F^i} h_F int [p][q]``.

The velocity lifting of a scalar trace ``phi`` on ``F`` into P^k(T)^2 is
``L(phi)_m = 1/2 int_F phi n_m psi_j``; with the orthonormal basis no mass
matrix has to be inverted.
"""

from __future__ import annotations

import warnings

import numpy as np

from .local_data import ElementTables, FaceTables
from .mesh import DIRICHLET, INTERIOR, NEUMANN, Mesh
from .poly_basis import dim_p2

DIM = 2


class DgError(ValueError):
    pass


def check_degree(k: int) -> None:
    if k < 1:
        raise DgError("the DG scheme requires k >= 1")


def default_eta(mesh: Mesh) -> np.ndarray:
    """Per-face BR2 penalty: max(card F_T, card F_T') + 1, and card F_T + 1 on the boundary."""
    nfaces = np.array([len(e) for e in mesh.elements])
    fe = mesh.face_elements
    left = nfaces[fe[:, 0]]
    right = np.where(fe[:, 1] >= 0, nfaces[np.maximum(fe[:, 1], 0)], 0)
    return np.maximum(left, right).astype(float) + 1.0


def check_eta(mesh: Mesh, eta: np.ndarray) -> None:
    bound = default_eta(mesh) - 1.0
    if (eta <= bound).any():
        warnings.warn("BR2 penalty below max(card F_T); coercivity is not guaranteed", stacklevel=2)


def lifting(et: ElementTables, j: int, trace: np.ndarray, k: int) -> np.ndarray:
    """Lifting of a vector trace on face ``j`` into P^k(T)^{2x2}.

    ``trace`` holds the trace values at the face quadrature points, shape
    (n_points, 2).  Returns coefficients ``L[:, a, b]`` of the tensor entry
    (a, b), defined by int_T L : tau = 1/2 int_F (n (x) phi) : tau.
    """
    ft = et.faces[j]
    P = dim_p2(k)
    psi_w = ft.phi[:, :P].T * ft.w
    n = ft.normal
    return 0.5 * np.einsum("jq,a,qb->jab", psi_w, n, trace)


def element_gradient(et: ElementTables, u: np.ndarray, k: int) -> np.ndarray:
    """Coefficients of grad u_T in P^k(T)^{2x2}, entry (a, b) = d_a u_b."""
    P = dim_p2(k)
    uu = u.reshape(DIM, P)
    g = np.einsum("qja,bj->qab", et.grad[:, :P, :], uu)
    return np.einsum("qj,q,qab->jab", et.phi[:, :P], et.w, g)


def discrete_gradient(
    et: ElementTables,
    k: int,
    u_T: np.ndarray,
    neighbours: dict,
    g_dirichlet=None,
) -> np.ndarray:
    """G_T(v) = grad v_T - sum_{F in F^i, F^D} L_FT([v]_TF).

    ``u_T`` holds the two velocity blocks of T.  ``neighbours`` maps a local
    face index to the values of the neighbour's velocity at that face's
    quadrature points, shape (n_points, 2).  Dirichlet faces use
    ``g_dirichlet(points)``.
    """
    P = dim_p2(k)
    G = element_gradient(et, u_T, k)
    uu = u_T.reshape(DIM, P)
    for j, ft in enumerate(et.faces):
        own = ft.phi[:, :P] @ uu.T
        if ft.tag == INTERIOR:
            jump = own - neighbours[j]
        elif ft.tag == DIRICHLET:
            g = 0.0 if g_dirichlet is None else g_dirichlet(ft.quad.points)
            jump = 2.0 * (own - g)
        else:
            continue
        G = G - lifting(et, j, jump, k)
    return G


def _vel(c: int, P: int) -> slice:
    return slice(c * P, (c + 1) * P)


def volume_block(et: ElementTables, k: int) -> np.ndarray:
    """Element contribution: int grad u : grad v and -int p div v (both ways)."""
    P = dim_p2(k)
    G = et.grad[:, :P, :]
    K = np.zeros((3 * P, 3 * P))
    stiff = np.einsum("q,qia,qja->ij", et.w, G, G)
    pw = et.phi[:, :P].T * et.w
    pr = slice(2 * P, 3 * P)
    for c in range(DIM):
        K[_vel(c, P), _vel(c, P)] = stiff
        b = -pw @ G[:, :, c]
        K[pr, _vel(c, P)] = b
        K[_vel(c, P), pr] = b.T
    return K


def interior_face_block(left: FaceTables, right: FaceTables, k: int, eta: float, h: float) -> np.ndarray:
    """Face contribution coupling the two neighbours, over ``[left dofs | right dofs]``.

    ``left`` and ``right`` are the tables of the same face seen from the left
    and right elements; the normal of ``left`` orients the jump.
    """
    P = dim_p2(k)
    w = left.w
    n = left.normal
    psi_l, psi_r = left.phi[:, :P], right.phi[:, :P]
    J = np.hstack([psi_l, -psi_r])
    avg_dn = 0.5 * np.hstack([left.grad[:, :P, :] @ n, right.grad[:, :P, :] @ n])
    avg = 0.5 * np.hstack([psi_l, psi_r])
    cons = -(avg_dn.T * w) @ J
    visc = cons + cons.T
    Ml = (psi_l.T * w) @ J
    Mr = (psi_r.T * w) @ J
    visc += 0.25 * eta * (Ml.T @ Ml + Mr.T @ Mr)
    cpl = (avg.T * w) @ J
    stab = h * (J.T * w) @ J

    K = np.zeros((6 * P, 6 * P))
    ul = [np.arange(c * P, (c + 1) * P) for c in range(DIM)]
    ur = [3 * P + i for i in ul]
    pl = np.arange(2 * P, 3 * P)
    pp = np.concatenate([pl, 3 * P + pl])
    for c in range(DIM):
        uc = np.concatenate([ul[c], ur[c]])
        K[np.ix_(uc, uc)] += visc
        K[np.ix_(pp, uc)] += n[c] * cpl
        K[np.ix_(uc, pp)] += n[c] * cpl.T
    K[np.ix_(pp, pp)] -= stab
    return K


def boundary_face_block(ft: FaceTables, k: int, eta: float, data=None) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet or Neumann face contribution (matrix, right-hand side) of one element."""
    P = dim_p2(k)
    K = np.zeros((3 * P, 3 * P))
    rhs = np.zeros(3 * P)
    psi = ft.phi[:, :P]
    w = ft.w
    pr = slice(2 * P, 3 * P)
    if ft.tag == DIRICHLET:
        dn = ft.grad[:, :P, :] @ ft.normal
        cons = -(dn.T * w) @ psi
        M = (psi.T * w) @ psi
        visc = cons + cons.T + eta * M.T @ M
        cpl = M
        for c in range(DIM):
            K[_vel(c, P), _vel(c, P)] = visc
            K[pr, _vel(c, P)] = ft.normal[c] * cpl
            K[_vel(c, P), pr] = ft.normal[c] * cpl.T
        if data is not None:
            g = data.g_dirichlet(ft.quad.points)
            for c in range(DIM):
                gw = w * g[:, c]
                rhs[_vel(c, P)] = -dn.T @ gw + eta * M.T @ (psi.T @ gw)
            rhs[pr] = psi.T @ (w * (g @ ft.normal))
    elif ft.tag == NEUMANN and data is not None:
        g = data.g_neumann(ft.quad.points, ft.normal)
        for c in range(DIM):
            rhs[_vel(c, P)] = -psi.T @ (w * g[:, c])
    return K, rhs


def body_force(et: ElementTables, k: int, data) -> np.ndarray:
    P = dim_p2(k)
    rhs = np.zeros(3 * P)
    if data is None:
        return rhs
    f = data.f(et.quad.points)
    for c in range(DIM):
        rhs[_vel(c, P)] = et.phi[:, :P].T @ (et.w * f[:, c])
    return rhs


def assemble_dg_blocks(mesh: Mesh, t: int, tables, k: int, eta: np.ndarray, data=None):
    """Contributions owned by element ``t``.

    Yields ``(elements, matrix, rhs)`` with ``elements`` a tuple of one or
    two element indices; the matrix acts on their concatenated unknowns.
    Interior faces are owned by their left element so that each face is
    visited once.  ``tables(t)`` returns the :class:`ElementTables` of ``t``.
    """
    check_degree(k)
    et = tables(t)
    K = volume_block(et, k)
    rhs = body_force(et, k, data)
    for j, ft in enumerate(et.faces):
        f = ft.index
        if ft.tag == INTERIOR:
            if mesh.face_elements[f, 0] != t:
                continue
            other = int(mesh.face_elements[f, 1])
            on = tables(other)
            jr = int(np.flatnonzero(mesh.element_faces[other] == f)[0])
            yield (t, other), interior_face_block(ft, on.faces[jr], k, eta[f], ft.h), None
        else:
            Kb, rb = boundary_face_block(ft, k, eta[f], data)
            K += Kb
            rhs += rb
    yield (t,), K, rhs
