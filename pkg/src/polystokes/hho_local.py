"""Element-local HHO operators for the Stokes problem.

Scalar local unknowns are ordered ``[v_T | v_F1 | v_F2 | ...]`` with
``v_T`` in P^{k_elem}(T) and each ``v_F`` in P^k(F), all expressed in the
orthonormal bases of :mod:`polystokes.poly_basis`.  Vector unknowns put the
element block first, one component after the other, followed by the faces
in local order with the two components of each face contiguous::

    [u_T,x | u_T,y | u_F1,x u_F1,y | u_F2,x u_F2,y | ...]

Every operator of the viscous part acts component by component, so the
vector matrices are block diagonal across components.

Two schemes are provided.  ``dp`` is the equal-order scheme (k_elem = k)
with a discontinuous element pressure in P^k(T).  ``hp`` raises the element
velocity to k + 1 and adds a face pressure in P^k(F) per face; its element
velocity is pointwise divergence free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .local_data import ElementTables
from .mesh import DIRICHLET, NEUMANN
from .poly_basis import dim_p1, dim_p2

DIM = 2


class LocalOperatorError(ValueError):
    pass


def default_eta(k: int) -> float:
    """Default weak-Dirichlet penalty 3 (k + 1)^2."""
    return 3.0 * (k + 1) ** 2


@dataclass(frozen=True)
class HhoLocalSpace:
    k: int
    k_elem: int
    n_faces: int

    @property
    def n_elem(self) -> int:
        return dim_p2(self.k_elem)

    @property
    def n_face(self) -> int:
        return dim_p1(self.k)

    @property
    def n_rec(self) -> int:
        return dim_p2(self.k + 1)

    @property
    def n_pressure(self) -> int:
        return dim_p2(self.k)

    @property
    def n_scalar(self) -> int:
        return self.n_elem + self.n_faces * self.n_face

    @property
    def n_velocity(self) -> int:
        return DIM * self.n_scalar

    def face_slice(self, j: int) -> slice:
        s = self.n_elem + j * self.n_face
        return slice(s, s + self.n_face)

    def vector_index(self, comp: int) -> np.ndarray:
        """Positions of the scalar unknowns of component ``comp`` in the vector layout."""
        ne, nf = self.n_elem, self.n_face
        elem = comp * ne + np.arange(ne)
        faces = [
            DIM * ne + j * DIM * nf + comp * nf + np.arange(nf) for j in range(self.n_faces)
        ]
        return np.concatenate([elem] + faces)


def _space(et: ElementTables, k: int, k_elem: int) -> HhoLocalSpace:
    if k < 0:
        raise LocalOperatorError("k must be non-negative")
    if k_elem not in (k, k + 1):
        raise LocalOperatorError("k_elem must be k or k + 1")
    if et.basis.degree < k + 1:
        raise LocalOperatorError("element basis must reach degree k + 1")
    if any(ft.basis.degree < k for ft in et.faces):
        raise LocalOperatorError("face bases must reach degree k")
    return HhoLocalSpace(k, k_elem, et.n_faces)


def reconstruction_matrix(et: ElementTables, k: int, k_elem: int) -> np.ndarray:
    """Matrix of v -> p_T^{k+1} v in the degree-(k+1) basis, shape (n_rec, n_scalar).

    Solves the Neumann problem for the gradient together with the mean
    value condition int p = int v_T through a bordered (Lagrange) system.
    """
    sp = _space(et, k, k_elem)
    nr, ne, nf = sp.n_rec, sp.n_elem, sp.n_face
    G = et.grad[:, :nr, :]
    K = np.einsum("q,qid,qjd->ij", et.w, G, G)
    c = et.phi[:, :nr].T @ et.w
    rhs = np.zeros((nr + 1, sp.n_scalar))
    rhs[:nr, :ne] = K[:, :ne]
    for j, ft in enumerate(et.faces):
        gn_w = ft.grad_n[:, :nr].T * ft.w
        rhs[:nr, :ne] -= gn_w @ ft.phi[:, :ne]
        rhs[:nr, sp.face_slice(j)] = gn_w @ ft.chi[:, :nf]
    rhs[nr, :ne] = c[:ne]
    M = np.zeros((nr + 1, nr + 1))
    M[:nr, :nr] = K
    M[:nr, nr] = c
    M[nr, :nr] = c
    try:
        sol = sla.solve(M, rhs, assume_a="sym", check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise LocalOperatorError(f"singular reconstruction system on element {et.index}") from exc
    return sol[:nr]


def face_residual_values(et: ElementTables, j: int, k: int, k_elem: int, P: np.ndarray) -> np.ndarray:
    """Values of r_TF(v) at the quadrature points of face ``j``, per unknown.

    r_TF(v) = pi_F^k (v_F - p v) - pi_T^{k_elem}(v_T - p v)|_F, returned as a
    matrix of shape (n_points, n_scalar).
    """
    sp = HhoLocalSpace(k, k_elem, et.n_faces)
    ft = et.faces[j]
    nr, ne, nf = sp.n_rec, sp.n_elem, sp.n_face
    chi = ft.chi[:, :nf]
    proj = (chi.T * ft.w) @ ft.phi[:, :nr]
    term_face = -proj @ P
    term_face[:, sp.face_slice(j)] += np.eye(nf)
    term_elem = -P[:ne].copy()
    term_elem[:, :ne] += np.eye(ne)
    return chi @ term_face - ft.phi[:, :ne] @ term_elem


def face_residual(et: ElementTables, j: int, k: int, k_elem: int, v: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
    """Coefficients of r_TF(v) in the face basis of degree max(k, k_elem)."""
    if P is None:
        P = reconstruction_matrix(et, k, k_elem)
    ft = et.faces[j]
    m = dim_p1(max(k, k_elem))
    if ft.basis.degree < max(k, k_elem):
        raise LocalOperatorError("face basis degree too low for the residual codomain")
    vals = face_residual_values(et, j, k, k_elem, P) @ v
    return ft.chi[:, :m].T @ (ft.w * vals)


def viscous_scalar(et: ElementTables, k: int, k_elem: int, eta: float, P: np.ndarray | None = None) -> np.ndarray:
    """Scalar viscous matrix: consistency, stabilisation and weak Dirichlet terms."""
    if not eta > 0:
        raise LocalOperatorError("penalty eta must be positive")
    sp = _space(et, k, k_elem)
    if P is None:
        P = reconstruction_matrix(et, k, k_elem)
    nr, nf = sp.n_rec, sp.n_face
    G = et.grad[:, :nr, :]
    K = np.einsum("q,qid,qjd->ij", et.w, G, G)
    A = P.T @ K @ P
    for j, ft in enumerate(et.faces):
        R = face_residual_values(et, j, k, k_elem, P)
        A += (R.T * ft.w) @ R / ft.h
        if ft.tag == DIRICHLET:
            fs = sp.face_slice(j)
            N = (ft.chi[:, :nf].T * ft.w) @ (ft.grad_n[:, :nr] @ P)
            A[fs, :] -= N
            A[:, fs] -= N.T
            A[fs, fs] += (eta / ft.h) * np.eye(nf)
    return 0.5 * (A + A.T)


def vectorize(A_s: np.ndarray, sp: HhoLocalSpace) -> np.ndarray:
    A = np.zeros((sp.n_velocity, sp.n_velocity))
    for c in range(DIM):
        idx = sp.vector_index(c)
        A[np.ix_(idx, idx)] = A_s
    return A


def viscous_block(et: ElementTables, k: int, k_elem: int, eta: float, P: np.ndarray | None = None) -> np.ndarray:
    """The vector block A_T."""
    sp = _space(et, k, k_elem)
    return vectorize(viscous_scalar(et, k, k_elem, eta, P), sp)


def coupling_dp(et: ElementTables, k: int) -> np.ndarray:
    """B_T for the discontinuous-pressure scheme, rows = element pressure modes.

    b(v, q) = -int q div v_T - sum_F int q (v_F - v_T).n + sum_{F in D} int q v_F.n
    """
    sp = _space(et, k, k)
    ne, nf, npr = sp.n_elem, sp.n_face, sp.n_pressure
    B = np.zeros((npr, sp.n_velocity))
    qw = et.phi[:, :npr].T * et.w
    for c in range(DIM):
        B[:, c * ne:(c + 1) * ne] = -qw @ et.grad[:, :ne, c]
    for j, ft in enumerate(et.faces):
        qf = ft.phi[:, :npr].T * ft.w
        trace = qf @ ft.phi[:, :ne]
        face = qf @ ft.chi[:, :nf]
        base = DIM * ne + j * DIM * nf
        for c in range(DIM):
            nc = ft.normal[c]
            B[:, c * ne:(c + 1) * ne] += nc * trace
            if ft.tag != DIRICHLET:
                B[:, base + c * nf: base + (c + 1) * nf] -= nc * face
    return B


def coupling_hp(et: ElementTables, k: int) -> np.ndarray:
    """B_T for the hybrid-pressure scheme.

    Rows are the face pressures (face by face, P^k(F) each) followed by the
    element pressure P^k(T).  The bilinear form is

    b(v, (q_T, q_F)) = -int q_T div v_T + sum_F int q_F (v_T - v_F).n
                       + sum_{F in D} int q_F v_F.n
    """
    sp = _space(et, k, k + 1)
    ne, nf, npr = sp.n_elem, sp.n_face, sp.n_pressure
    nfp = et.n_faces * nf
    B = np.zeros((nfp + npr, sp.n_velocity))
    qw = et.phi[:, :npr].T * et.w
    for c in range(DIM):
        B[nfp:, c * ne:(c + 1) * ne] = -qw @ et.grad[:, :ne, c]
    for j, ft in enumerate(et.faces):
        rows = slice(j * nf, (j + 1) * nf)
        trace = (ft.chi[:, :nf].T * ft.w) @ ft.phi[:, :ne]
        base = DIM * ne + j * DIM * nf
        for c in range(DIM):
            nc = ft.normal[c]
            B[rows, c * ne:(c + 1) * ne] = nc * trace
            if ft.tag != DIRICHLET:
                B[rows, base + c * nf: base + (c + 1) * nf] = -nc * np.eye(nf)
    return B


def momentum_load(et: ElementTables, k: int, k_elem: int, eta: float, data, P: np.ndarray | None = None) -> np.ndarray:
    """Right-hand side of the momentum rows (body force, Neumann and Dirichlet data)."""
    sp = _space(et, k, k_elem)
    rhs = np.zeros(sp.n_velocity)
    if data is None:
        return rhs
    if P is None:
        P = reconstruction_matrix(et, k, k_elem)
    ne, nf, nr = sp.n_elem, sp.n_face, sp.n_rec
    scal = np.zeros((DIM, sp.n_scalar))
    f = data.f(et.quad.points)
    scal[:, :ne] += (et.phi[:, :ne].T @ (et.w[:, None] * f)).T
    for j, ft in enumerate(et.faces):
        fs = sp.face_slice(j)
        chi_w = ft.chi[:, :nf].T * ft.w
        if ft.tag == NEUMANN:
            # traction g_N = -n.grad(u) + p n enters with a minus sign
            g = data.g_neumann(ft.quad.points, ft.normal)
            scal[:, fs] -= (chi_w @ g).T
        elif ft.tag == DIRICHLET:
            g = data.g_dirichlet(ft.quad.points)
            gn = ft.grad_n[:, :nr] @ P
            scal -= (gn.T @ (ft.w[:, None] * g)).T
            scal[:, fs] += (eta / ft.h) * (chi_w @ g).T
    for c in range(DIM):
        rhs[sp.vector_index(c)] = scal[c]
    return rhs


def mass_load_dp(et: ElementTables, k: int, data) -> np.ndarray:
    """Right-hand side of the pressure rows: sum_{F in D} int (g_D . n) q."""
    npr = dim_p2(k)
    out = np.zeros(npr)
    if data is None:
        return out
    for ft in et.faces:
        if ft.tag == DIRICHLET:
            gn = data.g_dirichlet(ft.quad.points) @ ft.normal
            out += ft.phi[:, :npr].T @ (ft.w * gn)
    return out


def mass_load_hp(et: ElementTables, k: int, data) -> np.ndarray:
    nf, npr = dim_p1(k), dim_p2(k)
    out = np.zeros(et.n_faces * nf + npr)
    if data is None:
        return out
    for j, ft in enumerate(et.faces):
        if ft.tag == DIRICHLET:
            gn = data.g_dirichlet(ft.quad.points) @ ft.normal
            out[j * nf:(j + 1) * nf] = ft.chi[:, :nf].T @ (ft.w * gn)
    return out


@dataclass(frozen=True, eq=False)
class LocalStokesBlocks:
    """Dense local saddle-point system [[A, B^T], [B, 0]] of one element.

    The local unknowns are the velocity vector (see module docstring)
    followed by the pressure rows of ``B``.  ``P`` is the scalar
    reconstruction matrix, kept for post-processing.
    """

    scheme: str
    space: HhoLocalSpace
    A: np.ndarray
    B: np.ndarray
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    P: np.ndarray

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]

    def matrix(self) -> np.ndarray:
        nv, npr = self.n_velocity, self.n_pressure
        K = np.zeros((nv + npr, nv + npr))
        K[:nv, :nv] = self.A
        K[nv:, :nv] = self.B
        K[:nv, nv:] = self.B.T
        return K

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_p])


def local_system(et: ElementTables, scheme: str, k: int, eta: float | None = None, data=None) -> LocalStokesBlocks:
    if scheme not in ("dp", "hp"):
        raise LocalOperatorError(f"unknown HHO scheme {scheme!r}")
    eta = default_eta(k) if eta is None else eta
    k_elem = k if scheme == "dp" else k + 1
    P = reconstruction_matrix(et, k, k_elem)
    A = viscous_block(et, k, k_elem, eta, P)
    rhs_u = momentum_load(et, k, k_elem, eta, data, P)
    if scheme == "dp":
        B, rhs_p = coupling_dp(et, k), mass_load_dp(et, k, data)
    else:
        B, rhs_p = coupling_hp(et, k), mass_load_hp(et, k, data)
    return LocalStokesBlocks(scheme, HhoLocalSpace(k, k_elem, et.n_faces), A, B, rhs_u, rhs_p, P)
