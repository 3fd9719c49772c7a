"""Per-element quadrature and basis tables shared by the HHO and DG kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .poly_basis import LocalBasis, QuadratureRule, build_orthonormal_basis, make_quadrature, polygon_rule


@dataclass(frozen=True, eq=False)
class FaceTables:
    """One face seen from one of its elements."""

    index: int
    local: int
    normal: np.ndarray  # outward for the element
    h: float
    tag: int
    quad: QuadratureRule
    basis: LocalBasis
    chi: np.ndarray  # face basis at the face points, (nq, dim_face)
    phi: np.ndarray  # element basis at the face points, (nq, dim_elem)
    grad: np.ndarray  # element basis gradients at the face points, (nq, dim_elem, 2)

    @property
    def w(self) -> np.ndarray:
        return self.quad.weights

    @property
    def grad_n(self) -> np.ndarray:
        """Normal derivative of the element basis, (nq, dim_elem)."""
        return self.grad @ self.normal


@dataclass(frozen=True, eq=False)
class ElementTables:
    index: int
    h: float
    area: float
    quad: QuadratureRule
    basis: LocalBasis
    phi: np.ndarray  # (nq, dim)
    grad: np.ndarray  # (nq, dim, 2)
    faces: tuple

    @property
    def w(self) -> np.ndarray:
        return self.quad.weights

    @property
    def n_faces(self) -> int:
        return len(self.faces)


class FaceBases:
    """Face quadratures and bases built once per mesh and shared by neighbours."""

    def __init__(self, mesh: Mesh, degree: int, quad_degree: int):
        self.degree = degree
        self.quad_degree = quad_degree
        self.quads, self.bases, self.chis = [], [], []
        for f, (a, b) in enumerate(mesh.face_vertices):
            seg = mesh.vertices[[a, b]]
            q = make_quadrature(seg, quad_degree)
            basis = build_orthonormal_basis(seg, degree, q, name=f"face {f}")
            self.quads.append(q)
            self.bases.append(basis)
            self.chis.append(basis.eval(q.points))


def element_tables(
    mesh: Mesh,
    t: int,
    degree: int,
    faces: FaceBases,
    quad_degree: int,
) -> ElementTables:
    """Quadrature and basis tables of element ``t`` up to ``degree``."""
    poly = mesh.vertices[mesh.elements[t]]
    quad = polygon_rule(poly, quad_degree, center=mesh.centroids[t])
    basis = build_orthonormal_basis(poly, degree, quad, name=f"element {t}")
    ftabs = []
    for j, (f, s) in enumerate(zip(mesh.element_faces[t], mesh.element_face_signs[t])):
        fq = faces.quads[f]
        ftabs.append(
            FaceTables(
                index=int(f),
                local=j,
                normal=s * mesh.face_normals[f],
                h=float(mesh.h_F[f]),
                tag=int(mesh.face_tag[f]),
                quad=fq,
                basis=faces.bases[f],
                chi=faces.chis[f],
                phi=basis.eval(fq.points),
                grad=basis.grad(fq.points),
            )
        )
    return ElementTables(
        index=t,
        h=float(mesh.h_T[t]),
        area=float(mesh.areas[t]),
        quad=quad,
        basis=basis,
        phi=basis.eval(quad.points),
        grad=basis.grad(quad.points),
        faces=tuple(ftabs),
    )
