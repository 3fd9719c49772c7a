"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from polystokes.discretize import default_quad_degree
from polystokes.local_data import FaceBases, element_tables
from polystokes.mesh import Mesh, classify_boundary, from_polygons, gen_quad_family


def trapezoid_mesh(n: int = 2, distortion: float = 0.1) -> Mesh:
    return classify_boundary(gen_quad_family(n, distortion=distortion))


def single_element(vertices=None) -> Mesh:
    """One polygon with Dirichlet faces and a Neumann right side when it reaches x = 1."""
    if vertices is None:
        vertices = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    v = np.asarray(vertices, float)
    return from_polygons(v, [list(range(len(v)))])


def random_trapezoid(rng) -> np.ndarray:
    """A convex quadrilateral with two vertical sides."""
    y0, y1 = rng.uniform(-0.3, 0.3, 2)
    h0, h1 = rng.uniform(0.7, 1.3, 2)
    w = rng.uniform(0.6, 1.4)
    return np.array([(0.0, y0), (w, y1), (w, y1 + h1), (0.0, y0 + h0)])


def tables(mesh: Mesh, t: int, k: int, elem_degree: int | None = None, face_degree: int | None = None):
    qd = default_quad_degree(k)
    faces = FaceBases(mesh, k if face_degree is None else face_degree, qd)
    return element_tables(mesh, t, k + 1 if elem_degree is None else elem_degree, faces, qd)


def interpolate_scalar(et, k: int, k_elem: int, q) -> np.ndarray:
    """HHO interpolant: L2 projections of ``q`` on the element and on each face."""
    ne = (k_elem + 1) * (k_elem + 2) // 2
    nf = k + 1
    parts = [et.phi[:, :ne].T @ (et.w * q(et.quad.points))]
    for ft in et.faces:
        parts.append(ft.chi[:, :nf].T @ (ft.w * q(ft.quad.points)))
    return np.concatenate(parts)


def random_poly(rng, degree: int, center=(0.0, 0.0)):
    """A random polynomial of total degree ``degree`` as a callable."""
    coeffs = [(i, j, rng.standard_normal()) for i in range(degree + 1) for j in range(degree + 1 - i)]
    cx, cy = center

    def q(x):
        x = np.atleast_2d(x)
        X, Y = x[:, 0] - cx, x[:, 1] - cy
        return sum(c * X**i * Y**j for i, j, c in coeffs)

    return q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
