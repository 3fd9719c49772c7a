import numpy as np
import pytest
import scipy.sparse as sp

from conftest import single_element, trapezoid_mesh
from polystokes.assembly import PRESSURE
from polystokes.discretize import assemble_system, default_quad_degree
from polystokes.local_data import FaceBases, element_tables
from polystokes.manufactured import ManufacturedCase
from polystokes.mesh import classify_boundary
from polystokes.plevels import (
    LevelConfig,
    LevelError,
    LevelHierarchy,
    inherit_operator,
    prolong_vector,
    restrict_vector,
    solve,
    transfer_matrix,
)
from polystokes.sparse_la import SolverError


@pytest.fixture(scope="module")
def dp_system():
    return assemble_system(trapezoid_mesh(2), "hho-dp", "v-cond", 3, data=ManufacturedCase())


@pytest.fixture(scope="module")
def dg_system():
    return assemble_system(trapezoid_mesh(2), "dg", None, 3, data=ManufacturedCase())


def test_level_config_validation():
    assert LevelConfig.default_for(3).degrees == (3, 2, 1)
    assert LevelConfig.default_for(6).degrees == (6, 3, 1)
    assert LevelConfig.default_for(1).degrees == (1,)
    with pytest.raises(LevelError):
        LevelConfig(degrees=(3, 3, 1))
    with pytest.raises(LevelError):
        LevelConfig(degrees=(2, 3))
    with pytest.raises(LevelError):
        LevelConfig(degrees=(3, 1), coarse="cg")


def test_dg_coarsest_degree(dg_system):
    with pytest.raises(LevelError):
        LevelHierarchy.build(dg_system.A, dg_system.layout, LevelConfig(degrees=(3, 1, 0)))
    with pytest.raises(LevelError):
        LevelHierarchy.build(dg_system.A, dg_system.layout, LevelConfig(degrees=(2, 1)))


def test_transfer_algebra(dp_system, rng):
    lay = dp_system.layout
    P = transfer_matrix(lay, 1)
    R = sp.csr_matrix(np.column_stack([restrict_vector(e, lay, 1) for e in np.eye(lay.n)]))
    assert abs(R - P.T).max() == 0
    y = rng.standard_normal(P.shape[1])
    x = rng.standard_normal(lay.n)
    assert np.array_equal(restrict_vector(prolong_vector(y, lay, 1), lay, 1), y)
    assert restrict_vector(x, lay, 1) @ y == pytest.approx(x @ prolong_vector(y, lay, 1), rel=1e-15)
    assert not np.array_equal(prolong_vector(restrict_vector(x, lay, 1), lay, 1), x)
    with pytest.raises(LevelError):
        restrict_vector(x[:-1], lay, 1)


def test_restriction_is_projection_of_functions():
    mesh = trapezoid_mesh(2)
    k, kc = 3, 1
    f = lambda x: np.stack([np.sin(x[:, 0] + 2 * x[:, 1]), np.exp(x[:, 0] * x[:, 1])], 1)
    p = lambda x: np.cos(3 * x[:, 0]) * x[:, 1]

    def interpolate(deg):
        s = assemble_system(mesh, "hho-dp", "v-cond", deg)
        lay, qd = s.layout, default_quad_degree(k) + 4  # one rule for both degrees
        faces = FaceBases(mesh, deg, qd)
        v = np.zeros(lay.n)
        nf = deg + 1
        for fidx in range(mesh.n_faces):
            q, chi = faces.quads[fidx], faces.chis[fidx]
            coef = chi.T @ (q.weights[:, None] * f(q.points))
            v[lay.face_dofs(fidx)] = np.concatenate([coef[:nf, 0], coef[:nf, 1]])
        for t in range(mesh.n_elements):
            et = element_tables(mesh, t, deg, faces, qd)
            v[lay.element_dofs(t)] = et.phi.T @ (et.w * p(et.quad.points))
        return v, lay

    fine, lay = interpolate(k)
    coarse, _ = interpolate(kc)
    np.testing.assert_allclose(restrict_vector(fine, lay, kc), coarse, atol=1e-10)


@pytest.mark.parametrize("name", ["dp_system", "dg_system"])
def test_galerkin_identity(request, name):
    s = request.getfixturevalue(name)
    for kc in (2, 1):
        P = transfer_matrix(s.layout, kc)
        explicit = (P.T @ s.A @ P).tocsr()
        inherited = inherit_operator(s.A, s.layout, kc)
        assert abs(explicit - inherited).max() <= 1e-12 * abs(s.A).max()
    same = inherit_operator(s.A, s.layout, s.k)
    assert abs(same - s.A).max() == 0


def test_coarse_residual_constructions_agree(dp_system, rng):
    """Restricting a fine residual equals the residual of the materialized coarse problem."""
    A, b, lay = dp_system.A, dp_system.b, dp_system.layout
    P = transfer_matrix(lay, 1)
    Ac, bc = inherit_operator(A, lay, 1), restrict_vector(b, lay, 1)
    y = rng.standard_normal(P.shape[1])
    lhs = restrict_vector(b - A @ prolong_vector(y, lay, 1), lay, 1)
    np.testing.assert_allclose(lhs, bc - Ac @ y, atol=1e-12 * np.abs(lhs).max())


def test_vcycle_is_homogeneous_and_zero_preserving(dp_system, rng):
    h = LevelHierarchy.build(dp_system.A, dp_system.layout, LevelConfig(degrees=(3, 2, 1)))
    d = rng.standard_normal(dp_system.n)
    c = h.vcycle(d)
    np.testing.assert_allclose(h.vcycle(-2.5 * d), -2.5 * c, atol=1e-12 * np.abs(c).max())
    assert not h.vcycle(np.zeros(dp_system.n)).any()


def test_single_level_is_coarse_solve(dp_system, rng):
    h = LevelHierarchy.build(dp_system.A, dp_system.layout, LevelConfig(degrees=(3,)))
    d = rng.standard_normal(dp_system.n)
    np.testing.assert_array_equal(h.vcycle(d), h.levels[0].coarse.solve(d))


def test_one_element_solve_matches_dense():
    mesh = classify_boundary(single_element())
    s = assemble_system(mesh, "hho-dp", "v-cond", 3, data=ManufacturedCase())
    x, rep = solve(s, LevelConfig(degrees=(3, 2, 1)))
    assert rep.converged
    np.testing.assert_allclose(x, np.linalg.solve(s.A.toarray(), s.b), atol=1e-10 * np.abs(x).max())


@pytest.mark.parametrize("coarse", ["lu", "gmres-ilu"])
def test_multilevel_solve(dp_system, coarse):
    x, rep = solve(dp_system, LevelConfig(degrees=(3, 2, 1), coarse=coarse), rtol=1e-12)
    assert rep.converged and rep.iterations <= 15
    assert np.linalg.norm(dp_system.b - dp_system.A @ x) <= 1e-12 * np.linalg.norm(dp_system.b)
    assert (rep.coarse_iterations > 0) == (coarse == "gmres-ilu")


def test_finest_degree_must_match(dp_system):
    with pytest.raises(LevelError):
        solve(dp_system, LevelConfig(degrees=(2, 1)))


def test_coarse_failure_reports_level():
    mesh = trapezoid_mesh(2)
    s = assemble_system(mesh, "hho-dp", "v-cond", 2)
    A = s.A.tolil()
    p = np.flatnonzero(s.layout.comp == PRESSURE)
    for i in p:  # decouple the pressure: singular matrix
        A[i, :] = 0
        A[:, i] = 0
    with pytest.raises(SolverError, match="coarse level"):
        LevelHierarchy.build(A.tocsr(), s.layout, LevelConfig(degrees=(2,)))
