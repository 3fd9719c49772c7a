import numpy as np
import pytest
import scipy.sparse.linalg as spla

from conftest import single_element, trapezoid_mesh
from polystokes.assembly import PRESSURE, CooBuilder, DofLayout, LayoutError, normalize
from polystokes.discretize import assemble_system
from polystokes.manufactured import PolynomialCase, error_norms
from polystokes.mesh import classify_boundary, gen_tri_family
from polystokes.poly_basis import dim_p2
from polystokes.sparse_la import count_dofs_mnzs, is_structurally_symmetric

SYSTEMS = [("hho-dp", "uncond"), ("hho-dp", "v-cond"), ("hho-dp", "vp-cond"), ("hho-hp", None), ("dg", None)]


@pytest.fixture(scope="module")
def mesh2():
    return trapezoid_mesh(2)


def test_normalize_aliases():
    assert normalize("hho-dp", "v&p-cond") == ("hho-dp", "vp-cond")
    assert normalize("hho-dp", None) == ("hho-dp", "v-cond")
    assert normalize("hho-hp", "v-cond") == ("hho-hp", "full")
    assert normalize("dg", "uncond") == ("dg", "none")
    with pytest.raises(LayoutError):
        normalize("hho-hp", "anything")
    with pytest.raises(LayoutError):
        normalize("hho-dp", "w-cond")
    with pytest.raises(LayoutError):
        normalize("fem", None)


def test_one_element_counts():
    m = single_element()
    assert DofLayout.for_mesh(m, "hho-dp", "uncond", 0).n == 2 + 1 + 4 * 2
    assert DofLayout.for_mesh(m, "dg", None, 1).n == 3 * 3


def test_k0_condensation_counts_coincide(mesh2):
    v = count_dofs_mnzs(mesh2, "hho-dp", "v-cond", 0)
    vp = count_dofs_mnzs(mesh2, "hho-dp", "vp-cond", 0)
    assert v["dofs"] == vp["dofs"]


def test_layout_keep_is_hierarchical(mesh2):
    lay = DofLayout.for_mesh(mesh2, "hho-dp", "v-cond", 3)
    coarse = lay.coarsen(1)
    keep = lay.keep(1)
    assert keep.sum() == coarse.n
    assert np.array_equal(lay.comp[keep], coarse.comp)
    assert np.array_equal(lay.entity[keep], coarse.entity)
    assert lay.keep(3).all()
    with pytest.raises(LayoutError):
        lay.keep(4)


def test_builder_rejects_bad_indices(mesh2):
    b = CooBuilder(DofLayout.for_mesh(mesh2, "dg", None, 1))
    with pytest.raises(LayoutError):
        b.add(np.array([0, b.layout.n]), np.zeros((2, 2)))


@pytest.mark.parametrize("scheme,strategy", SYSTEMS)
def test_global_matrix_symmetric_with_diagonal(mesh2, scheme, strategy):
    s = assemble_system(mesh2, scheme, strategy, 2, data=PolynomialCase())
    A = s.A
    assert is_structurally_symmetric(A)
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    assert np.all(np.diff(A.indptr) > 0)
    assert all(i in A.indices[A.indptr[i]:A.indptr[i + 1]] for i in range(A.shape[0]))
    lay = s.layout
    p = np.flatnonzero(lay.comp == PRESSURE)
    u = np.flatnonzero(lay.comp != PRESSURE)
    Bpu = A[p][:, u].toarray()
    Bup = A[u][:, p].toarray()
    np.testing.assert_allclose(Bpu, Bup.T, atol=1e-12 * max(abs(Bpu).max(), 1.0))


def test_dg_nonzeros_follow_neighbour_count():
    for m in (trapezoid_mesh(3), classify_boundary(gen_tri_family(3))):
        k = 2
        P = dim_p2(k)
        interior = np.array([sum(m.face_elements[f, 1] >= 0 for f in fs) for fs in m.element_faces])
        expected = int(((interior + 1) * 7 * P * P).sum())
        assert count_dofs_mnzs(m, "dg", None, k)["mnzs"] == expected


@pytest.mark.parametrize("scheme,strategy,k", [
    ("hho-dp", "v-cond", 1), ("hho-dp", "vp-cond", 2), ("hho-dp", "uncond", 2), ("hho-hp", None, 1), ("dg", None, 2),
])
def test_polynomial_solution_is_reproduced(scheme, strategy, k):
    m = trapezoid_mesh(2)
    case = PolynomialCase()
    s = assemble_system(m, scheme, strategy, k, data=case)
    x = spla.spsolve(s.A.tocsc(), s.b)
    errs = error_norms(s, x, case)
    names = ["e_u", "e_Gu", "e_p"]
    if scheme == "hho-hp" or k >= 2:
        # the element velocity is the exact quadratic only when its degree reaches 2
        names.append("e_Du")
    assert max(errs[n] for n in names) <= 1e-9
