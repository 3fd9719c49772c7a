"""Global Stokes systems for the three discretizations.

:func:`assemble_system` builds the element tables, the local blocks, the
condensed local matrices and the global CSR matrix in one sweep over the
elements.  The resulting :class:`StokesSystem` keeps what is needed to
recover every local unknown after the global solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import dg_local, hho_local
from .assembly import CooBuilder, DofLayout, normalize
from .condense import Recovery, condense_element, recover_interior
from .local_data import FaceBases, element_tables
from .mesh import Mesh
from .poly_basis import dim_p1, dim_p2


def default_quad_degree(k: int) -> int:
    """Exactness of the local quadratures: 2 (k + 1) + 1."""
    return 2 * (k + 1) + 1


@dataclass(eq=False)
class StokesSystem:
    mesh: Mesh
    scheme: str
    strategy: str
    k: int
    eta: float | np.ndarray
    layout: DofLayout
    A: sp.csr_matrix
    b: np.ndarray
    quad_degree: int
    local_maps: list = field(default_factory=list)  # global index per local unknown, -1 if eliminated
    recoveries: list = field(default_factory=list)
    reconstructions: list = field(default_factory=list)
    t_assembly: float = 0.0

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def nnz(self) -> int:
        return int(self.A.nnz)

    def local_solutions(self, x: np.ndarray) -> list[np.ndarray]:
        """Full local unknown vectors of every element from a global solution."""
        out = []
        if self.scheme == "dg":
            for t in range(self.mesh.n_elements):
                out.append(x[self.layout.element_dofs(t)])
            return out
        for gmap, rec in zip(self.local_maps, self.recoveries):
            out.append(recover_interior(x[gmap[rec.retained]], rec))
        return out


def hho_local_map(layout: DofLayout, mesh: Mesh, t: int, blocks: hho_local.LocalStokesBlocks) -> np.ndarray:
    """Global index of every local HHO unknown of element ``t`` (-1 when eliminated)."""
    sp_ = blocks.space
    ne, nf = sp_.n_elem, sp_.n_face
    faces = mesh.element_faces[t]
    gmap = np.full(blocks.n_velocity + blocks.n_pressure, -1, dtype=np.int64)
    chunk = layout.element_dofs(t)
    pos = 2 * ne
    for f in faces:
        gmap[pos:pos + 2 * nf] = layout.face_dofs(f)[:2 * nf]
        pos += 2 * nf
    nv = blocks.n_velocity
    if layout.scheme == "hho-hp":
        for j, f in enumerate(faces):
            gmap[nv + j * nf: nv + (j + 1) * nf] = layout.face_dofs(f)[2 * nf:]
        return gmap
    npr = sp_.n_pressure
    if layout.strategy == "uncond":
        gmap[:2 * ne] = chunk[:2 * ne]
        gmap[nv:] = chunk[2 * ne:]
    elif layout.strategy == "v-cond":
        gmap[nv:nv + npr] = chunk
    else:
        gmap[nv] = chunk[0]
    return gmap


def assemble_system(
    mesh: Mesh,
    scheme: str,
    strategy: str | None,
    k: int,
    data=None,
    eta=None,
    quad_degree: int | None = None,
) -> StokesSystem:
    """Assemble the (condensed) global system of ``scheme`` at degree ``k``.

    ``data`` supplies the loads (see :mod:`polystokes.hho_local`); ``None``
    gives a zero right-hand side.  ``eta`` is the weak-Dirichlet penalty for
    the HHO schemes (scalar) or the per-face BR2 penalty for DG (array).
    """
    t0 = time.perf_counter()
    scheme, strategy = normalize(scheme, strategy)
    layout = DofLayout.for_mesh(mesh, scheme, strategy, k)
    qd = default_quad_degree(k) if quad_degree is None else quad_degree
    builder = CooBuilder(layout)
    system = StokesSystem(mesh, scheme, strategy, k, eta, layout, None, None, qd)
    if scheme == "dg":
        _assemble_dg(mesh, k, data, eta, qd, builder, system)
    else:
        _assemble_hho(mesh, k, data, eta, qd, builder, system)
    system.A = builder.tocsr()
    system.b = builder.rhs
    system.t_assembly = time.perf_counter() - t0
    return system


def _assemble_hho(mesh, k, data, eta, qd, builder, system):
    eta = hho_local.default_eta(k) if eta is None else float(eta)
    if eta <= 0:
        raise ValueError("the Dirichlet penalty must be positive")
    system.eta = eta
    local_scheme = "dp" if system.scheme == "hho-dp" else "hp"
    faces = FaceBases(mesh, k, qd)
    for t in range(mesh.n_elements):
        et = element_tables(mesh, t, k + 1, faces, qd)
        blocks = hho_local.local_system(et, local_scheme, k, eta, data)
        S, g, rec = condense_element(blocks, system.strategy, name=f"element {t}")
        gmap = hho_local_map(system.layout, mesh, t, blocks)
        builder.add(gmap[rec.retained], S, g)
        system.local_maps.append(gmap)
        system.recoveries.append(rec)
        system.reconstructions.append(blocks.P)


def _assemble_dg(mesh, k, data, eta, qd, builder, system):
    dg_local.check_degree(k)
    eta = dg_local.default_eta(mesh) if eta is None else np.broadcast_to(np.asarray(eta, float), (mesh.n_faces,))
    dg_local.check_eta(mesh, eta)
    system.eta = eta
    faces = FaceBases(mesh, 0, qd)
    tables = [element_tables(mesh, t, k, faces, qd) for t in range(mesh.n_elements)]
    layout = system.layout
    for t in range(mesh.n_elements):
        for elems, K, rhs in dg_local.assemble_dg_blocks(mesh, t, tables.__getitem__, k, eta, data):
            idx = np.concatenate([layout.element_dofs(e) for e in elems])
            builder.add(idx, K, rhs)


def local_dims(scheme: str, k: int, n_faces: int) -> dict:
    """Sizes of the local unknown groups of one element."""
    if scheme == "dg":
        return {"velocity": 2 * dim_p2(k), "pressure": dim_p2(k)}
    ke = k if scheme == "hho-dp" else k + 1
    nv = 2 * dim_p2(ke) + 2 * n_faces * dim_p1(k)
    npr = dim_p2(k) + (n_faces * dim_p1(k) if scheme == "hho-hp" else 0)
    return {"velocity": nv, "pressure": npr}
