"""Global unknown numbering, structural sparsity and CSR assembly.

Global vectors list all face unknowns first, face by face, followed by the
element unknowns, element by element.  Inside an entity block the unknowns
are grouped by field (``u_x``, ``u_y``, then ``p``) and, within a field, by
increasing basis mode.  The resulting chunks are

=============  ==========================  ===============================
scheme         face block                  element block
=============  ==========================  ===============================
hho-dp uncond  u_x, u_y in P^k(F)          u_x, u_y, p in P^k(T)
hho-dp v-cond  u_x, u_y in P^k(F)          p in P^k(T)
hho-dp vp-cond u_x, u_y in P^k(F)          the constant pressure mode
hho-hp full    u_x, u_y, p in P^k(F)       (none)
dg             (none)                      u_x, u_y, p in P^k(T)
=============  ==========================  ===============================

Because every basis is hierarchical, the unknowns of the same system at a
lower degree ``kc`` are exactly the entries with ``mode < dim(kc)``, in the
same relative order.  :meth:`DofLayout.keep` exposes that mask; it is all
the p-multilevel transfer operators need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .poly_basis import dim_p1, dim_p2

FACE, ELEMENT, CONSTANT = 0, 1, 2
UX, UY, PRESSURE = 0, 1, 2

SCHEMES = ("hho-dp", "hho-hp", "dg")
_STRATEGIES = {
    "hho-dp": ("uncond", "v-cond", "vp-cond"),
    "hho-hp": ("full",),
    "dg": ("none",),
}
_ALIASES = {
    "v&p-cond": "vp-cond",
    "vp": "vp-cond",
    "v": "v-cond",
    "hp-full": "full",
    "v&p": "vp-cond",
}


class LayoutError(ValueError):
    pass


def normalize(scheme: str, strategy: str | None) -> tuple[str, str]:
    """Canonical (scheme, strategy) pair; ``strategy=None`` picks the default."""
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise LayoutError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    allowed = _STRATEGIES[scheme]
    if strategy is None:
        return scheme, ("v-cond" if scheme == "hho-dp" else allowed[0])
    s = _ALIASES.get(strategy.lower(), strategy.lower())
    if scheme != "hho-dp" and s in ("vp-cond", "v-cond", "uncond", "full", "none"):
        # the hybrid scheme is always fully condensed and DG never is
        return scheme, allowed[0]
    if s not in allowed:
        raise LayoutError(f"strategy {strategy!r} is not available for {scheme}")
    return scheme, s


def _fields(scheme: str, strategy: str) -> tuple[tuple[int, ...], tuple[int, ...], int]:
    """(face fields, element fields, element kind)."""
    if scheme == "dg":
        return (), (UX, UY, PRESSURE), ELEMENT
    if scheme == "hho-hp":
        return (UX, UY, PRESSURE), (), ELEMENT
    if strategy == "uncond":
        return (UX, UY), (UX, UY, PRESSURE), ELEMENT
    if strategy == "v-cond":
        return (UX, UY), (PRESSURE,), ELEMENT
    return (UX, UY), (PRESSURE,), CONSTANT


def _dim(kind: int, k: int) -> int:
    if kind == FACE:
        return dim_p1(k)
    if kind == ELEMENT:
        return dim_p2(k)
    return 1


@dataclass(frozen=True, eq=False)
class DofLayout:
    scheme: str
    strategy: str
    k: int
    n_faces: int
    n_elements: int

    def __post_init__(self):
        if self.k < 0:
            raise LayoutError("k must be non-negative")
        if self.scheme == "dg" and self.k < 1:
            raise LayoutError("the DG scheme requires k >= 1")
        ff, ef, ekind = _fields(self.scheme, self.strategy)
        fm = np.tile(np.arange(_dim(FACE, self.k)), len(ff))
        fc = np.repeat(np.array(ff, dtype=np.int8), _dim(FACE, self.k))
        em = np.tile(np.arange(_dim(ekind, self.k)), len(ef))
        ec = np.repeat(np.array(ef, dtype=np.int8), _dim(ekind, self.k))
        object.__setattr__(self, "element_kind", ekind)
        object.__setattr__(self, "face_block", len(fm))
        object.__setattr__(self, "element_block", len(em))
        mode = np.concatenate([np.tile(fm, self.n_faces), np.tile(em, self.n_elements)])
        comp = np.concatenate([np.tile(fc, self.n_faces), np.tile(ec, self.n_elements)])
        kind = np.concatenate(
            [np.full(len(fm) * self.n_faces, FACE, np.int8), np.full(len(em) * self.n_elements, ekind, np.int8)]
        )
        entity = np.concatenate(
            [np.repeat(np.arange(self.n_faces), len(fm)), self.n_faces + np.repeat(np.arange(self.n_elements), len(em))]
        )
        object.__setattr__(self, "mode", mode.astype(np.int32))
        object.__setattr__(self, "comp", comp)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "entity", entity.astype(np.int64))

    @classmethod
    def for_mesh(cls, mesh: Mesh, scheme: str, strategy: str | None, k: int) -> "DofLayout":
        scheme, strategy = normalize(scheme, strategy)
        return cls(scheme, strategy, k, mesh.n_faces, mesh.n_elements)

    @property
    def n(self) -> int:
        return self.face_block * self.n_faces + self.element_block * self.n_elements

    @property
    def element_offset(self) -> int:
        return self.face_block * self.n_faces

    def face_dofs(self, f: int) -> np.ndarray:
        return f * self.face_block + np.arange(self.face_block)

    def element_dofs(self, t: int) -> np.ndarray:
        return self.element_offset + t * self.element_block + np.arange(self.element_block)

    def keep(self, kc: int) -> np.ndarray:
        """Mask of the unknowns that survive at degree ``kc <= k``."""
        if kc > self.k:
            raise LayoutError("coarse degree exceeds the layout degree")
        dims = np.array([_dim(FACE, kc), _dim(ELEMENT, kc), 1])
        return self.mode < dims[self.kind]

    def coarsen(self, kc: int) -> "DofLayout":
        self.keep(kc)
        return DofLayout(self.scheme, self.strategy, kc, self.n_faces, self.n_elements)

    # ------------------------------------------------------------------
    # structural sparsity

    @property
    def velocity_component_diagonal(self) -> bool:
        """Whether velocity-velocity couplings between distinct components are structurally zero."""
        return self.scheme == "dg" or self.strategy in ("uncond", "v-cond")

    def block_mask(self, ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
        """Structural pattern between unknowns with fields ``ci`` (rows) and ``cj`` (columns).

        The diagonal of the global matrix is added separately.
        """
        ci = np.asarray(ci)[:, None]
        cj = np.asarray(cj)[None, :]
        mask = np.ones(np.broadcast(ci, cj).shape, dtype=bool)
        if self.velocity_component_diagonal:
            mask &= ~((ci != PRESSURE) & (cj != PRESSURE) & (ci != cj))
        return mask


# ----------------------------------------------------------------------
# assembly


class CooBuilder:
    """Accumulates dense local blocks into COO triplets filtered by the structural pattern."""

    def __init__(self, layout: DofLayout):
        self.layout = layout
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.rhs = np.zeros(layout.n)

    def add(self, idx: np.ndarray, K: np.ndarray, rhs: np.ndarray | None = None) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.layout.n):
            raise LayoutError("global index out of range")
        c = self.layout.comp[idx]
        mask = self.layout.block_mask(c, c) | (idx[:, None] == idx[None, :])
        i, j = np.nonzero(mask)
        self.rows.append(idx[i])
        self.cols.append(idx[j])
        self.vals.append(K[i, j])
        if rhs is not None:
            np.add.at(self.rhs, idx, rhs)

    def tocsr(self) -> sp.csr_matrix:
        n = self.layout.n
        diag = np.arange(n, dtype=np.int64)
        rows = np.concatenate(self.rows + [diag])
        cols = np.concatenate(self.cols + [diag])
        vals = np.concatenate(self.vals + [np.zeros(n)])
        A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return A


# ----------------------------------------------------------------------
# counting


def _entity_pairs(mesh: Mesh, layout: DofLayout) -> np.ndarray:
    """Distinct (row entity, column entity) pairs that share a local block."""
    nf = mesh.n_faces
    sets = []
    if layout.scheme == "dg":
        fe = mesh.face_elements
        inner = fe[fe[:, 1] >= 0]
        el = np.arange(mesh.n_elements)
        a = np.concatenate([el, inner[:, 0], inner[:, 1]]) + nf
        b = np.concatenate([el, inner[:, 1], inner[:, 0]]) + nf
        return np.stack([a, b], axis=1)
    has_elem = layout.element_block > 0
    for t, faces in enumerate(mesh.element_faces):
        ents = list(faces) + ([nf + t] if has_elem else [])
        e = np.asarray(ents, dtype=np.int64)
        sets.append(np.stack(np.meshgrid(e, e, indexing="ij"), axis=-1).reshape(-1, 2))
    pairs = np.concatenate(sets)
    key = pairs[:, 0] * (nf + mesh.n_elements) + pairs[:, 1]
    _, first = np.unique(key, return_index=True)
    return pairs[first]


def structural_nnz(mesh: Mesh, layout: DofLayout) -> int:
    """Number of stored entries of the assembled matrix, from topology only."""
    nf = mesh.n_faces
    ff, ef, ekind = _fields(layout.scheme, layout.strategy)
    fcomp = np.repeat(np.array(ff, dtype=np.int8), _dim(FACE, layout.k))
    ecomp = np.repeat(np.array(ef, dtype=np.int8), _dim(ekind, layout.k))
    comps = {FACE: fcomp, ELEMENT: ecomp}

    def count(a: int, b: int, same: bool) -> int:
        m = layout.block_mask(comps[a], comps[b])
        if same:
            m = m | np.eye(len(comps[a]), dtype=bool)
        return int(m.sum())

    pairs = _entity_pairs(mesh, layout)
    ka = (pairs[:, 0] >= nf).astype(int)
    kb = (pairs[:, 1] >= nf).astype(int)
    same = pairs[:, 0] == pairs[:, 1]
    total = 0
    for a in (0, 1):
        for b in (0, 1):
            for s in (False, True):
                n = int(((ka == a) & (kb == b) & (same == s)).sum())
                if n and len(comps[a]) and len(comps[b]):
                    total += n * count(a, b, s)
    return total


def formula_counts(mesh: Mesh, scheme: str, strategy: str | None, k: int, d: int = 2) -> tuple[int, int]:
    """DOF and MNZ estimates from the closed-form cost formulas.

    ``card T_F`` is 1 on boundary faces and 2 otherwise.  The hybrid row is
    written with ``card F_T``; it is evaluated here with ``card T_F`` like the
    other rows, which is what a per-face sum can refer to.
    """
    scheme, strategy = normalize(scheme, strategy)
    nT, nF = mesh.n_elements, mesh.n_faces
    Pe, Pf = dim_p2(k), dim_p1(k)
    cTF = np.where(mesh.face_elements[:, 1] >= 0, 2, 1)
    cFT = np.array([len(e) for e in mesh.elements])
    if scheme == "dg":
        return nT * (d + 1) * Pe, int(((cFT + 1) * (3 * d + 1) * Pe**2).sum())
    if scheme == "hho-hp":
        return nF * (d + 1) * Pf, int(((2 * cTF - 1) * (d + 1) ** 2 * Pf**2).sum())
    if strategy == "uncond":
        dofs = nT * (d + 1) * Pe + nF * d * Pf
        mnz = (
            nT * (d + 1) * Pe**2
            + cFT.sum() * d**2 * Pe * Pf
            + cTF.sum() * d**2 * Pe * Pf
            + ((2 * cTF - 1) * d * Pf**2).sum()
        )
    elif strategy == "vp-cond":
        dofs = nT + nF * d * Pf
        mnz = nT + cFT.sum() * d * Pe + ((2 * cTF - 1) * d**2 * Pf**2).sum() + (cTF * d * Pf).sum()
    else:
        dofs = nT * Pe + nF * (d + 1) * Pf
        mnz = (
            nT * Pe**2
            + cFT.sum() * d * Pe * Pf
            + cTF.sum() * d * Pe * Pf
            + ((2 * cTF - 1) * d * Pf**2).sum()
        )
    return int(dofs), int(mnz)
