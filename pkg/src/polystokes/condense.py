"""Static condensation of element-local saddle-point systems.

A local system ``K x = b`` is split into retained unknowns ``r`` (globally
coupled) and eliminated unknowns ``e``::

    S = K_rr - K_re K_ee^{-1} K_er,        g = b_r - K_re K_ee^{-1} b_e.

The eliminated unknowns are recovered from the retained ones through
``x_e = e0 - E x_r`` with ``E = K_ee^{-1} K_er`` and ``e0 = K_ee^{-1} b_e``;
both are stored so recovery never refactors.

Strategies for the discontinuous-pressure scheme:

``uncond``   nothing is eliminated;
``v-cond``   the element velocity is eliminated;
``vp-cond``  the element velocity and every non-constant element pressure
             mode are eliminated, so only the constant mode is retained.

The hybrid-pressure scheme (``full``) eliminates the element velocity and
the element pressure, keeping face velocities and face pressures.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .hho_local import LocalStokesBlocks


class CondensationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Recovery:
    """Data to rebuild the full local vector from its retained part."""

    retained: np.ndarray  # local indices
    eliminated: np.ndarray  # local indices
    E: np.ndarray  # (n_e, n_r)
    e0: np.ndarray  # (n_e,)

    @property
    def n_local(self) -> int:
        return len(self.retained) + len(self.eliminated)


def split_indices(blocks: LocalStokesBlocks, strategy: str) -> tuple[np.ndarray, np.ndarray]:
    """(retained, eliminated) local indices of one element for ``strategy``."""
    sp = blocks.space
    ne2 = 2 * sp.n_elem
    nv, npr = blocks.n_velocity, blocks.n_pressure
    n = nv + npr
    idx = np.arange(n)
    if blocks.scheme == "dp":
        if strategy == "uncond":
            elim = np.array([], dtype=int)
        elif strategy == "v-cond":
            elim = np.arange(ne2)
        elif strategy == "vp-cond":
            elim = np.concatenate([np.arange(ne2), nv + np.arange(1, npr)])
        else:
            raise CondensationError(f"strategy {strategy!r} does not apply to the dp scheme")
    elif blocks.scheme == "hp":
        if strategy != "full":
            raise CondensationError(f"strategy {strategy!r} does not apply to the hp scheme")
        nfp = sp.n_faces * sp.n_face
        elim = np.concatenate([np.arange(ne2), nv + nfp + np.arange(sp.n_pressure)])
    else:
        raise CondensationError(f"unknown scheme {blocks.scheme!r}")
    keep = np.setdiff1d(idx, elim)
    return keep, elim


def condense(K: np.ndarray, b: np.ndarray, retained: np.ndarray, eliminated: np.ndarray, name: str = "element"):
    """Schur complement of ``K`` onto ``retained``; returns (S, g, Recovery)."""
    r, e = np.asarray(retained), np.asarray(eliminated)
    if len(r) + len(e) != K.shape[0] or len(np.union1d(r, e)) != K.shape[0]:
        raise CondensationError("retained and eliminated sets must partition the local unknowns")
    if len(e) == 0:
        return K[np.ix_(r, r)].copy(), b[r].copy(), Recovery(r, e, np.zeros((0, len(r))), np.zeros(0))
    Kee = K[np.ix_(e, e)]
    Ker = K[np.ix_(e, r)]
    try:
        # singularity is detected from the pivots below, so the LAPACK warning is redundant
        with np.errstate(all="raise"), warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(Kee, check_finite=True)
    except (FloatingPointError, ValueError, sla.LinAlgError) as exc:
        raise CondensationError(f"singular eliminated block on {name}") from exc
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= 1e-13 * piv.max():
        raise CondensationError(f"singular eliminated block on {name}")
    rhs = np.column_stack([Ker, b[e]])
    sol = sla.lu_solve(lu, rhs)
    E, e0 = sol[:, :-1], sol[:, -1]
    Kre = K[np.ix_(r, e)]
    S = K[np.ix_(r, r)] - Kre @ E
    g = b[r] - Kre @ e0
    return S, g, Recovery(r, e, E, e0)


def condense_element(blocks: LocalStokesBlocks, strategy: str, name: str = "element"):
    """Condense one element; returns (S, g, Recovery)."""
    r, e = split_indices(blocks, strategy)
    try:
        return condense(blocks.matrix(), blocks.rhs(), r, e, name)
    except CondensationError as exc:
        raise CondensationError(f"{exc} ({blocks.scheme} {strategy})") from None


def recover_interior(x_retained: np.ndarray, rec: Recovery) -> np.ndarray:
    """Full local vector from its retained part."""
    x_retained = np.asarray(x_retained)
    if x_retained.shape != (len(rec.retained),):
        raise CondensationError("retained vector has the wrong size")
    x = np.empty(rec.n_local)
    x[rec.retained] = x_retained
    if len(rec.eliminated):
        x[rec.eliminated] = rec.e0 - rec.E @ x_retained
    return x


def sparsity_signature(S: np.ndarray, fields: np.ndarray, tol: float = 1e-13) -> dict:
    """Block pattern of a condensed matrix.

    ``fields`` labels every retained unknown with 0 (u_x), 1 (u_y) or 2 (p).
    Returns the number of numerically nonzero entries, and whether the
    velocity block couples the two components.
    """
    fields = np.asarray(fields)
    scale = np.abs(S).max() if S.size else 0.0
    nz = np.abs(S) > tol * scale
    ux, uy = fields == 0, fields == 1
    cross = nz[np.ix_(ux, uy)].any() or nz[np.ix_(uy, ux)].any()
    return {
        "n": S.shape[0],
        "nonzeros": int(nz.sum()),
        "velocity_cross_coupling": bool(cross),
        "velocity_component_diagonal": not cross,
    }
