"""Polygonal 2D meshes of the square (-1, 1)^2.

A :class:`Mesh` stores vertex coordinates, counter-clockwise element
polygons and the derived face topology.  Every face ``F = (a, b)`` is
oriented so that its *left* element traverses the edge from ``a`` to
``b``; the unit normal ``n_F`` therefore points out of the left element
and into the right one.  ``element_face_signs`` records, per element and
local face, whether the element is the left (+1) or the right (-1)
neighbour, so the outward normal of ``T`` on ``F`` is ``sign * n_F``.
"""

from __future__ import annotations

import functools
import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

TAG_LETTERS = {INTERIOR: "i", DIRICHLET: "d", NEUMANN: "n"}
LETTER_TAGS = {v: k for k, v in TAG_LETTERS.items()}

SIDES = ("left", "right", "bottom", "top")
DOMAIN_AREA = 4.0


class MeshError(ValueError):
    """Raised for invalid mesh geometry or topology."""


class MeshFormatError(MeshError):
    """Raised when a mesh file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    elements: tuple
    face_vertices: np.ndarray
    face_elements: np.ndarray
    face_tag: np.ndarray
    element_faces: tuple
    element_face_signs: tuple

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @functools.cached_property
    def areas(self) -> np.ndarray:
        return np.array([_polygon_area(self.vertices[e]) for e in self.elements])

    @functools.cached_property
    def centroids(self) -> np.ndarray:
        return np.array([_polygon_centroid(self.vertices[e]) for e in self.elements])

    @functools.cached_property
    def h_T(self) -> np.ndarray:
        """Element diameters (largest vertex-to-vertex distance)."""
        out = np.empty(self.n_elements)
        for t, e in enumerate(self.elements):
            p = self.vertices[e]
            d = p[:, None, :] - p[None, :, :]
            out[t] = np.sqrt((d**2).sum(-1).max())
        return out

    @functools.cached_property
    def h_F(self) -> np.ndarray:
        p = self.vertices[self.face_vertices]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @functools.cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals pointing out of each face's left element."""
        p = self.vertices[self.face_vertices]
        t = p[:, 1] - p[:, 0]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    @functools.cached_property
    def face_midpoints(self) -> np.ndarray:
        return self.vertices[self.face_vertices].mean(axis=1)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elements[:, 1] < 0)

    def count_tag(self, tag: int) -> int:
        return int(np.count_nonzero(self.face_tag == tag))

    def outward_normal(self, t: int, j: int) -> np.ndarray:
        """Outward unit normal of element ``t`` on its ``j``-th local face."""
        f = self.element_faces[t][j]
        return self.element_face_signs[t][j] * self.face_normals[f]

    def with_tags(self, face_tag: np.ndarray) -> "Mesh":
        return Mesh(
            self.vertices,
            self.elements,
            self.face_vertices,
            self.face_elements,
            np.asarray(face_tag, dtype=np.int8),
            self.element_faces,
            self.element_face_signs,
        )

    def same_as(self, other: "Mesh") -> bool:
        """Exact equality of coordinates, topology and tags."""
        return (
            np.array_equal(self.vertices, other.vertices)
            and len(self.elements) == len(other.elements)
            and all(np.array_equal(a, b) for a, b in zip(self.elements, other.elements))
            and np.array_equal(self.face_vertices, other.face_vertices)
            and np.array_equal(self.face_elements, other.face_elements)
            and np.array_equal(self.face_tag, other.face_tag)
        )


def _polygon_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _polygon_centroid(p: np.ndarray) -> np.ndarray:
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6 * a)
    cy = ((y + yn) * cross).sum() / (6 * a)
    return np.array([cx, cy])


def from_polygons(
    vertices: np.ndarray,
    elements: Sequence[Sequence[int]],
    face_tags: dict | None = None,
) -> Mesh:
    """Build the face topology of a polygonal mesh.

    Boundary faces are tagged Dirichlet unless ``face_tags`` maps the sorted
    vertex pair of a face to another tag.  Raises :class:`MeshError` for
    clockwise or degenerate polygons and for non-manifold edges.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    if len(elements) == 0:
        raise MeshError("no elements")
    elems = []
    for t, e in enumerate(elements):
        e = np.asarray(e, dtype=np.int64)
        if len(e) < 3:
            raise MeshError(f"element {t} has fewer than 3 vertices")
        if e.min() < 0 or e.max() >= len(vertices):
            raise MeshError(f"element {t} references a missing vertex")
        if len(set(e.tolist())) != len(e):
            raise MeshError(f"element {t} repeats a vertex")
        if _polygon_area(vertices[e]) <= 0:
            raise MeshError(f"element {t} is not counter-clockwise or is degenerate")
        elems.append(e)

    index: dict[tuple[int, int], int] = {}
    fverts: list[tuple[int, int]] = []
    fels: list[list[int]] = []
    efaces, esigns = [], []
    for t, e in enumerate(elems):
        nv = len(e)
        fl, sl = np.empty(nv, np.int64), np.empty(nv, np.int64)
        for j in range(nv):
            a, b = int(e[j]), int(e[(j + 1) % nv])
            key = (a, b) if a < b else (b, a)
            f = index.get(key)
            if f is None:
                f = len(fverts)
                index[key] = f
                fverts.append((a, b))
                fels.append([t, -1])
                s = 1
            else:
                if fels[f][1] >= 0 or fverts[f] != (b, a):
                    raise MeshError(f"edge {key} is shared inconsistently (element {t})")
                fels[f][1] = t
                s = -1
            fl[j], sl[j] = f, s
        efaces.append(fl)
        esigns.append(sl)

    face_elements = np.array(fels, dtype=np.int64)
    tag = np.where(face_elements[:, 1] < 0, DIRICHLET, INTERIOR).astype(np.int8)
    if face_tags:
        for key, value in face_tags.items():
            f = index.get(tuple(sorted(key)))
            if f is None:
                raise MeshError(f"tagged face {key} does not exist")
            tag[f] = value
    return Mesh(
        vertices,
        tuple(elems),
        np.array(fverts, dtype=np.int64),
        face_elements,
        tag,
        tuple(efaces),
        tuple(esigns),
    )


def _grid_vertices(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def _quads(n: int) -> list[list[int]]:
    m = n + 1
    return [
        [j * m + i, j * m + i + 1, (j + 1) * m + i + 1, (j + 1) * m + i]
        for j in range(n)
        for i in range(n)
    ]


def _split_quads(n: int) -> list[list[int]]:
    m = n + 1
    out = []
    for j in range(n):
        for i in range(n):
            a, b = j * m + i, j * m + i + 1
            c, d = (j + 1) * m + i + 1, (j + 1) * m + i
            out.append([a, b, c])
            out.append([a, c, d])
    return out


def gen_quad_family(n: int, distortion: float = 0.1, kind: str = "trapezoidal") -> Mesh:
    """Structured quadrilateral meshes with ``n`` cells per side.

    The trapezoidal kind shifts the vertices of every interior horizontal
    grid line vertically by ``+-distortion * h`` with alternating sign along
    the line.  Vertical edges stay vertical, so every cell is a trapezoid.
    """
    if n < 1:
        raise MeshError("n must be at least 1")
    if kind not in ("uniform", "trapezoidal"):
        raise MeshError(f"unknown quad kind {kind!r}")
    if not 0.0 <= distortion < 0.5:
        raise MeshError("distortion must lie in [0, 0.5)")
    xs = np.linspace(-1.0, 1.0, n + 1)
    v = _grid_vertices(xs, xs)
    if kind == "trapezoidal" and distortion > 0:
        h = 2.0 / n
        i = np.tile(np.arange(n + 1), n + 1)
        j = np.repeat(np.arange(n + 1), n + 1)
        inner = (j > 0) & (j < n)
        v[inner, 1] += distortion * h * np.where((i[inner] + j[inner]) % 2 == 0, 1.0, -1.0)
    return from_polygons(v, _quads(n))


def gen_tri_family(n: int, style: str = "split-quad", seed: int = 0, jitter: float = 0.25) -> Mesh:
    """Triangular meshes with ``n`` cells per side.

    ``split-quad`` cuts every cell of the uniform grid along the same
    diagonal.  ``delaunay-like`` jitters the interior grid points by up to
    ``jitter`` times the spacing and triangulates them with Delaunay.
    """
    if n < 1:
        raise MeshError("n must be at least 1")
    xs = np.linspace(-1.0, 1.0, n + 1)
    if style == "split-quad":
        return from_polygons(_grid_vertices(xs, xs), _split_quads(n))
    if style != "delaunay-like":
        raise MeshError(f"unknown triangle style {style!r}")
    from scipy.spatial import Delaunay, QhullError

    rng = np.random.default_rng(seed)
    h = 2.0 / n
    for _ in range(10):
        v = _grid_vertices(xs, xs)
        inner = (np.abs(v) < 1 - 1e-12).all(axis=1)
        v[inner] += rng.uniform(-jitter * h, jitter * h, size=(inner.sum(), 2))
        try:
            tri = Delaunay(v).simplices
        except QhullError:
            continue
        tris = []
        for s in tri:
            if _polygon_area(v[s]) < 0:
                s = s[::-1]
            tris.append(s)
        try:
            return from_polygons(v, tris)
        except MeshError:
            continue
    raise MeshError("triangulation failed after 10 attempts")


def gauss_lobatto_nodes(n: int) -> np.ndarray:
    """The ``n + 1`` Gauss-Lobatto-Legendre nodes on [-1, 1]."""
    if n == 1:
        return np.array([-1.0, 1.0])
    from numpy.polynomial import legendre

    inner = legendre.Legendre.basis(n).deriv().roots()
    nodes = np.concatenate([[-1.0], np.sort(inner.real), [1.0]])
    return 0.5 * (nodes - nodes[::-1])


def apply_grading(
    n: int,
    family: str = "quad",
    seed: int = 0,
    displacement: float = 0.2,
    max_retries: int = 20,
) -> Mesh:
    """Graded meshes on a Gauss-Lobatto tensor grid with random node jitter.

    Every interior node moves in a uniformly random direction by a uniformly
    random distance of at most ``displacement`` times the distance to its
    nearest grid neighbour.  The grid is then cut into quadrilaterals
    (``family="quad"``) or split triangles (``family="tri"``).
    """
    if family not in ("quad", "tri"):
        raise MeshError(f"unknown graded family {family!r}")
    g = gauss_lobatto_nodes(n)
    base = _grid_vertices(g, g)
    m = n + 1
    ii = np.tile(np.arange(m), m)
    jj = np.repeat(np.arange(m), m)
    inner = (ii > 0) & (ii < n) & (jj > 0) & (jj < n)
    dx = np.diff(g)
    near = np.zeros(len(base))
    near[inner] = np.minimum.reduce(
        [dx[ii[inner] - 1], dx[ii[inner]], dx[jj[inner] - 1], dx[jj[inner]]]
    )
    cells = _quads(n) if family == "quad" else _split_quads(n)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        v = base.copy()
        if displacement > 0:
            k = int(inner.sum())
            r = rng.uniform(0.0, displacement, size=k) * near[inner]
            a = rng.uniform(0.0, 2 * np.pi, size=k)
            v[inner] += np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
        if all(_is_convex(v[c]) for c in cells):
            return from_polygons(v, cells)
    raise MeshError("grading produced invalid elements after bounded retries")


def _is_convex(p: np.ndarray) -> bool:
    e = np.roll(p, -1, axis=0) - p
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool((cross > 0).all())


def classify_boundary(mesh: Mesh, neumann_side: str | None = "right", tol: float = 1e-12) -> Mesh:
    """Tag boundary faces on ``neumann_side`` Neumann and the rest Dirichlet.

    Faces are assigned to a side by their midpoint.  A Neumann side is
    mandatory because it fixes the pressure constant.
    """
    if neumann_side is None or neumann_side == "none":
        raise MeshError("Neumann side required")
    if neumann_side not in SIDES:
        raise MeshError(f"unknown side {neumann_side!r}; expected one of {SIDES}")
    bf = mesh.boundary_faces
    ends = mesh.vertices[mesh.face_vertices[bf]]
    if np.abs(np.abs(ends).max(axis=2) - 1.0).max(initial=0.0) > tol:
        raise MeshError("boundary face off the domain boundary")
    mid = ends.mean(axis=1)
    dist = {
        "left": np.abs(mid[:, 0] + 1),
        "right": np.abs(mid[:, 0] - 1),
        "bottom": np.abs(mid[:, 1] + 1),
        "top": np.abs(mid[:, 1] - 1),
    }
    tag = np.zeros(mesh.n_faces, dtype=np.int8)
    tag[bf] = np.where(dist[neumann_side] < tol, NEUMANN, DIRICHLET)
    return mesh.with_tags(tag)


def face_side(mesh: Mesh, f: int) -> str | None:
    x, y = mesh.face_midpoints[f]
    for side, val in (("left", -x - 1), ("right", x - 1), ("bottom", -y - 1), ("top", y - 1)):
        if abs(val) < 1e-12:
            return side
    return None


# --------------------------------------------------------------------------
# text format

def write_mesh(mesh: Mesh, path: str | os.PathLike | io.TextIOBase) -> None:
    lines = [f"pmesh2 v1 {mesh.n_vertices} {mesh.n_elements} {mesh.n_faces}"]
    lines += [f"v {x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += ["e " + " ".join(str(int(i)) for i in e) for e in mesh.elements]
    for (a, b), (l, r), t in zip(mesh.face_vertices, mesh.face_elements, mesh.face_tag):
        lines.append(f"f {a} {b} {l} {r} {TAG_LETTERS[int(t)]}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_mesh(path: str | os.PathLike | io.TextIOBase) -> Mesh:
    if hasattr(path, "read"):
        text = path.read()
    else:
        with open(path) as fh:
            text = fh.read()
    return parse_mesh(text)


def parse_mesh(text: str) -> Mesh:
    """Parse the ``pmesh2 v1`` text format; errors carry line numbers."""
    records = [
        (i + 1, ln.split())
        for i, ln in enumerate(text.splitlines())
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not records:
        raise MeshFormatError("empty file", 1)
    lineno, head = records[0]
    if len(head) != 5 or head[:2] != ["pmesh2", "v1"]:
        raise MeshFormatError("malformed header, expected 'pmesh2 v1 <nv> <ne> <nf>'", lineno)
    try:
        nv, ne, nf = (int(x) for x in head[2:])
    except ValueError:
        raise MeshFormatError("header counts must be integers", lineno) from None
    if ne == 0:
        raise MeshFormatError("no elements", lineno)
    verts, elems, faces = [], [], []
    for lineno, tok in records[1:]:
        kind = tok[0]
        try:
            if kind == "v":
                if len(tok) != 3:
                    raise ValueError("vertex record needs 2 coordinates")
                verts.append((float(tok[1]), float(tok[2])))
            elif kind == "e":
                ids = [int(x) for x in tok[1:]]
                if len(ids) < 3:
                    raise ValueError("element record needs at least 3 vertices")
                bad = [i for i in ids if not 0 <= i < nv]
                if bad:
                    raise ValueError(f"vertex index {bad[0]} out of range 0..{nv - 1}")
                elems.append((lineno, ids))
            elif kind == "f":
                if len(tok) != 6:
                    raise ValueError("face record needs 'a b left right tag'")
                a, b, left, right = (int(x) for x in tok[1:5])
                if tok[5] not in LETTER_TAGS:
                    raise ValueError(f"unknown face tag {tok[5]!r}")
                for e in (left, right):
                    if e >= ne or e < -1:
                        raise ValueError(f"face references element {e} of {ne}")
                if left < 0:
                    raise ValueError("face needs a left element")
                faces.append((lineno, a, b, left, right, LETTER_TAGS[tok[5]]))
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except ValueError as exc:
            raise MeshFormatError(str(exc), lineno) from None
    if len(verts) != nv:
        raise MeshFormatError(f"expected {nv} vertices, found {len(verts)}", records[0][0])
    if len(elems) == 0:
        raise MeshFormatError("no elements", records[0][0])
    if len(elems) != ne:
        raise MeshFormatError(f"expected {ne} elements, found {len(elems)}", records[0][0])
    if nf and len(faces) != nf:
        raise MeshFormatError(f"expected {nf} faces, found {len(faces)}", records[0][0])
    try:
        mesh = from_polygons(np.array(verts), [e for _, e in elems])
    except MeshError as exc:
        raise MeshFormatError(str(exc), elems[0][0]) from None
    if not faces:
        return mesh
    if len(faces) != mesh.n_faces:
        raise MeshFormatError(f"face list has {len(faces)} faces, topology has {mesh.n_faces}")
    lookup = {tuple(sorted(fv)): f for f, fv in enumerate(mesh.face_vertices.tolist())}
    tag = np.zeros(mesh.n_faces, dtype=np.int8)
    for lineno, a, b, left, right, t in faces:
        f = lookup.get(tuple(sorted((a, b))))
        if f is None:
            raise MeshFormatError(f"face ({a}, {b}) is not an element edge", lineno)
        if {left, right} != set(mesh.face_elements[f].tolist()):
            raise MeshFormatError(f"face ({a}, {b}) incidence does not match elements", lineno)
        if (t == INTERIOR) != (right >= 0):
            raise MeshFormatError(f"face ({a}, {b}) tag inconsistent with incidence", lineno)
        tag[f] = t
    return mesh.with_tags(tag)


def euler_characteristic(mesh: Mesh) -> int:
    return mesh.n_vertices - mesh.n_faces + mesh.n_elements


def iter_element_faces(mesh: Mesh, t: int) -> Iterable[tuple[int, int]]:
    return zip(mesh.element_faces[t].tolist(), mesh.element_face_signs[t].tolist())
