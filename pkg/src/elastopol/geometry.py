"""Triangulated closed surfaces with per-element quadrature.

A surface mesh is a flat-panel triangulation of a closed, outward-oriented
surface.  Every element carries a symmetric degree-4 quadrature rule (6
points) whose weights sum to the element area.  Meshes are immutable after
construction: all arrays are marked read-only so they can be shared freely
across assembly passes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityError,
    InvalidParameterError,
    MeshFormatError,
    OrientationError,
)

MAX_REFINEMENT_LEVEL = 6

# Symmetric degree-4 rule on the reference triangle (6 points, two orbits),
# barycentric coordinates and weights normalised to sum to 1.
_QUAD_BARY = np.array([
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
])
_QUAD_W = np.array([
    0.223381589678011, 0.223381589678011, 0.223381589678011,
    0.109951743655322, 0.109951743655322, 0.109951743655322,
])


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BodyFrame:
    """Similarity transform x -> delta * x + center placing a reference body."""

    delta: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidParameterError(f"delta must be positive, got {self.delta}")
        object.__setattr__(self, "center", _freeze(np.asarray(self.center, dtype=float)))
        if self.center.shape != (3,):
            raise InvalidParameterError("center must be a 3-vector")


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Closed triangulated surface with per-element quadrature data.

    Attributes
    ----------
    vertices : (V, 3) float array
    triangles : (T, 3) int array, outward-oriented index triples
    element_areas : (T,) positive areas of the flat triangles
    element_centroids : (T, 3)
    element_normals : (T, 3) exterior unit normals
    element_diameters : (T,) longest edge per element
    quadrature_points : (T, Q, 3)
    quadrature_weights : (T, Q), sums to ``element_areas`` per element
    """

    vertices: np.ndarray
    triangles: np.ndarray
    element_areas: np.ndarray
    element_centroids: np.ndarray
    element_normals: np.ndarray
    element_diameters: np.ndarray
    quadrature_points: np.ndarray
    quadrature_weights: np.ndarray

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_dof(self) -> int:
        """Number of scalar unknowns for a piecewise-constant vector density."""
        return 3 * self.n_elements

    def total_area(self) -> float:
        return float(self.element_areas.sum())

    def enclosed_volume(self) -> float:
        """Signed volume by the divergence theorem; positive when outward."""
        flux = np.einsum("ij,ij->i", self.element_centroids, self.element_normals)
        return float((self.element_areas * flux).sum() / 3.0)

    def content_hash(self) -> str:
        """SHA-256 over vertex and triangle data, for artifact headers."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype=np.int64).tobytes())
        return h.hexdigest()


def _connected_components(triangles: np.ndarray) -> np.ndarray:
    """Label triangles by edge-connectivity (multiple bodies are allowed)."""
    n = len(triangles)
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    edge_owner: dict[tuple[int, int], int] = {}
    for t, (a, b, c) in enumerate(triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            if key in edge_owner:
                ra, rb = find(edge_owner[key]), find(t)
                parent[ra] = rb
            else:
                edge_owner[key] = t
    return np.array([find(i) for i in range(n)])


def _validate_topology(vertices: np.ndarray, triangles: np.ndarray) -> None:
    n_vertices = len(vertices)
    if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= n_vertices:
        raise MeshFormatError("triangle indices out of range")
    # Closed + orientable: each undirected edge is shared by exactly two
    # triangles, traversed once in each direction.
    directed: set[tuple[int, int]] = set()
    for a, b, c in triangles:
        for e in ((a, b), (b, c), (c, a)):
            if e[0] == e[1]:
                raise MeshFormatError(f"degenerate edge in triangle ({a},{b},{c})")
            if e in directed:
                raise OrientationError(f"edge {e} traversed twice in the same direction")
            directed.add(e)
    for u, v in directed:
        if (v, u) not in directed:
            raise OrientationError(f"boundary edge ({u},{v}): surface is not closed")


def build_mesh(vertices: np.ndarray, triangles: np.ndarray) -> SurfaceMesh:
    """Construct a :class:`SurfaceMesh`, validating closedness and orientation.

    Inward-oriented components (negative divergence-theorem volume) are
    rejected rather than silently reoriented.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshFormatError("vertices must be (V, 3)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshFormatError("triangles must be (T, 3)")
    _validate_topology(vertices, triangles)

    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    cross = np.cross(p1 - p0, p2 - p0)
    doubled = np.linalg.norm(cross, axis=1)
    if np.any(doubled <= 0):
        raise MeshFormatError("zero-area triangle")
    areas = 0.5 * doubled
    normals = cross / doubled[:, None]
    centroids = (p0 + p1 + p2) / 3.0
    edge_len = np.stack([
        np.linalg.norm(p1 - p0, axis=1),
        np.linalg.norm(p2 - p1, axis=1),
        np.linalg.norm(p0 - p2, axis=1),
    ])
    diameters = edge_len.max(axis=0)

    qpts = (
        _QUAD_BARY[None, :, 0, None] * p0[:, None, :]
        + _QUAD_BARY[None, :, 1, None] * p1[:, None, :]
        + _QUAD_BARY[None, :, 2, None] * p2[:, None, :]
    )
    qwts = _QUAD_W[None, :] * areas[:, None]

    mesh = SurfaceMesh(
        vertices=_freeze(vertices),
        triangles=_freeze(triangles),
        element_areas=_freeze(areas),
        element_centroids=_freeze(centroids),
        element_normals=_freeze(normals),
        element_diameters=_freeze(diameters),
        quadrature_points=_freeze(qpts),
        quadrature_weights=_freeze(qwts),
    )

    labels = _connected_components(triangles)
    for lab in np.unique(labels):
        sel = labels == lab
        flux = np.einsum("ij,ij->i", centroids[sel], normals[sel])
        vol = (areas[sel] * flux).sum() / 3.0
        if vol <= 0:
            raise OrientationError(
                f"component {lab} has non-positive enclosed volume {vol:.3e}; "
                "normals must point outward")
    return mesh


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    r = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, r, 0], [1, r, 0], [-1, -r, 0], [1, -r, 0],
        [0, -1, r], [0, 1, r], [0, -1, -r], [0, 1, -r],
        [r, 0, -1], [r, 0, 1], [-r, 0, -1], [-r, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v, f


def make_unit_sphere_mesh(refinement_level: int) -> SurfaceMesh:
    """Icosphere approximation of the unit sphere with 20 * 4**level triangles.

    Midpoint subdivision with re-projection onto the sphere after every
    level, so the flat-panel area and volume converge geometrically to the
    analytic values.  Levels above :data:`MAX_REFINEMENT_LEVEL` are refused.
    """
    if refinement_level < 0 or int(refinement_level) != refinement_level:
        raise InvalidParameterError("refinement_level must be a nonnegative integer")
    if refinement_level > MAX_REFINEMENT_LEVEL:
        raise CapacityError(
            f"refinement level {refinement_level} exceeds cap {MAX_REFINEMENT_LEVEL} "
            f"({20 * 4 ** refinement_level} triangles)")
    verts, faces = _icosahedron()
    for _ in range(refinement_level):
        verts, faces = _subdivide_projected(verts, faces)
    return build_mesh(verts, faces)


def _subdivide_projected(verts: np.ndarray, faces: np.ndarray):
    verts = list(verts)
    cache: dict[tuple[int, int], int] = {}

    def midpoint(i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        if key not in cache:
            m = verts[i] + verts[j]
            m = m / np.linalg.norm(m)
            cache[key] = len(verts)
            verts.append(m)
        return cache[key]

    out = np.empty((4 * len(faces), 3), dtype=np.int64)
    for k, (a, b, c) in enumerate(faces):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out[4 * k: 4 * k + 4] = [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    return np.array(verts), out


def scale_translate(mesh: SurfaceMesh, frame: BodyFrame) -> SurfaceMesh:
    """Map a mesh by x -> delta * x + z.

    Areas scale by delta**2, normals are unchanged (the similarity preserves
    direction), and quadrature data transforms consistently.
    """
    d, z = frame.delta, frame.center
    return SurfaceMesh(
        vertices=_freeze(d * mesh.vertices + z),
        triangles=mesh.triangles,
        element_areas=_freeze(d * d * mesh.element_areas),
        element_centroids=_freeze(d * mesh.element_centroids + z),
        element_normals=mesh.element_normals,
        element_diameters=_freeze(d * mesh.element_diameters),
        quadrature_points=_freeze(d * mesh.quadrature_points + z),
        quadrature_weights=_freeze(d * d * mesh.quadrature_weights),
    )


def write_off(mesh: SurfaceMesh, path) -> None:
    """Write the mesh in ASCII OFF format (round-trip exact)."""
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.triangles)} 0"]
    for v in mesh.vertices:
        lines.append(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.triangles:
        lines.append(f"3 {t[0]} {t[1]} {t[2]}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_off(path) -> SurfaceMesh:
    """Read an ASCII OFF file and validate it as a closed outward surface."""
    with open(path, encoding="ascii") as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshFormatError("missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # header token + counts line (nv nf ne)
        verts = np.array(tokens[pos: pos + 3 * nv], dtype=float).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise MeshFormatError(f"only triangular faces supported, got {k}-gon")
            faces.append([int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])])
            pos += 4
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"malformed OFF file: {exc}") from exc
    return build_mesh(verts, np.array(faces, dtype=np.int64))
