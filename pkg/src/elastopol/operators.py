"""Dense boundary operators of the Lame layer potentials on a surface mesh.

Discretisation: piecewise-constant vector densities per element, Galerkin
pairing normalised by the target area.  Unknowns are interleaved,
dof = 3 * element + component.

Quadrature strategy, shared by assembly and off-surface evaluation:

* far pairs: one outer point (the target centroid) against the per-element
  reference rule,
* pairs inside the Galerkin zone (centroid distance below six local
  diameters): full 6-point outer rule over the target panel, inner rule on a
  4-fold-refined source with depth graded by the outer-point distance; the
  outer integral removes the midpoint-sampling error across the strong
  near-diagonal kernel variation, which is what makes the area-weighted
  column/row sums (the constant identities) accurate,
* self element: exact flat-panel integrals per outer point - the 1/r part of
  the Kelvin kernel analytically (vertex-split edge formula), the
  directional part by a Duffy transform, and the principal value of the
  traction kernels by the polar angular-log formula,
* any frequency: static part plus the smooth difference kernel, integrated
  with the plain rule (the difference is continuous across the diagonal).

Operator archive format (``save_operator``/``load_operator``): a single
UTF-8 JSON header line ``{"magic": "elastopol-operator", "version": 1,
"kind": ..., "omega": [re, im], "lambda": ..., "mu": ..., "mesh_hash": ...,
"n": ...}`` terminated by a newline, followed immediately by the raw
row-major complex128 bytes of the (3n x 3n) matrix.
"""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, MeshFormatError, NearFieldError
from .geometry import _QUAD_BARY, _QUAD_W, SurfaceMesh
from .kernels import (
    LameParams,
    gamma_matrix,
    lambda_gamma_pair,
    lambda_traction_matrix,
    traction_matrix,
)

OPERATOR_KINDS = ("S", "K", "Kstar", "D", "RB", "IB", "PB", "GB")

_ARCHIVE_MAGIC = "elastopol-operator"

# Pairs closer than this multiple of the local diameter get graded inner
# refinement; inside GALERKIN_ZONE_FACTOR diameters the outer integral uses
# the full panel rule instead of the centroid.
NEAR_PAIR_FACTOR = 2.0
GALERKIN_ZONE_FACTOR = 6.0
# Evaluation targets closer than this multiple of the local mesh size to the
# surface are refused by the guarded evaluators.
NEAR_FIELD_GUARD = 2.0

_GAUSS_N = 8
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(_GAUSS_N)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W

_EYE3 = np.eye(3)


@dataclass(frozen=True, eq=False)
class Density:
    """Piecewise-constant vector density on a mesh (one 3-vector per element)."""

    values: np.ndarray
    mesh: SurfaceMesh

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.mesh.n_elements, 3):
            raise DimensionMismatchError(
                f"density shape {v.shape} does not match mesh "
                f"({self.mesh.n_elements} elements)")
        if not np.all(np.isfinite(v)):
            raise DimensionMismatchError("density has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def surface_integral(self) -> np.ndarray:
        """Integral of the density over the surface (a 3-vector)."""
        return np.einsum("i,ij->j", self.mesh.element_areas, self.values)

    def norm(self) -> float:
        """Area-weighted L2 norm."""
        return float(np.sqrt(np.einsum(
            "i,ij->", self.mesh.element_areas, np.abs(self.values) ** 2)))


def constant_density(mesh: SurfaceMesh, vector) -> Density:
    v = np.asarray(vector, dtype=complex)
    return Density(np.tile(v, (mesh.n_elements, 1)), mesh)


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    """Dense matrix acting on flattened densities of one mesh."""

    matrix: np.ndarray
    kind: str
    omega: complex
    mesh: SurfaceMesh
    params: LameParams

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        n = self.mesh.n_dof
        if self.matrix.shape != (n, n):
            raise DimensionMismatchError(
                f"matrix shape {self.matrix.shape} does not match mesh dof {n}")

    def apply(self, density: Density) -> Density:
        if density.mesh is not self.mesh:
            raise DimensionMismatchError("density lives on a different mesh")
        out = self.matrix @ density.flat
        return Density(out.reshape(-1, 3), self.mesh)


def area_weights(mesh: SurfaceMesh) -> np.ndarray:
    """Diagonal of the area pairing, one weight per scalar dof."""
    return np.repeat(mesh.element_areas, 3)


# ---------------------------------------------------------------------------
# kernels and quadrature helpers
# ---------------------------------------------------------------------------

def _kernel_values(kind, z, nu_target, nu_source, omega, p, diff):
    """Kernel matrices for target-source displacement z = x - y."""
    if kind == "S":
        return gamma_matrix(z, omega, p, subtract_static=diff)
    if kind == "Kstar":
        return traction_matrix(z, nu_target, omega, p, subtract_static=diff)
    if kind in ("K", "D"):
        # double-layer kernel: traction at the source point of the columns
        # of the (even) kernel, transposed
        t = traction_matrix(-z, nu_source, omega, p, subtract_static=diff)
        return np.swapaxes(t, -1, -2)
    raise ValueError(f"no kernel for kind {kind!r}")


_MAX_UNIFORM_DEPTH = 5

# per-mesh cache of uniformly refined per-element rules, keyed by depth
_refined_rule_cache: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _refined_rule(mesh: SurfaceMesh, depth: int):
    """Reference rule on every element after ``depth`` 4-fold refinements."""
    per_mesh = _refined_rule_cache.setdefault(mesh, {})
    if depth in per_mesh:
        return per_mesh[depth]
    corners = [mesh.vertices[mesh.triangles]]
    for _ in range(depth):
        nxt = []
        for t in corners:
            a, b, c = t[:, 0], t[:, 1], t[:, 2]
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt.append(np.stack([a, ab, ca], axis=1))
            nxt.append(np.stack([ab, b, bc], axis=1))
            nxt.append(np.stack([ca, bc, c], axis=1))
            nxt.append(np.stack([ab, bc, ca], axis=1))
        corners = nxt
    pts = []
    wts = []
    for t in corners:
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        q = (_QUAD_BARY[None, :, 0, None] * a[:, None, :]
             + _QUAD_BARY[None, :, 1, None] * b[:, None, :]
             + _QUAD_BARY[None, :, 2, None] * c[:, None, :])
        pts.append(q)
        wts.append(_QUAD_W[None, :] * area[:, None])
    rule = (np.concatenate(pts, axis=1), np.concatenate(wts, axis=1))
    per_mesh[depth] = rule
    return rule


def _subdivision_depths(dist, diam):
    """Refinement depths so leaf size stays below ~0.4 of the distance to
    the closest part of the source panel (conservatively dist - 0.6 diam)."""
    eff = np.maximum(np.asarray(dist) - 0.6 * diam, 0.12 * diam)
    d = np.ceil(np.log2(np.maximum(diam / (0.4 * eff), 1.0)))
    return np.clip(d.astype(int), 0, _MAX_UNIFORM_DEPTH)


def _adaptive_element_quadrature(mesh, j, target, ratio=0.5, max_depth=12):
    """Subdivide element j until leaves are small relative to their distance
    from the target, then apply the reference rule on each leaf.

    Used when the target sits within a fraction of the element itself (the
    off-surface jump checks); refinement concentrates near the projection."""
    stack = [(mesh.vertices[mesh.triangles[j][0]],
              mesh.vertices[mesh.triangles[j][1]],
              mesh.vertices[mesh.triangles[j][2]], 0)]
    pts = []
    wts = []
    while stack:
        a, b, c, depth = stack.pop()
        centroid = (a + b + c) / 3
        diam = max(np.linalg.norm(b - a), np.linalg.norm(c - b),
                   np.linalg.norm(a - c))
        dist = np.linalg.norm(target - centroid)
        if depth < max_depth and diam > ratio * dist:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            stack += [(a, ab, ca, depth + 1), (ab, b, bc, depth + 1),
                      (ca, bc, c, depth + 1), (ab, bc, ca, depth + 1)]
            continue
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        q = (_QUAD_BARY[:, 0, None] * a + _QUAD_BARY[:, 1, None] * b
             + _QUAD_BARY[:, 2, None] * c)
        pts.append(q)
        wts.append(_QUAD_W * area)
    return np.concatenate(pts), np.concatenate(wts)


def _graded_blocks(mesh, x, js, nu_t, kind, omega, p):
    """Kernel blocks of source elements ``js`` seen from the single point x,
    with distance-graded inner refinement (batched by depth)."""
    out = np.zeros((len(js), 3, 3), dtype=complex if omega != 0 else float)
    dist = np.linalg.norm(mesh.element_centroids[js] - x[None, :], axis=1)
    very_close = dist < 0.7 * mesh.element_diameters[js]
    depths = _subdivision_depths(dist, mesh.element_diameters[js])
    for d in np.unique(depths[~very_close]):
        sel = (~very_close) & (depths == d)
        rp, rw = _refined_rule(mesh, int(d))
        pts = rp[js[sel]]
        wts = rw[js[sel]]
        z = x[None, None, :] - pts
        nrm = mesh.element_normals[js[sel]][:, None, :]
        vals = _kernel_values(kind, z, nu_t, nrm, omega, p, False)
        out[sel] = np.einsum("nq,nqij->nij", wts, vals)
    for idx in np.flatnonzero(very_close):
        j = js[idx]
        pts, wts = _adaptive_element_quadrature(mesh, j, x)
        z = x[None, :] - pts
        nrm = np.broadcast_to(mesh.element_normals[j], z.shape)
        vals = _kernel_values(kind, z, nu_t, nrm, omega, p, False)
        out[idx] = np.einsum("q,qij->ij", wts, vals)
    return out


# ---------------------------------------------------------------------------
# exact flat-panel integrals (self blocks)
# ---------------------------------------------------------------------------

def _triangle_inverse_r_integral(c, v0, v1, v2):
    """Closed-form integral of 1/|c - y| over the flat triangle, c inside."""
    total = 0.0
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        e = b - a
        e = e / np.linalg.norm(e)
        foot = a + np.dot(c - a, e) * e
        d = np.linalg.norm(c - foot)
        if d < 1e-14:
            continue
        s_a = np.dot(a - foot, e)
        s_b = np.dot(b - foot, e)
        l_a = np.linalg.norm(a - c)
        l_b = np.linalg.norm(b - c)
        total += d * np.log((l_b + s_b) / (l_a + s_a))
    return total


def _duffy_rule(c, v0, v1, v2):
    """Quadrature for weakly singular kernels over a triangle with the
    singularity at the interior point c: vertex split plus Duffy transform."""
    pts = []
    wts = []
    u = _GAUSS_X[:, None]
    v = _GAUSS_X[None, :]
    w2 = _GAUSS_W[:, None] * _GAUSS_W[None, :]
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        twice_area = np.linalg.norm(np.cross(a - c, b - a))
        y = (c[None, None, :]
             + u[..., None] * (a - c)[None, None, :]
             + (u * v)[..., None] * (b - a)[None, None, :])
        pts.append(y.reshape(-1, 3))
        wts.append((w2 * u * twice_area).reshape(-1))
    return np.concatenate(pts), np.concatenate(wts)


def _kelvin_panel_integral(tri, x, p: LameParams) -> np.ndarray:
    """Integral of the Kelvin kernel over a flat triangle, singular point x
    strictly inside: analytic 1/r part plus Duffy for the directional part."""
    v0, v1, v2 = tri
    inv_r = _triangle_inverse_r_integral(x, v0, v1, v2)
    pts, wts = _duffy_rule(x, v0, v1, v2)
    z = x[None, :] - pts
    r = np.linalg.norm(z, axis=1)
    zz = np.einsum("qi,qj->qij", z, z) / r[:, None, None] ** 3
    directional = np.einsum("q,qij->ij", wts, zz)
    return (-p.gamma1 / (4 * np.pi) * inv_r * _EYE3
            - p.gamma2 / (4 * np.pi) * directional)


_PV_THETA_N = 256


def _panel_pv_traction(tri, x, nu, p: LameParams) -> np.ndarray:
    """Principal value of the static traction kernel over a flat triangle,
    singular point x strictly inside.

    The kernel is odd and homogeneous of degree -2, so in polar coordinates
    around x the p.v. reduces to -integral of T(d(theta)) log R(theta) over
    the unit circle, with R the distance from x to the triangle boundary
    (the log(eps) term cancels because the angular average of an odd kernel
    vanishes).  The integrand is periodic and piecewise smooth.
    """
    e1 = tri[1] - tri[0]
    e1 = e1 - np.dot(e1, nu) * nu
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nu, e1)

    theta = np.linspace(0.0, 2 * np.pi, _PV_THETA_N, endpoint=False)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    dirs = np.outer(cos_t, e1) + np.outer(sin_t, e2)

    verts2 = np.stack([[(v - x) @ e1, (v - x) @ e2] for v in tri])
    radius = np.full(len(theta), np.inf)
    for k in range(3):
        a = verts2[k]
        edge = verts2[(k + 1) % 3] - a
        denom = cos_t * edge[1] - sin_t * edge[0]
        ok = np.abs(denom) > 1e-14
        t = np.where(ok, (a[0] * edge[1] - a[1] * edge[0]) / np.where(ok, denom, 1.0),
                     np.inf)
        if abs(edge[1]) > abs(edge[0]):
            s = np.where(ok & (t > 0), (sin_t * t - a[1]) / edge[1], -1.0)
        else:
            s = np.where(ok & (t > 0), (cos_t * t - a[0]) / edge[0], -1.0)
        hit = ok & (t > 0) & (s >= -1e-12) & (s <= 1 + 1e-12)
        radius = np.where(hit, np.minimum(radius, t), radius)
    tvals = traction_matrix(dirs, nu, 0.0, p)
    return -np.einsum("q,qij->ij", np.log(radius), tvals) * (2 * np.pi / _PV_THETA_N)


def _self_block(mesh, i, kind, p):
    """Galerkin self block: outer reference rule, exact inner integral per
    outer point.  The double-layer panel kernel is minus the transpose of
    the traction kernel on a flat panel."""
    tri = mesh.vertices[mesh.triangles[i]]
    nu = mesh.element_normals[i]
    out = np.zeros((3, 3))
    for bary, w in zip(_QUAD_BARY, _QUAD_W):
        x = bary[0] * tri[0] + bary[1] * tri[1] + bary[2] * tri[2]
        if kind == "S":
            out += w * _kelvin_panel_integral(tri, x, p)
        else:
            pv = _panel_pv_traction(tri, x, nu, p)
            out += w * (pv if kind == "Kstar" else -pv.T)
    return out


# ---------------------------------------------------------------------------
# row-level assembly
# ---------------------------------------------------------------------------

def _plain_rows(mesh, omega, p, kind, rows, diff, row_points=None, row_normals=None):
    """Plain-rule row blocks for the given target elements (no corrections)."""
    src_pts = mesh.quadrature_points.reshape(-1, 3)
    src_wts = mesh.quadrature_weights.reshape(-1)
    src_nrm = np.repeat(mesh.element_normals, mesh.quadrature_points.shape[1], axis=0)
    targets = mesh.element_centroids[rows] if row_points is None else row_points
    normals = mesh.element_normals[rows] if row_normals is None else row_normals
    n_src = mesh.n_elements
    q = mesh.quadrature_points.shape[1]

    z = targets[:, None, :] - src_pts[None, :, :]
    vals = _kernel_values(kind, z, normals[:, None, :], src_nrm[None, :, :],
                          omega, p, diff)
    vals = vals * src_wts[None, :, None, None]
    blocks = vals.reshape(len(targets), n_src, q, 3, 3).sum(axis=2)
    return blocks.transpose(0, 2, 1, 3).reshape(3 * len(targets), 3 * n_src)


def _galerkin_zone(mesh, i):
    """Source elements inside the Galerkin zone of target element i."""
    x = mesh.element_centroids[i]
    dist = np.linalg.norm(mesh.element_centroids - x[None, :], axis=1)
    js = np.flatnonzero(
        dist < GALERKIN_ZONE_FACTOR * np.maximum(mesh.element_diameters,
                                                 mesh.element_diameters[i]))
    return js[js != i]


def assemble_rows(mesh, omega, p, kind, rows):
    """Assemble operator rows (target elements ``rows``) with the full outer
    rule in the Galerkin zone and exact self blocks.

    Used both for dense assembly and for streaming applications of
    operators too large to hold.
    """
    rows = np.asarray(rows, dtype=int)
    if kind not in ("S", "Kstar", "K"):
        raise ValueError("row assembly supports kinds S, Kstar, K")
    block = _plain_rows(mesh, 0.0, p, kind, rows, diff=False)

    outer_w = _QUAD_W  # reference weights sum to 1 (area-normalised Galerkin)
    for local, i in enumerate(rows):
        nu_t = mesh.element_normals[i]
        js = _galerkin_zone(mesh, i)
        acc = np.zeros((len(js), 3, 3))
        for o in range(len(outer_w)):
            x = mesh.quadrature_points[i, o]
            acc += outer_w[o] * _graded_blocks(mesh, x, js, nu_t, kind, 0.0, p).real
        view = block.reshape(len(rows), 3, mesh.n_elements, 3)
        view[local, :, js, :] = acc
        view[local, :, i, :] = _self_block(mesh, i, kind, p)
    if omega != 0:
        block = block + _plain_rows(mesh, omega, p, kind, rows, diff=True)
    return block


def _assemble_dense(mesh, omega, p, kind, chunk=96):
    n = mesh.n_elements
    dtype = float if omega == 0 else complex
    out = np.empty((3 * n, 3 * n), dtype=dtype)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        out[3 * start:3 * start + 3 * len(rows), :] = assemble_rows(
            mesh, omega, p, kind, rows)
    return out


def _assemble_dense_diff(mesh, omega, p, kind, chunk=96):
    n = mesh.n_elements
    out = np.empty((3 * n, 3 * n), dtype=complex)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        out[3 * start:3 * start + 3 * len(rows), :] = _plain_rows(
            mesh, omega, p, kind, rows, diff=True)
    return out


def assemble_single_layer(mesh: SurfaceMesh, omega, p: LameParams) -> BoundaryOperator:
    """Single-layer operator; at omega = 0 the negated area-weighted matrix
    is symmetric positive definite (checked by the spectral module)."""
    return BoundaryOperator(_assemble_dense(mesh, omega, p, "S"), "S",
                            complex(omega), mesh, p)


def assemble_np_adjoint(mesh: SurfaceMesh, omega, p: LameParams,
                        static_matrix: np.ndarray | None = None) -> BoundaryOperator:
    """Neumann-Poincare operator K*: traction jump of the single layer.

    Blocks are Galerkin quadrature of the target-traction kernel with exact
    flat-panel principal values on the diagonal; for omega != 0 the smooth
    difference kernel is added by plain quadrature.  ``static_matrix`` may
    pass a previously assembled omega = 0 matrix to skip the singular part.
    """
    if static_matrix is None:
        mat = _assemble_dense(mesh, omega, p, "Kstar")
    else:
        mat = static_matrix.copy() if omega == 0 else \
            static_matrix + _assemble_dense_diff(mesh, omega, p, "Kstar")
    return BoundaryOperator(mat, "Kstar", complex(omega), mesh, p)


def assemble_np(mesh: SurfaceMesh, omega, p: LameParams,
                static_matrix: np.ndarray | None = None) -> BoundaryOperator:
    """Boundary double layer K, assembled from the source-traction kernel.

    Constants are reproduced with eigenvalue 1/2 up to a quadrature-grade
    residual that shrinks under refinement (the faceted-surface Gauss
    identity holds exactly in the continuum), and K agrees with the
    area-weighted adjoint of K* to discretisation accuracy.
    ``static_matrix`` may pass a previously assembled omega = 0 K matrix.
    """
    if static_matrix is None:
        mat = _assemble_dense(mesh, omega, p, "K")
    else:
        mat = static_matrix.copy() if omega == 0 else \
            static_matrix + _assemble_dense_diff(mesh, omega, p, "K")
    return BoundaryOperator(mat, "K", complex(omega), mesh, p)


def weighted_adjoint_matrix(matrix: np.ndarray, mesh: SurfaceMesh) -> np.ndarray:
    """Adjoint under the area-weighted pairing: W^-1 M^T W."""
    w = area_weights(mesh)
    return (matrix.T * w[None, :]) / w[:, None]


# ---------------------------------------------------------------------------
# off-surface evaluation
# ---------------------------------------------------------------------------

def _potential(mesh, density, omega, p, targets, kind, target_normals=None):
    """Layer potential at arbitrary points, with graded near quadrature."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    out = np.zeros((len(targets), 3), dtype=complex)
    src_pts = mesh.quadrature_points.reshape(-1, 3)
    src_wts = mesh.quadrature_weights.reshape(-1)
    q = mesh.quadrature_points.shape[1]
    src_nrm = np.repeat(mesh.element_normals, q, axis=0)
    src_val = np.repeat(density.values, q, axis=0) * src_wts[:, None]

    for t, x in enumerate(targets):
        nu_t = None if target_normals is None else target_normals[t]
        z = x[None, :] - src_pts
        vals = _kernel_values(kind, z, nu_t, src_nrm, omega, p, False)
        dist = np.linalg.norm(mesh.element_centroids - x[None, :], axis=1)
        js = np.flatnonzero(dist < NEAR_PAIR_FACTOR * mesh.element_diameters)
        mask_q = np.repeat(~np.isin(np.arange(mesh.n_elements), js), q)
        out[t] = np.einsum("qij,qj->i", vals[mask_q], src_val[mask_q])
        if len(js):
            blocks = _graded_blocks(mesh, x, js, nu_t, kind, omega, p)
            out[t] += np.einsum("nij,nj->i", blocks, density.values[js])
    return out


def _near_field_guard(mesh, targets):
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    for x in targets:
        dist = np.linalg.norm(mesh.element_centroids - x[None, :], axis=1)
        j = int(np.argmin(dist))
        if dist[j] < NEAR_FIELD_GUARD * mesh.element_diameters[j]:
            raise NearFieldError(
                f"target {x} is {dist[j]:.3e} from the surface "
                f"(< {NEAR_FIELD_GUARD} local mesh sizes)", distance=float(dist[j]))


def evaluate_single_layer(mesh, density: Density, omega, p: LameParams,
                          targets) -> np.ndarray:
    """Single-layer potential at points farther than the near-field guard.

    Near-surface evaluation raises :class:`NearFieldError` (carrying the
    offending distance); the unguarded evaluator backs the internal
    jump-relation and transmission checks instead.
    """
    _near_field_guard(mesh, targets)
    return _potential(mesh, density, omega, p, targets, "S")


def evaluate_single_layer_unchecked(mesh, density, omega, p, targets):
    """Single-layer evaluation without the near-field guard."""
    return _potential(mesh, density, omega, p, targets, "S")


def evaluate_double_layer(mesh, density, omega, p, targets):
    """Double-layer potential (graded near quadrature, unguarded)."""
    return _potential(mesh, density, omega, p, targets, "D")


def evaluate_single_layer_traction(mesh, density, omega, p, targets, normals):
    """Traction of the single layer at off-surface points.

    ``normals`` sets the conormal direction at each target (typically the
    normal of the surface point the target is offset from).
    """
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    return _potential(mesh, density, omega, p, targets, "Kstar",
                      target_normals=normals)


# ---------------------------------------------------------------------------
# expansion operators
# ---------------------------------------------------------------------------

def apply_RB(density: Density, p: LameParams) -> np.ndarray:
    """First-order expansion operator: gamma3 times the density integral."""
    return p.gamma3 * density.surface_integral()


def apply_IB(density: Density, p: LameParams, targets=None):
    """Second-order expansion operator with the (smooth) Lambda kernel.

    With ``targets=None`` evaluates at the element centroids and returns a
    :class:`Density`; otherwise returns plain per-target vectors.
    """
    mesh = density.mesh
    on_surface = targets is None
    pts = mesh.element_centroids if on_surface else np.atleast_2d(targets)
    src = mesh.quadrature_points.reshape(-1, 3)
    wts = mesh.quadrature_weights.reshape(-1)
    q = mesh.quadrature_points.shape[1]
    val = np.repeat(density.values, q, axis=0) * wts[:, None]
    a, b = lambda_gamma_pair(p)
    out = np.empty((len(pts), 3), dtype=complex)
    for t, x in enumerate(pts):
        z = x[None, :] - src
        r = np.linalg.norm(z, axis=1)
        ok = r > 0
        lam = np.zeros((len(src), 3, 3))
        lam[ok] = (a * r[ok, None, None] * _EYE3
                   + b / r[ok, None, None] * np.einsum("qi,qj->qij", z[ok], z[ok]))
        out[t] = np.einsum("qij,qj->i", lam, val)
    return Density(out, mesh) if on_surface else out


def apply_PB(density: Density, p: LameParams) -> Density:
    """Traction of the Lambda-kernel potential on the surface.

    The kernel is bounded (direction-dependent at zero separation), so the
    plain rule is used everywhere including the self element.
    """
    mesh = density.mesh
    src = mesh.quadrature_points.reshape(-1, 3)
    wts = mesh.quadrature_weights.reshape(-1)
    q = mesh.quadrature_points.shape[1]
    val = np.repeat(density.values, q, axis=0) * wts[:, None]
    out = np.empty((mesh.n_elements, 3), dtype=complex)
    for i in range(mesh.n_elements):
        z = mesh.element_centroids[i][None, :] - src
        t = lambda_traction_matrix(z, mesh.element_normals[i], p)
        out[i] = np.einsum("qij,qj->i", t, val)
    return Density(out, mesh)


# ---------------------------------------------------------------------------
# archive
# ---------------------------------------------------------------------------

def save_operator(op: BoundaryOperator, path) -> None:
    header = {
        "magic": _ARCHIVE_MAGIC,
        "version": 1,
        "kind": op.kind,
        "omega": [float(np.real(op.omega)), float(np.imag(op.omega))],
        "lambda": op.params.lam,
        "mu": op.params.mu,
        "mesh_hash": op.mesh.content_hash(),
        "n": op.mesh.n_elements,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(op.matrix, dtype=np.complex128).tobytes())


def load_operator(path, mesh: SurfaceMesh, p: LameParams) -> BoundaryOperator:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("magic") != _ARCHIVE_MAGIC:
            raise MeshFormatError("not an operator archive")
        if header["mesh_hash"] != mesh.content_hash():
            raise DimensionMismatchError(
                "operator archive was assembled on a different mesh")
        n = 3 * header["n"]
        data = np.frombuffer(fh.read(), dtype=np.complex128).reshape(n, n).copy()
    omega = complex(header["omega"][0], header["omega"][1])
    return BoundaryOperator(data, header["kind"], omega, mesh, p)
