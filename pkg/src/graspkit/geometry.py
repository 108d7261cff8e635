"""Geometric kernels: nearest neighbours, farthest point sampling, point-in-mesh
tests, point-to-mesh distance and voxelized intersection volume.

Point clouds are plain ``(N, 3)`` float64 arrays in meters.  Meshes are
:class:`TriangleMesh` instances.  Every function here is pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

# Slightly tilted so rays from grid-aligned points do not graze axis-aligned edges.
RAY_DIRECTION = np.array([1.0, 1e-4, 2e-4])

# Upper bound on the number of float64 entries materialized per brute-force chunk.
_CHUNK_ENTRIES = 1 << 22


class GeometryError(ValueError):
    pass


def as_points(points, name="points") -> np.ndarray:
    """Validate and return an ``(N, 3)`` float64 array with N >= 1."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"{name} must have shape (N, 3), got {arr.shape}")
    if arr.shape[0] == 0:
        raise GeometryError("empty point cloud")
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"{name} contains non-finite coordinates")
    return arr


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise GeometryError("Aabb min must be <= max componentwise")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of(cls, points) -> "Aabb":
        pts = as_points(points)
        return cls(pts.min(axis=0), pts.max(axis=0))

    def corners(self) -> np.ndarray:
        """The eight corners, x varying fastest."""
        lo, hi = self.min, self.max
        return np.array(
            [[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]
             for k in (0, 1) for j in (0, 1) for i in (0, 1)]
        )

    def intersection(self, other: "Aabb") -> "Aabb | None":
        lo = np.maximum(self.min, other.min)
        hi = np.minimum(self.max, other.max)
        if np.any(lo > hi):
            return None
        return Aabb(lo, hi)


class TriangleMesh:
    """Indexed triangle mesh.

    Faces are validated on construction: indices must be in range and each
    face must reference three distinct vertices.
    """

    def __init__(self, vertices, faces):
        self.vertices = as_points(vertices, "vertices")
        faces = np.asarray(faces)
        if faces.size == 0:
            raise GeometryError("mesh has no faces")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise GeometryError(f"faces must have shape (F, 3), got {faces.shape}")
        if not np.issubdtype(faces.dtype, np.integer):
            raise GeometryError("face indices must be integers")
        faces = faces.astype(np.int64)
        if faces.min() < 0 or faces.max() >= len(self.vertices):
            raise GeometryError("face index out of range")
        if np.any((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                  | (faces[:, 0] == faces[:, 2])):
            raise GeometryError("degenerate face (repeated vertex index)")
        self.faces = faces
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self._watertight = None

    def __repr__(self):
        return f"TriangleMesh(n_vertices={len(self.vertices)}, n_faces={len(self.faces)})"

    @property
    def is_watertight(self) -> bool:
        """True when every undirected edge is shared by exactly two faces."""
        if self._watertight is None:
            f = self.faces
            edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
            edges.sort(axis=1)
            _, counts = np.unique(edges, axis=0, return_counts=True)
            self._watertight = bool(np.all(counts == 2))
        return self._watertight

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def aabb(self) -> Aabb:
        return Aabb.of(self.vertices)

    def transformed(self, rotation, translation) -> "TriangleMesh":
        """Rigidly transformed copy: ``R @ v + t``."""
        R = np.asarray(rotation, dtype=np.float64)
        t = np.asarray(translation, dtype=np.float64)
        return TriangleMesh(self.vertices @ R.T + t, self.faces)

    def volume(self) -> float:
        """Enclosed volume in m^3 (divergence theorem; needs consistent winding)."""
        tri = self.triangles
        return float(abs(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum()) / 6.0)


# ---------------------------------------------------------------------------
# nearest neighbours and sampling


def nearest_vertices(queries, cloud):
    """Vectorized :func:`nearest_vertex` over many queries.

    Returns ``(indices, displacements)`` with ``displacements = cloud[idx] - q``.
    Ties resolve to the lowest index (``argmin`` keeps the first minimum).
    """
    cloud = as_points(cloud, "cloud")
    queries = as_points(queries, "queries")
    n = len(cloud)
    chunk = max(1, _CHUNK_ENTRIES // (3 * n))
    idx = np.empty(len(queries), dtype=np.int64)
    for start in range(0, len(queries), chunk):
        q = queries[start:start + chunk]
        diff = cloud[None, :, :] - q[:, None, :]
        d2 = np.einsum("qnk,qnk->qn", diff, diff)
        idx[start:start + chunk] = np.argmin(d2, axis=1)
    return idx, cloud[idx] - queries


def nearest_vertex(query, cloud):
    """Index of the cloud point closest to ``query`` and the displacement to it."""
    idx, disp = nearest_vertices(np.asarray(query, dtype=np.float64).reshape(1, 3), cloud)
    return int(idx[0]), disp[0]


def farthest_point_sampling(cloud, k: int, start: int = 0) -> np.ndarray:
    """Greedy max-min subset selection; the first index is ``start``.

    Each subsequent pick maximizes the distance to the already-selected set;
    ties go to the lowest index.  Returned in selection order.
    """
    pts = as_points(cloud, "cloud")
    n = len(pts)
    if not 1 <= k <= n:
        raise GeometryError(f"k must lie in [1, {n}], got {k}")
    if not 0 <= start < n:
        raise GeometryError(f"start index {start} out of range for {n} points")
    selected = np.empty(k, dtype=np.int64)
    selected[0] = start
    d2 = np.sum((pts - pts[start]) ** 2, axis=1)
    for j in range(1, k):
        nxt = int(np.argmax(d2))
        selected[j] = nxt
        d2 = np.minimum(d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return selected


# ---------------------------------------------------------------------------
# point-in-mesh by ray parity


def _ray_basis(direction):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return d, e1, e2


def _orient2d(a, b, p):
    return (b[..., 0] - a[..., 0]) * (p[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (p[..., 0] - a[..., 0])


class _RayIndex:
    """Per-mesh acceleration structure for parity ray casting.

    Triangles are projected onto the plane orthogonal to the ray direction
    and binned into a uniform 2D grid; a query only tests triangles whose
    projected bounding box covers its cell.  The grid depends on the mesh
    alone, so the verdict for a point never depends on the other queries.
    """

    def __init__(self, mesh: TriangleMesh, direction=RAY_DIRECTION):
        self.mesh = mesh
        self.d, e1, e2 = _ray_basis(direction)
        self.proj = np.stack([e1, e2], axis=1)  # (3, 2)
        verts_uv = mesh.vertices @ self.proj
        self.verts_uv = verts_uv
        faces = mesh.faces
        tri_uv = verts_uv[faces]  # (F, 3, 2)
        lo = tri_uv.min(axis=1)
        hi = tri_uv.max(axis=1)
        self.origin = lo.min(axis=0)
        ext = np.median(np.max(hi - lo, axis=1))
        span = np.max(hi.max(axis=0) - self.origin)
        self.cell = max(ext, span / 512.0, 1e-12)
        i0, j0 = self._cell_of(lo)
        i1, j1 = self._cell_of(hi)
        ni, nj = i1 - i0 + 1, j1 - j0 + 1
        counts = ni * nj
        tri_ids = np.repeat(np.arange(len(faces)), counts)
        offset = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        ci = i0[tri_ids] + offset // nj[tri_ids]
        cj = j0[tri_ids] + offset % nj[tri_ids]
        self.ncols = int(cj.max()) + 2
        keys = ci * self.ncols + cj
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.tri_ids = tri_ids[order]
        self.max_key = int(ci.max()) * self.ncols + self.ncols

    def _cell_of(self, uv):
        ij = np.floor((uv - self.origin) / self.cell).astype(np.int64)
        return ij[..., 0], ij[..., 1]

    def _candidates(self, puv):
        """(query index, triangle index) pairs whose cells match, in bounded chunks."""
        ci, cj = self._cell_of(puv)
        valid = (ci >= 0) & (cj >= 0) & (cj < self.ncols)
        keys = np.where(valid, ci * self.ncols + cj, -1)
        lo = np.searchsorted(self.keys, keys, side="left")
        hi = np.searchsorted(self.keys, keys, side="right")
        counts = np.where(valid, hi - lo, 0)
        total = int(counts.sum())
        if total == 0:
            return
        qidx_all = np.repeat(np.arange(len(puv)), counts)
        start_all = np.repeat(lo, counts) + (
            np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts))
        step = _CHUNK_ENTRIES // 8
        for s in range(0, total, step):
            yield qidx_all[s:s + step], self.tri_ids[start_all[s:s + step]]

    def inside(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        puv = pts @ self.proj
        hits = np.zeros(len(pts), dtype=np.int64)
        for pidx, tidx in self._candidates(puv):
            covered, depth = self._crossings(puv[pidx], tidx)
            hit = covered & (depth > pts[pidx] @ self.d)
            hits += np.bincount(pidx[hit], minlength=len(pts))
        return (hits % 2) == 1

    def column_crossings(self, puv):
        """Depths along the ray direction where lines through ``puv`` cross the surface.

        Returns ``(column index, depth)`` arrays; a point on column ``c`` at
        depth ``z`` is inside iff an odd number of crossings have depth > z.
        """
        puv = np.asarray(puv, dtype=np.float64).reshape(-1, 2)
        cols, depths = [], []
        for cidx, tidx in self._candidates(puv):
            covered, depth = self._crossings(puv[cidx], tidx)
            cols.append(cidx[covered])
            depths.append(depth[covered])
        if not cols:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(cols), np.concatenate(depths)

    def _crossings(self, puv, tidx):
        """Whether each projected point lies in its triangle, and the plane depth there."""
        faces = self.mesh.faces[tidx]
        inside = np.ones(len(tidx), dtype=bool)
        # Edge functions are evaluated with the lower vertex index first so a
        # shared edge yields exactly negated values in both adjacent faces.
        a_uv = self.verts_uv[faces[:, 0]]
        b_uv = self.verts_uv[faces[:, 1]]
        c_uv = self.verts_uv[faces[:, 2]]
        area = _orient2d(a_uv, b_uv, c_uv)
        orient = np.sign(area)
        inside &= orient != 0
        for k0, k1 in ((0, 1), (1, 2), (2, 0)):
            i, j = faces[:, k0], faces[:, k1]
            lo = np.minimum(i, j)
            hi = np.maximum(i, j)
            flip = np.where(i == lo, 1.0, -1.0)
            w = _orient2d(self.verts_uv[lo], self.verts_uv[hi], puv) * flip * orient
            e = (self.verts_uv[hi] - self.verts_uv[lo]) * (flip * orient)[:, None]
            # top-left tie rule for points exactly on a projected edge
            top_left = (e[:, 1] < 0) | ((e[:, 1] == 0) & (e[:, 0] < 0))
            inside &= (w > 0) | ((w == 0) & top_left)
        depth = np.full(len(tidx), np.nan)
        if not inside.any():
            return inside, depth
        f = faces[inside]
        v0 = self.mesh.vertices[f[:, 0]]
        n = np.cross(self.mesh.vertices[f[:, 1]] - v0, self.mesh.vertices[f[:, 2]] - v0)
        denom = n @ self.d
        base = puv[inside] @ self.proj.T          # point on the line with zero depth
        with np.errstate(divide="ignore", invalid="ignore"):
            depth[inside] = np.einsum("ij,ij->i", n, v0 - base) / denom
        inside[inside] = denom != 0
        return inside, depth


def points_inside_mesh(points, mesh: TriangleMesh, direction=RAY_DIRECTION) -> np.ndarray:
    """Boolean inside/outside per point via ray-casting parity."""
    if not mesh.is_watertight:
        raise GeometryError("inside/outside test requires a watertight mesh")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    return _RayIndex(mesh, direction).inside(pts)


# ---------------------------------------------------------------------------
# point-to-mesh distance


def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangle (a, b, c) to p, rowwise (Ericson's region test)."""
    p, a, b, c = (np.asarray(x, dtype=np.float64) for x in (p, a, b, c))
    p, a, b, c = np.broadcast_arrays(p, a, b, c)
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...i,...i->...", ab, ap)
    d2 = np.einsum("...i,...i->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...i,...i->...", ab, bp)
    d4 = np.einsum("...i,...i->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...i,...i->...", ab, cp)
    d6 = np.einsum("...i,...i->...", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
        out = a + ab * v_in[..., None] + ac * w_in[..., None]

        # edge regions (later assignments take precedence over earlier ones)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out = np.where(m[..., None], b + (c - b) * t_bc[..., None], out)
        t_ac = d2 / (d2 - d6)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + ac * t_ac[..., None], out)
        t_ab = d1 / (d1 - d3)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + ab * t_ab[..., None], out)

    # vertex regions
    m = (d6 >= 0) & (d5 <= d6)
    out = np.where(m[..., None], c, out)
    m = (d3 >= 0) & (d4 <= d3)
    out = np.where(m[..., None], b, out)
    m = (d1 <= 0) & (d2 <= 0)
    out = np.where(m[..., None], a, out)
    return out


def _unsigned_distance_bruteforce(points, mesh):
    tri = mesh.triangles
    nf = len(tri)
    chunk = max(1, _CHUNK_ENTRIES // (12 * nf))
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk, None, :]
        q = closest_points_on_triangles(p, tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
        out[s:s + chunk] = np.sqrt(np.min(np.sum((q - p) ** 2, axis=-1), axis=1))
    return out


def _unsigned_distance_accelerated(points, mesh):
    # The nearest vertex bounds the true distance from above, and any triangle
    # within that bound has its centroid within bound + max centroid radius.
    return MeshQuery(mesh).unsigned(points)


class MeshQuery:
    """Reusable signed-distance / inside queries against one fixed mesh."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        tri = mesh.triangles
        self._tri = tri
        centroids = tri.mean(axis=1)
        self._reach = float(np.max(np.linalg.norm(tri - centroids[:, None, :], axis=-1)))
        self._vtree = cKDTree(mesh.vertices)
        self._ctree = cKDTree(centroids)
        self._ray_index = None

    @property
    def _rays(self):
        if self._ray_index is None and self.mesh.is_watertight:
            self._ray_index = _RayIndex(self.mesh)
        return self._ray_index

    def unsigned(self, points, cap: float | None = None) -> np.ndarray:
        """Exact unsigned distance; with ``cap``, values above it are clipped to ``cap``."""
        pts = as_points(points)
        tri = self._tri
        upper, _ = self._vtree.query(pts)
        if cap is not None:
            upper = np.minimum(upper, cap)
        cands = self._ctree.query_ball_point(pts, upper * (1 + 1e-12) + self._reach + 1e-15)
        lens = np.fromiter((len(c) for c in cands), dtype=np.int64, count=len(pts))
        pidx = np.repeat(np.arange(len(pts)), lens)
        tidx = np.concatenate([np.asarray(c, dtype=np.int64) for c in cands])
        q = closest_points_on_triangles(pts[pidx], tri[tidx, 0], tri[tidx, 1], tri[tidx, 2])
        d2 = np.sum((q - pts[pidx]) ** 2, axis=-1)
        best = np.full(len(pts), np.inf)
        np.minimum.at(best, pidx, d2)
        best = np.sqrt(best)
        return best if cap is None else np.minimum(best, cap)

    def inside(self, points) -> np.ndarray:
        if self._rays is None:
            raise GeometryError("inside/outside test requires a watertight mesh")
        return self._rays.inside(np.asarray(points, dtype=np.float64).reshape(-1, 3))

    def signed(self, points, cap: float | None = None) -> np.ndarray:
        dist = self.unsigned(points, cap)
        if self._rays is not None:
            inside = self._rays.inside(np.asarray(points, dtype=np.float64).reshape(-1, 3))
            dist = np.where(inside & (dist > 0), -dist, dist)
        return dist


def unsigned_mesh_distance(points, mesh: TriangleMesh, method="auto") -> np.ndarray:
    pts = as_points(points)
    if method == "auto":
        method = "brute" if len(pts) * len(mesh.faces) <= 200_000 else "tree"
    if method == "brute":
        return _unsigned_distance_bruteforce(pts, mesh)
    if method == "tree":
        return _unsigned_distance_accelerated(pts, mesh)
    raise ValueError(f"unknown method {method!r}")


def point_mesh_distances(points, mesh: TriangleMesh, signed=True) -> np.ndarray:
    """Distance from each point to the mesh surface, negative inside.

    The sign is only applied for watertight meshes.
    """
    pts = as_points(points)
    dist = unsigned_mesh_distance(pts, mesh)
    if signed and mesh.is_watertight:
        inside = points_inside_mesh(pts, mesh)
        dist = np.where(inside & (dist > 0), -dist, dist)
    return dist


def point_mesh_distance(p, mesh: TriangleMesh) -> float:
    return float(point_mesh_distances(np.asarray(p, dtype=np.float64).reshape(1, 3), mesh)[0])


# ---------------------------------------------------------------------------
# voxelized intersection volume


def _column_inside(mesh: TriangleMesh, axes) -> np.ndarray:
    """Inside test for every center of an (x, y, z) grid, one ray per z column."""
    index = _RayIndex(mesh, direction=(0.0, 0.0, 1.0))
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    cols = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    col, depth = index.column_crossings(cols @ index.proj)
    z = axes[2]
    # each crossing flips every center strictly below it
    below = np.searchsorted(z, depth, side="left")
    acc = np.zeros((len(cols), len(z) + 1), dtype=np.int64)
    np.add.at(acc, (col, np.zeros_like(col)), 1)
    np.add.at(acc, (col, below), -1)
    counts = np.cumsum(acc[:, :-1], axis=1)
    return (counts % 2 == 1).reshape(len(axes[0]), len(axes[1]), len(z))


def voxelized_intersection_volume(a: TriangleMesh, b: TriangleMesh, voxel_size: float = 0.002) -> float:
    """Volume (cm^3) of voxels whose centers are inside both meshes.

    The grid spans the intersection of the two bounding boxes padded by one
    voxel on each side.
    """
    if voxel_size <= 0:
        raise GeometryError("voxel_size must be positive")
    for mesh in (a, b):
        if not mesh.is_watertight:
            raise GeometryError("open mesh cannot be voxelized for volume")
    box = a.aabb().intersection(b.aabb())
    if box is None:
        return 0.0
    lo = box.min - voxel_size
    hi = box.max + voxel_size
    n = np.ceil((hi - lo) / voxel_size - 1e-9).astype(np.int64)
    axes = [lo[k] + (np.arange(n[k]) + 0.5) * voxel_size for k in range(3)]
    in_a = _column_inside(a, axes)
    in_b = _column_inside(b, axes) if in_a.any() else np.zeros_like(in_a)
    count = int(np.count_nonzero(in_a & in_b))
    return count * voxel_size ** 3 * 1e6


# ---------------------------------------------------------------------------
# primitives and OBJ I/O


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0), subdivisions: int = 1) -> TriangleMesh:
    """Closed box with each face split into ``subdivisions``^2 quads, outward winding."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = int(subdivisions)
    if n < 1:
        raise GeometryError("subdivisions must be >= 1")
    verts = []
    index = {}

    def vid(key):
        if key not in index:
            index[key] = len(verts)
            verts.append(lo + (hi - lo) * np.array(key, dtype=np.float64) / n)
        return index[key]

    faces = []
    for axis in range(3):
        u_ax, v_ax = [k for k in range(3) if k != axis]
        for side in (0, n):
            for i in range(n):
                for j in range(n):
                    quad = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        key = [0, 0, 0]
                        key[axis] = side
                        key[u_ax] = i + di
                        key[v_ax] = j + dj
                        quad.append(vid(tuple(key)))
                    # outward winding: (u, v, axis) right-handed for the high side
                    right_handed = (u_ax, v_ax, axis) in ((0, 1, 2), (1, 2, 0), (2, 0, 1))
                    if (side == n) != right_handed:
                        quad = quad[::-1]
                    faces.append([quad[0], quad[1], quad[2]])
                    faces.append([quad[0], quad[2], quad[3]])
    return TriangleMesh(np.array(verts), np.array(faces))


def icosphere(radius: float = 1.0, level: int = 2, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(v, np.array(faces))


def cylinder_mesh(radius: float, height: float, segments: int = 32, rings: int = 8) -> TriangleMesh:
    """Closed cylinder along z centered at the origin, capped with fan triangles
    arranged in concentric rings so cap vertices are spread out."""
    theta = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    zs = np.linspace(-height / 2, height / 2, rings + 1)
    verts = [np.column_stack([radius * circle, np.full(segments, z)]) for z in zs]
    faces = []
    for r in range(rings):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            c = a + segments
            d = b + segments
            faces += [[a, b, d], [a, d, c]]
    n_side = len(zs) * segments
    # caps: one inner ring at half radius plus a center vertex
    for cap, z, sign in ((0, zs[0], -1), (1, zs[-1], 1)):
        outer0 = 0 if cap == 0 else rings * segments
        inner0 = n_side + cap * (segments + 1)
        verts.append(np.column_stack([0.5 * radius * circle, np.full(segments, z)]))
        verts.append(np.array([[0.0, 0.0, z]]))
        center = inner0 + segments
        for s in range(segments):
            o1, o2 = outer0 + s, outer0 + (s + 1) % segments
            i1, i2 = inner0 + s, inner0 + (s + 1) % segments
            quad = [[o1, i2, o2], [o1, i1, i2]]
            fan = [center, i2, i1]
            if sign > 0:
                quad = [f[::-1] for f in quad]
                fan = fan[::-1]
            faces += quad + [fan]
    return TriangleMesh(np.concatenate(verts), np.array(faces))


def load_obj(path) -> TriangleMesh:
    """Read the ``v``/``f`` subset of Wavefront OBJ (1-based triangular faces)."""
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise GeometryError(
                        f"{path}:{lineno}: only triangular faces are supported, got {len(idx)} vertices")
                if min(idx) < 1:
                    raise GeometryError(f"{path}:{lineno}: face indices must be positive (1-based)")
                faces.append([i - 1 for i in idx])
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64))


def save_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
