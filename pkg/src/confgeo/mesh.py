"""Watertight triangle meshes in chart coordinates.

Containment is decided by ray-casting parity (Moller-Trumbore); queries that
graze an edge or vertex are retried with the next direction from a fixed
list, so results are deterministic.  Distances use the Ericson
closest-point-on-triangle case analysis.

Both queries are accelerated: rays are cast along fixed directions, so faces
are binned in a 2D grid on the plane perpendicular to each direction
(candidates per query are the faces whose projected bounding boxes cover the
query's cell); distances prune faces through a KD-tree on face centroids with
per-face radii.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

# fixed, irrational-ish ray directions; retries walk down this list
_RAY_DIRS = np.array([
    [0.57735026918962576, 0.57735026918962584, 0.57735026918962562],
    [0.12873495784653635, 0.83746273645193462, 0.53108374652917364],
    [-0.73294618374652913, 0.21983476253917464, 0.64382957364859271],
    [0.31415926535897932, -0.27182818284590452, 0.90960301710549853],
    [-0.52359877559829887, -0.69314718055994531, 0.49534653589793238],
])
_RAY_DIRS /= np.linalg.norm(_RAY_DIRS, axis=1, keepdims=True)


def _orthobasis(direction):
    ref = np.array([1.0, 0.0, 0.0])
    if abs(direction @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    b1 = np.cross(direction, ref)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(direction, b1)
    return b1, b2


class _RayGrid:
    """Faces binned by their AABB on the plane perpendicular to one ray."""

    def __init__(self, tri_pts, direction, n_cells=48):
        self.b1, self.b2 = _orthobasis(direction)
        P1 = tri_pts @ self.b1    # (F, 3) projected corner coords
        P2 = tri_pts @ self.b2
        self.lo = np.array([P1.min(), P2.min()]) - 1e-12
        self.hi = np.array([P1.max(), P2.max()]) + 1e-12
        self.n = n_cells
        span = np.maximum(self.hi - self.lo, 1e-300)
        self.inv = self.n / span
        c1lo = self._cell(P1.min(axis=1), 0)
        c1hi = self._cell(P1.max(axis=1), 0)
        c2lo = self._cell(P2.min(axis=1), 1)
        c2hi = self._cell(P2.max(axis=1), 1)
        cells = [[] for _ in range(self.n * self.n)]
        for f in range(len(P1)):
            for i in range(c1lo[f], c1hi[f] + 1):
                for j in range(c2lo[f], c2hi[f] + 1):
                    cells[i * self.n + j].append(f)
        self.cells = [np.array(c, dtype=np.intp) for c in cells]

    def _cell(self, coords, axis):
        idx = ((coords - self.lo[axis]) * self.inv[axis]).astype(np.intp)
        return np.clip(idx, 0, self.n - 1)

    def cell_ids(self, points):
        i = np.clip(((points @ self.b1 - self.lo[0]) * self.inv[0]).astype(np.intp),
                    0, self.n - 1)
        j = np.clip(((points @ self.b2 - self.lo[1]) * self.inv[1]).astype(np.intp),
                    0, self.n - 1)
        return i * self.n + j


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray     # (F, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.intp)
        self._v0 = self.vertices[self.faces[:, 0]]
        self._e1 = self.vertices[self.faces[:, 1]] - self._v0
        self._e2 = self.vertices[self.faces[:, 2]] - self._v0
        self._scale = float(np.max(np.ptp(self.vertices, axis=0)))
        tri = self.vertices[self.faces]           # (F, 3, 3)
        self._tri = tri
        self._centroids = tri.mean(axis=1)
        self._face_radius = np.sqrt(
            ((tri - self._centroids[:, None, :]) ** 2).sum(axis=2)).max(axis=1)
        self._ctree = cKDTree(self._centroids)
        self._grids: dict[int, _RayGrid] = {}

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def max_edge_length(self) -> float:
        e3 = self._e2 - self._e1
        return float(np.sqrt(max((self._e1 ** 2).sum(1).max(),
                                 (self._e2 ** 2).sum(1).max(),
                                 (e3 ** 2).sum(1).max())))

    # -- containment -----------------------------------------------------

    def contains(self, points) -> np.ndarray:
        """Ray-parity interior test for points of shape (Q, 3) or (3,)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        todo = np.arange(len(pts))
        for dir_idx in range(len(_RAY_DIRS)):
            if len(todo) == 0:
                break
            par, bad = self._cast(pts[todo], dir_idx)
            good = ~bad
            inside[todo[good]] = par[good]
            todo = todo[bad]
        if len(todo):
            # every direction grazed an edge; accept the first direction's vote
            par, _ = self._cast(pts[todo], 0)
            inside[todo] = par
        return inside

    def _grid(self, dir_idx):
        if dir_idx not in self._grids:
            self._grids[dir_idx] = _RayGrid(self._tri, _RAY_DIRS[dir_idx])
        return self._grids[dir_idx]

    def _cast(self, pts, dir_idx):
        direction = _RAY_DIRS[dir_idx]
        grid = self._grid(dir_idx)
        parity = np.zeros(len(pts), dtype=bool)
        grazed = np.zeros(len(pts), dtype=bool)
        eps_par = 1e-14 * max(self._scale, 1.0) ** 2
        tol = 1e-9
        cell_ids = grid.cell_ids(pts)
        order = np.argsort(cell_ids, kind='stable')
        bounds = np.flatnonzero(np.diff(cell_ids[order])) + 1
        for group in np.split(order, bounds):
            cand = grid.cells[cell_ids[group[0]]]
            if len(cand) == 0:
                continue
            p = pts[group]                            # (G, 3)
            e1 = self._e1[cand]                       # (C, 3)
            e2 = self._e2[cand]
            s = p[:, None, :] - self._v0[cand][None, :, :]
            h = np.cross(direction, e2)
            a = np.einsum('fi,fi->f', e1, h)
            ok = np.abs(a) > eps_par
            f = np.where(ok, 1.0 / np.where(ok, a, 1.0), 0.0)
            u = f[None, :] * np.einsum('gfi,fi->gf', s, h)
            q = np.cross(s, e1[None, :, :])
            v = f[None, :] * (q @ direction)
            tpar = f[None, :] * np.einsum('gfi,fi->gf', q, e2)
            hit = (ok[None, :] & (u >= 0.0) & (u <= 1.0) & (v >= 0.0)
                   & (u + v <= 1.0) & (tpar > 1e-12))
            near_edge = (ok[None, :] & (tpar > -tol)
                         & (u > -tol) & (u < 1 + tol) & (v > -tol)
                         & (u + v < 1 + tol)
                         & ((np.abs(u) < tol) | (np.abs(v) < tol)
                            | (np.abs(u + v - 1.0) < tol)
                            | (np.abs(tpar) < tol)))
            parity[group] = (hit.sum(axis=1) % 2).astype(bool)
            grazed[group] = near_edge.any(axis=1)
        return parity, grazed

    # -- distance ----------------------------------------------------------

    def distance(self, points, k=12) -> np.ndarray:
        """Euclidean distance to the closest triangle, per query point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(k, self.n_faces)
        d_cent, idx = self._ctree.query(pts, k=k)
        if k == 1:
            d_cent = d_cent[:, None]
            idx = idx[:, None]
        cp = _closest_on_triangles(pts, self._v0[idx], self._e1[idx],
                                   self._e2[idx])
        best = np.sqrt(((cp - pts[:, None, :]) ** 2).sum(axis=2).min(axis=1))
        # a face whose centroid ball intersects the current best sphere could
        # still be closer; re-check only the queries where that is possible
        rmax = float(self._face_radius.max())
        recheck = np.flatnonzero(d_cent[:, -1] < best + rmax)
        for qi in recheck:
            p = pts[qi]
            more = np.asarray(self._ctree.query_ball_point(p, best[qi] + rmax),
                              dtype=np.intp)
            more = np.setdiff1d(more, idx[qi])
            if len(more):
                cp2 = _closest_on_triangles(p[None, :], self._v0[more][None],
                                            self._e1[more][None],
                                            self._e2[more][None])[0]
                best[qi] = min(best[qi], float(
                    np.sqrt(((cp2 - p) ** 2).sum(axis=1).min())))
        return best if np.asarray(points).ndim == 2 else best


def _closest_on_triangles(p, v0, e1, e2):
    """Closest points on per-query triangle sets (Ericson's cases).

    p: (Q,3); v0, e1, e2: (Q,K,3).  Returns (Q, K, 3).
    """
    ap = p[:, None, :] - v0
    d1 = np.einsum('qki,qki->qk', e1, ap)
    d2 = np.einsum('qki,qki->qk', e2, ap)
    bp = ap - e1
    d3 = np.einsum('qki,qki->qk', e1, bp)
    d4 = np.einsum('qki,qki->qk', e2, bp)
    cp_ = ap - e2
    d5 = np.einsum('qki,qki->qk', e1, cp_)
    d6 = np.einsum('qki,qki->qk', e2, cp_)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide='ignore', invalid='ignore'):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom

    res = np.empty(d1.shape + (3,))
    done = np.zeros(d1.shape, dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        res[m] = value[m]
        done[m] = True

    base = v0
    E1 = e1
    E2 = e2
    assign((d1 <= 0) & (d2 <= 0), base)                                    # vertex A
    assign((d3 >= 0) & (d4 <= d3), base + E1)                              # vertex B
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0),
           base + np.nan_to_num(v_ab)[..., None] * E1)                     # edge AB
    assign((d6 >= 0) & (d5 <= d6), base + E2)                              # vertex C
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0),
           base + np.nan_to_num(w_ac)[..., None] * E2)                     # edge AC
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0),
           base + E1 + np.nan_to_num(w_bc)[..., None] * (E2 - E1))         # edge BC
    assign(np.ones_like(done),
           base + np.nan_to_num(v_in)[..., None] * E1
           + np.nan_to_num(w_in)[..., None] * E2)                          # interior
    return res
