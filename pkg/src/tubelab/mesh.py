"""Closed triangulated surfaces in R^N: Euler characteristic, angle defects, tubes."""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .euclid import (Box, IntrinsicVolumeVector, TubeSamplePlan, mc_volume,
                     neighborhood_predicate, steiner_fit, unit_ball_volume)

# c_2 in V_0 = c_2 * integral(Sc): forced by V_0(S^2) = 2 and integral(Sc) = 8*pi
C2 = 1 / (4 * math.pi)


class MeshError(ValueError):
    pass


class TriMesh:
    """A closed, connected, orientable triangulated surface embedded in R^N."""

    def __init__(self, vertices, triangles, check: bool = True):
        self.vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if check:
            self.validate()

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    def __repr__(self):
        return (f"TriMesh(N={self.ambient_dim}, V={len(self.vertices)}, "
                f"F={len(self.triangles)})")

    def validate(self):
        tri = self.triangles
        nv = len(self.vertices)
        if len(tri) == 0:
            raise MeshError("mesh has no triangles")
        if tri.min() < 0 or tri.max() >= nv:
            raise MeshError("triangle index out of range")
        if np.any(tri[:, 0] == tri[:, 1]) or np.any(tri[:, 1] == tri[:, 2]) or np.any(tri[:, 0] == tri[:, 2]):
            raise MeshError("triangle with repeated vertex")
        if np.any(self.areas <= 1e-14 * max(1.0, float(np.abs(self.vertices).max())) ** 2):
            raise MeshError("degenerate triangle")
        directed = Counter(self._directed_edges())
        for (a, b), count in directed.items():
            if count > 1:
                raise MeshError(f"edge {a}-{b} used twice with the same orientation "
                                "(non-orientable or non-manifold)")
            if (b, a) not in directed:
                raise MeshError(f"edge {a}-{b} is a boundary edge; mesh is not closed")
        used = np.unique(tri)
        if len(used) != nv:
            raise MeshError("mesh has isolated vertices")
        if self._components() != 1:
            raise MeshError("mesh is not connected")
        self._check_vertex_links()

    def _directed_edges(self):
        t = self.triangles
        for a, b, c in t:
            yield (int(a), int(b))
            yield (int(b), int(c))
            yield (int(c), int(a))

    def _components(self) -> int:
        parent = list(range(len(self.vertices)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c)):
                ru, rv = find(int(u)), find(int(v))
                if ru != rv:
                    parent[ru] = rv
        return len({find(v) for v in range(len(self.vertices))})

    def _check_vertex_links(self):
        # around each vertex, the opposite edges must form a single cycle
        nxt: dict[int, dict[int, int]] = {}
        for a, b, c in self.triangles:
            for v, p, q in ((a, b, c), (b, c, a), (c, a, b)):
                nxt.setdefault(int(v), {})[int(p)] = int(q)
        for v, link in nxt.items():
            start = next(iter(link))
            cur, steps = link[start], 1
            while cur != start:
                cur = link[cur]
                steps += 1
                if steps > len(link):
                    break
            if steps != len(link):
                raise MeshError(f"vertex {v} is not a manifold point")

    @cached_property
    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def corners(self) -> np.ndarray:
        """Triangle vertex coordinates, shape (F, 3, N)."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        u, v = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
        uu, vv, uv = (u * u).sum(1), (v * v).sum(1), (u * v).sum(1)
        return 0.5 * np.sqrt(np.maximum(uu * vv - uv * uv, 0.0))

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def corner_angles(self) -> np.ndarray:
        """Interior angle at each triangle corner, shape (F, 3)."""
        c = self.corners
        out = np.empty((len(c), 3))
        for k in range(3):
            u = c[:, (k + 1) % 3] - c[:, k]
            v = c[:, (k + 2) % 3] - c[:, k]
            cross = np.sqrt(np.maximum((u * u).sum(1) * (v * v).sum(1) - (u * v).sum(1) ** 2, 0))
            out[:, k] = np.arctan2(cross, (u * v).sum(1))
        return out

    def scaled(self, a: float) -> "TriMesh":
        return TriMesh(a * self.vertices, self.triangles, check=False)

    def padded(self, extra_dims: int) -> "TriMesh":
        return TriMesh(np.pad(self.vertices, ((0, 0), (0, extra_dims))), self.triangles, check=False)

    # -- file formats ---------------------------------------------------------
    def to_json(self) -> dict:
        return {"dim": self.ambient_dim, "vertices": self.vertices.tolist(),
                "triangles": self.triangles.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "TriMesh":
        verts = np.asarray(data["vertices"], dtype=float)
        if "dim" in data and verts.shape[1] != int(data["dim"]):
            raise MeshError("vertex coordinates do not match 'dim'")
        return cls(verts, data["triangles"])

    def to_off(self) -> str:
        lines = ["OFF" if self.ambient_dim == 3 else "nOFF"]
        if self.ambient_dim != 3:
            lines.append(str(self.ambient_dim))
        lines.append(f"{len(self.vertices)} {len(self.triangles)} {len(self.edges)}")
        lines += [" ".join(repr(float(x)) for x in v) for v in self.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_off(cls, text: str) -> "TriMesh":
        tokens = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
        if not tokens:
            raise MeshError("empty OFF file")
        head = tokens.pop(0)
        dim = 3
        if head == "nOFF":
            dim = int(tokens.pop(0))
        elif head != "OFF":
            if head.endswith("OFF"):
                raise MeshError(f"unsupported OFF variant {head!r}")
            tokens.insert(0, head)
        nv, nf = int(tokens[0]), int(tokens[1])
        pos = 3
        verts = np.array(tokens[pos:pos + nv * dim], dtype=float).reshape(nv, dim)
        pos += nv * dim
        tris = []
        for _ in range(nf):
            k = int(tokens[pos])
            face = [int(x) for x in tokens[pos + 1:pos + 1 + k]]
            pos += 1 + k
            if k != 3:
                # fan-triangulate polygons
                tris += [(face[0], face[i], face[i + 1]) for i in range(1, k - 1)]
            else:
                tris.append(tuple(face))
        return cls(verts, tris)


def load_mesh(path) -> TriMesh:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return TriMesh.from_json(json.loads(text))
    return TriMesh.from_off(text)


# -- generators ---------------------------------------------------------------

def icosahedron(radius: float = 1.0) -> TriMesh:
    phi = (1 + math.sqrt(5)) / 2
    v = np.array([[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
                  [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
                  [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]], dtype=float)
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    v *= radius / np.linalg.norm(v[0])
    return TriMesh(v, f)


def icosphere(radius: float = 1.0, level: int = 0) -> TriMesh:
    """Icosahedron refined ``level`` times, vertices pushed to the sphere."""
    base = icosahedron(1.0)
    verts = [tuple(p) for p in base.vertices]
    tris = base.triangles.tolist()
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = (np.array(verts[a]) + np.array(verts[b])) / 2
                verts.append(tuple(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        tris = new
    return TriMesh(radius * np.array(verts), tris)


def _grid_triangles(m: int, n: int) -> list[list[int]]:
    idx = lambda i, j: (i % m) * n + (j % n)
    tris = []
    for i in range(m):
        for j in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris += [[a, b, c], [a, c, d]]
    return tris


def torus_grid(a: float = 1.0, b: float = 1.0, m: int = 8, n: int = 8) -> TriMesh:
    """Flat a-by-b torus as an m-by-n grid on a product of circles in R^4.

    The circle radii are chosen so that the chords, not the arcs, have lengths
    a/m and b/n; every grid cell is then a planar a/m-by-b/n rectangle and the
    mesh is intrinsically flat with area exactly a*b.
    """
    if m < 3 or n < 3:
        raise MeshError("torus grid needs m, n >= 3")
    r1 = a / (2 * m * math.sin(math.pi / m))
    r2 = b / (2 * n * math.sin(math.pi / n))
    s = 2 * math.pi * np.arange(m) / m
    t = 2 * math.pi * np.arange(n) / n
    S, T = np.meshgrid(s, t, indexing="ij")
    v = np.stack([r1 * np.cos(S), r1 * np.sin(S), r2 * np.cos(T), r2 * np.sin(T)], axis=-1)
    return TriMesh(v.reshape(-1, 4), _grid_triangles(m, n))


def torus_of_revolution(R: float = 2.0, r: float = 1.0, m: int = 16, n: int = 8) -> TriMesh:
    s = 2 * math.pi * np.arange(m) / m
    t = 2 * math.pi * np.arange(n) / n
    S, T = np.meshgrid(s, t, indexing="ij")
    v = np.stack([(R + r * np.cos(T)) * np.cos(S), (R + r * np.cos(T)) * np.sin(S),
                  r * np.sin(T)], axis=-1)
    return TriMesh(v.reshape(-1, 3), _grid_triangles(m, n))


def connected_sum(first: TriMesh, second: TriMesh, face1: int = 0, face2: int = 0) -> TriMesh:
    """Remove one triangle from each surface and identify the two boundaries.

    ``second`` is moved by an affine map taking its triangle onto the first
    one and flipping the normal directions, and its orientation is reversed so
    the glued surface stays oriented. V, E and F each drop by 3, 3 and 2, hence
    chi(first # second) = chi(first) + chi(second) - 2.
    """
    if first.ambient_dim != second.ambient_dim:
        raise MeshError("both surfaces must live in the same R^N")
    a, b, c = first.triangles[face1]
    p, q, r = second.triangles[face2]
    # after reversal the second surface carries p->q where the first lacks a->b
    target = first.vertices[[a, b, c]]
    source = second.vertices[[p, q, r]]
    moved = _match_triangle(second.vertices, source, target)

    offset = len(first.vertices)
    glue = {int(p): int(a), int(q): int(b), int(r): int(c)}
    remap = {}
    keep = [k for k in range(len(second.vertices)) if k not in glue]
    for new, old in enumerate(keep):
        remap[old] = offset + new
    remap.update(glue)
    tris1 = np.delete(first.triangles, face1, axis=0)
    tris2 = np.delete(second.triangles, face2, axis=0)[:, ::-1]
    tris2 = np.vectorize(remap.__getitem__)(tris2)
    verts = np.concatenate([first.vertices, moved[keep]])
    return TriMesh(verts, np.concatenate([tris1, tris2]))


def _match_triangle(points, source, target):
    """Affine map of ``points`` sending the source triangle onto the target one,
    with the normal directions flipped so the two bodies sit on opposite sides."""
    n = points.shape[1]
    src_basis = _complete(np.stack([source[1] - source[0], source[2] - source[0]]), n)
    tgt_basis = _complete(np.stack([target[1] - target[0], target[2] - target[0]]), n)
    tgt_basis[2:] *= -1
    linear = np.linalg.solve(src_basis, tgt_basis)
    return target[0] + (points - source[0]) @ linear


def _complete(rows, n):
    """Append an orthonormal basis of the orthogonal complement of ``rows``."""
    q, _ = np.linalg.qr(rows.T, mode="complete")
    return np.vstack([rows, q[:, rows.shape[0]:].T])


def genus_two(m: int = 12, n: int = 8) -> TriMesh:
    torus = torus_of_revolution(2.0, 1.0, m, n)
    return connected_sum(torus, torus, 0, 0)


# -- invariants -------------------------------------------------------------

def euler_char(mesh: TriMesh) -> int:
    return len(mesh.vertices) - len(mesh.edges) + len(mesh.triangles)


@dataclass(frozen=True)
class CurvatureSummary:
    defects: np.ndarray
    total_defect: float
    scalar_integral: float
    c2: float = C2

    @property
    def normalized_scalar_integral(self) -> float:
        return self.c2 * self.scalar_integral


def angle_defects(mesh: TriMesh) -> CurvatureSummary:
    angles = mesh.corner_angles()
    if np.any(angles <= 0) or np.any(angles >= math.pi):
        raise MeshError("degenerate triangle angles")
    incident = np.bincount(mesh.triangles.ravel(), weights=angles.ravel(),
                           minlength=len(mesh.vertices))
    defects = 2 * math.pi - incident
    total = float(math.fsum(defects))
    return CurvatureSummary(defects, total, 2 * total)


def surface_intrinsic_volumes(mesh: TriMesh) -> IntrinsicVolumeVector:
    return IntrinsicVolumeVector(2, (euler_char(mesh), 0.0, mesh.area))


@dataclass(frozen=True)
class BernigResult:
    holds: bool
    lhs: float
    rhs: float
    margin: float
    # the same comparison with c_2 * integral(Sc) as the left side
    normalized_holds: bool
    normalized_lhs: float


def bernig_inequality(mesh: TriMesh, kappa: float, tol: float = 1e-9) -> BernigResult:
    """Check integral(Sc) >= kappa * n(n-1) * area for the surface (n = 2)."""
    summary = angle_defects(mesh)
    lhs = summary.scalar_integral
    rhs = kappa * 2 * mesh.area
    norm_lhs = summary.normalized_scalar_integral
    return BernigResult(lhs >= rhs - tol, lhs, rhs, lhs - rhs, norm_lhs >= rhs - tol, norm_lhs)


# -- distance queries ---------------------------------------------------------

def closest_point_triangle(p, a, b, c):
    """Closest points on triangles abc to points p; arrays of shape (M, N).

    Voronoi-region classification with dot products only, so it works in
    any ambient dimension.
    """
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = (ab * ap).sum(1), (ac * ap).sum(1)
    bp = p - b
    d3, d4 = (ab * bp).sum(1), (ac * bp).sum(1)
    cp = p - c
    d5, d6 = (ab * cp).sum(1), (ac * cp).sum(1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v_in, w_in = vb / denom, vc / denom
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))

    out = a + v_in[:, None] * ab + w_in[:, None] * ac
    done = np.zeros(len(p), dtype=bool)

    def take(mask, value):
        nonlocal out, done
        m = mask & ~done
        out = np.where(m[:, None], value, out)
        done |= m

    take((d1 <= 0) & (d2 <= 0), a)
    take((d3 >= 0) & (d4 <= d3), b)
    take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t_ab[:, None] * ab)
    take((d6 >= 0) & (d5 <= d6), c)
    take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t_ac[:, None] * ac)
    take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t_bc[:, None] * (c - b))
    return out


class MeshDistance:
    """Exact point-to-surface distance with a KD-tree over triangle centroids.

    A triangle lies within ``radius`` of its centroid, so the nearest centroid
    distance ``dc`` brackets the true distance: ``dc - radius <= d <= dc``.
    Exact distances are only evaluated where the bracket is not decisive.
    """

    def __init__(self, mesh: TriMesh, k: int = 8):
        self.mesh = mesh
        corners = mesh.corners
        self.centroids = corners.mean(axis=1)
        self.radius = float(np.linalg.norm(corners - self.centroids[:, None], axis=2).max())
        self.tree = cKDTree(self.centroids)
        self.k = min(k, len(self.centroids))

    def _exact_pairs(self, pts, tri_idx):
        c = self.mesh.corners[tri_idx]
        q = closest_point_triangle(pts, c[:, 0], c[:, 1], c[:, 2])
        return np.linalg.norm(pts - q, axis=1)

    def _knn(self, pts):
        _, idx = self.tree.query(pts, k=self.k)
        idx = idx.reshape(len(pts), -1)
        rows = np.repeat(np.arange(len(pts)), idx.shape[1])
        d = self._exact_pairs(pts[rows], idx.ravel()).reshape(len(pts), -1)
        return d.min(axis=1)

    def _ball_min(self, pts, radii):
        """Minimum exact distance over triangles whose centroid lies within radii."""
        out = np.full(len(pts), np.inf)
        lists = self.tree.query_ball_point(pts, radii)
        lengths = np.array([len(x) for x in lists])
        if lengths.sum() == 0:
            return out
        rows = np.repeat(np.arange(len(pts)), lengths)
        cand = np.concatenate([np.asarray(x, dtype=np.int64) for x in lists if len(x)])
        d = self._exact_pairs(pts[rows], cand)
        np.minimum.at(out, rows, d)
        return out

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        best = self._knn(pts)
        # any closer triangle has its centroid within best + radius
        counts = self.tree.query_ball_point(pts, best + self.radius, return_length=True)
        unsure = np.flatnonzero(counts > self.k)
        if len(unsure):
            best[unsure] = np.minimum(best[unsure],
                                      self._ball_min(pts[unsure], best[unsure] + self.radius))
        return best

    def within(self, points, eps: float) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dc, _ = self.tree.query(pts, k=1, distance_upper_bound=eps + self.radius)
        inside = dc <= eps
        unsure = np.flatnonzero(~inside & np.isfinite(dc))
        if len(unsure):
            sub = pts[unsure]
            near = self._knn(sub) <= eps
            inside[unsure[near]] = True
            rest = unsure[~near]
            if len(rest):
                d = self._ball_min(pts[rest], np.full(len(rest), eps + self.radius))
                inside[rest] = d <= eps
        return inside


def mesh_distance(point, mesh: TriMesh) -> float:
    return float(MeshDistance(mesh)(np.atleast_2d(point))[0])


# -- Weyl tube experiment -----------------------------------------------------

def sphere_shell_volume(radius: float, eps: float, ambient_dim: int = 3) -> float:
    """Exact eps-tube volume of the round 2-sphere of the given radius in R^N, N = 3 or 4."""
    if ambient_dim == 3:
        inner = max(radius - eps, 0.0)
        return 4 * math.pi / 3 * ((radius + eps) ** 3 - inner ** 3)
    if ambient_dim == 4:
        if eps > radius:
            raise ValueError("closed form needs eps <= radius")
        # disk of radius eps in the (radial, extra) plane swept over spheres
        return 4 * math.pi * (math.pi * eps ** 2 * radius ** 2 + math.pi * eps ** 4 / 4)
    raise ValueError("closed form only for N = 3, 4")


def tube_calibration(ambient_dim: int) -> float:
    """Factor making the fitted V_0 of the round unit sphere equal to 2.

    Fitting with kappa_{N-i} normalization already gives V_0 = 2, so this
    evaluates to 1 up to rounding; it is computed, not assumed.
    """
    eps = np.geomspace(0.05, 0.5, 6)
    data = [(e, sphere_shell_volume(1.0, e, ambient_dim)) for e in eps]
    fitted, _ = steiner_fit(data, ambient_dim, ambient_dim - 2)
    return 2.0 / fitted[0]


@dataclass(frozen=True)
class TubeExperiment:
    volumes: IntrinsicVolumeVector
    residual: float
    data: tuple[tuple[float, float, float], ...]  # (eps, volume, std_error)


def tube_volume_experiment(mesh: TriMesh, plan: TubeSamplePlan, workers: int = 1,
                           calibrate: bool = True) -> TubeExperiment:
    """Monte-Carlo tube volumes of the mesh fitted with codimension N - 2."""
    N = mesh.ambient_dim
    dist = MeshDistance(mesh)
    rows = []
    for j, eps in enumerate(plan.eps_list):
        box = Box.around(mesh.vertices, pad=eps)
        vol, err = mc_volume(neighborhood_predicate(dist, eps), box,
                             plan.samples_per_eps, plan.seed + 7919 * j, workers=workers)
        if err == 0:
            raise MeshError(f"no Monte-Carlo spread at eps={eps}; increase samples")
        rows.append((eps, vol, err))
    data = np.array(rows)
    fitted, residual = steiner_fit(data[:, :2], N, N - 2, std_errors=data[:, 2])
    if calibrate:
        # the calibration factor multiplies every normalized coefficient
        k = tube_calibration(N)
        fitted = IntrinsicVolumeVector(2, tuple(k * v for v in fitted.values),
                                       tuple(k * e for e in fitted.std_errors))
    v1, s1 = fitted[1], fitted.std_errors[1]
    if abs(v1) > 3 * s1:
        warnings.warn(f"fitted V_1 = {v1:.4g} is more than 3 sigma ({s1:.3g}) from 0",
                      RuntimeWarning)
    return TubeExperiment(fitted, residual, tuple(map(tuple, rows)))
