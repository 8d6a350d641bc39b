"""Convex polytopes given by vertices: face lattice, external angles, intrinsic volumes."""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .euclid import Box, IntrinsicVolumeVector, chunk_seed, unit_ball_volume, CHUNK_SIZE

MAX_FACE_DIM = 4
REL_TOL = 1e-9


class FaceError(ValueError):
    pass


def affine_frame(points: np.ndarray, tol: float):
    """Orthonormal frame (origin, rows spanning directions) of the affine hull."""
    origin = points.mean(axis=0)
    centered = points - origin
    if len(points) == 1:
        return origin, np.zeros((0, points.shape[1]))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > tol))
    return origin, vt[:rank]


@dataclass(frozen=True)
class Face:
    vertices: frozenset[int]
    dim: int
    volume: float

    def __lt__(self, other):
        return (self.dim, sorted(self.vertices)) < (other.dim, sorted(other.vertices))


class Polytope:
    """Convex hull of finitely many points in R^n.

    Duplicate and non-extreme points are dropped; ``dim`` is the dimension of
    the affine span. All combinatorics is computed in an orthonormal frame of
    that span, so the ambient dimension never enters the exact quantities.
    """

    def __init__(self, vertices):
        pts = np.atleast_2d(np.asarray(vertices, dtype=float))
        if pts.size == 0:
            raise ValueError("polytope needs at least one vertex")
        if not np.all(np.isfinite(pts)):
            raise ValueError("vertices must be finite")
        scale = max(1.0, float(np.abs(pts).max()))
        self.tol = REL_TOL * scale
        keyed = np.round(pts / self.tol).astype(np.int64)
        _, keep = np.unique(keyed, axis=0, return_index=True)
        pts = pts[np.sort(keep)]
        origin, frame = affine_frame(pts, self.tol)
        local = (pts - origin) @ frame.T
        extreme = _extreme_points(local)
        self.vertices = pts[extreme]
        self.origin = origin
        self.frame = frame
        self.local = local[extreme]
        self._mc_cache: dict = {}

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def dim(self) -> int:
        return self.frame.shape[0]

    def __repr__(self):
        return f"Polytope(dim={self.dim}, ambient={self.ambient_dim}, n_vertices={len(self.vertices)})"

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        return {"dim": self.ambient_dim, "vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "Polytope":
        verts = np.asarray(data["vertices"], dtype=float)
        if verts.ndim != 2 or verts.shape[1] != int(data["dim"]):
            raise ValueError("vertex coordinates do not match 'dim'")
        return cls(verts)

    # -- geometry ---------------------------------------------------------
    @cached_property
    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Facet inequalities ``normals @ y <= offsets`` in local coordinates."""
        d = self.dim
        if d == 0:
            return np.zeros((0, 0)), np.zeros(0)
        if d == 1:
            x = self.local[:, 0]
            return np.array([[1.0], [-1.0]]), np.array([x.max(), -x.min()])
        hull = ConvexHull(self.local)
        normals, offsets = [], []
        for eq in hull.equations:
            nrm, off = eq[:-1], -eq[-1]
            if not any(np.allclose(nrm, m, atol=1e-9) and abs(off - o) <= 1e-9 * (1 + abs(o))
                       for m, o in zip(normals, offsets)):
                normals.append(nrm)
                offsets.append(off)
        return np.array(normals), np.array(offsets)

    @cached_property
    def facet_sets(self) -> list[frozenset[int]]:
        normals, offsets = self.halfspaces
        slack = offsets[None, :] - self.local @ normals.T
        return [frozenset(np.flatnonzero(np.abs(slack[:, j]) <= 1e-7 * max(1.0, abs(offsets[j]))).tolist())
                for j in range(len(offsets))]

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y = (pts - self.origin) @ self.frame.T
        off_span = np.linalg.norm(pts - self.origin - y @ self.frame, axis=1) <= tol
        normals, offsets = self.halfspaces
        if len(offsets) == 0:
            return off_span
        return off_span & np.all(y @ normals.T <= offsets + tol, axis=1)

    @cached_property
    def volume(self) -> float:
        return face_volume(self.local)

    def scaled(self, a: float) -> "Polytope":
        return Polytope(a * self.vertices)

    def transformed(self, rotation, translation) -> "Polytope":
        return Polytope(self.vertices @ np.asarray(rotation).T + np.asarray(translation))


def _extreme_points(local: np.ndarray) -> np.ndarray:
    k, d = local.shape
    if d == 0:
        return np.array([0])
    if d == 1:
        x = local[:, 0]
        return np.unique([int(np.argmin(x)), int(np.argmax(x))])
    return np.sort(ConvexHull(local).vertices)


def face_volume(points: np.ndarray) -> float:
    """k-dimensional volume of the convex hull of points spanning a k-flat."""
    pts = np.atleast_2d(points)
    scale = max(1.0, float(np.abs(pts).max()))
    origin, frame = affine_frame(pts, REL_TOL * scale)
    k = frame.shape[0]
    if k == 0:
        return 1.0
    y = (pts - origin) @ frame.T
    if k == 1:
        return float(y.max() - y.min())
    return float(ConvexHull(y).volume)


def face_lattice(P: Polytope) -> dict[int, list[Face]]:
    """All nonempty faces, grouped by dimension (the polytope itself included).

    Faces are the intersections of facet vertex sets; each candidate is checked
    against a supporting functional before it is accepted.
    """
    d = P.dim
    if d > MAX_FACE_DIM:
        raise FaceError(f"face enumeration supports dimension <= {MAX_FACE_DIM}, got {d}")
    everything = frozenset(range(len(P.local)))
    sets = {everything}
    if d >= 1:
        frontier = set(P.facet_sets)
        sets |= frontier
        facets = list(P.facet_sets)
        while frontier:
            new = set()
            for s in frontier:
                for f in facets:
                    t = s & f
                    if t and t not in sets:
                        new.add(t)
            sets |= new
            frontier = new

    normals, offsets = P.halfspaces
    faces: dict[int, list[Face]] = {k: [] for k in range(d + 1)}
    for s in sets:
        idx = sorted(s)
        pts = P.local[idx]
        if s != everything:
            _check_supporting(P, s, normals, offsets)
        dim = P.dim if s == everything else _affine_rank(pts, P.tol)
        faces[dim].append(Face(s, dim, face_volume(pts) if dim else 1.0))
    for k in faces:
        faces[k].sort()
    euler = sum((-1) ** k * len(v) for k, v in faces.items())
    if euler != 1:
        raise FaceError(f"face counts violate the Euler relation (got {euler})")
    return faces


def _affine_rank(points: np.ndarray, tol: float) -> int:
    return affine_frame(points, tol)[1].shape[0]


def _check_supporting(P, s, normals, offsets):
    containing = [j for j, f in enumerate(P.facet_sets) if s <= f]
    functional = normals[containing].sum(axis=0)
    values = P.local @ functional
    top = values.max()
    on = set(np.flatnonzero(values >= top - 1e-7 * max(1.0, abs(top))).tolist())
    if on != set(s):
        raise FaceError(f"vertex set {sorted(s)} is not exposed by a supporting hyperplane")


def f_vector(P: Polytope) -> tuple[int, ...]:
    lattice = face_lattice(P)
    return tuple(len(lattice[k]) for k in range(P.dim + 1))


def _as_face(P: Polytope, F, lattice) -> Face:
    key = F.vertices if isinstance(F, Face) else frozenset(F)
    for faces in lattice.values():
        for face in faces:
            if face.vertices == key:
                return face
    raise FaceError(f"{sorted(key)} is not a face of the polytope")


# -- external angles -------------------------------------------------------

def _facet_normals(P: Polytope, face: Face) -> np.ndarray:
    normals, _ = P.halfspaces
    rows = [j for j, f in enumerate(P.facet_sets) if face.vertices <= f]
    return normals[rows] / np.linalg.norm(normals[rows], axis=1, keepdims=True)


def _exact_angle(P: Polytope, face: Face) -> float:
    d = P.dim
    codim = d - face.dim
    if codim == 0:
        return 1.0
    if codim == 1:
        return 0.5
    if d > 3:
        raise FaceError("exact external angles are implemented for dimension <= 3")
    normals = _facet_normals(P, face)
    if codim == 2:
        # the normal cone is a planar wedge spanned by the two facet normals
        c = np.clip(normals[0] @ normals[1], -1.0, 1.0)
        return math.acos(c) / (2 * math.pi)
    return spherical_polygon_area(normals) / (4 * math.pi)


def spherical_polygon_area(directions: np.ndarray) -> float:
    """Area of the convex spherical polygon spanned by unit vectors in R^3.

    Vertices are ordered around their mean and the polygon is fanned into
    triangles whose areas come from the Van Oosterom-Strackee formula.
    """
    u = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    mean = u.mean(axis=0)
    mean /= np.linalg.norm(mean)
    helper = np.eye(3)[np.argmin(np.abs(mean))]
    e1 = np.cross(mean, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mean, e1)
    order = np.argsort(np.arctan2(u @ e2, u @ e1))
    u = u[order]
    total = 0.0
    for i in range(1, len(u) - 1):
        a, b, c = u[0], u[i], u[i + 1]
        num = abs(a @ np.cross(b, c))
        den = 1 + a @ b + b @ c + c @ a
        total += 2 * math.atan2(num, den)
    return total


def external_angles(P: Polytope, method: str = "exact", eps: float = 0.5,
                    samples: int = 10**6, seed: int = 0,
                    reach: float = math.inf) -> dict[frozenset[int], tuple[float, float]]:
    """External angle (and its standard error) of every face, keyed by vertex set."""
    lattice = face_lattice(P)
    if method == "exact":
        return {f.vertices: (_exact_angle(P, f), 0.0)
                for faces in lattice.values() for f in faces}
    if method == "mc":
        key = (eps, samples, seed)
        if key not in P._mc_cache:
            P._mc_cache[key] = _mc_angles(P, lattice, eps, samples, seed, reach)
        return P._mc_cache[key]
    raise ValueError(f"unknown method {method!r}")


def external_angle(P: Polytope, F, method: str = "exact", **mc_options) -> float:
    face = _as_face(P, F, face_lattice(P))
    return external_angles(P, method, **mc_options)[face.vertices][0]


class Projector:
    """Nearest-point map onto a polytope, reporting the face hit.

    For every face the candidate is the orthogonal projection onto its affine
    hull; the candidate is admissible when it lies in the polytope, and the
    closest admissible candidate is the nearest point. Ties go to the face of
    lowest dimension.
    """

    def __init__(self, P: Polytope, lattice=None):
        self.P = P
        lattice = lattice or face_lattice(P)
        self.faces = [f for k in sorted(lattice) for f in lattice[k]]
        self._frames = []
        for f in self.faces:
            pts = P.vertices[sorted(f.vertices)]
            origin, frame = affine_frame(pts, P.tol)
            self._frames.append((origin, frame))

    def __call__(self, points: np.ndarray):
        pts = np.atleast_2d(points)
        best = np.full(len(pts), np.inf)
        which = np.full(len(pts), -1)
        nearest = np.zeros_like(pts)
        tie = 1e-12 * max(1.0, float(np.abs(self.P.vertices).max()))
        for j, (origin, frame) in enumerate(self._frames):
            proj = origin + ((pts - origin) @ frame.T) @ frame
            ok = self.P.contains(proj, tol=1e-9)
            dist = np.linalg.norm(pts - proj, axis=1)
            # faces come in increasing dimension, so strict improvement keeps
            # the lowest-dimensional face on ties
            better = ok & (dist < best - tie)
            best[better] = dist[better]
            which[better] = j
            nearest[better] = proj[better]
        return best, which, nearest


def _mc_angles(P: Polytope, lattice, eps: float, samples: int, seed: int, reach: float):
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps > reach:
        raise FaceError(f"eps={eps} exceeds the declared reach bound {reach}")
    if samples <= 0:
        raise ValueError("samples must be positive")
    proj = Projector(P, lattice)
    box = Box.around(P.vertices, pad=eps)
    lo, width = np.array(box.lower), np.array(box.upper) - np.array(box.lower)
    counts = np.zeros(len(proj.faces), dtype=np.int64)
    for chunk in range(-(-samples // CHUNK_SIZE)):
        size = min(CHUNK_SIZE, samples - chunk * CHUNK_SIZE)
        pts = lo + width * chunk_seed(seed, chunk).random((size, P.ambient_dim))
        dist, which, _ = proj(pts)
        hit = (dist > 0) & (dist <= eps)
        counts += np.bincount(which[hit], minlength=len(proj.faces))

    N = P.ambient_dim
    out = {}
    for face, c in zip(proj.faces, counts):
        if face.dim == N:
            out[face.vertices] = (1.0, 0.0)
            continue
        p = c / samples
        denom = face.volume * unit_ball_volume(N - face.dim) * eps ** (N - face.dim)
        out[face.vertices] = (box.volume * p / denom,
                              box.volume * math.sqrt(p * (1 - p) / samples) / denom)

    vertex_sum = sum(out[f.vertices][0] for f in lattice[0])
    vertex_err = math.sqrt(sum(out[f.vertices][1] ** 2 for f in lattice[0]))
    if P.dim == N and abs(vertex_sum - 1) > 4 * vertex_err + 1e-12:
        warnings.warn(f"vertex external angles sum to {vertex_sum:.5f}, expected 1", RuntimeWarning)
    return out


def intrinsic_volumes_polytope(P: Polytope, method: str = "exact",
                               **mc_options) -> IntrinsicVolumeVector:
    """V_i as the sum over i-faces of face volume times external angle."""
    lattice = face_lattice(P)
    angles = external_angles(P, method, **mc_options)
    values, errors = [], []
    for i in range(P.dim + 1):
        values.append(sum(f.volume * angles[f.vertices][0] for f in lattice[i]))
        errors.append(math.sqrt(sum((f.volume * angles[f.vertices][1]) ** 2 for f in lattice[i])))
    if method == "exact":
        if abs(values[0] - 1) > 1e-9:
            raise FaceError(f"vertex external angles sum to {values[0]}, expected 1")
        return IntrinsicVolumeVector(P.dim, tuple(values))
    return IntrinsicVolumeVector(P.dim, tuple(values), tuple(errors))


def boundary_area(P: Polytope) -> float:
    if P.dim == 0:
        return 0.0
    return sum(f.volume for f in face_lattice(P)[P.dim - 1])


def embed(P: Polytope, extra_dims: int) -> Polytope:
    if extra_dims < 0:
        raise ValueError("extra_dims must be nonnegative")
    if extra_dims == 0:
        return P
    return Polytope(np.pad(P.vertices, ((0, 0), (0, extra_dims))))


def boundary_intrinsic_volumes(P: Polytope) -> IntrinsicVolumeVector:
    """(chi, 0, area) of the closed surface bounding a 3-polytope in R^3."""
    if P.ambient_dim != 3 or P.dim != 3:
        raise FaceError("boundary intrinsic volumes need a full-dimensional polytope in R^3")
    v, e, f, _ = f_vector(P)
    return IntrinsicVolumeVector(2, (v - e + f, 0.0, boundary_area(P)))


# -- constructors ------------------------------------------------------------

def cube(n: int = 3, side: float = 1.0) -> Polytope:
    return box([side] * n)


def box(sides) -> Polytope:
    return Polytope(np.array(list(itertools.product(*[(0.0, s) for s in sides]))))


def regular_simplex(n: int = 3, edge: float = 1.0) -> Polytope:
    """Regular n-simplex in R^n with the given edge length."""
    pts = np.eye(n + 1) * edge / math.sqrt(2)
    origin, frame = affine_frame(pts, 1e-12)
    return Polytope((pts - origin) @ frame.T)


def regular_polygon(m: int, radius: float = 1.0) -> Polytope:
    t = 2 * math.pi * np.arange(m) / m
    return Polytope(radius * np.stack([np.cos(t), np.sin(t)], axis=1))


def random_polytope(n_points: int, dim: int, rng: np.random.Generator) -> Polytope:
    return Polytope(rng.normal(size=(n_points, dim)))


def load_polytope(path) -> Polytope:
    return Polytope.from_json(json.loads(Path(path).read_text()))
