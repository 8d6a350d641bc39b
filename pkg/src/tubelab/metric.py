"""Finite metric spaces, model-space samplers and Gromov-Hausdorff estimates."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

GH_EXACT_LIMIT = 36


class MetricError(ValueError):
    pass


class FiniteMetricSpace:
    def __init__(self, d, check: bool = True):
        d = np.atleast_2d(np.asarray(d, dtype=float))
        self.d = d
        if check:
            self.validate()

    def validate(self, tol: float = 1e-9):
        d = self.d
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise MetricError("distance matrix must be square and nonempty")
        if not np.all(np.isfinite(d)):
            raise MetricError("distances must be finite")
        if np.any(np.abs(np.diag(d)) > tol):
            raise MetricError("nonzero diagonal")
        if np.any(np.abs(d - d.T) > tol):
            raise MetricError("distance matrix is not symmetric")
        if np.any(d < -tol):
            raise MetricError("negative distance")
        if len(d) <= 400:
            # d[i, k] <= d[i, j] + d[j, k] for all triples
            viol = d[:, None, :] - d[:, :, None] - d[None, :, :]
            if viol.max() > tol * max(1.0, float(d.max())):
                raise MetricError("triangle inequality violated")

    @property
    def size(self) -> int:
        return len(self.d)

    def __len__(self):
        return len(self.d)

    @property
    def diameter(self) -> float:
        return float(self.d.max())

    def subspace(self, idx) -> "FiniteMetricSpace":
        idx = np.asarray(idx)
        return FiniteMetricSpace(self.d[np.ix_(idx, idx)], check=False)

    def scaled(self, a: float) -> "FiniteMetricSpace":
        return FiniteMetricSpace(a * self.d, check=False)

    def to_json(self) -> dict:
        return {"n": self.size, "d": self.d.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "FiniteMetricSpace":
        space = cls(data["d"])
        if int(data.get("n", space.size)) != space.size:
            raise MetricError("'n' does not match the distance matrix")
        return space

    @classmethod
    def point(cls) -> "FiniteMetricSpace":
        return cls([[0.0]])


def hausdorff_distance(A_idx, B_idx, ambient: FiniteMetricSpace) -> float:
    A, B = list(A_idx), list(B_idx)
    if not A or not B:
        raise MetricError("Hausdorff distance needs nonempty subsets")
    block = ambient.d[np.ix_(A, B)]
    return float(max(block.min(axis=1).max(), block.min(axis=0).max()))


def distortion(A: FiniteMetricSpace, B: FiniteMetricSpace, pairs) -> float:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    return float(np.abs(A.d[np.ix_(i, i)] - B.d[np.ix_(j, j)]).max())


def is_correspondence(pairs, n_a: int, n_b: int) -> bool:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return (set(pairs[:, 0].tolist()) == set(range(n_a))
            and set(pairs[:, 1].tolist()) == set(range(n_b)))


def gh_exact(A: FiniteMetricSpace, B: FiniteMetricSpace) -> float:
    """Half the minimal distortion over all correspondences.

    Distortion only grows when pairs are added, so it suffices to search
    correspondences made of one chosen partner per point of A and per point
    of B; this is done by depth-first branch and bound.
    """
    na, nb = A.size, B.size
    if na * nb > GH_EXACT_LIMIT:
        raise MetricError(f"|A|*|B| = {na * nb} exceeds the exact-search limit {GH_EXACT_LIMIT}")
    # cost[a, b, a2, b2] = |d_A(a, a2) - d_B(b, b2)|
    cost = np.abs(A.d[:, None, :, None] - B.d[None, :, None, :])
    slots = [("a", a) for a in range(na)] + [("b", b) for b in range(nb)]
    best = [math.inf]
    chosen: list[tuple[int, int]] = []

    def added_cost(a, b, current):
        c = cost[a, b, a, b]
        for a2, b2 in chosen:
            c = max(c, cost[a, b, a2, b2])
            if c >= best[0]:
                break
        return max(c, current)

    def covered_b(b):
        return any(b2 == b for _, b2 in chosen)

    def search(k, current):
        if current >= best[0]:
            return
        if k == len(slots):
            best[0] = current
            return
        side, x = slots[k]
        if side == "b" and covered_b(x):
            search(k + 1, current)
            return
        options = []
        if side == "a":
            for b in range(nb):
                options.append(((x, b), added_cost(x, b, current)))
        else:
            for a in range(na):
                options.append(((a, x), added_cost(a, x, current)))
        options.sort(key=lambda o: o[1])
        for pair, c in options:
            if c >= best[0]:
                break
            chosen.append(pair)
            search(k + 1, c)
            chosen.pop()

    search(0, 0.0)
    return best[0] / 2


def gh_brute_force(A: FiniteMetricSpace, B: FiniteMetricSpace) -> float:
    """Enumerate every relation in A x B (|A|*|B| <= 16); test oracle."""
    na, nb = A.size, B.size
    if na * nb > 16:
        raise MetricError("brute force limited to 16 pairs")
    all_pairs = [(a, b) for a in range(na) for b in range(nb)]
    best = math.inf
    for mask in range(1, 1 << len(all_pairs)):
        rel = [p for k, p in enumerate(all_pairs) if mask >> k & 1]
        if is_correspondence(rel, na, nb):
            best = min(best, distortion(A, B, rel))
    return best / 2


def _distance_values(space: FiniteMetricSpace) -> np.ndarray:
    return np.unique(space.d)


def _real_hausdorff(x: np.ndarray, y: np.ndarray) -> float:
    """Hausdorff distance between two finite sets of reals (sorted arrays)."""
    def directed(p, q):
        pos = np.clip(np.searchsorted(q, p), 1, len(q) - 1) if len(q) > 1 else np.zeros(len(p), int)
        left = np.abs(p - q[pos - 1]) if len(q) > 1 else np.abs(p - q[0])
        right = np.abs(p - q[pos])
        return float(np.minimum(left, right).max())
    return max(directed(x, y), directed(y, x))


def gh_lower(A: FiniteMetricSpace, B: FiniteMetricSpace) -> float:
    """Lower bound from diameters and distance-value sets.

    For a correspondence of distortion t, every distance of A is within t of
    some distance of B (and back), and the distance profile of a point is
    within t (Hausdorff, on the line) of the profile of each of its partners.
    """
    bound = abs(A.diameter - B.diameter)
    bound = max(bound, _real_hausdorff(_distance_values(A), _distance_values(B)))
    prof_a = [np.unique(row) for row in A.d]
    prof_b = [np.unique(row) for row in B.d]
    if A.size * B.size <= 250_000:
        h = np.array([[_real_hausdorff(pa, pb) for pb in prof_b] for pa in prof_a])
        bound = max(bound, h.min(axis=1).max(), h.min(axis=0).max())
    return bound / 2


# -- annealing upper bound ------------------------------------------------------

class _Annealer:
    """Simulated annealing over correspondences with pair insert, delete and swap moves.

    The pair-cost matrix of the current relation is kept incrementally with
    per-row maxima, so a move costs O(|R|) instead of O(|R|^2).
    """

    # the max alone is flat almost everywhere; a small mean term breaks ties
    MEAN_WEIGHT = 0.05

    def __init__(self, A, B, rng):
        self.A, self.B, self.rng = A, B, rng
        self.na, self.nb = A.size, B.size
        self._alloc(2 * (self.na + self.nb))
        self.k = 0
        self.total = 0.0
        self.index: dict[tuple[int, int], int] = {}
        self.cnt_a = np.zeros(self.na, dtype=np.int64)
        self.cnt_b = np.zeros(self.nb, dtype=np.int64)

    def _alloc(self, cap):
        old = getattr(self, "C", None)
        C = np.zeros((cap, cap))
        pa, pb, rowmax = np.zeros(cap, np.int64), np.zeros(cap, np.int64), np.zeros(cap)
        if old is not None:
            k = self.k
            C[:k, :k] = old[:k, :k]
            pa[:k], pb[:k], rowmax[:k] = self.pa[:k], self.pb[:k], self.rowmax[:k]
        self.C, self.pa, self.pb, self.rowmax = C, pa, pb, rowmax

    def insert(self, a, b):
        k = self.k
        if k == len(self.pa):
            self._alloc(2 * k)
        row = np.abs(self.A.d[a, self.pa[:k]] - self.B.d[b, self.pb[:k]])
        self.pa[k], self.pb[k] = a, b
        self.C[k, :k] = row
        self.C[:k, k] = row
        self.C[k, k] = 0.0
        self.rowmax[:k] = np.maximum(self.rowmax[:k], row)
        self.rowmax[k] = row.max() if k else 0.0
        self.total += 2 * row.sum()
        self.index[(a, b)] = k
        self.cnt_a[a] += 1
        self.cnt_b[b] += 1
        self.k = k + 1

    def delete(self, a, b):
        j = self.index.pop((a, b))
        k = self.k - 1
        col = self.C[:self.k, j].copy()
        self.total -= 2 * col.sum()
        self.cnt_a[a] -= 1
        self.cnt_b[b] -= 1
        if j != k:
            # move the last pair into slot j
            self.pa[j], self.pb[j] = self.pa[k], self.pb[k]
            self.C[j, :k + 1] = self.C[k, :k + 1]
            self.C[:k + 1, j] = self.C[:k + 1, k]
            self.C[j, j] = 0.0
            self.rowmax[j] = self.rowmax[k]
            self.index[(int(self.pa[j]), int(self.pb[j]))] = j
            col[j] = col[k]
        self.k = k
        if k:
            stale = np.flatnonzero(self.rowmax[:k] <= col[:k])
            if len(stale):
                self.rowmax[stale] = self.C[np.ix_(stale, np.arange(k))].max(axis=1)

    def distortion(self) -> float:
        return float(self.rowmax[:self.k].max()) if self.k else 0.0

    def energy(self) -> float:
        return self.distortion() + self.MEAN_WEIGHT * self.total / max(self.k ** 2, 1)

    def pairs(self):
        return np.stack([self.pa[:self.k], self.pb[:self.k]], axis=1)

    def initial(self):
        """Greedy landmark matching: anchor one pair, then match each point of
        A to the point of B whose distances to the matched anchors agree best."""
        A, B, rng = self.A, self.B, self.rng
        a0 = int(rng.integers(self.na))
        # start from the partner whose distance profile looks most alike
        prof = np.unique(A.d[a0])
        gaps = np.array([_real_hausdorff(prof, np.unique(row)) for row in B.d])
        ties = np.flatnonzero(gaps <= gaps.min() + 1e-12)
        b0 = int(ties[rng.integers(len(ties))])
        anchors_a, anchors_b = [a0], [b0]
        self.insert(a0, b0)
        for a in np.argsort(-A.d[a0]):
            a = int(a)
            if a == a0:
                continue
            err = np.abs(A.d[a, anchors_a][None, :] - B.d[:, anchors_b]).max(axis=1)
            b = int(np.argmin(err))
            self.insert(a, b)
            if len(anchors_a) < 8:
                anchors_a.append(a)
                anchors_b.append(b)
        for b in np.flatnonzero(self.cnt_b == 0):
            ia, ib = self.pa[:self.k], self.pb[:self.k]
            err = np.abs(A.d[:, ia] - B.d[b, ib][None, :]).max(axis=1)
            self.insert(int(np.argmin(err)), int(b))

    def propose(self, a, b):
        """Apply a random move touching (a, b); return the undo list."""
        rng = self.rng
        ops = []
        if (a, b) not in self.index:
            self.insert(a, b)
            return [("del", a, b)]
        # (a, b) is present: delete it, first giving a and b new partners if needed
        if self.cnt_a[a] == 1:
            b2 = int(rng.integers(self.nb))
            if (a, b2) in self.index:
                return []
            self.insert(a, b2)
            ops.append(("del", a, b2))
        if self.cnt_b[b] == 1:
            a2 = int(rng.integers(self.na))
            if (a2, b) in self.index:
                for op in reversed(ops):
                    self.delete(op[1], op[2])
                return []
            self.insert(a2, b)
            ops.append(("del", a2, b))
        self.delete(a, b)
        ops.append(("ins", a, b))
        return ops

    def undo(self, ops):
        for op, a, b in reversed(ops):
            if op == "del":
                self.delete(a, b)
            else:
                self.insert(a, b)

    def prune(self):
        """Drop redundant pairs while that does not increase the distortion."""
        order = sorted(self.index, key=lambda p: -self.rowmax[self.index[p]])
        for a, b in order:
            if self.cnt_a[a] > 1 and self.cnt_b[b] > 1:
                before = self.distortion()
                self.delete(a, b)
                if self.distortion() > before:
                    self.insert(a, b)

    def run(self, iterations: int, t0: float, t1: float):
        self.initial()
        self.prune()
        best = self.distortion()
        best_pairs = self.pairs().copy()
        energy = self.energy()
        cooling = (t1 / t0) ** (1 / max(iterations - 1, 1))
        temp = t0
        rng = self.rng
        for _ in range(iterations):
            if best == 0:
                break
            ops = self.propose(int(rng.integers(self.na)), int(rng.integers(self.nb)))
            if ops:
                e2 = self.energy()
                if e2 <= energy or rng.random() < math.exp(-(e2 - energy) / temp):
                    energy = e2
                    d = self.distortion()
                    if d < best:
                        best, best_pairs = d, self.pairs().copy()
                else:
                    self.undo(ops)
            temp *= cooling
        return best, best_pairs


def gh_upper(A: FiniteMetricSpace, B: FiniteMetricSpace, iterations: int = 2000,
             restarts: int = 8, seed: int = 0, workers: int = 1) -> float:
    """Half the distortion of the best correspondence found by annealing.

    Restarts use seeds derived from ``(seed, restart)`` and the reduction is
    a minimum, so the value does not depend on ``workers``.
    """
    if A.size == 1 or B.size == 1:
        # the only correspondence pairs the point with everything
        return max(A.diameter, B.diameter) / 2
    scale = max(A.diameter, B.diameter, 1e-12)

    def one(r):
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), r]))
        return _Annealer(A, B, rng).run(iterations, 0.1 * scale, 1e-4 * scale)[0]

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, range(restarts)))
    else:
        results = [one(r) for r in range(restarts)]
    return min(results) / 2


# -- model spaces ---------------------------------------------------------------

@dataclass(frozen=True)
class SpaceSpec:
    kind: str
    params: tuple = ()
    children: tuple["SpaceSpec", ...] = ()

    def __str__(self):
        parts = [_fmt(p) for p in self.params] + [str(c) for c in self.children]
        if self.kind == "point":
            return "point"
        return f"{self.kind}({','.join(parts)})"

    @property
    def euler_characteristic(self) -> int:
        k = self.kind
        if k == "sphere":
            return 2
        if k == "flat_torus":
            return 0
        if k in ("interval", "point"):
            return 1
        if k == "product":
            return self.children[0].euler_characteristic * self.children[1].euler_characteristic
        if k == "scale":
            return 1 if self.params[0] == 0 else self.children[0].euler_characteristic
        raise MetricError(f"unknown space {k!r}")

    @property
    def diameter(self) -> float:
        k = self.kind
        if k == "sphere":
            return math.pi * self.params[0]
        if k == "flat_torus":
            return math.hypot(self.params[0], self.params[1]) / 2
        if k == "interval":
            return self.params[0]
        if k == "point":
            return 0.0
        if k == "product":
            return math.hypot(self.children[0].diameter, self.children[1].diameter)
        if k == "scale":
            return self.params[0] * self.children[0].diameter
        raise MetricError(f"unknown space {k!r}")


def _fmt(x):
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def sphere(r: float) -> SpaceSpec:
    return SpaceSpec("sphere", (float(r),))


def flat_torus(a: float, b: float) -> SpaceSpec:
    return SpaceSpec("flat_torus", (float(a), float(b)))


def interval(L: float) -> SpaceSpec:
    return SpaceSpec("interval", (float(L),))


def point() -> SpaceSpec:
    return SpaceSpec("point")


def product(x: SpaceSpec, y: SpaceSpec) -> SpaceSpec:
    return SpaceSpec("product", (), (x, y))


def scale(eps: float, x: SpaceSpec) -> SpaceSpec:
    return SpaceSpec("scale", (float(eps),), (x,))


_ARITY = {"sphere": (1, 0), "flat_torus": (2, 0), "interval": (1, 0), "point": (0, 0),
          "product": (0, 2), "scale": (1, 1)}


def parse_spec(text: str) -> SpaceSpec:
    """Parse e.g. ``product(sphere(1), scale(0.1, flat_torus(1, 2)))``."""
    tokens = re.findall(r"[A-Za-z_]+|[-+0-9.eE]+|[(),]", text)
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            raise MetricError(f"expected {tok!r} in {text!r}")
        pos += 1

    def node() -> SpaceSpec:
        nonlocal pos
        if pos >= len(tokens):
            raise MetricError(f"unexpected end of {text!r}")
        name = tokens[pos]
        pos += 1
        if name not in _ARITY:
            raise MetricError(f"unknown space {name!r}")
        n_num, n_child = _ARITY[name]
        if n_num + n_child == 0:
            if pos < len(tokens) and tokens[pos] == "(":
                expect("(")
                expect(")")
            return SpaceSpec(name)
        expect("(")
        nums, kids = [], []
        for k in range(n_num + n_child):
            if k:
                expect(",")
            if k < n_num:
                try:
                    nums.append(float(tokens[pos]))
                except (IndexError, ValueError):
                    raise MetricError(f"expected a number in {text!r}") from None
                pos += 1
            else:
                kids.append(node())
        expect(")")
        return SpaceSpec(name, tuple(nums), tuple(kids))

    spec = node()
    if pos != len(tokens):
        raise MetricError(f"trailing input in {text!r}")
    validate_spec(spec)
    return spec


def validate_spec(spec: SpaceSpec):
    if spec.kind not in _ARITY:
        raise MetricError(f"unknown space {spec.kind!r}")
    n_num, n_child = _ARITY[spec.kind]
    if len(spec.params) != n_num or len(spec.children) != n_child:
        raise MetricError(f"wrong number of arguments for {spec.kind}")
    if spec.kind == "scale":
        if spec.params[0] < 0:
            raise MetricError("scale factor must be nonnegative")
    elif any(p <= 0 for p in spec.params):
        raise MetricError(f"{spec.kind} parameters must be positive")
    for c in spec.children:
        validate_spec(c)


def sample_coordinates(spec: SpaceSpec, n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample in the model's coordinates (one row per point)."""
    k = spec.kind
    if k == "sphere":
        v = rng.normal(size=(n_points, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)
    if k == "flat_torus":
        return rng.random((n_points, 2)) * np.array(spec.params)
    if k == "interval":
        return rng.random((n_points, 1)) * spec.params[0]
    if k == "point":
        return np.zeros((n_points, 0))
    if k == "product":
        return np.hstack([sample_coordinates(c, n_points, rng) for c in spec.children])
    if k == "scale":
        return sample_coordinates(spec.children[0], n_points, rng)
    raise MetricError(f"unknown space {k!r}")


def _width(spec: SpaceSpec) -> int:
    return {"sphere": 3, "flat_torus": 2, "interval": 1, "point": 0}.get(spec.kind) or (
        sum(_width(c) for c in spec.children))


def geodesic_distances(spec: SpaceSpec, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    """Intrinsic distances between coordinate rows of X and Y."""
    Y = X if Y is None else Y
    k = spec.kind
    if k == "sphere":
        return spec.params[0] * np.arccos(np.clip(X @ Y.T, -1.0, 1.0))
    if k == "flat_torus":
        period = np.array(spec.params)
        diff = np.abs(X[:, None, :] - Y[None, :, :]) % period
        # on a rectangular lattice the minimum over the 3x3 translates splits by coordinate
        diff = np.minimum(diff, period - diff)
        return np.sqrt((diff ** 2).sum(-1))
    if k == "interval":
        return np.abs(X[:, None, 0] - Y[None, :, 0])
    if k == "point":
        return np.zeros((len(X), len(Y)))
    if k == "product":
        w = _width(spec.children[0])
        dx = geodesic_distances(spec.children[0], X[:, :w], Y[:, :w])
        dy = geodesic_distances(spec.children[1], X[:, w:], Y[:, w:])
        return np.sqrt(dx ** 2 + dy ** 2)
    if k == "scale":
        return spec.params[0] * geodesic_distances(spec.children[0], X, Y)
    raise MetricError(f"unknown space {k!r}")


def sample_space(spec, n_points: int, seed: int) -> FiniteMetricSpace:
    """i.i.d. uniform sample of a model space with its geodesic metric.

    ``point`` always yields the one-point space.
    """
    spec = parse_spec(spec) if isinstance(spec, str) else spec
    validate_spec(spec)
    if n_points <= 0:
        raise MetricError("n_points must be positive")
    if spec.kind == "point":
        return FiniteMetricSpace.point()
    X = sample_coordinates(spec, n_points, np.random.default_rng(seed))
    d = geodesic_distances(spec, X)
    np.fill_diagonal(d, 0.0)
    return FiniteMetricSpace(np.maximum(d, d.T), check=False)


def covering_slack(spec: SpaceSpec, n_points: int, seed: int, n_probe: int = 2000) -> float:
    """Covering radius of the seeded sample, estimated against fresh probe points."""
    if spec.kind == "point":
        return 0.0
    X = sample_coordinates(spec, n_points, np.random.default_rng(seed))
    P = sample_coordinates(spec, n_probe, np.random.default_rng([seed, 1]))
    return float(geodesic_distances(spec, P, X).min(axis=1).max())


# -- collapse experiments ---------------------------------------------------------

@dataclass(frozen=True)
class CollapseRow:
    eps: float
    gh_upper: float
    slack: float
    chi: int
    limit_chi: int

    @property
    def flag(self) -> bool:
        return self.chi != self.limit_chi


@dataclass(frozen=True)
class CollapseTable:
    rows: tuple[CollapseRow, ...]
    limit: SpaceSpec

    @property
    def discontinuity(self) -> bool:
        """The invariant column disagrees with the limit where GH is smallest."""
        return bool(self.rows) and self.rows[-1].flag

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["eps", "gh_upper", "slack", "chi", "limit_chi", "flag"])
        for r in self.rows:
            w.writerow([r.eps, r.gh_upper, r.slack, r.chi, r.limit_chi, int(r.flag)])
        return buf.getvalue()


def collapse_run(family: Callable[[float], SpaceSpec], eps_list: Sequence[float],
                 limit_spec, n_points: int, seed: int, iterations: int = 2000,
                 restarts: int = 2) -> CollapseTable:
    limit_spec = parse_spec(limit_spec) if isinstance(limit_spec, str) else limit_spec
    limit = sample_space(limit_spec, n_points, seed + 1)
    rows = []
    for j, eps in enumerate(eps_list):
        spec = family(eps)
        spec = parse_spec(spec) if isinstance(spec, str) else spec
        s = seed + 1000 * (j + 1)
        X = sample_space(spec, n_points, s)
        gh = gh_upper(X, limit, iterations=iterations, restarts=restarts, seed=s)
        slack = covering_slack(spec, n_points, s) + covering_slack(limit_spec, n_points, seed + 1)
        rows.append(CollapseRow(float(eps), gh, slack, spec.euler_characteristic,
                                limit_spec.euler_characteristic))
    return CollapseTable(tuple(rows), limit_spec)


def load_space(path) -> FiniteMetricSpace:
    with open(path) as fh:
        return FiniteMetricSpace.from_json(json.load(fh))
