"""Stratified spaces as posets of primitive extremal subsets, and Euler calculus on them.

A primitive ``E`` stands for the closed set it generates; its stratum ``S_E``
is ``E`` minus everything strictly below it. The indicator ``1_E`` is 1 on the
strata ``S_E'`` with ``E' <= E``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping


class StratError(ValueError):
    pass


class StratPoset:
    """Finite poset of primitive extremal subsets ordered by inclusion."""

    def __init__(self, strata: Mapping[str, int] | Iterable, order: Iterable = ()):
        if isinstance(strata, Mapping):
            dims = dict(strata)
        else:
            dims = {}
            for s in strata:
                sid, dim = (s["id"], s["dim"]) if isinstance(s, Mapping) else s
                if sid in dims:
                    raise StratError(f"duplicate stratum id {sid!r}")
                dims[sid] = dim
        if not dims:
            raise StratError("poset needs at least one stratum")
        self.dims = {str(k): int(v) for k, v in dims.items()}
        self.ids = tuple(self.dims)
        less = {e: set() for e in self.ids}  # less[e] = elements strictly below e
        for a, b in order:
            a, b = str(a), str(b)
            if a not in self.dims or b not in self.dims:
                raise StratError(f"order mentions unknown stratum in ({a!r}, {b!r})")
            if a != b:
                less[b].add(a)
        # transitive closure
        changed = True
        while changed:
            changed = False
            for e in self.ids:
                extra = set().union(*(less[x] for x in less[e])) - less[e]
                if extra:
                    less[e] |= extra
                    changed = True
        for e in self.ids:
            if e in less[e]:
                raise StratError(f"order is not antisymmetric at {e!r}")
        self._less = {e: frozenset(v) for e, v in less.items()}
        tops = [e for e in self.ids if len(self._less[e]) == len(self.ids) - 1]
        if len(tops) != 1:
            raise StratError("poset must have a unique maximum (the open stratum)")
        self.top = tops[0]
        if any(d > self.dims[self.top] for d in self.dims.values()):
            raise StratError("a stratum has larger dimension than the open stratum")

    def __eq__(self, other):
        return (isinstance(other, StratPoset) and self.dims == other.dims
                and self._less == other._less)

    def __hash__(self):
        return hash((tuple(sorted(self.dims.items())),
                     tuple(sorted((k, tuple(sorted(v))) for k, v in self._less.items()))))

    def __repr__(self):
        return f"StratPoset({self.dims}, top={self.top!r})"

    def __len__(self):
        return len(self.ids)

    def leq(self, a: str, b: str) -> bool:
        return a == b or a in self._less[b]

    def below(self, e: str) -> frozenset[str]:
        return self._less[e]

    def above(self, e: str) -> list[str]:
        return [x for x in self.ids if e in self._less[x]]

    def linear_extension(self) -> list[str]:
        """Elements sorted so everything below an element comes before it."""
        return sorted(self.ids, key=lambda e: (len(self._less[e]), self.ids.index(e)))

    def cover_pairs(self) -> list[tuple[str, str]]:
        return [(a, b) for b in self.ids for a in self._less[b]
                if not any(a in self._less[c] for c in self._less[b])]

    def to_json(self) -> dict:
        return {"strata": [{"id": e, "dim": self.dims[e]} for e in self.ids],
                "order": [list(p) for p in self.cover_pairs()]}

    @classmethod
    def from_json(cls, data: dict) -> "StratPoset":
        return cls(data["strata"], data.get("order", ()))


class ConstructibleFunction:
    """Integer value on each stratum."""

    def __init__(self, poset: StratPoset, values: Mapping[str, int]):
        values = {str(k): v for k, v in values.items()}
        if set(values) != set(poset.ids):
            missing = set(poset.ids) - set(values)
            extra = set(values) - set(poset.ids)
            raise StratError(f"function must be total on strata (missing {sorted(missing)}, "
                             f"unknown {sorted(extra)})")
        for k, v in values.items():
            if int(v) != v:
                raise StratError(f"value on {k!r} is not an integer")
        self.poset = poset
        self.values = {e: int(values[e]) for e in poset.ids}

    def __getitem__(self, e: str) -> int:
        return self.values[e]

    def __eq__(self, other):
        return (isinstance(other, ConstructibleFunction) and self.poset == other.poset
                and self.values == other.values)

    def __repr__(self):
        return f"ConstructibleFunction({self.values})"

    def _check(self, other):
        if self.poset != other.poset:
            raise StratError("functions live on different posets")

    def __add__(self, other):
        self._check(other)
        return ConstructibleFunction(self.poset, {e: self[e] + other[e] for e in self.poset.ids})

    def __sub__(self, other):
        return self + (-1) * other

    def __mul__(self, k: int):
        return ConstructibleFunction(self.poset, {e: k * v for e, v in self.values.items()})

    __rmul__ = __mul__

    def compose(self, sigma: Mapping[str, str]) -> "ConstructibleFunction":
        """F o sigma."""
        return ConstructibleFunction(self.poset, {e: self[sigma[e]] for e in self.poset.ids})

    @classmethod
    def constant(cls, poset: StratPoset, value: int) -> "ConstructibleFunction":
        return cls(poset, {e: value for e in poset.ids})

    @classmethod
    def indicator(cls, poset: StratPoset, E: str) -> "ConstructibleFunction":
        return cls(poset, {e: int(poset.leq(e, E)) for e in poset.ids})


def to_coeffs(F: ConstructibleFunction) -> dict[str, int]:
    """The unique c_E with F = sum_E c_E 1_E, by Moebius inversion from the top down."""
    P = F.poset
    c: dict[str, int] = {}
    for e in reversed(P.linear_extension()):
        c[e] = F[e] - sum(c[x] for x in P.above(e))
    return {e: c[e] for e in P.ids}


def from_coeffs(poset: StratPoset, coeffs: Mapping[str, int]) -> ConstructibleFunction:
    if set(coeffs) != set(poset.ids):
        raise StratError("need one coefficient per primitive")
    return ConstructibleFunction(poset, {e: coeffs[e] + sum(coeffs[x] for x in poset.above(e))
                                         for e in poset.ids})


# -- maps and push-forward --------------------------------------------------------

class MapModel:
    """A map X -> Y known only through chi(f^-1(y) & E) for y in each stratum of Y."""

    def __init__(self, source: StratPoset, target: StratPoset, table: Mapping):
        entries = {}
        for key, v in _flatten_table(table).items():
            E, S = key
            if E not in source.dims:
                raise StratError(f"fiber table mentions unknown source primitive {E!r}")
            if S not in target.dims:
                raise StratError(f"fiber table mentions unknown target stratum {S!r}")
            if int(v) != v:
                raise StratError(f"fiber Euler characteristic for {key} is not an integer")
            entries[key] = int(v)
        missing = [(E, S) for E in source.ids for S in target.ids if (E, S) not in entries]
        if missing:
            raise StratError(f"fiber table is missing entries {missing}")
        self.source, self.target, self.table = source, target, entries

    def __repr__(self):
        return f"MapModel({len(self.source)} -> {len(self.target)} strata)"

    def to_json(self) -> dict:
        return {"source": self.source.to_json(), "target": self.target.to_json(),
                "fiber_table": {E: {S: self.table[E, S] for S in self.target.ids}
                                for E in self.source.ids}}

    @classmethod
    def from_json(cls, data: dict) -> "MapModel":
        return cls(StratPoset.from_json(data["source"]), StratPoset.from_json(data["target"]),
                   data["fiber_table"])


def _flatten_table(table: Mapping) -> dict[tuple[str, str], int]:
    out = {}
    for key, v in table.items():
        if isinstance(v, Mapping):
            for S, x in v.items():
                out[str(key), str(S)] = x
        elif isinstance(key, tuple):
            out[str(key[0]), str(key[1])] = v
        else:
            E, S = (part.strip() for part in str(key).split(","))
            out[E, S] = v
    return out


def identity_map(poset: StratPoset) -> MapModel:
    # the fiber over y in S_E' is {y}, which meets E exactly when E' <= E
    return MapModel(poset, poset, {(E, S): int(poset.leq(S, E)) for E in poset.ids for S in poset.ids})


def euler_pushforward(f: MapModel, F: ConstructibleFunction) -> ConstructibleFunction:
    """(f_* F)(y) = sum_E c_E chi(f^-1(y) & E)."""
    if F.poset != f.source:
        raise StratError("function is not defined on the source of the map")
    c = to_coeffs(F)
    return ConstructibleFunction(f.target, {S: sum(c[E] * f.table[E, S] for E in f.source.ids)
                                            for S in f.target.ids})


def stratum_fiber_chi_c(g: MapModel) -> dict[tuple[str, str], int]:
    """chi_c(g^-1(z) & S_E) from the closed-set table, inverting upward.

    The closed set E is the disjoint union of the strata below it, and
    chi = chi_c on the compact fibers.
    """
    P = g.source
    out: dict[tuple[str, str], int] = {}
    for z in g.target.ids:
        for E in P.linear_extension():
            out[E, z] = g.table[E, z] - sum(out[x, z] for x in P.below(E))
    return out


def compose(f: MapModel, g: MapModel) -> MapModel:
    """Fiber table of g o f by Euler integration over the fibers of g."""
    if f.target != g.source:
        raise StratError("maps do not compose")
    chi_c = stratum_fiber_chi_c(g)
    table = {(E, z): sum(f.table[E, S] * chi_c[S, z] for S in f.target.ids)
             for E in f.source.ids for z in g.target.ids}
    return MapModel(f.source, g.target, table)


# -- isometries ---------------------------------------------------------------------

class IsometryAction:
    """A finite group of poset automorphisms preserving dimension and order."""

    def __init__(self, poset: StratPoset, elements: Iterable[Mapping[str, str]]):
        self.poset = poset
        self.elements = [dict(s) for s in elements]
        self.validate()

    def validate(self):
        P = self.poset
        ident = {e: e for e in P.ids}
        keys = set()
        for s in self.elements:
            if set(s) != set(P.ids) or set(s.values()) != set(P.ids):
                raise StratError("isometry must be a bijection of the strata")
            if any(P.dims[e] != P.dims[s[e]] for e in P.ids):
                raise StratError("isometry must preserve dimensions")
            if any(P.leq(a, b) != P.leq(s[a], s[b]) for a in P.ids for b in P.ids):
                raise StratError("isometry must preserve the order")
            keys.add(_key(s, P))
        if _key(ident, P) not in keys:
            raise StratError("group must contain the identity")
        for s in self.elements:
            if _key({v: k for k, v in s.items()}, P) not in keys:
                raise StratError("group is not closed under inverses")
            for t in self.elements:
                if _key({e: s[t[e]] for e in P.ids}, P) not in keys:
                    raise StratError("group is not closed under composition")

    @classmethod
    def trivial(cls, poset: StratPoset) -> "IsometryAction":
        return cls(poset, [{e: e for e in poset.ids}])

    @classmethod
    def generated(cls, poset: StratPoset, generators: Iterable[Mapping[str, str]]) -> "IsometryAction":
        ident = {e: e for e in poset.ids}
        group = {_key(ident, poset): ident}
        frontier = [ident]
        gens = [dict(g) for g in generators]
        while frontier:
            nxt = []
            for s in frontier:
                for g in gens:
                    t = {e: g[s[e]] for e in poset.ids}
                    k = _key(t, poset)
                    if k not in group:
                        group[k] = t
                        nxt.append(t)
            frontier = nxt
        return cls(poset, group.values())

    def __len__(self):
        return len(self.elements)


def _key(s, P):
    return tuple(s[e] for e in P.ids)


def equivalent_up_to_isometry(F: ConstructibleFunction, G: ConstructibleFunction,
                              action: IsometryAction) -> dict[str, str] | None:
    """First group element sigma with G = F o sigma, or None."""
    if F.poset != G.poset or F.poset != action.poset:
        raise StratError("functions and action must share the poset")
    for sigma in action.elements:
        if F.compose(sigma) == G:
            return sigma
    return None


def orbit(F: ConstructibleFunction, action: IsometryAction) -> list[ConstructibleFunction]:
    out = []
    for sigma in action.elements:
        G = F.compose(sigma)
        if G not in out:
            out.append(G)
    return out


# -- boundary constraint --------------------------------------------------------------

@dataclass(frozen=True)
class VerdierResult:
    holds: bool
    branch: str | None  # "alpha_zero", "beta_equal" or None
    n_parity: int | None = None


def verdier_check(alpha: int, betas, n_parity: int | None = None) -> VerdierResult:
    """Constraint on F = alpha 1_X + sum_a beta_a 1_{B_a} over a manifold with boundary.

    Holds when alpha = 0, or when all beta_a agree and alpha = -2 beta_1.
    ``n_parity`` (dimension of the collapsing manifolds mod 2) is carried
    along for reporting; the verdict is the disjunction of both branches.
    """
    betas = [int(b) for b in betas]
    if not betas:
        raise StratError("constraint needs at least one boundary component")
    if alpha == 0:
        return VerdierResult(True, "alpha_zero", n_parity)
    if all(b == betas[0] for b in betas) and alpha == -2 * betas[0]:
        return VerdierResult(True, "beta_equal", n_parity)
    return VerdierResult(False, None, n_parity)


def boundary_coefficients(F: ConstructibleFunction) -> tuple[int, list[int]]:
    """(alpha, betas) of a function on a manifold-with-boundary poset.

    The poset must be the open stratum over boundary components, each of
    which is minimal and sits directly below the top.
    """
    P = F.poset
    comps = [e for e in P.ids if e != P.top]
    if any(P.below(e) for e in comps):
        raise StratError("poset is not a manifold-with-boundary model")
    c = to_coeffs(F)
    return c[P.top], [c[e] for e in comps]


def product_collapse_pair(M_poset: StratPoset, chi_N: int) -> tuple[StratPoset, ConstructibleFunction]:
    """Limit pair of M x eps N as eps -> 0: the constant chi(N) on M."""
    return M_poset, ConstructibleFunction.constant(M_poset, int(chi_N))


# -- volumes of strata and the limit formula ---------------------------------------------

class StratVolumes:
    """Per-stratum intrinsic volumes V_i(S) and compactly supported Euler characteristics."""

    def __init__(self, poset: StratPoset, volumes: Mapping[str, Iterable[float]],
                 chi_c: Mapping[str, int]):
        if set(volumes) != set(poset.ids) or set(chi_c) != set(poset.ids):
            raise StratError("volumes and chi_c must be given for every stratum")
        top_dim = max(poset.dims.values())
        self.poset = poset
        self.dim = top_dim
        self.volumes = {}
        for e in poset.ids:
            v = [float(x) for x in volumes[e]]
            if len(v) > top_dim + 1:
                raise StratError(f"too many volumes for {e!r}")
            v += [0.0] * (top_dim + 1 - len(v))
            if any(x != 0 for x in v[poset.dims[e] + 1:]):
                raise StratError(f"V_i of {e!r} must vanish above its dimension")
            self.volumes[e] = v
        self.chi_c = {e: int(chi_c[e]) for e in poset.ids}


def conjectured_limit(volumes: StratVolumes, F: ConstructibleFunction) -> list[float]:
    """sum_S F(S) V_i(S), with chi_c(S) in place of V_0(S)."""
    if volumes.poset != F.poset:
        raise StratError("volumes and function live on different posets")
    out = []
    for i in range(volumes.dim + 1):
        if i == 0:
            out.append(float(sum(F[e] * volumes.chi_c[e] for e in F.poset.ids)))
        else:
            out.append(float(sum(F[e] * volumes.volumes[e][i] for e in F.poset.ids)))
    return out


# -- bundled models ----------------------------------------------------------------------

def closed_manifold_poset(name: str, dim: int) -> StratPoset:
    return StratPoset({name: dim})


def point_poset() -> StratPoset:
    return closed_manifold_poset("pt", 0)


def interval_poset() -> StratPoset:
    return StratPoset({"interior": 1, "left": 0, "right": 0},
                      [("left", "interior"), ("right", "interior")])


def manifold_with_boundary_poset(dim: int, components: int) -> StratPoset:
    strata = {"interior": dim}
    strata.update({f"B{a}": dim - 1 for a in range(1, components + 1)})
    return StratPoset(strata, [(f"B{a}", "interior") for a in range(1, components + 1)])


def disk_poset() -> StratPoset:
    return StratPoset({"interior": 2, "boundary": 1}, [("boundary", "interior")])


def sphere_to_interval() -> MapModel:
    """Height function of the round 2-sphere: circles over the inside, points at the ends."""
    return MapModel(closed_manifold_poset("S2", 2), interval_poset(),
                    {"S2": {"interior": 0, "left": 1, "right": 1}})


def sphere_to_disk() -> MapModel:
    """Projection of the 2-sphere onto its equatorial disk: two points inside, one on the rim."""
    return MapModel(closed_manifold_poset("S2", 2), disk_poset(),
                    {"S2": {"interior": 2, "boundary": 1}})


def torus_to_point() -> MapModel:
    return MapModel(closed_manifold_poset("T2", 2), point_poset(), {"T2": {"pt": 0}})


def interval_to_point() -> MapModel:
    return MapModel(interval_poset(), point_poset(),
                    {"interior": {"pt": 1}, "left": {"pt": 1}, "right": {"pt": 1}})


BUNDLED_MAPS = {
    "sphere-interval": sphere_to_interval,
    "sphere-disk": sphere_to_disk,
    "torus-point": torus_to_point,
    "interval-point": interval_to_point,
}


def interval_volumes(length: float = 1.0) -> StratVolumes:
    return StratVolumes(interval_poset(),
                        {"interior": [0.0, length], "left": [1.0], "right": [1.0]},
                        {"interior": -1, "left": 1, "right": 1})


def disk_volumes(radius: float = 1.0) -> StratVolumes:
    # open disk: chi_c = 1; boundary circle: chi_c = 0, length 2 pi r
    return StratVolumes(disk_poset(),
                        {"interior": [1.0, 0.0, math.pi * radius ** 2],
                         "boundary": [0.0, 2 * math.pi * radius]},
                        {"interior": 1, "boundary": 0})


def point_volumes() -> StratVolumes:
    return StratVolumes(point_poset(), {"pt": [1.0]}, {"pt": 1})


def load_strat(path) -> dict:
    """Read the poset / function / map-model JSON document.

    Returns a dict with whichever of ``poset``, ``F``, ``map`` are present.
    """
    with open(path) as fh:
        data = json.load(fh)
    out = {}
    if "source" in data:
        out["map"] = MapModel.from_json(data)
        poset = out["map"].source
    else:
        poset = StratPoset.from_json(data)
        if "fiber_table" in data:
            target = StratPoset.from_json(data["target"]) if "target" in data else poset
            out["map"] = MapModel(poset, target, data["fiber_table"])
    out["poset"] = poset
    if "F" in data:
        out["F"] = ConstructibleFunction(poset, data["F"])
    return out


def random_poset(rng, size: int) -> StratPoset:
    """Random poset with a unique top element (test and demo helper)."""
    ids = [f"E{k}" for k in range(size)]
    dims = {e: int(rng.integers(0, 3)) for e in ids[:-1]}
    dims[ids[-1]] = 3
    order = [(a, ids[-1]) for a in ids[:-1]]
    for a, b in itertools.combinations(ids[:-1], 2):
        if rng.random() < 0.3:
            order.append((a, b))
    return StratPoset(dims, order)
