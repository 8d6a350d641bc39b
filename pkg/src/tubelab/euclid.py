"""Ball volumes, Monte-Carlo volume estimation and tube-polynomial fitting."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Points are passed to predicates as an (m, d) array; the predicate returns a
# boolean array of length m.
Predicate = Callable[[np.ndarray], np.ndarray]

CHUNK_SIZE = 1 << 18


@dataclass(frozen=True)
class IntrinsicVolumeVector:
    """V_0..V_n of a space of dimension ``dim``.

    ``std_errors`` is filled in when the values come out of a weighted fit of
    Monte-Carlo data.
    """

    dim: int
    values: tuple[float, ...]
    std_errors: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if self.dim < 0 or len(values) != self.dim + 1:
            raise ValueError(f"expected {self.dim + 1} values, got {len(values)}")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("intrinsic volumes must be finite")
        if self.std_errors is not None:
            errs = tuple(float(e) for e in self.std_errors)
            if len(errs) != len(values):
                raise ValueError("std_errors length mismatch")
            object.__setattr__(self, "std_errors", errs)

    def __getitem__(self, i: int) -> float:
        return self.values[i]

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def padded(self, dim: int) -> "IntrinsicVolumeVector":
        """Same volumes viewed in a larger dimension (trailing zeros)."""
        if dim < self.dim:
            raise ValueError("cannot shrink an intrinsic volume vector")
        extra = (0.0,) * (dim - self.dim)
        errs = None if self.std_errors is None else self.std_errors + extra
        return IntrinsicVolumeVector(dim, self.values + extra, errs)

    def to_dict(self) -> dict:
        out = {"dim": self.dim, "values": list(self.values)}
        if self.std_errors is not None:
            out["std_errors"] = list(self.std_errors)
        return out


@dataclass(frozen=True)
class TubeSamplePlan:
    eps_list: tuple[float, ...]
    samples_per_eps: int
    seed: int

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        object.__setattr__(self, "eps_list", eps)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps values must be positive")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps values must be strictly increasing")
        if self.samples_per_eps <= 0:
            raise ValueError("samples_per_eps must be positive")

    @classmethod
    def log_spaced(cls, eps_min: float, eps_max: float, count: int,
                   samples_per_eps: int, seed: int) -> "TubeSamplePlan":
        if not 0 < eps_min < eps_max:
            raise ValueError("need 0 < eps_min < eps_max")
        eps = np.geomspace(eps_min, eps_max, count)
        return cls(tuple(eps), samples_per_eps, seed)


@dataclass(frozen=True)
class TubePolynomial:
    """vol(tube) = eps**codim * sum_i K_i eps**(n-i)."""

    codim: int
    coefficients: tuple[float, ...]

    def __post_init__(self):
        if self.codim < 0:
            raise ValueError("codim must be nonnegative")
        coeffs = tuple(float(c) for c in self.coefficients)
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def dim(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, eps):
        eps = np.asarray(eps, dtype=float)
        n = self.dim
        total = sum(k * eps ** (n - i) for i, k in enumerate(self.coefficients))
        return eps ** self.codim * total


def unit_ball_volume(j: int) -> float:
    """Volume of the unit ball in R^j, pi^(j/2) / Gamma(j/2 + 1)."""
    if j < 0:
        raise ValueError("dimension must be nonnegative")
    return math.pi ** (j / 2) / math.gamma(j / 2 + 1)


def steiner_polynomial(volumes: Sequence[float], ambient_dim: int) -> TubePolynomial:
    """Tube polynomial of a space with the given intrinsic volumes in R^ambient_dim."""
    n = len(volumes) - 1
    codim = ambient_dim - n
    coeffs = [unit_ball_volume(ambient_dim - i) * v for i, v in enumerate(volumes)]
    return TubePolynomial(codim, tuple(coeffs))


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        if len(lo) != len(hi) or any(b < a for a, b in zip(lo, hi)):
            raise ValueError("invalid box")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @classmethod
    def around(cls, points, pad: float = 0.0) -> "Box":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(tuple(pts.min(axis=0) - pad), tuple(pts.max(axis=0) + pad))


def chunk_seed(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), chunk]))


def mc_volume(membership: Predicate, bbox: Box, samples: int, seed: int,
              workers: int = 1) -> tuple[float, float]:
    """Hit-or-miss volume estimate of a region contained in ``bbox``.

    Returns ``(estimate, std_error)``. Each chunk of at most ``CHUNK_SIZE``
    points draws from its own seed derived from ``(seed, chunk index)`` and
    hit counts are integers, so the result does not depend on ``workers``.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    lo = np.array(bbox.lower)
    width = np.array(bbox.upper) - lo
    n_chunks = -(-samples // CHUNK_SIZE)

    def run(chunk: int) -> int:
        size = min(CHUNK_SIZE, samples - chunk * CHUNK_SIZE)
        pts = lo + width * chunk_seed(seed, chunk).random((size, bbox.dim))
        return int(np.count_nonzero(membership(pts)))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = sum(pool.map(run, range(n_chunks)))
    else:
        hits = sum(run(c) for c in range(n_chunks))

    p = hits / samples
    vol = bbox.volume
    return vol * p, vol * math.sqrt(p * (1 - p) / samples)


def neighborhood_predicate(dist_oracle, eps: float) -> Predicate:
    """Membership in the closed eps-neighborhood of the set behind ``dist_oracle``.

    Oracles exposing ``within(points, eps)`` get to answer directly, which lets
    accelerated structures skip exact distances where a bound suffices.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    within = getattr(dist_oracle, "within", None)
    if within is not None:
        return lambda pts: within(pts, eps)
    return lambda pts: np.asarray(dist_oracle(pts)) <= eps


def steiner_fit(data, ambient_dim: int, codim: int = 0,
                std_errors=None) -> tuple[IntrinsicVolumeVector, float]:
    """Least-squares fit of tube volumes to eps^(N-i), i = 0..N-codim.

    Coefficient i is divided by kappa_{N-i}, which gives the intrinsic
    volume V_i in any ambient dimension N. With ``std_errors`` the fit is
    weighted by 1/sigma^2 and the returned vector carries standard errors.
    The residual is the RMS misfit of the (unweighted) volumes.
    """
    pairs = np.asarray(data, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("data must be (eps, volume) pairs")
    eps, vol = pairs[:, 0], pairs[:, 1]
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    n = ambient_dim - codim
    if n < 0 or codim < 0:
        raise ValueError("need 0 <= codim <= ambient_dim")
    if len(np.unique(eps)) < n + 1:
        raise ValueError(f"need at least {n + 1} distinct eps values")

    design = np.stack([eps ** (ambient_dim - i) for i in range(n + 1)], axis=1)
    if std_errors is not None:
        w = 1.0 / np.asarray(std_errors, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("std_errors must be positive")
    else:
        w = np.ones_like(eps)
    a = design * w[:, None]
    b = vol * w
    # column scaling keeps the design well conditioned across eps ranges
    scale = np.linalg.norm(a, axis=0)
    if np.any(scale == 0):
        raise ValueError("rank-deficient design matrix")
    coef, _, rank, sv = np.linalg.lstsq(a / scale, b, rcond=None)
    if rank < n + 1 or sv[-1] <= sv[0] * 1e-14:
        raise ValueError("rank-deficient design matrix")
    coef = coef / scale

    kappa = np.array([unit_ball_volume(ambient_dim - i) for i in range(n + 1)])
    values = coef / kappa
    errs = None
    if std_errors is not None:
        cov = np.linalg.inv(a.T @ a)
        errs = np.sqrt(np.diag(cov)) / kappa
    residual = float(np.sqrt(np.mean((design @ coef - vol) ** 2)))
    return IntrinsicVolumeVector(n, tuple(values), errs), residual
