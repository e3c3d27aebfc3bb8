"""Deterministic sigma-point sets for Gaussian beliefs.

Two flavours are provided:

* ``degree3`` -- the classic unscented set with ``2p + 1`` points (``2p`` when
  ``kappa == 0``), exact for polynomials up to degree three.
* ``degree5`` -- a fully symmetric cubature rule built from the generators
  ``[0]``, ``[+-sqrt3]`` and ``[+-sqrt3, +-sqrt3]`` with ``2p**2 + 1`` points,
  exact for every monomial of total degree <= 5 under ``N(0, I)``.

Points are built on the standard normal and mapped through ``x -> mu + L x``
where ``L`` is the lower factor of the covariance (its columns are the
directions). Ordering is canonical: centre first, then each generator class
in lexicographic order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .linalg import SYMMETRY_TOL, matrix_sqrt, symmetrize, weighted_cross

SQRT3 = math.sqrt(3.0)
DEFAULT_SQRT_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianBelief:
    """Mean vector and covariance matrix of a Gaussian state density."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).ravel()
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        p = mean.size
        if cov.shape != (p, p):
            raise InvalidInput(f"covariance shape {cov.shape} does not match mean of length {p}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidInput("belief has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(cov)))) if p else 1.0
        if p and np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * scale:
            raise InvalidInput("covariance is not symmetric")
        if p and np.linalg.eigvalsh(symmetrize(cov))[0] < -1e-10 * scale:
            raise InvalidInput("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def trusted(cls, mean: np.ndarray, cov: np.ndarray) -> "GaussianBelief":
        """Build without validation; for matrices that were just repaired."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "mean", mean)
        object.__setattr__(obj, "cov", cov)
        return obj

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()


@dataclass(frozen=True)
class SigmaKind:
    """Which rule to use: ``degree3`` (with ``kappa``) or ``degree5``."""

    name: str = "degree3"
    kappa: float = 0.0

    def __post_init__(self):
        if self.name not in ("degree3", "degree5"):
            raise InvalidInput(f"unknown sigma kind {self.name!r}")

    @classmethod
    def degree3(cls, kappa: float = 0.0) -> "SigmaKind":
        return cls("degree3", float(kappa))

    @classmethod
    def degree5(cls) -> "SigmaKind":
        return cls("degree5", 0.0)

    def point_count(self, p: int) -> int:
        if self.name == "degree5":
            return 2 * p * p + 1
        return 2 * p + (0 if self.kappa == 0 else 1)


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray  # (n, p)
    weights: np.ndarray  # (n,)
    kind: SigmaKind = field(default_factory=SigmaKind)

    def __len__(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class Generator:
    """Fully symmetric orbit of ``(u_1, ..., u_m, 0, ..., 0)`` in ``R^dimension``.

    An empty ``magnitudes`` tuple (or ``(0,)``) is the generator ``[0]``.
    """

    magnitudes: tuple[float, ...]
    dimension: int

    def __post_init__(self):
        mags = tuple(float(u) for u in self.magnitudes if u != 0)
        if any(u < 0 or not math.isfinite(u) for u in mags):
            raise InvalidInput("generator magnitudes must be positive and finite")
        if list(mags) != sorted(mags):
            raise InvalidInput("generator magnitudes must be non-decreasing")
        if self.dimension < 1:
            raise InvalidInput("dimension must be at least 1")
        if len(mags) > self.dimension:
            raise InvalidInput(
                f"{len(mags)} magnitudes do not fit in dimension {self.dimension}"
            )
        object.__setattr__(self, "magnitudes", mags)


def enumerate_generator(g: Generator) -> np.ndarray:
    """All points of the generator orbit, lexicographically sorted, one per row."""
    p, mags = g.dimension, g.magnitudes
    m = len(mags)
    found = set()
    for positions in itertools.permutations(range(p), m):
        for signs in itertools.product((1.0, -1.0), repeat=m):
            pt = [0.0] * p
            for pos, s, u in zip(positions, signs, mags):
                pt[pos] = s * u
            found.add(tuple(pt))
    return np.array(sorted(found), dtype=float).reshape(len(found), p)


@lru_cache(maxsize=None)
def _unit_rule(p: int, kind: SigmaKind) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights for N(0, I_p); cached and read-only."""
    if kind.name == "degree3":
        lam = p + kind.kappa
        if lam <= 0:
            raise InvalidInput(f"p + kappa must be positive, got {lam}")
        axis = enumerate_generator(Generator((math.sqrt(lam),), p))
        w_axis = np.full(len(axis), 1.0 / (2.0 * lam))
        if kind.kappa == 0:
            pts, w = axis, w_axis
        else:
            pts = np.vstack([np.zeros((1, p)), axis])
            w = np.concatenate([[kind.kappa / lam], w_axis])
    else:
        blocks = [np.zeros((1, p)), enumerate_generator(Generator((SQRT3,), p))]
        weights = [np.array([1.0 + (p * p - 7.0 * p) / 18.0]),
                   np.full(2 * p, (4.0 - p) / 18.0)]
        if p >= 2:
            blocks.append(enumerate_generator(Generator((SQRT3, SQRT3), p)))
            weights.append(np.full(2 * p * (p - 1), 1.0 / 36.0))
        pts, w = np.vstack(blocks), np.concatenate(weights)
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def unit_sigma_points(p: int, kind: SigmaKind) -> tuple[np.ndarray, np.ndarray]:
    if p < 1:
        raise InvalidInput("dimension must be at least 1")
    return _unit_rule(int(p), kind)


def sigma_points(
    belief: GaussianBelief, kind: SigmaKind, floor: float = DEFAULT_SQRT_FLOOR
) -> SigmaSet:
    unit, w = unit_sigma_points(belief.dim, kind)
    chol = matrix_sqrt(belief.cov, floor).factor
    return SigmaSet(belief.mean + unit @ chol.T, w, kind)


def degree3_sigma(
    belief: GaussianBelief, kappa: float = 0.0, floor: float = DEFAULT_SQRT_FLOOR
) -> SigmaSet:
    """Unscented set: ``mu +- sqrt((p + kappa) Sigma)_i`` plus the centre when ``kappa != 0``."""
    if belief.dim + kappa <= 0:
        raise InvalidInput(f"p + kappa must be positive, got {belief.dim + kappa}")
    return sigma_points(belief, SigmaKind.degree3(kappa), floor)


def degree5_sigma(belief: GaussianBelief, floor: float = DEFAULT_SQRT_FLOOR) -> SigmaSet:
    """``2p**2 + 1`` point set; the axis weight ``(4 - p)/18`` is negative for ``p > 4``."""
    return sigma_points(belief, SigmaKind.degree5(), floor)


def transformed_moments(
    s: SigmaSet,
    fn: Callable[[np.ndarray], np.ndarray],
    source: GaussianBelief,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean and covariance of ``fn(y)`` and the cross-covariance ``Cov[y, fn(y)]``.

    ``fn`` receives all sigma points at once, shape ``(n, p)``, and must return
    shape ``(n, q)`` (or ``(n,)`` for scalar maps).
    """
    out = np.asarray(fn(s.points), dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != len(s):
        raise InvalidInput(f"map returned {out.shape[0]} rows for {len(s)} points")
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        j = int(np.argmax(bad))
        raise NumericalFailure(f"map is non-finite at sigma point {j}", index=j)
    w = s.weights
    mean = w @ out
    d_out = out - mean
    d_src = s.points - source.mean
    cov = symmetrize(weighted_cross(d_out, d_out, w))
    cross = weighted_cross(d_src, d_out, w)
    return mean, cov, cross


def monomial_expectation(s: SigmaSet, powers: Sequence[int]) -> float:
    """``sum_j w_j prod_i x_ji ** powers_i`` -- the rule applied to one monomial."""
    pw = np.asarray(powers)
    return float(s.weights @ np.prod(s.points ** pw, axis=1))
