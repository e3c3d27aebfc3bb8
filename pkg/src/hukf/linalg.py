"""Small dense kernels used by the filters.

Everything here works on float64 numpy arrays and is free of side effects.
Covariances in this package are small (a handful of states), so clarity wins
over clever factorisation updates.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInput

SYMMETRY_TOL = 1e-10
WEIGHT_SUM_TOL = 1e-10


class SpdFactor(NamedTuple):
    """``factor @ factor.T`` reproduces ``matrix`` (after eigenvalue clamping)."""

    matrix: np.ndarray
    factor: np.ndarray


def _as_finite_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


def _as_square(m, name: str = "matrix") -> np.ndarray:
    a = _as_finite_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    return a


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def matrix_sqrt(s, floor: float = 0.0) -> SpdFactor:
    """Square-root factor of a symmetric matrix.

    Returns the lower Cholesky factor when every eigenvalue of ``s`` is at least
    ``floor`` (and positive). Otherwise eigenvalues are clamped to ``floor`` and
    the factor is ``V diag(sqrt(lambda))``, which is not triangular but still
    satisfies ``L @ L.T == S+``.
    """
    a = _as_square(s, "S")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL * scale:
        raise InvalidInput("S is not symmetric")
    if floor < 0:
        raise InvalidInput("floor must be non-negative")
    return _sqrt_symmetric(symmetrize(a), floor)


def _sqrt_symmetric(a: np.ndarray, floor: float) -> SpdFactor:
    """:func:`matrix_sqrt` for an already validated, exactly symmetric ``a``."""
    lam, vecs = np.linalg.eigh(a)
    if lam[0] >= floor and lam[0] > 0.0:
        try:
            return SpdFactor(a, np.linalg.cholesky(a))
        except np.linalg.LinAlgError:
            pass
    lam = np.maximum(lam, floor)
    return SpdFactor(vecs @ np.diag(lam) @ vecs.T, vecs * np.sqrt(lam))


def pseudoinverse(m, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``tol * sigma_max`` are discarded. The default
    ``tol`` is ``1e-12 * max(rows, cols)``.
    """
    if isinstance(m, np.ndarray) and m.shape == (1, 1) and tol is None and math.isfinite(m[0, 0]):
        return np.zeros((1, 1)) if m[0, 0] == 0.0 else 1.0 / m
    a = _as_finite_matrix(m, "M")
    if tol is None:
        tol = 1e-12 * max(a.shape)
    if tol < 0:
        raise InvalidInput("tol must be non-negative")
    if a.shape == (1, 1):
        return np.zeros((1, 1)) if a[0, 0] == 0.0 else 1.0 / a
    u, sv, vt = np.linalg.svd(a, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros(a.T.shape)
    keep = sv > tol * sv[0]
    inv = np.zeros_like(sv)
    inv[keep] = 1.0 / sv[keep]
    return (vt.T * inv) @ u.T


def nearest_psd(s, floor: float = 0.0) -> np.ndarray:
    """Symmetrise and clamp eigenvalues to at least ``floor``.

    Inputs that are already symmetric with all eigenvalues >= ``floor`` come
    back unchanged (after the no-op symmetrisation).
    """
    return repair_psd(s, floor)[0]


def repair_psd(s, floor: float = 0.0) -> tuple[np.ndarray, bool]:
    """Like :func:`nearest_psd` but also reports whether clamping happened."""
    a = symmetrize(_as_square(s, "S"))
    if floor < 0:
        raise InvalidInput("floor must be non-negative")
    return _repair_symmetric(a, floor)


def _repair_symmetric(a: np.ndarray, floor: float) -> tuple[np.ndarray, bool]:
    """:func:`repair_psd` for an already validated, exactly symmetric ``a``."""
    if a.shape == (1, 1):
        return (a, False) if a[0, 0] >= floor else (np.full((1, 1), float(floor)), True)
    if floor == 0.0:
        # a successful Cholesky proves positive definiteness, which is cheaper to check
        try:
            np.linalg.cholesky(a)
            return a, False
        except np.linalg.LinAlgError:
            pass
    if np.linalg.eigvalsh(a)[0] >= floor:
        return a, False
    lam, vecs = np.linalg.eigh(a)
    lam = np.maximum(lam, floor)
    return symmetrize((vecs * lam) @ vecs.T), True


def weighted_moments(
    points: Sequence | np.ndarray,
    weights: Sequence[float] | np.ndarray,
    center: Sequence[float] | np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance of a point cloud.

    ``points`` has one point per row. Weights may be negative but must sum to
    one. With ``center`` given, the covariance is taken about it instead of
    about the weighted mean.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    w = np.asarray(weights, dtype=float).ravel()
    if x.shape[0] != w.size:
        raise InvalidInput(f"{x.shape[0]} points but {w.size} weights")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidInput(f"weights sum to {w.sum()!r}, expected 1")
    mean = w @ x
    c = mean if center is None else np.asarray(center, dtype=float).ravel()
    d = x - c
    cov = (d.T * w) @ d
    return mean, symmetrize(cov)


def weighted_cross(
    a: np.ndarray, b: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """``sum_j w_j a_j b_j'`` for already-centred rows ``a`` and ``b``."""
    return (a.T * weights) @ b
