"""Sigma-point filters for continuous-discrete models.

``UKF`` is the usual two-moment filter: the measurement update regresses the
state on the innovation only. ``HUKF`` additionally regresses the state on the
squared innovation,

    mu+ = mu + K1 nu + K2 (nu**2 - E[nu**2])
    S+  = S - K1 Cov[h, y] - K2 Cov[nu**2, y]

with ``K1 = Cov[y, h] (Var[h] + R)^-`` and ``K2 = Cov[y, nu**2] Var[nu**2]^-``.
States that enter the observations only through the diffusion coefficient
(volatilities) have zero covariance with ``h`` but not with ``nu**2``, so only
the second gain can move them. Squares of vectors are elementwise.

The time update pushes a sigma set on ``[y; dW]`` (``dW ~ N(0, Q)``, independent
of ``y``) through the Euler map, so the third and fourth moments needed by
``K2`` come from the same point cloud as the first two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .linalg import (
    _repair_symmetric,
    _sqrt_symmetric,
    pseudoinverse,
    symmetrize,
    weighted_cross,
    weighted_moments,
)
from .sigma import DEFAULT_SQRT_FLOOR, GaussianBelief, SigmaKind, unit_sigma_points
from .ssm import EulerGrid, StateSpaceModel, euler_transition

UKF = "ukf"
HUKF = "hukf"


@dataclass(frozen=True)
class FilterConfig:
    variant: str = UKF
    sigma_kind: SigmaKind | None = None
    euler_substeps: int = 1
    psd_floor: float = 0.0
    sqrt_floor: float = DEFAULT_SQRT_FLOOR
    pinv_tol: float | None = None
    nu2var_literal: bool = False

    def __post_init__(self):
        if self.variant not in (UKF, HUKF):
            raise InvalidInput(f"unknown filter variant {self.variant!r}")
        if self.sigma_kind is None:
            kind = SigmaKind.degree5() if self.variant == HUKF else SigmaKind.degree3(0.0)
            object.__setattr__(self, "sigma_kind", kind)
        if self.variant == HUKF and self.sigma_kind.name != "degree5":
            # third/fourth moments are needed for the quadratic gain
            raise InvalidInput("HUKF requires the degree-5 sigma rule")
        if self.euler_substeps < 1:
            raise InvalidInput("euler_substeps must be >= 1")
        if self.psd_floor < 0 or self.sqrt_floor < 0:
            raise InvalidInput("floors must be non-negative")


@dataclass(frozen=True)
class MeasurementPrediction:
    h_pred: np.ndarray  # (k,)
    h_var: np.ndarray  # (k, k)
    xy_h_cov: np.ndarray  # (p, k)
    nu2_pred: np.ndarray  # (k,)
    nu2_var: np.ndarray  # (k, k)
    xy_nu2_cov: np.ndarray  # (p, k)
    repairs: int = 0


@dataclass(frozen=True)
class FilterStep:
    time: float
    prior: GaussianBelief
    posterior: GaussianBelief
    innovation: np.ndarray
    gain1: np.ndarray
    gain2: np.ndarray
    log_density: float
    repairs: int = 0


@dataclass
class FilterResult:
    steps: list[FilterStep]
    log_likelihood: float
    posterior: GaussianBelief
    repairs: int = 0


def log_normal_pdf(z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Gaussian log density, using the pseudo-determinant when ``cov`` is singular.

    On a singular ``cov`` the density lives on the range of ``cov``; an
    observation off that subspace is impossible and raises ``NumericalFailure``.
    A zero-rank ``cov`` is a point mass and contributes ``0.0`` when hit.
    """
    d = np.asarray(z, dtype=float) - mean
    if cov.shape == (1, 1) and cov[0, 0] > 0:
        v = float(cov[0, 0])
        return -0.5 * (math.log(2.0 * math.pi * v) + float(d[0]) ** 2 / v)
    lam, vecs = np.linalg.eigh(cov)
    keep = lam > 1e-12 * max(lam[-1], 0.0) * lam.size
    proj = vecs[:, keep].T @ d
    off = d - vecs[:, keep] @ proj
    if np.linalg.norm(off) > 1e-8 * (1.0 + np.linalg.norm(d)):
        raise NumericalFailure("observation lies outside the support of the prediction")
    maha = float(np.sum(proj * proj / lam[keep]))
    return -0.5 * (keep.sum() * math.log(2.0 * math.pi) + float(np.sum(np.log(lam[keep]))) + maha)


def _sigma_cloud(mean: np.ndarray, cov: np.ndarray, cfg: FilterConfig):
    unit, w = unit_sigma_points(mean.size, cfg.sigma_kind)
    chol = _sqrt_symmetric(symmetrize(cov), cfg.sqrt_floor).factor
    return mean + unit @ chol.T, w


def _eval_measurement(model: StateSpaceModel, pts: np.ndarray, t: float) -> np.ndarray:
    hs = model.h(pts, t)
    bad = ~np.all(np.isfinite(hs), axis=1)
    if bad.any():
        j = int(np.argmax(bad))
        raise NumericalFailure(f"measurement is non-finite at sigma point {j}", index=j)
    return hs


def _predict_measurement(
    pts: np.ndarray, w: np.ndarray, hs: np.ndarray, R: np.ndarray, cfg: FilterConfig
) -> tuple[np.ndarray, MeasurementPrediction]:
    """All measurement statistics from a propagated cloud; also returns the state mean."""
    mean = w @ pts
    h_pred = w @ hs
    dy = pts - mean
    dh = hs - h_pred
    h_var = weighted_cross(dh, dh, w)
    if not np.isfinite(h_var).all():
        raise NumericalFailure("predicted measurement variance overflowed")
    h_var, fixed = _repair_symmetric(symmetrize(h_var), 0.0)
    r_diag = np.diag(R)
    h_diag = np.diag(h_var)
    nu2_pred = h_diag + r_diag
    sq = dh * dh
    dev = sq - h_diag
    nu2_var = weighted_cross(dev, dev, w)
    if not cfg.nu2var_literal:
        # noise eps ~ N(0, R) in nu = (h - hbar) + eps adds 2R^2 + 4 Var[h] R
        nu2_var = nu2_var + np.diag(2.0 * r_diag ** 2 + 4.0 * h_diag * r_diag)
    xy_nu2 = weighted_cross(dy, sq - nu2_pred, w)
    if not (np.isfinite(nu2_var).all() and np.isfinite(xy_nu2).all()):
        raise NumericalFailure("moments of the squared innovation overflowed")
    pred = MeasurementPrediction(
        h_pred=h_pred,
        h_var=h_var,
        xy_h_cov=weighted_cross(dy, dh, w),
        nu2_pred=nu2_pred,
        nu2_var=0.5 * (nu2_var + nu2_var.T),
        xy_nu2_cov=xy_nu2,
        repairs=int(fixed),
    )
    return mean, pred


def time_update(
    belief: GaussianBelief,
    model: StateSpaceModel,
    grid: EulerGrid,
    cfg: FilterConfig,
    t: float = 0.0,
) -> tuple[GaussianBelief, MeasurementPrediction]:
    """Propagate ``belief`` from ``t`` to ``t + grid.dt`` and predict the next observation."""
    p, r = model.p, model.r
    if belief.dim != p:
        raise InvalidInput(f"belief dimension {belief.dim} does not match model p={p}")
    mean = np.concatenate([belief.mean, np.zeros(r)])
    cov = np.zeros((p + r, p + r))
    cov[:p, :p] = belief.cov
    cov[p:, p:] = model.Q
    pts, w = _sigma_cloud(mean, cov, cfg)
    prop = euler_transition(model, pts[:, :p], t, grid, pts[:, p:])
    t_next = t + grid.dt
    hs = _eval_measurement(model, prop, t_next)
    _, sigma = weighted_moments(prop, w)
    if not np.isfinite(sigma).all():
        raise NumericalFailure("predicted covariance overflowed")
    sigma, fixed = _repair_symmetric(sigma, cfg.psd_floor)
    ybar, pred = _predict_measurement(prop, w, hs, model.R(t_next), cfg)
    prior = GaussianBelief.trusted(ybar, sigma)
    if fixed:
        pred = _with_repairs(pred, pred.repairs + 1)
    return prior, pred


def _with_repairs(pred: MeasurementPrediction, n: int) -> MeasurementPrediction:
    return MeasurementPrediction(pred.h_pred, pred.h_var, pred.xy_h_cov, pred.nu2_pred,
                                 pred.nu2_var, pred.xy_nu2_cov, n)


def predict_observation(
    belief: GaussianBelief, model: StateSpaceModel, t: float, cfg: FilterConfig
) -> MeasurementPrediction:
    """Measurement statistics of ``belief`` at ``t`` without any propagation."""
    pts, w = _sigma_cloud(belief.mean, belief.cov, cfg)
    hs = _eval_measurement(model, pts, t)
    return _predict_measurement(pts, w, hs, model.R(t), cfg)[1]


def _finish(prior, pred, z, S, mean, cov, nu, K1, K2, cfg, time, repairs) -> FilterStep:
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise NumericalFailure("measurement update produced non-finite values")
    cov, fixed = _repair_symmetric(symmetrize(cov), cfg.psd_floor)
    return FilterStep(
        time=time,
        prior=prior,
        posterior=GaussianBelief.trusted(mean, cov),
        innovation=nu,
        gain1=K1,
        gain2=K2,
        log_density=log_normal_pdf(z, pred.h_pred, S),
        repairs=repairs + int(fixed),
    )


def _linear_part(prior, pred, z, R, cfg):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != pred.h_pred.shape or not np.all(np.isfinite(z)):
        raise InvalidInput(f"observation must be a finite vector of length {pred.h_pred.size}")
    S = pred.h_var + np.atleast_2d(R)
    if not np.isfinite(S).all():
        raise InvalidInput("measurement noise covariance has non-finite entries")
    S, fixed = _repair_symmetric(symmetrize(S), 0.0)
    K1 = pred.xy_h_cov @ pseudoinverse(S, cfg.pinv_tol)
    nu = z - pred.h_pred
    mean = prior.mean + K1 @ nu
    cov = prior.cov - K1 @ pred.xy_h_cov.T
    return z, S, K1, nu, mean, cov, pred.repairs + int(fixed)


def measurement_update_linear(
    prior: GaussianBelief,
    pred: MeasurementPrediction,
    z,
    R,
    cfg: FilterConfig,
    time: float = 0.0,
) -> FilterStep:
    """Normal-correlation update on the innovation alone (``K2 = 0``)."""
    z, S, K1, nu, mean, cov, repairs = _linear_part(prior, pred, z, R, cfg)
    K2 = np.zeros_like(K1)
    return _finish(prior, pred, z, S, mean, cov, nu, K1, K2, cfg, time, repairs)


def measurement_update_higher(
    prior: GaussianBelief,
    pred: MeasurementPrediction,
    z,
    R,
    cfg: FilterConfig,
    time: float = 0.0,
) -> FilterStep:
    """Two-gain update on the innovation and the squared innovation."""
    z, S, K1, nu, mean, cov, repairs = _linear_part(prior, pred, z, R, cfg)
    V2, fixed = _repair_symmetric(pred.nu2_var, 0.0)
    K2 = pred.xy_nu2_cov @ pseudoinverse(V2, cfg.pinv_tol)
    mean = mean + K2 @ (nu * nu - pred.nu2_pred)
    cov = cov - K2 @ pred.xy_nu2_cov.T
    return _finish(prior, pred, z, S, mean, cov, nu, K1, K2, cfg, time, repairs + int(fixed))


def measurement_update(prior, pred, z, R, cfg: FilterConfig, time: float = 0.0) -> FilterStep:
    update = measurement_update_higher if cfg.variant == HUKF else measurement_update_linear
    return update(prior, pred, z, R, cfg, time)


def iter_filter(
    model: StateSpaceModel,
    prior: GaussianBelief,
    observations: Iterable[tuple[float, Sequence[float]]],
    cfg: FilterConfig,
) -> Iterator[FilterStep]:
    """Yield one :class:`FilterStep` per observation.

    The first observation is absorbed by a linear update of ``prior`` at its
    own time; every later one is preceded by a time update over the gap.
    Failures raise :class:`NumericalFailure` with ``step`` set.
    """
    belief = prior
    t_prev = None
    for i, (t, z) in enumerate(observations):
        t = float(t)
        if t_prev is not None and not t > t_prev:
            raise InvalidInput(f"observation times must increase (step {i})")
        try:
            # overflow is detected explicitly and raised as NumericalFailure
            with np.errstate(over="ignore", invalid="ignore"):
                if t_prev is None:
                    pred = predict_observation(belief, model, t, cfg)
                    step = measurement_update_linear(belief, pred, z, model.R(t), cfg, time=t)
                else:
                    grid = EulerGrid(t - t_prev, cfg.euler_substeps)
                    belief_prior, pred = time_update(belief, model, grid, cfg, t=t_prev)
                    step = measurement_update(belief_prior, pred, z, model.R(t), cfg, time=t)
        except NumericalFailure as exc:
            raise exc.at_step(i) from exc
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"step {i}: {exc}", step=i) from exc
        belief = step.posterior
        t_prev = t
        yield step


def filter_sequence(
    model: StateSpaceModel,
    prior: GaussianBelief,
    observations: Iterable[tuple[float, Sequence[float]]],
    cfg: FilterConfig,
) -> FilterResult:
    steps = list(iter_filter(model, prior, observations, cfg))
    if not steps:
        return FilterResult([], 0.0, prior, 0)
    return FilterResult(
        steps=steps,
        log_likelihood=float(sum(s.log_density for s in steps)),
        posterior=steps[-1].posterior,
        repairs=sum(s.repairs for s in steps),
    )
