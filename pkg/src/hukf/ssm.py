"""Continuous-discrete state-space models.

A model is the Ito equation ``dy = f(y, t, psi) dt + g(y, t, psi) dW`` for a
``p``-vector ``y`` driven by an ``r``-dimensional Wiener process, observed at
discrete times through ``z = h(y, t, psi) + eps`` with ``eps ~ N(0, R(t))``.

Model callables are batched: they receive states of shape ``(n, p)`` and
parameters of shape ``(n, u)`` and return ``(n, p)`` for the drift,
``(n, p, r)`` for the diffusion and ``(n, k)`` for the measurement. This lets
a whole sigma-point cloud be propagated in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .sigma import GaussianBelief

Drift = Callable[[np.ndarray, float, np.ndarray], np.ndarray]
Diffusion = Callable[[np.ndarray, float, np.ndarray], np.ndarray]
Measurement = Callable[[np.ndarray, float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StateSpaceModel:
    p: int
    r: int
    k: int
    drift: Drift
    diffusion: Diffusion
    measurement: Measurement
    meas_noise_cov: Callable[[float], np.ndarray] | np.ndarray | float = 0.0
    process_noise_cov: np.ndarray | None = None
    param_names: tuple[str, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.p < 1 or self.r < 0 or self.k < 1:
            raise InvalidInput(f"invalid dimensions p={self.p}, r={self.r}, k={self.k}")
        q = np.eye(self.r) if self.process_noise_cov is None else np.array(
            self.process_noise_cov, dtype=float).reshape(self.r, self.r)
        if not np.allclose(q, q.T) or (self.r and np.linalg.eigvalsh(q)[0] < -1e-12):
            raise InvalidInput("process noise covariance must be symmetric PSD")
        object.__setattr__(self, "process_noise_cov", q)
        object.__setattr__(self, "param_names", tuple(self.param_names))

    @property
    def u(self) -> int:
        return len(self.param_names)

    @property
    def Q(self) -> np.ndarray:
        return self.process_noise_cov

    def R(self, t: float) -> np.ndarray:
        rc = self.meas_noise_cov
        val = np.array(rc(t) if callable(rc) else rc, dtype=float)
        if val.ndim == 0:
            return np.eye(self.k) * float(val)
        return val.reshape(self.k, self.k)

    def _batch(self, y, psi):
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        if single:
            y = y[None, :]
        n = y.shape[0]
        if psi is None:
            psi = np.zeros((n, self.u))
        else:
            psi = np.asarray(psi, dtype=float)
            if psi.ndim == 1:
                psi = np.broadcast_to(psi, (n, self.u))
        return y, psi, single

    def f(self, y, t: float = 0.0, psi=None) -> np.ndarray:
        y, psi, single = self._batch(y, psi)
        out = np.asarray(self.drift(y, t, psi), dtype=float).reshape(y.shape[0], self.p)
        return out[0] if single else out

    def g(self, y, t: float = 0.0, psi=None) -> np.ndarray:
        y, psi, single = self._batch(y, psi)
        out = np.asarray(self.diffusion(y, t, psi), dtype=float)
        out = np.broadcast_to(out, (y.shape[0], self.p, self.r)) if out.ndim == 3 else \
            np.broadcast_to(out.reshape(self.p, self.r), (y.shape[0], self.p, self.r))
        return out[0] if single else out

    def h(self, y, t: float = 0.0, psi=None) -> np.ndarray:
        y, psi, single = self._batch(y, psi)
        out = np.asarray(self.measurement(y, t, psi), dtype=float).reshape(y.shape[0], self.k)
        return out[0] if single else out

    def bind_parameters(self, psi: Sequence[float]) -> "StateSpaceModel":
        """The same model with its parameters fixed to ``psi`` (so ``u == 0``)."""
        psi = np.asarray(psi, dtype=float).ravel()
        if psi.size != self.u:
            raise InvalidInput(f"expected {self.u} parameters, got {psi.size}")
        base = self

        def rows(y):
            return np.broadcast_to(psi, (np.shape(y)[0], psi.size))

        return StateSpaceModel(
            p=self.p, r=self.r, k=self.k,
            drift=lambda y, t, _: base.drift(y, t, rows(y)),
            diffusion=lambda y, t, _: base.g(y, t, rows(y)),
            measurement=lambda y, t, _: base.measurement(y, t, rows(y)),
            meas_noise_cov=lambda t: base.R(t),
            process_noise_cov=self.Q,
            name=self.name,
        )


@dataclass(frozen=True)
class AugmentedModel(StateSpaceModel):
    """State vector ``[y; psi]`` with ``d psi = 0``. ``base`` is the parametric model."""

    base: StateSpaceModel | None = None

    @property
    def state_dim(self) -> int:
        return self.base.p if self.base is not None else self.p

    @property
    def augmented_names(self) -> tuple[str, ...]:
        return self.base.param_names if self.base is not None else ()

    @property
    def param_slice(self) -> slice:
        return slice(self.state_dim, self.p)


@dataclass(frozen=True)
class EulerGrid:
    """Measurement interval ``dt`` split into ``substeps`` Euler steps."""

    dt: float
    substeps: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidInput(f"dt must be positive, got {self.dt}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise InvalidInput(f"substeps must be a positive integer, got {self.substeps}")

    @property
    def step(self) -> float:
        return self.dt / self.substeps


def augment_with_parameters(
    model: StateSpaceModel,
    param_prior: GaussianBelief | None,
    state_prior: GaussianBelief,
    cross_cov: np.ndarray | None = None,
) -> tuple[AugmentedModel, GaussianBelief]:
    """Append the model parameters to the state with trivial dynamics.

    The returned belief stacks ``state_prior`` and ``param_prior`` with a zero
    cross-covariance; asking for anything else raises ``InvalidInput``.
    """
    p, u = model.p, model.u
    if state_prior.dim != p:
        raise InvalidInput(f"state prior has dimension {state_prior.dim}, model has p={p}")
    if u == 0:
        if param_prior is not None and param_prior.dim != 0:
            raise InvalidInput("model has no parameters to augment")
        aug = AugmentedModel(
            p=p, r=model.r, k=model.k, drift=model.drift, diffusion=model.diffusion,
            measurement=model.measurement, meas_noise_cov=model.meas_noise_cov,
            process_noise_cov=model.Q, name=model.name, base=model,
        )
        return aug, state_prior
    if param_prior is None or param_prior.dim != u:
        raise InvalidInput(f"parameter prior must have dimension {u}")
    if cross_cov is not None and np.any(np.asarray(cross_cov) != 0):
        raise InvalidInput("state/parameter prior cross-covariance must be zero")

    r = model.r
    f0, g0, h0 = model.drift, model.diffusion, model.measurement
    k = model.k

    # call the raw batched callables; the augmented wrappers already vet shapes
    def drift(z, t, _):
        out = np.zeros(z.shape)
        out[:, :p] = np.reshape(f0(z[:, :p], t, z[:, p:]), (z.shape[0], p))
        return out

    def diffusion(z, t, _):
        n = z.shape[0]
        out = np.zeros((n, p + u, r))
        g = np.asarray(g0(z[:, :p], t, z[:, p:]), dtype=float)
        out[:, :p] = g if g.ndim == 3 else g.reshape(p, r)
        return out

    def measurement(z, t, _):
        return np.reshape(h0(z[:, :p], t, z[:, p:]), (z.shape[0], k))

    aug = AugmentedModel(
        p=p + u, r=r, k=model.k, drift=drift, diffusion=diffusion,
        measurement=measurement, meas_noise_cov=model.meas_noise_cov,
        process_noise_cov=model.Q, name=model.name, base=model,
    )
    cov = np.zeros((p + u, p + u))
    cov[:p, :p] = state_prior.cov
    cov[p:, p:] = param_prior.cov
    belief = GaussianBelief(np.concatenate([state_prior.mean, param_prior.mean]), cov)
    return aug, belief


def euler_transition(
    model: StateSpaceModel,
    y: np.ndarray,
    t: float,
    grid: EulerGrid,
    dw: np.ndarray | None = None,
) -> np.ndarray:
    """Noise-driven Euler map ``y + f dt + g dw sqrt(dt)``.

    With ``grid.substeps == L > 1`` the map is applied ``L`` times with step
    ``dt / L``, reusing the same ``dw`` coordinates each time. ``y`` may be a
    single state or a batch of shape ``(n, p)``; ``dw`` matches it.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if dw is None:
        dw = np.zeros((y.shape[0], model.r))
    dw = np.asarray(dw, dtype=float)
    if dw.ndim == 1 and dw.size == model.r:
        dw = np.broadcast_to(dw, (y.shape[0], model.r))
    if dw.shape != (y.shape[0], model.r):
        raise InvalidInput(f"noise draw has shape {dw.shape}, expected {(y.shape[0], model.r)}")
    step = grid.step
    root = math.sqrt(step)
    for i in range(grid.substeps):
        ti = t + i * step
        incr = model.f(y, ti) * step
        if model.r:
            incr += np.matmul(model.g(y, ti), dw[:, :, None])[:, :, 0] * root
        y = y + incr
    # non-finite values persist through later substeps, so one check suffices
    bad = ~np.isfinite(y).all(axis=1)
    if bad.any():
        j = int(np.argmax(bad))
        raise NumericalFailure("Euler step produced non-finite state", index=j)
    return y[0] if single else y


def noise_augmented_dim(model: StateSpaceModel) -> int:
    return model.p + model.r


# -- presets ---------------------------------------------------------------


def ou_model() -> StateSpaceModel:
    """Ornstein-Uhlenbeck price ``dy = psi1 (psi2 - y) dt + psi3 dW``, observed exactly.

    Parameters are (mean reversion rate, long-run mean, volatility).
    """

    def drift(y, t, psi):
        return psi[:, 0:1] * (psi[:, 1:2] - y)

    def diffusion(y, t, psi):
        return psi[:, 2].reshape(-1, 1, 1)

    def measurement(y, t, psi):
        return y

    return StateSpaceModel(
        p=1, r=1, k=1, drift=drift, diffusion=diffusion, measurement=measurement,
        meas_noise_cov=0.0, param_names=("psi1", "psi2", "psi3"), name="ou",
    )


def linear_model(A, G, C, R, Q=None, name: str = "linear") -> StateSpaceModel:
    """``dy = A y dt + G dW``, ``z = C y + eps``; no parameters."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    p, r, k = A.shape[0], G.shape[1], C.shape[0]
    return StateSpaceModel(
        p=p, r=r, k=k,
        drift=lambda y, t, _: y @ A.T,
        diffusion=lambda y, t, _: G,
        measurement=lambda y, t, _: y @ C.T,
        meas_noise_cov=R, process_noise_cov=Q, name=name,
    )


PRESETS: dict[str, Callable[[], StateSpaceModel]] = {"ou": ou_model}


def get_preset(name: str) -> StateSpaceModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidInput(f"unknown model preset {name!r}; known: {sorted(PRESETS)}") from None
