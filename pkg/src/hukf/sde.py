"""Euler-Maruyama simulation of state-space models.

Random streams use numpy's PCG64 seeded from ``SeedSequence(master_seed,
spawn_key=(stream_id,))``: each ``(master_seed, stream_id)`` pair gives an
independent, reproducible sequence, so replications can run in any order or
process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .linalg import matrix_sqrt
from .sigma import GaussianBelief
from .ssm import EulerGrid, StateSpaceModel


@dataclass
class SeededRng:
    master_seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_id < 0:
            raise InvalidInput("seed and stream id must be non-negative")
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def standard_normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # (n,)
    states: np.ndarray  # (n, p)
    observations: np.ndarray  # (n, k)

    def __post_init__(self):
        n = len(self.times)
        if len(self.states) != n or len(self.observations) != n:
            raise InvalidInput("times, states and observations must have equal length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidInput("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def observation_pairs(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.observations))

    def head(self, n: int) -> "Trajectory":
        return Trajectory(self.times[:n], self.states[:n], self.observations[:n])


def draw_parameters(prior: GaussianBelief, rng: SeededRng) -> np.ndarray:
    """One draw ``mu + L xi`` with ``L L' = Sigma`` and ``xi ~ N(0, I)``."""
    xi = rng.standard_normal(prior.dim)
    return prior.mean + matrix_sqrt(prior.cov).factor @ xi


def _noise_root(R: np.ndarray) -> np.ndarray | None:
    return matrix_sqrt(R).factor if np.any(R != 0) else None


def simulate(
    model: StateSpaceModel,
    y0: Sequence[float],
    times: Sequence[float],
    grid: EulerGrid | None,
    rng: SeededRng,
    params: Sequence[float] | None = None,
) -> Trajectory:
    """Simulate states at ``times`` starting from ``y0`` at ``times[0]``.

    ``grid.step`` is the target Euler step: each interval ``dt`` is split into
    ``ceil(dt / grid.step)`` equal substeps, each with its own Wiener increment.
    ``grid=None`` uses one step per observation interval. Observations are
    ``h(y) + eps`` with ``eps ~ N(0, R(t))``; no noise is drawn when ``R`` is zero.
    """
    if model.u:
        if params is None:
            raise InvalidInput(f"model needs {model.u} parameters")
        psi = np.asarray(params, dtype=float).reshape(1, -1)
        if psi.shape[1] != model.u:
            raise InvalidInput(f"expected {model.u} parameters, got {psi.shape[1]}")
    else:
        psi = None
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise InvalidInput("need at least one time")
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise InvalidInput("times must be strictly increasing")
    y = np.asarray(y0, dtype=float).ravel().copy()
    if y.size != model.p:
        raise InvalidInput(f"y0 has length {y.size}, model has p={model.p}")
    q_root = matrix_sqrt(model.Q).factor if model.r else np.zeros((0, 0))
    const_r = not callable(model.meas_noise_cov)
    r_root = _noise_root(model.R(times[0])) if const_r else None

    states = np.empty((times.size, model.p))
    obs = np.empty((times.size, model.k))
    for i, t in enumerate(times):
        if i:
            dt = t - times[i - 1]
            n_sub = 1 if grid is None else max(1, math.ceil(dt / grid.step - 1e-9))
            step = dt / n_sub
            root = math.sqrt(step)
            ts = times[i - 1]
            for j in range(n_sub):
                incr = model.f(y, ts + j * step, psi) * step
                if model.r:
                    dw = q_root @ rng.standard_normal(model.r)
                    incr += model.g(y, ts + j * step, psi) @ dw * root
                y = y + incr
            if not np.all(np.isfinite(y)):
                raise NumericalFailure(f"simulated state is non-finite at step {i}", step=i)
        states[i] = y
        z = model.h(y, t, psi)
        root_r = r_root if const_r else _noise_root(model.R(t))
        if root_r is not None:
            z = z + root_r @ rng.standard_normal(model.k)
        obs[i] = z
    return Trajectory(times, states, obs)
