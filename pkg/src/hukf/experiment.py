"""Monte Carlo study of sequential parameter estimation.

Each replication draws true parameters from a Gaussian, simulates a path,
filters it on the parameter-augmented model and records the final posterior
mean and variance of every parameter. Replication ``i`` always uses random
stream ``i`` of the master seed, so

* UKF and HUKF see the same data,
* the path for a short horizon is a prefix of the path for a long one, and
* results never depend on scheduling; one filter pass over the longest
  horizon yields all shorter checkpoints too.
"""

from __future__ import annotations

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .filters import HUKF, UKF, FilterConfig, iter_filter
from .sigma import GaussianBelief, SigmaKind
from .sde import SeededRng, Trajectory, draw_parameters, simulate
from .ssm import AugmentedModel, EulerGrid, augment_with_parameters, get_preset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

EXCEED_Z = 1.96
# Parameters have zero dynamics and both updates subtract PSD terms, so their
# variances cannot grow; growth beyond rounding means precision has been lost.
VAR_GROWTH_TOL = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "ou"
    param_mean: tuple[float, ...] = (0.5, 3.0, 2.0)
    param_var: tuple[float, ...] = (0.1, 0.1, 0.1)
    # None: same as the data-generating prior
    filter_param_mean: tuple[float, ...] | None = None
    filter_param_var: tuple[float, ...] | None = None
    # "variance" reads the *_var entries as variances, "stddev" as standard deviations
    prior_scale: str = "variance"
    y0: tuple[float, ...] = (3.0,)
    state_var: tuple[float, ...] = (1.0,)
    T: tuple[int, ...] = (10, 50, 100, 200, 500)
    N: int = 500
    variants: tuple[str, ...] = (UKF, HUKF)
    seed: int = 20120102
    dt: float = 1.0
    substeps: int = 1
    sim_substeps: int = 1
    kappa: float = 0.0
    nu2var_literal: bool = False
    out: str = "summary.csv"

    def __post_init__(self):
        for name in ("param_mean", "param_var", "filter_param_mean", "filter_param_var",
                     "y0", "state_var", "T", "variants"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(val))
        object.__setattr__(self, "T", tuple(sorted(set(int(t) for t in self.T))))
        if not self.T or self.T[0] < 1:
            raise InvalidInput("T values must be >= 1")
        if self.N < 1:
            raise InvalidInput("N must be >= 1")
        if self.prior_scale not in ("variance", "stddev"):
            raise InvalidInput("prior_scale must be 'variance' or 'stddev'")
        bad = set(self.variants) - {UKF, HUKF}
        if bad or not self.variants:
            raise InvalidInput(f"unknown variants {sorted(bad)}")
        if any(v < 0 for v in self.param_var) or any(v < 0 for v in self.state_var):
            raise InvalidInput("prior variances must be non-negative")
        u = len(self.param_mean)
        for name in ("param_var", "filter_param_mean", "filter_param_var"):
            val = getattr(self, name)
            if val is not None and len(val) != u:
                raise InvalidInput(f"{name} must have {u} entries")
        get_preset(self.model)

    @classmethod
    def from_toml(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def _cov(self, values: Sequence[float]) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        return np.diag(v * v if self.prior_scale == "stddev" else v)

    def true_prior(self) -> GaussianBelief:
        return GaussianBelief(self.param_mean, self._cov(self.param_var))

    def filter_prior(self) -> GaussianBelief:
        mean = self.param_mean if self.filter_param_mean is None else self.filter_param_mean
        var = self.param_var if self.filter_param_var is None else self.filter_param_var
        return GaussianBelief(mean, self._cov(var))

    def state_prior(self) -> GaussianBelief:
        return GaussianBelief(self.y0, np.diag(np.asarray(self.state_var, dtype=float)))

    def filter_config(self, variant: str) -> FilterConfig:
        kind = SigmaKind.degree5() if variant == HUKF else SigmaKind.degree3(self.kappa)
        return FilterConfig(variant=variant, sigma_kind=kind, euler_substeps=self.substeps,
                            nu2var_literal=self.nu2var_literal)

    def augmented(self) -> tuple[AugmentedModel, GaussianBelief]:
        return augment_with_parameters(get_preset(self.model), self.filter_prior(),
                                       self.state_prior())

    def times(self, length: int | None = None) -> np.ndarray:
        n = self.T[-1] if length is None else length
        return np.arange(n + 1) * self.dt


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    variant: str
    T: int
    truth: np.ndarray
    estimate: np.ndarray | None = None
    variance: np.ndarray | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class McSummary:
    variant: str
    T: int
    N: int
    excluded: int
    param_names: tuple[str, ...]
    mean_error: np.ndarray
    mse: np.ndarray
    mean_est_var: np.ndarray
    exceed_095: np.ndarray

    def rows(self) -> list[dict]:
        return [
            {
                "variant": self.variant, "T": self.T, "N": self.N, "param": name,
                "mean_error": float(self.mean_error[j]), "mse": float(self.mse[j]),
                "mean_est_var": float(self.mean_est_var[j]),
                "exceed_095": float(self.exceed_095[j]), "excluded_count": self.excluded,
            }
            for j, name in enumerate(self.param_names)
        ]


def simulate_replication(cfg: ExperimentConfig, index: int,
                         length: int | None = None) -> tuple[np.ndarray, Trajectory]:
    """True parameters and simulated path for replication ``index``."""
    rng = SeededRng(cfg.seed, index)
    truth = draw_parameters(cfg.true_prior(), rng)
    traj = simulate(get_preset(cfg.model), cfg.y0, cfg.times(length),
                    EulerGrid(cfg.dt, cfg.sim_substeps), rng, params=truth)
    return truth, traj


def run_replication(cfg: ExperimentConfig, index: int, variant: str) -> list[ReplicationResult]:
    """Filter replication ``index``; one result per horizon in ``cfg.T``.

    A numerical failure at step ``s`` marks only the horizons ``T >= s`` as failed.
    Growth of a parameter variance above its prior counts as such a failure.
    """
    truth, traj = simulate_replication(cfg, index)
    model, belief = cfg.augmented()
    pslice = model.param_slice
    fcfg = cfg.filter_config(variant)
    # the square-root floor may lift a collapsed direction up to the floor
    var_limit = np.maximum(belief.var[pslice], fcfg.sqrt_floor) * (1.0 + VAR_GROWTH_TOL)
    wanted = set(cfg.T)
    results = []
    try:
        for i, step in enumerate(iter_filter(model, belief, traj.observation_pairs(), fcfg)):
            post = step.posterior
            if np.any(post.var[pslice] > var_limit):
                raise NumericalFailure(f"step {i}: parameter variance grew above its prior",
                                       step=i)
            if i in wanted:
                results.append(ReplicationResult(index, variant, i, truth,
                                                  post.mean[pslice].copy(), post.var[pslice]))
    except NumericalFailure as exc:
        log.debug("replication %d (%s) failed: %s", index, variant, exc)
        done = {r.T for r in results}
        results.extend(ReplicationResult(index, variant, T, truth, error=str(exc))
                       for T in cfg.T if T not in done)
    return results


def summarize(replications: Iterable[ReplicationResult],
              param_names: Sequence[str] | None = None) -> McSummary:
    """Mean error, mean squared error, mean estimated variance and 1.96-sigma exceedance."""
    reps = sorted(replications, key=lambda r: r.index)
    if not reps:
        raise InvalidInput("no replications to summarise")
    ok = [r for r in reps if not r.failed]
    if not ok:
        raise InvalidInput("every replication failed")
    if len({(r.variant, r.T) for r in reps}) != 1:
        raise InvalidInput("replications mix variants or horizons")
    u = ok[0].truth.size
    names = tuple(param_names) if param_names else tuple(f"psi{j + 1}" for j in range(u))
    err = np.array([r.estimate - r.truth for r in ok])
    var = np.array([r.variance for r in ok])
    return McSummary(
        variant=reps[0].variant, T=reps[0].T, N=len(reps), excluded=len(reps) - len(ok),
        param_names=names,
        mean_error=err.mean(axis=0),
        mse=(err * err).mean(axis=0),
        mean_est_var=var.mean(axis=0),
        exceed_095=(np.abs(err) > EXCEED_Z * np.sqrt(np.maximum(var, 0.0))).mean(axis=0),
    )


def _job(args: tuple[ExperimentConfig, int, str]) -> list[ReplicationResult]:
    cfg, index, variant = args
    return run_replication(cfg, index, variant)


def run_experiment(
    cfg: ExperimentConfig, threads: int = 1, out: str | Path | None = None
) -> dict[tuple[str, int], McSummary]:
    """Run ``N`` replications per variant and summarise every ``(variant, T)`` cell.

    ``threads > 1`` spreads replications over worker processes; the result is
    identical for any worker count. Writes the summary CSV to ``out`` if given.
    """
    jobs = [(cfg, i, v) for v in cfg.variants for i in range(cfg.N)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(_job, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    else:
        outputs = [_job(j) for j in jobs]

    cells: dict[tuple[str, int], list[ReplicationResult]] = {}
    for res in outputs:
        for r in res:
            cells.setdefault((r.variant, r.T), []).append(r)
    names = get_preset(cfg.model).param_names
    summaries = {}
    for variant in cfg.variants:
        for T in cfg.T:
            reps = cells.get((variant, T), [])
            try:
                summaries[(variant, T)] = summarize(reps, names)
            except InvalidInput:
                nan = np.full(len(names), np.nan)
                summaries[(variant, T)] = McSummary(variant, T, len(reps), len(reps), names,
                                                     nan, nan, nan, nan)
    if out is not None:
        from .csvio import write_summary

        write_summary(summaries.values(), out)
    return summaries
