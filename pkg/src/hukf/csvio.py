"""CSV readers and writers for trajectories, filter traces and summaries.

Floats are written with ``repr`` so files round-trip exactly and identical
results give byte-identical files.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput
from .sde import Trajectory

SUMMARY_COLUMNS = ("variant", "T", "N", "param", "mean_error", "mse", "mean_est_var",
                   "exceed_095", "excluded_count")
TRACE_COLUMNS = ("time", "state", "prior_mean", "prior_var", "posterior_mean",
                 "posterior_var", "innovation", "gain1_norm", "gain2_norm", "log_density")
BAND_COLUMNS = ("time", "state", "name", "mean", "lower", "upper")
BAND_WIDTH = math.sqrt(3.0)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _open_for_write(path: str | Path):
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_rows(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_trajectory(traj: Trajectory, path: str | Path) -> None:
    p, k = traj.states.shape[1], traj.observations.shape[1]
    cols = ["time"] + [f"y{i + 1}" for i in range(p)] + [f"z{i + 1}" for i in range(k)]
    rows = ([t, *y, *z] for t, y, z in zip(traj.times, traj.states, traj.observations))
    write_rows(path, cols, rows)


def read_trajectory(path: str | Path) -> Trajectory:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time":
            raise InvalidInput(f"{path}: first column must be 'time'")
        ycols = [i for i, c in enumerate(header) if c.startswith("y")]
        zcols = [i for i, c in enumerate(header) if c.startswith("z")]
        if not zcols:
            raise InvalidInput(f"{path}: no observation columns (z1..zk)")
        data = np.array([[float(x) for x in row] for row in reader if row], dtype=float)
    if data.size == 0:
        data = np.zeros((0, len(header)))
    states = data[:, ycols] if ycols else np.full((len(data), 0), np.nan)
    return Trajectory(data[:, 0], states, data[:, zcols])


def write_trace(steps, path: str | Path) -> None:
    """One row per (observation time, state index)."""

    def rows():
        for s in steps:
            nu = s.innovation
            innov = float(nu[0]) if nu.size == 1 else float(np.linalg.norm(nu))
            g1 = np.linalg.norm(s.gain1, axis=1)
            g2 = np.linalg.norm(s.gain2, axis=1)
            pm, pv = s.prior.mean, s.prior.var
            qm, qv = s.posterior.mean, s.posterior.var
            for j in range(qm.size):
                yield (s.time, j, pm[j], pv[j], qm[j], qv[j], innov, g1[j], g2[j],
                       s.log_density)

    write_rows(path, TRACE_COLUMNS, rows())


def write_bands(steps, path: str | Path, names: Sequence[str] | None = None) -> None:
    """Posterior mean with +-sqrt(3) standard deviation bands, per step and state."""

    def rows():
        for s in steps:
            m = s.posterior.mean
            sd = np.sqrt(np.maximum(s.posterior.var, 0.0))
            for j in range(m.size):
                name = names[j] if names else f"x{j + 1}"
                yield (s.time, j, name, m[j], m[j] - BAND_WIDTH * sd[j], m[j] + BAND_WIDTH * sd[j])

    write_rows(path, BAND_COLUMNS, rows())


def write_summary(summaries, path: str | Path) -> None:
    rows = (
        [row[c] for c in SUMMARY_COLUMNS]
        for summary in summaries
        for row in summary.rows()
    )
    write_rows(path, SUMMARY_COLUMNS, rows)


def read_summary(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
