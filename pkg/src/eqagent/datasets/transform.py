"""Noise injection, derivative re-estimation, and train/test splits.

The noise model perturbs each state variable with i.i.d. Gaussian noise
of scale sigma_i = noise_level * std(x_i) (std over the whole bundle),
then replaces the exact derivative targets with central differences of
the noisy states; the first and last timestep of every trajectory are
dropped.  PDE bundles also get their spatial-derivative feature columns
recomputed from the noisy fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import Column, DatasetBundle
from .simulate import spatial_derivatives
from .systems import DERIV_SUFFIXES

__all__ = ["NoiseSpec", "TooShortTrajectoryError", "add_noise_and_difference", "split"]


class TooShortTrajectoryError(Exception):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    noise_level: float  # dimensionless; sigma_i = noise_level * std(x_i)
    seed: int = 0

    def __post_init__(self):
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")


def _trajectory_slices(bundle: DatasetBundle):
    """Yield (traj_id, sorted row indices) per trajectory."""
    traj = bundle.column("traj_id")
    t = bundle.column("t")
    order = np.lexsort((t, traj))
    ids = traj[order]
    boundaries = np.flatnonzero(np.diff(ids)) + 1
    for chunk in np.split(order, boundaries):
        yield traj[chunk[0]], chunk


def add_noise_and_difference(bundle: DatasetBundle, noise: NoiseSpec) -> DatasetBundle:
    """Perturb states, re-estimate targets by central differences.

    Targets become (x(t+dt) - x(t-dt)) / (2 dt) of the noisy states, so
    every trajectory loses its first and last timestep.
    """
    rng = np.random.default_rng(noise.seed)
    states = bundle.state_names
    dt = bundle.meta.get("dt")
    if dt is None:
        raise ValueError("bundle metadata lacks dt")
    kind = bundle.meta.get("kind", "ode")

    data = bundle.data.copy()
    sigma = {}
    for s in states:
        col = bundle.index(s)
        sigma[s] = noise.noise_level * float(np.std(data[:, col]))
        data[:, col] = data[:, col] + rng.normal(0.0, 1.0, bundle.n_rows) * sigma[s]

    target_idx = {s: bundle.index(f"{s}_t") for s in states}
    state_idx = {s: bundle.index(s) for s in states}

    keep_rows = []
    if kind == "pde":
        grid = bundle.meta.get("grid") or {}
        npts = int(grid["nx"]) * int(grid["ny"])
        nx, ny = int(grid["nx"]), int(grid["ny"])
        extent = float(grid["extent"])
        dx = 2.0 * extent / nx
        dy = 2.0 * extent / ny
        times = np.unique(bundle.column("t"))
        T = len(times)
        if T < 3:
            raise TooShortTrajectoryError("PDE bundle needs at least 3 timesteps")
        if bundle.n_rows != T * npts:
            raise ValueError("PDE bundle rows do not match grid x time layout")
        for s in states:
            series = data[:, state_idx[s]].reshape(T, npts)
            diff = (series[2:] - series[:-2]) / (2.0 * dt)
            data[npts : (T - 1) * npts, target_idx[s]] = diff.reshape(-1)
            # spatial derivative features recomputed from the noisy field
            for sfx, _ in DERIV_SUFFIXES:
                dcol = bundle.index(f"{s}_{sfx}")
                for k in range(T):
                    field = data[k * npts : (k + 1) * npts, state_idx[s]].reshape(ny, nx)
                    dval = spatial_derivatives(field, dx, dy)[sfx]
                    data[k * npts : (k + 1) * npts, dcol] = dval.reshape(-1)
        keep = np.zeros(bundle.n_rows, dtype=bool)
        keep[npts : (T - 1) * npts] = True
        keep_rows = keep
    else:
        keep = np.zeros(bundle.n_rows, dtype=bool)
        for _, rows in _trajectory_slices(bundle):
            if len(rows) < 3:
                raise TooShortTrajectoryError(
                    f"trajectory with {len(rows)} timesteps cannot be differenced"
                )
            for s in states:
                series = data[rows, state_idx[s]]
                diff = (series[2:] - series[:-2]) / (2.0 * dt)
                data[rows[1:-1], target_idx[s]] = diff
            keep[rows[1:-1]] = True
        keep_rows = keep

    out = DatasetBundle(list(bundle.columns), data[keep_rows], dict(bundle.meta))
    out.meta["noise_level"] = noise.noise_level
    out.meta["seed"] = noise.seed
    return out


def split(bundle: DatasetBundle, policy: str, fraction: float):
    """Split into (train, test) bundles.

    policy "trajectory": whole trajectories, first fraction by id.
    policy "time": time prefix (the PDE convention).
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("split fraction must lie strictly between 0 and 1")
    if policy == "trajectory":
        ids = np.unique(bundle.column("traj_id"))
        n_train = int(round(fraction * len(ids)))
        if n_train == 0 or n_train == len(ids):
            raise ValueError(
                f"fraction {fraction} leaves an empty side for {len(ids)} trajectories"
            )
        train_ids = set(ids[:n_train])
        mask = np.isin(bundle.column("traj_id"), list(train_ids))
    elif policy == "time":
        times = np.unique(bundle.column("t"))
        n_train = int(round(fraction * len(times)))
        if n_train == 0 or n_train == len(times):
            raise ValueError(
                f"fraction {fraction} leaves an empty side for {len(times)} timesteps"
            )
        cutoff = times[n_train - 1]
        mask = bundle.column("t") <= cutoff + 1e-12
    else:
        raise ValueError(f"unknown split policy {policy!r}")

    info = {"policy": policy, "fraction": fraction}
    train = bundle.subset(mask, {"split": {**info, "part": "train"}})
    test = bundle.subset(~mask, {"split": {**info, "part": "test"}})
    return train, test
