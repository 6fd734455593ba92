"""Trajectory simulation for the benchmark systems.

ODE systems integrate with classical fixed-step RK4 at dt/10 substeps,
recording every dt; exact time derivatives from the RHS are stored as
targets.  The PDE path uses method-of-lines on a periodic grid with
second-order central differences for spatial derivatives and the same
time integrator.
"""

from __future__ import annotations

import numpy as np

from ..expressions import Expression
from .bundle import Column, DatasetBundle
from .systems import DERIV_SUFFIXES, GridSpec, SystemSpec

__all__ = [
    "DivergenceError",
    "CflViolationError",
    "SUBSTEPS",
    "STATE_LIMIT",
    "rk4_path",
    "simulate_ode",
    "simulate_pde",
    "spatial_derivatives",
    "pde_time_derivative",
    "spiral_field",
]

SUBSTEPS = 10
STATE_LIMIT = 1e6


class DivergenceError(Exception):
    """A trajectory left the admissible region and retries ran out."""


class CflViolationError(Exception):
    """Time step exceeds the explicit diffusion stability bound."""


class _Diverged(Exception):
    pass


def _check(y: np.ndarray):
    if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > STATE_LIMIT:
        raise _Diverged


def rk4_path(f, y0: np.ndarray, dt: float, n_steps: int, substeps: int = SUBSTEPS):
    """Integrate dy/dt = f(y), recording n_steps samples every dt
    (the initial state included).  Raises _Diverged past STATE_LIMIT."""
    y = np.array(y0, dtype=np.float64)
    _check(y)
    out = [y.copy()]
    h = dt / substeps
    for _ in range(n_steps - 1):
        for _ in range(substeps):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check(y)
        out.append(y.copy())
    return np.array(out)


def _ode_field(spec: SystemSpec):
    names = spec.variables

    def f(y):
        env = {n: y[i] for i, n in enumerate(names)}
        return np.array([float(e.evaluate(env)) for e in spec.rhs])

    return f


def simulate_ode(spec: SystemSpec, seed: int = 0, max_retries: int = 20) -> DatasetBundle:
    """Simulate spec.n_trajectories trajectories from box-sampled initial
    conditions.  Diverging trajectories restart with a fresh draw, up to
    ``max_retries`` times each, then raise DivergenceError."""
    if spec.kind != "ode":
        raise ValueError("simulate_ode requires an ODE system")
    if spec.ic_box is None:
        raise ValueError(f"system {spec.name} has no initial-condition box")
    rng = np.random.default_rng(seed)
    f = _ode_field(spec)
    q = spec.q
    lows = np.array([spec.ic_box[v][0] for v in spec.variables])
    highs = np.array([spec.ic_box[v][1] for v in spec.variables])

    paths = []
    for traj in range(spec.n_trajectories):
        for attempt in range(max_retries + 1):
            y0 = rng.uniform(lows, highs)
            try:
                paths.append(rk4_path(f, y0, spec.dt, spec.n_steps))
                break
            except _Diverged:
                continue
        else:
            raise DivergenceError(
                f"trajectory {traj} of {spec.name} diverged {max_retries + 1} times"
            )

    columns = (
        [Column("traj_id", "coordinate"), Column("t", "coordinate")]
        + [Column(v, "feature") for v in spec.variables]
        + [Column(n, "target") for n in spec.target_names]
    )
    n_rows = spec.n_trajectories * spec.n_steps
    data = np.zeros((n_rows, len(columns)))
    times = np.arange(spec.n_steps) * spec.dt
    for traj, path in enumerate(paths):
        sl = slice(traj * spec.n_steps, (traj + 1) * spec.n_steps)
        data[sl, 0] = traj
        data[sl, 1] = times
        data[sl, 2 : 2 + q] = path
        env = {v: path[:, i] for i, v in enumerate(spec.variables)}
        for j, e in enumerate(spec.rhs):
            data[sl, 2 + q + j] = np.broadcast_to(
                np.asarray(e.evaluate(env), dtype=np.float64), (spec.n_steps,)
            )
    meta = {
        "name": spec.name,
        "kind": "ode",
        "states": list(spec.variables),
        "dt": spec.dt,
        "noise_level": 0.0,
        "seed": seed,
        "grid": None,
        "split": None,
    }
    return DatasetBundle(columns, data, meta)


# ---------------------------------------------------------------------------
# PDE path
# ---------------------------------------------------------------------------

def spatial_derivatives(field: np.ndarray, dx: float, dy: float) -> dict:
    """Central-difference derivatives of a periodic (ny, nx) field."""
    left = np.roll(field, 1, axis=1)
    right = np.roll(field, -1, axis=1)
    down = np.roll(field, 1, axis=0)
    up = np.roll(field, -1, axis=0)
    return {
        "x": (right - left) / (2.0 * dx),
        "y": (up - down) / (2.0 * dy),
        "xx": (right - 2.0 * field + left) / (dx * dx),
        "yy": (up - 2.0 * field + down) / (dy * dy),
    }


def _pde_env(spec: SystemSpec, fields: dict) -> dict:
    g = spec.grid
    env = dict(fields)
    for v in spec.variables:
        derivs = spatial_derivatives(fields[v], g.dx, g.dy)
        for sfx, _ in DERIV_SUFFIXES:
            env[f"{v}_{sfx}"] = derivs[sfx]
    return env


def pde_time_derivative(spec: SystemSpec, fields: dict) -> list:
    """Method-of-lines time derivative of each field (list of grids)."""
    env = _pde_env(spec, fields)
    out = []
    for e in spec.rhs:
        val = np.asarray(e.evaluate(env), dtype=np.float64)
        out.append(np.broadcast_to(val, fields[spec.variables[0]].shape).copy())
    return out


def spiral_field(grid: GridSpec) -> tuple:
    """Spiral-wave initial condition on [-extent, extent)^2."""
    xs = -grid.extent + grid.dx * np.arange(grid.nx)
    ys = -grid.extent + grid.dy * np.arange(grid.ny)
    X, Y = np.meshgrid(xs, ys)
    r = np.sqrt(X * X + Y * Y)
    th = np.arctan2(Y, X)
    return np.tanh(r) * np.cos(th - r), np.tanh(r) * np.sin(th - r), X, Y


def _diffusion_coefficient(spec: SystemSpec) -> float:
    """Probe the largest |coefficient| of any second-derivative feature."""
    zero_env = {v: 0.0 for v in spec.variables}
    for v in spec.variables:
        for sfx, _ in DERIV_SUFFIXES:
            zero_env[f"{v}_{sfx}"] = 0.0
    best = 0.0
    for e in spec.rhs:
        base = float(e.evaluate(zero_env))
        for v in spec.variables:
            for sfx, order in DERIV_SUFFIXES:
                if order != 2:
                    continue
                env = dict(zero_env)
                env[f"{v}_{sfx}"] = 1.0
                best = max(best, abs(float(e.evaluate(env)) - base))
    return best


def simulate_pde(spec: SystemSpec, seed: int = 0) -> DatasetBundle:
    """Method-of-lines simulation on a periodic grid.

    Feature columns hold the states plus their central-difference
    spatial derivatives up to order 2; targets are the exact
    method-of-lines time derivatives.  Rows are ordered by
    (t, y index, x index)."""
    if spec.kind != "pde" or spec.grid is None:
        raise ValueError("simulate_pde requires a PDE system with a grid")
    g = spec.grid
    h = spec.dt / SUBSTEPS
    diff = _diffusion_coefficient(spec)
    if diff > 0.0:
        bound = min(g.dx, g.dy) ** 2 / (4.0 * diff)
        if h > bound:
            raise CflViolationError(
                f"substep {h:g} exceeds diffusion stability bound {bound:g}"
            )

    if spec.ic == "spiral":
        U, V, X, Y = spiral_field(g)
    elif spec.ic == "zero":
        _, _, X, Y = spiral_field(g)
        U = np.zeros((g.ny, g.nx))
        V = np.zeros((g.ny, g.nx))
    else:
        raise ValueError(f"unknown PDE initial condition {spec.ic!r}")
    fields = {spec.variables[0]: U, spec.variables[1]: V}

    deriv_names = spec.derivative_names()
    columns = (
        [
            Column("traj_id", "coordinate"),
            Column("t", "coordinate"),
            Column("x", "coordinate"),
            Column("y", "coordinate"),
        ]
        + [Column(v, "feature") for v in spec.variables]
        + [Column(n, "feature") for n in deriv_names]
        + [Column(n, "target") for n in spec.target_names]
    )
    npts = g.nx * g.ny
    data = np.zeros((spec.n_steps * npts, len(columns)))

    def flat(a):
        return a.reshape(-1)

    def record(step: int, flds: dict):
        sl = slice(step * npts, (step + 1) * npts)
        env = _pde_env(spec, flds)
        data[sl, 0] = 0.0
        data[sl, 1] = step * spec.dt
        data[sl, 2] = flat(X)
        data[sl, 3] = flat(Y)
        col = 4
        for v in spec.variables:
            data[sl, col] = flat(flds[v])
            col += 1
        for n in deriv_names:
            data[sl, col] = flat(env[n])
            col += 1
        for e in spec.rhs:
            val = np.broadcast_to(np.asarray(e.evaluate(env), float), (g.ny, g.nx))
            data[sl, col] = flat(val)
            col += 1

    def step_fields(flds: dict) -> dict:
        names = spec.variables

        def deriv(fl):
            d = pde_time_derivative(spec, dict(zip(names, fl)))
            return d

        fl = [flds[v] for v in names]
        k1 = deriv(fl)
        k2 = deriv([f + 0.5 * h * k for f, k in zip(fl, k1)])
        k3 = deriv([f + 0.5 * h * k for f, k in zip(fl, k2)])
        k4 = deriv([f + h * k for f, k in zip(fl, k3)])
        new = [
            f + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for f, a, b, c, d in zip(fl, k1, k2, k3, k4)
        ]
        for f in new:
            if not np.all(np.isfinite(f)) or np.max(np.abs(f)) > STATE_LIMIT:
                raise DivergenceError(f"PDE field diverged for {spec.name}")
        return dict(zip(names, new))

    record(0, fields)
    for step in range(1, spec.n_steps):
        for _ in range(SUBSTEPS):
            fields = step_fields(fields)
        record(step, fields)

    meta = {
        "name": spec.name,
        "kind": "pde",
        "states": list(spec.variables),
        "dt": spec.dt,
        "noise_level": 0.0,
        "seed": seed,
        "grid": {"nx": g.nx, "ny": g.ny, "extent": g.extent},
        "split": None,
    }
    return DatasetBundle(columns, data, meta)
