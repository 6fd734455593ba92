"""Benchmark system registry.

Ten two-variable differential equation systems (nine ODE, one PDE)
defined declaratively in ``system_config.json``: right-hand sides as
expression strings, integration step, trajectory counts, and
initial-condition sampling boxes.  The config file is versioned so
regenerated datasets are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from ..expressions import Expression, parse

__all__ = ["GridSpec", "SystemSpec", "system_names", "get_system", "DERIV_SUFFIXES"]

#: Spatial-derivative column suffixes (order <= 2, pure derivatives).
DERIV_SUFFIXES = (("x", 1), ("y", 1), ("xx", 2), ("yy", 2))


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    extent: float  # domain is [-extent, extent)^2, periodic

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.extent / self.ny


@dataclass(frozen=True)
class SystemSpec:
    """One benchmark system: names, dynamics, and sampling setup."""

    name: str
    kind: str  # "ode" | "pde"
    variables: tuple
    rhs: tuple  # Expression per variable
    dt: float
    n_trajectories: int
    n_steps: int
    ic_box: dict | None = None  # ODE: var -> (lo, hi)
    grid: GridSpec | None = None  # PDE only
    ic: str = "spiral"  # PDE initial condition name
    noise_level: float = 0.01

    def __post_init__(self):
        if self.kind not in ("ode", "pde"):
            raise ValueError(f"bad system kind {self.kind!r}")
        allowed = set(self.variables)
        if self.kind == "pde":
            for v in self.variables:
                for sfx, _ in DERIV_SUFFIXES:
                    allowed.add(f"{v}_{sfx}")
        for expr in self.rhs:
            extra = expr.variables() - allowed
            if extra:
                raise ValueError(f"RHS references undeclared names {sorted(extra)}")

    @property
    def q(self) -> int:
        return len(self.variables)

    @property
    def target_names(self) -> tuple:
        return tuple(f"{v}_t" for v in self.variables)

    def derivative_names(self) -> list:
        if self.kind != "pde":
            return []
        return [f"{v}_{sfx}" for sfx, _ in DERIV_SUFFIXES for v in self.variables]


def _load_config() -> dict:
    text = resources.files(__package__).joinpath("system_config.json").read_text()
    return json.loads(text)


_CONFIG = _load_config()


def system_names() -> list:
    return list(_CONFIG["systems"].keys())


def get_system(name: str, **overrides) -> SystemSpec:
    """Look up a built-in system; keyword overrides replace config values
    (e.g. ``get_system("reaction_diffusion", n_steps=20)`` for small runs).
    """
    try:
        raw = dict(_CONFIG["systems"][name])
    except KeyError:
        raise KeyError(
            f"unknown system {name!r}; valid names: {', '.join(system_names())}"
        ) from None
    raw.update(overrides)
    variables = tuple(raw["variables"])
    allowed = set(variables)
    if raw["kind"] == "pde":
        for v in variables:
            for sfx, _ in DERIV_SUFFIXES:
                allowed.add(f"{v}_{sfx}")
    rhs = tuple(
        e if isinstance(e, Expression) else parse(e, allowed) for e in raw["rhs"]
    )
    grid = None
    if raw.get("grid"):
        g = raw["grid"]
        grid = g if isinstance(g, GridSpec) else GridSpec(g["nx"], g["ny"], float(g["extent"]))
    ic_box = None
    if raw.get("ic_box"):
        ic_box = {k: (float(v[0]), float(v[1])) for k, v in raw["ic_box"].items()}
    return SystemSpec(
        name=name,
        kind=raw["kind"],
        variables=variables,
        rhs=rhs,
        dt=float(raw["dt"]),
        n_trajectories=int(raw["n_trajectories"]),
        n_steps=int(raw["n_steps"]),
        ic_box=ic_box,
        grid=grid,
        ic=raw.get("ic", "spiral"),
        noise_level=float(raw.get("noise_level", 0.01)),
    )
