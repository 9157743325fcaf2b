"""Ground-truth simulators for the five benchmark systems.

All systems are integrated with fixed-step RK4 through the shared term-table
kernel; the two fields are semi-discretised in space first (method of lines)
using the same ghost-node difference operators as the dictionary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np

from . import _core
from ._core import T_CONST, T_DIFF, T_POW, T_VEL
from .data import Boundary, FieldDataset, TrajectoryDataset, spatial_derivatives

__all__ = [
    "SystemName",
    "SystemSpec",
    "SimulationError",
    "ALIASES",
    "paper_spec",
    "simulate",
    "simulate_duffing",
    "simulate_penning",
    "simulate_chain",
    "simulate_string",
    "simulate_beam",
    "true_lagrangian",
    "difference_matrix",
    "beam_mode_shape",
    "beam_stiffness_ratio",
]


class SimulationError(RuntimeError):
    pass


class SystemName(str, Enum):
    DUFFING = "duffing_cq"
    PENNING = "penning_trap"
    CHAIN = "chain_3dof"
    STRING = "string_wave"
    BEAM = "euler_bernoulli_beam"


ALIASES = {
    "duffing": SystemName.DUFFING,
    "penning": SystemName.PENNING,
    "chain": SystemName.CHAIN,
    "string": SystemName.STRING,
    "beam": SystemName.BEAM,
}
ALIASES.update({s.value: s for s in SystemName})

_REQUIRED = {
    SystemName.DUFFING: ("alpha", "beta", "gamma"),
    SystemName.PENNING: ("omega_c", "omega_a"),
    SystemName.CHAIN: ("n", "m", "k"),
    SystemName.STRING: ("c", "L"),
    SystemName.BEAM: ("c", "phi", "L"),
}


def beam_stiffness_ratio(E: float, b: float, d: float, rho: float) -> float:
    """``EI / mu`` of a rectangular section ``b x d``."""
    return E * (b * d**3 / 12.0) / (rho * b * d)


@dataclass(frozen=True)
class SystemSpec:
    """Everything needed to reproduce one simulated dataset.

    ``x0``/``v0`` are the initial displacements and velocities.  For the
    two fields they may be left empty, in which case the system's default
    profile is sampled on the grid.  ``substeps`` is the number of RK4
    steps per output sample (raised automatically when stability needs it).
    """

    name: SystemName
    params: Mapping[str, float]
    x0: tuple[float, ...] = ()
    v0: tuple[float, ...] = ()
    T: float = 1.0
    dt: float = 1e-3
    dx: float | None = None
    S: int | None = None
    substeps: int = 10

    def __post_init__(self):
        name = ALIASES.get(str(getattr(self.name, "value", self.name)))
        if name is None:
            raise ValueError(f"unknown system {self.name!r}; valid: {sorted(ALIASES)}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "params", {k: float(v) for k, v in dict(self.params).items()})
        missing = [p for p in _REQUIRED[name] if p not in self.params]
        if missing:
            raise ValueError(f"{name.value}: missing parameters {missing}")
        if not (self.T > 0 and self.dt > 0):
            raise ValueError("T and dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        object.__setattr__(self, "x0", tuple(float(x) for x in self.x0))
        object.__setattr__(self, "v0", tuple(float(x) for x in self.v0))
        if name in (SystemName.STRING, SystemName.BEAM):
            if self.dx is None or self.S is None or self.dx <= 0 or self.S < 5:
                raise ValueError(f"{name.value}: needs dx > 0 and S >= 5")

    @property
    def n_samples(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def is_field(self) -> bool:
        return self.name in (SystemName.STRING, SystemName.BEAM)

    def to_mapping(self) -> dict[str, Any]:
        return {
            "name": self.name.value,
            "params": dict(self.params),
            "x0": list(self.x0),
            "v0": list(self.v0),
            "T": self.T,
            "dt": self.dt,
            "dx": self.dx,
            "S": self.S,
            "substeps": self.substeps,
        }

    @classmethod
    def from_mapping(cls, block: Mapping) -> "SystemSpec":
        block = dict(block)
        name = block.pop("name", None) or block.pop("system", None)
        if name is None:
            raise ValueError("system block needs a 'name'")
        base = paper_spec(name)
        params = dict(base.params)
        params.update(block.pop("params", {}) or {})
        known = {"x0", "v0", "T", "dt", "dx", "S", "substeps"}
        extra = sorted(set(block) - known)
        if extra:
            raise ValueError(f"unknown system options {extra}")
        for key in ("x0", "v0"):
            if key in block and block[key] is not None:
                block[key] = tuple(block[key])
        return replace(base, params=params, **block)


def paper_spec(name: str) -> SystemSpec:
    """The settings used for the published examples."""
    key = ALIASES.get(str(getattr(name, "value", name)))
    if key is None:
        raise ValueError(f"unknown system {name!r}; valid: {sorted(ALIASES)}")
    if key is SystemName.DUFFING:
        return SystemSpec(key, {"alpha": 1000.0, "beta": 5000.0, "gamma": 90000.0},
                          x0=(0.35,), v0=(0.0,), T=0.5, dt=1.0 / 2000.0)
    if key is SystemName.PENNING:
        return SystemSpec(key, {"omega_c": 100.0, "omega_a": 10.0},
                          x0=(1e-3, 1e-3, 1e-2), v0=(0.0, 0.0, 0.0), T=0.3, dt=1e-4)
    if key is SystemName.CHAIN:
        return SystemSpec(key, {"n": 3, "m": 1.0, "k": 5000.0},
                          x0=(1.0, 2.0, 3.0), v0=(0.0, 0.0, 0.0), T=1.0, dt=1e-3)
    if key is SystemName.STRING:
        return SystemSpec(key, {"c": 10.0, "L": 1.0}, T=1.0, dt=1e-3, dx=0.1, S=9)
    return SystemSpec(
        key,
        {"c": beam_stiffness_ratio(2e11, 0.02, 0.001, 7850.0), "phi": 3.5 * math.pi, "L": 1.0},
        T=0.1, dt=1e-4, dx=0.1, S=10,
    )


# --------------------------------------------------------------------------
# Integration helpers


def _integrate(x0, v0, dt, n_out, substeps, table, name) -> tuple[np.ndarray, np.ndarray]:
    eq, kind, a, b, p, coef = (np.asarray(c) for c in table)
    X, V, n_valid = _core.rk4_term_table(
        np.asarray(x0, float), np.asarray(v0, float), float(dt), int(n_out), int(substeps),
        eq.astype(np.int_), kind.astype(np.int_), a.astype(np.int_), b.astype(np.int_),
        p.astype(np.int_), coef.astype(float),
    )
    if n_valid < n_out:
        raise SimulationError(f"{name}: state became non-finite at t = {n_valid * dt:.6g} s")
    return X, V


def _table(rows):
    if not rows:
        return ([0], [T_CONST], [0], [0], [0], [0.0])
    return tuple(list(c) for c in zip(*rows))


def _meta(spec: SystemSpec, **extra) -> dict:
    meta = {"system": spec.name.value, "T": spec.T, "dt": spec.dt, "substeps": spec.substeps}
    meta.update({f"param_{k}": v for k, v in spec.params.items()})
    meta.update(extra)
    return meta


def _check(spec: SystemSpec, name: SystemName):
    if spec.name is not name:
        raise ValueError(f"expected a {name.value} spec, got {spec.name.value}")


def _ic(spec: SystemSpec, m: int):
    x0 = spec.x0 or (0.0,) * m
    v0 = spec.v0 or (0.0,) * m
    if len(x0) != m or len(v0) != m:
        raise ValueError(f"{spec.name.value}: initial condition must have {m} entries")
    return x0, v0


# --------------------------------------------------------------------------
# Lumped systems


def simulate_duffing(spec: SystemSpec) -> TrajectoryDataset:
    """``x'' + alpha x + beta x^3 + gamma x^5 = 0``."""
    _check(spec, SystemName.DUFFING)
    p = spec.params
    rows = [(0, T_POW, 0, 0, deg, -p[name])
            for deg, name in ((1, "alpha"), (3, "beta"), (5, "gamma")) if p[name] != 0.0]
    x0, v0 = _ic(spec, 1)
    X, V = _integrate(x0, v0, spec.dt, spec.n_samples, spec.substeps, _table(rows), spec.name.value)
    return TrajectoryDataset(X, V, spec.dt, dof_labels=("x1",), meta=_meta(spec))


def simulate_penning(spec: SystemSpec) -> TrajectoryDataset:
    """Normalised trap equations with cyclotron ``omega_c`` and axial ``omega_a`` (rad/s)."""
    _check(spec, SystemName.PENNING)
    wc, wa = spec.params["omega_c"], spec.params["omega_a"]
    half = 0.5 * wa**2
    rows = [
        (0, T_VEL, 1, 0, 1, wc), (0, T_POW, 0, 0, 1, half),
        (1, T_VEL, 0, 0, 1, -wc), (1, T_POW, 1, 0, 1, half),
        (2, T_POW, 2, 0, 1, -(wa**2)),
    ]
    x0, v0 = _ic(spec, 3)
    X, V = _integrate(x0, v0, spec.dt, spec.n_samples, spec.substeps, _table(rows), spec.name.value)
    return TrajectoryDataset(X, V, spec.dt, dof_labels=("x1", "x2", "x3"), meta=_meta(spec))


def chain_table(n: int, m: float, k: float):
    """Term table of a grounded spring-mass chain with a free last mass."""
    w = k / m
    rows = []
    for j in range(n):
        if j == 0:
            rows.append((j, T_POW, 0, 0, 1, -w))
        else:
            rows.append((j, T_DIFF, j - 1, j, 1, -w))
        if j + 1 < n:
            rows.append((j, T_DIFF, j, j + 1, 1, w))
    return _table(rows)


def simulate_chain(spec: SystemSpec, n: int | None = None) -> TrajectoryDataset:
    """``M x'' + K x = 0`` for an ``n``-mass chain (first spring grounded, last mass free)."""
    _check(spec, SystemName.CHAIN)
    n = int(spec.params["n"] if n is None else n)
    if n < 1:
        raise ValueError("chain needs n >= 1")
    x0, v0 = _ic(spec, n)
    table = chain_table(n, spec.params["m"], spec.params["k"])
    X, V = _integrate(x0, v0, spec.dt, spec.n_samples, spec.substeps, table, spec.name.value)
    labels = tuple(f"x{i + 1}" for i in range(n))
    return TrajectoryDataset(X, V, spec.dt, dof_labels=labels, meta=_meta(spec, n_dof=n))


# --------------------------------------------------------------------------
# Fields


def difference_matrix(S: int, dx: float, order: int, boundary: Boundary | str) -> np.ndarray:
    """Matrix ``D`` with ``D @ u`` equal to ``spatial_derivatives`` of order ``order``."""
    return spatial_derivatives(np.eye(S), order, dx, Boundary(boundary)).T


def _linear_table(A: np.ndarray):
    rows = [(i, T_POW, j, 0, 1, A[i, j]) for i, j in zip(*np.nonzero(A))]
    return _table(rows)


def _stable_substeps(A: np.ndarray, dt: float, requested: int) -> int:
    # RK4 on x'' = A x is stable for omega h below ~2.8; keep a wide margin.
    omega = math.sqrt(max(np.max(np.abs(np.linalg.eigvals(A))), 0.0))
    return max(requested, int(math.ceil(omega * dt / 0.5)))


def beam_mode_shape(x: np.ndarray, phi: float, L: float = 1.0) -> np.ndarray:
    """Cantilever mode shape with wavenumber ``phi``."""
    r = (math.cos(phi * L) + math.cosh(phi * L)) / (math.sin(phi * L) + math.sinh(phi * L))
    return (np.cosh(phi * x) - np.cos(phi * x)) + r * (np.sin(phi * x) - np.sinh(phi * x))


def _field(spec: SystemSpec, A: np.ndarray, u0: np.ndarray, boundary: Boundary, **meta) -> FieldDataset:
    sub = _stable_substeps(A, spec.dt, spec.substeps)
    v0 = np.asarray(spec.v0) if spec.v0 else np.zeros(spec.S)
    if u0.shape != (spec.S,) or v0.shape != (spec.S,):
        raise ValueError(f"{spec.name.value}: initial profile must have S = {spec.S} entries")
    X, V = _integrate(u0, v0, spec.dt, spec.n_samples, sub, _linear_table(A), spec.name.value)
    info = _meta(spec, dx=spec.dx, S=spec.S, substeps_used=sub, **meta)
    return FieldDataset(field=X, dx=spec.dx, dt=spec.dt, boundary=boundary, velocities=V, meta=info)


def simulate_string(spec: SystemSpec) -> FieldDataset:
    """``u_tt = c^2 u_xx`` with both ends fixed, sampled at the ``S`` interior nodes.

    The default initial profile is ``cos(2 pi x) - 1``, a cosine shifted so
    that both ends are at rest.
    """
    _check(spec, SystemName.STRING)
    c = spec.params["c"]
    x = spec.dx * np.arange(1, spec.S + 1)
    u0 = np.asarray(spec.x0) if spec.x0 else np.cos(2.0 * math.pi * x / spec.params["L"]) - 1.0
    A = c**2 * difference_matrix(spec.S, spec.dx, 2, Boundary.FIXED_FIXED)
    return _field(spec, A, u0, Boundary.FIXED_FIXED, cfl=c * spec.dt / spec.dx)


def simulate_beam(spec: SystemSpec) -> FieldDataset:
    """``u_tt = -c u_xxxx``, clamped at ``x = 0`` and free at ``x = L``.

    Nodes sit at ``x = dx, 2 dx, ..., S dx`` with the free tip at the last
    node.  The default initial profile is the cantilever mode shape.
    """
    _check(spec, SystemName.BEAM)
    c = spec.params["c"]
    x = spec.dx * np.arange(1, spec.S + 1)
    u0 = np.asarray(spec.x0) if spec.x0 else beam_mode_shape(x, spec.params["phi"], spec.params["L"])
    A = -c * difference_matrix(spec.S, spec.dx, 4, Boundary.CLAMPED_FREE)
    return _field(spec, A, u0, Boundary.CLAMPED_FREE)


_DISPATCH = {
    SystemName.DUFFING: simulate_duffing,
    SystemName.PENNING: simulate_penning,
    SystemName.CHAIN: simulate_chain,
    SystemName.STRING: simulate_string,
    SystemName.BEAM: simulate_beam,
}


def simulate(spec: SystemSpec):
    return _DISPATCH[spec.name](spec)


# --------------------------------------------------------------------------
# Ground truth


def true_lagrangian(spec: SystemSpec) -> dict[str, float]:
    """True Lagrangian as ``{candidate id: coefficient}`` with kinetic terms ``0.5 v^2``."""
    p = spec.params
    name = spec.name
    if name is SystemName.DUFFING:
        out = {"xdot1^2": 0.5}
        for deg, key in ((2, "alpha"), (4, "beta"), (6, "gamma")):
            if p[key]:
                out[f"x1^{deg}"] = -p[key] / deg
        return out
    if name is SystemName.PENNING:
        wc, wa2 = p["omega_c"], p["omega_a"] ** 2
        out = {f"xdot{i}^2": 0.5 for i in (1, 2, 3)}
        out.update({"x1^2": wa2 / 4.0, "x2^2": wa2 / 4.0, "x3^2": -wa2 / 2.0})
        out.update({"x1*v2": wc / 2.0, "x2*v1": -wc / 2.0})
        return out
    if name is SystemName.CHAIN:
        n = int(p["n"])
        half = 0.5 * p["k"] / p["m"]
        out = {f"xdot{i}^2": 0.5 for i in range(1, n + 1)}
        out["x1^2"] = -half
        out.update({f"(x{i + 1}-x{i})^2": -half for i in range(1, n)})
        return out
    S = spec.S
    out = {f"udot_{i}^2": 0.5 for i in range(1, S + 1)}
    if name is SystemName.STRING:
        out.update({f"ux_{i}^2": -0.5 * p["c"] ** 2 for i in range(1, S + 1)})
    else:
        out.update({f"uxx_{i}^2": -0.5 * p["c"] for i in range(1, S + 1)})
    return out
