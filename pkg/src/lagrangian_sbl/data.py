"""Trajectory and field containers, CSV interchange and finite differences."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "TRIM",
    "Boundary",
    "DatasetError",
    "TrajectoryDataset",
    "FieldDataset",
    "NoiseSpec",
    "time_derivative",
    "spatial_derivatives",
    "load_dataset",
    "save_dataset",
    "add_noise",
    "smooth_dataset",
    "smoothing_window",
]

# Rows at each end of a differentiated series that regression must discard.
TRIM = 2
MIN_SAMPLES = 5


class DatasetError(ValueError):
    """Raised when a dataset violates its invariants or cannot be parsed."""


class Boundary(str, Enum):
    FIXED_FIXED = "fixed-fixed"
    CLAMPED_FREE = "clamped-free"


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DatasetError(f"{name} must be a 2-D array, got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DatasetError(f"{name} has a non-finite value at row {row}, column {col}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrajectoryDataset:
    """Uniformly sampled generalized displacements and velocities.

    ``states`` and ``velocities`` are ``N x m`` arrays; row ``k`` is the
    sample at ``t0 + k * dt``.
    """

    states: np.ndarray
    velocities: np.ndarray
    dt: float
    t0: float = 0.0
    dof_labels: tuple[str, ...] = ()
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        states = _as_matrix(self.states, "states")
        velocities = _as_matrix(self.velocities, "velocities")
        if states.shape != velocities.shape:
            raise DatasetError(
                f"states {states.shape} and velocities {velocities.shape} differ in shape"
            )
        if states.shape[0] < MIN_SAMPLES:
            raise DatasetError(
                f"need at least {MIN_SAMPLES} samples, got {states.shape[0]}"
            )
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DatasetError(f"dt must be positive, got {self.dt}")
        if not math.isfinite(self.t0):
            raise DatasetError("t0 must be finite")
        labels = tuple(self.dof_labels) or tuple(
            f"x{i + 1}" for i in range(states.shape[1])
        )
        if len(labels) != states.shape[1]:
            raise DatasetError(
                f"{len(labels)} DOF labels for {states.shape[1]} columns"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "velocities", velocities)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dof_labels", labels)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_samples(self) -> int:
        return self.states.shape[0]

    @property
    def n_dof(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    @property
    def duration(self) -> float:
        return self.dt * (self.n_samples - 1)

    def node_weights(self) -> np.ndarray:
        return np.ones(self.n_dof)

    def equals(self, other) -> bool:
        return (
            isinstance(other, TrajectoryDataset)
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.velocities, other.velocities)
            and self.dt == other.dt
            and self.t0 == other.t0
            and self.dof_labels == other.dof_labels
            and self.meta == other.meta
        )


@dataclass(frozen=True)
class FieldDataset:
    """A scalar field ``u(x, t)`` sampled on ``S`` unknown grid nodes.

    For ``fixed-fixed`` boundaries the nodes are the interior points
    ``x_i = i * dx`` (``i = 1..S``) and both end values are zero.  For
    ``clamped-free`` the clamp sits at ``x = 0`` and node ``S`` is the free
    tip.  ``velocities`` is optional; when absent it is obtained by
    differencing ``field`` in time.
    """

    field: np.ndarray
    dx: float
    dt: float
    boundary: Boundary = Boundary.FIXED_FIXED
    velocities: np.ndarray | None = None
    t0: float = 0.0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        u = _as_matrix(self.field, "field")
        if u.shape[1] < MIN_SAMPLES:
            raise DatasetError(f"need at least {MIN_SAMPLES} grid nodes, got {u.shape[1]}")
        if u.shape[0] < MIN_SAMPLES:
            raise DatasetError(f"need at least {MIN_SAMPLES} samples, got {u.shape[0]}")
        for name in ("dx", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DatasetError(f"{name} must be positive, got {value}")
        if self.velocities is not None:
            v = _as_matrix(self.velocities, "velocities")
            if v.shape != u.shape:
                raise DatasetError(
                    f"field {u.shape} and velocities {v.shape} differ in shape"
                )
            object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "field", u)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_samples(self) -> int:
        return self.field.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.field.shape[1]

    n_dof = n_nodes

    @property
    def dof_labels(self) -> tuple[str, ...]:
        return tuple(f"u{i + 1}" for i in range(self.n_nodes))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    @property
    def duration(self) -> float:
        return self.dt * (self.n_samples - 1)

    @property
    def states(self) -> np.ndarray:
        return self.field

    @property
    def has_velocities(self) -> bool:
        return self.velocities is not None

    def velocity_field(self) -> np.ndarray:
        if self.velocities is not None:
            return self.velocities
        return time_derivative(self.field, self.dt)

    def node_weights(self) -> np.ndarray:
        """Trapezoid weights of the nodes in the spatial sum (half at a free tip)."""
        w = np.ones(self.n_nodes)
        if self.boundary is Boundary.CLAMPED_FREE:
            w[-1] = 0.5
        return w

    def equals(self, other) -> bool:
        if not isinstance(other, FieldDataset):
            return False
        same_v = (self.velocities is None and other.velocities is None) or (
            self.velocities is not None
            and other.velocities is not None
            and np.array_equal(self.velocities, other.velocities)
        )
        return (
            same_v
            and np.array_equal(self.field, other.field)
            and self.dx == other.dx
            and self.dt == other.dt
            and self.t0 == other.t0
            and self.boundary is other.boundary
            and self.meta == other.meta
        )


@dataclass(frozen=True)
class NoiseSpec:
    level_zeta: float
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.level_zeta) and self.level_zeta >= 0):
            raise ValueError(f"noise level must be >= 0, got {self.level_zeta}")


# --------------------------------------------------------------------------
# Differentiation


def time_derivative(series, dt: float) -> np.ndarray:
    """Differentiate each column of ``series`` along axis 0.

    Interior rows use the fourth-order central stencil; the two rows at each
    end use second-order one-sided stencils and are inside the ``TRIM``
    margin.
    """
    f = np.asarray(series, dtype=float)
    squeeze = f.ndim == 1
    if squeeze:
        f = f[:, None]
    if f.shape[0] < MIN_SAMPLES:
        raise DatasetError(f"need at least {MIN_SAMPLES} samples, got {f.shape[0]}")
    if not (dt > 0):
        raise DatasetError(f"dt must be positive, got {dt}")
    if not np.all(np.isfinite(f)):
        raise DatasetError("series contains non-finite values")
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * dt)
    for k in (0, 1):
        d[k] = (-3.0 * f[k] + 4.0 * f[k + 1] - f[k + 2]) / (2.0 * dt)
    for k in (-1, -2):
        d[k] = (3.0 * f[k] - 4.0 * f[k - 1] + f[k - 2]) / (2.0 * dt)
    return d[:, 0] if squeeze else d


def _ghost_pad(u: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Extend ``u`` (rows = time, columns = nodes) by two ghost columns per side.

    The returned array has ``S + 6`` columns: two ghosts, the physical
    boundary value, the nodes, ... for the left end; the right end mirrors
    that layout for fixed ends and uses two ghosts past the tip when free.
    """
    n, s = u.shape
    if boundary is Boundary.FIXED_FIXED:
        # u = 0 at both ends, odd reflection beyond them.
        p = np.zeros((n, s + 6))
        p[:, 3 : 3 + s] = u
        p[:, 1] = -u[:, 0]
        p[:, 0] = -u[:, 1]
        p[:, 4 + s] = -u[:, -1]
        p[:, 5 + s] = -u[:, -2]
        return p
    # clamped at x=0: u=0 and du/dx=0; free at the last node: u''=u'''=0.
    p = np.zeros((n, s + 6))
    p[:, 3 : 3 + s] = u
    p[:, 1] = u[:, 0]
    p[:, 0] = u[:, 1]
    tip, prev, prev2 = u[:, -1], u[:, -2], u[:, -3]
    g1 = 2.0 * tip - prev
    g2 = 2.0 * g1 - 2.0 * prev + prev2
    p[:, 3 + s] = g1
    p[:, 4 + s] = g2
    p[:, 5 + s] = 0.0
    return p


def _grid_derivative(u: np.ndarray, dx: float, order: int, boundary: Boundary) -> np.ndarray:
    s = u.shape[1]
    p = _ghost_pad(u, boundary)
    c = slice(3, 3 + s)
    left = slice(2, 2 + s)
    right = slice(4, 4 + s)
    if order == 1:
        return (p[:, right] - p[:, left]) / (2.0 * dx)
    if order == 2:
        return (p[:, right] - 2.0 * p[:, c] + p[:, left]) / dx**2
    left2 = slice(1, 1 + s)
    right2 = slice(5, 5 + s)
    return (
        p[:, left2] - 4.0 * p[:, left] + 6.0 * p[:, c] - 4.0 * p[:, right] + p[:, right2]
    ) / dx**4


def spatial_derivatives(field: FieldDataset | np.ndarray, order: int,
                        dx: float | None = None, boundary: Boundary | str | None = None) -> np.ndarray:
    """Second-order central differences of ``u`` in space.

    ``field`` is a :class:`FieldDataset` or a raw ``N x S`` array together with
    ``dx`` and ``boundary``.  Ghost values implement the declared boundary
    conditions, so the order-2 and order-4 operators coincide with the ones
    used by the method-of-lines simulators.
    """
    if order not in (1, 2, 4):
        raise ValueError(f"unsupported derivative order {order}; use 1, 2 or 4")
    if isinstance(field, FieldDataset):
        u, dx, boundary = field.field, field.dx, field.boundary
    else:
        u = np.asarray(field, dtype=float)
        if dx is None or boundary is None:
            raise ValueError("dx and boundary are required for raw arrays")
        boundary = Boundary(boundary)
    if u.ndim == 1:
        return _grid_derivative(u[None, :], dx, order, boundary)[0]
    if u.shape[1] < order + 1:
        raise ValueError(f"stencil of order {order} is wider than {u.shape[1]} nodes")
    return _grid_derivative(u, dx, order, boundary)


# --------------------------------------------------------------------------
# CSV interchange


def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def _fmt(x: float) -> str:
    return repr(float(x))


def save_dataset(d: TrajectoryDataset | FieldDataset, path) -> Path:
    """Write ``d`` as CSV plus a JSON sidecar ``<path>.json``.

    Values are written with ``repr`` so that a round trip is exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = d.times
    if isinstance(d, TrajectoryDataset):
        m = d.n_dof
        header = ["t"] + [f"x{i + 1}" for i in range(m)] + [f"v{i + 1}" for i in range(m)]
        body = np.hstack([t[:, None], d.states, d.velocities])
        side = {
            "kind": "trajectory",
            "dt": d.dt,
            "t0": d.t0,
            "dof_labels": list(d.dof_labels),
            "meta": d.meta,
        }
    else:
        s = d.n_nodes
        header = ["t"] + [f"u{i + 1}" for i in range(s)]
        cols = [t[:, None], d.field]
        if d.velocities is not None:
            header += [f"v{i + 1}" for i in range(s)]
            cols.append(d.velocities)
        body = np.hstack(cols)
        side = {
            "kind": "field",
            "dx": d.dx,
            "dt": d.dt,
            "t0": d.t0,
            "boundary": d.boundary.value,
            "meta": d.meta,
        }
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in body:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    with _sidecar(path).open("w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
    return path


def _parse_rows(path: Path) -> tuple[list[str], np.ndarray]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path}: file is empty") from None
        rows = []
        for lineno, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DatasetError(
                    f"{path}: row {lineno} has {len(raw)} columns, header has {len(header)}"
                )
            vals = []
            for col, cell in zip(header, raw):
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(
                        f"{path}: row {lineno}, column {col!r}: non-finite value {cell!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return header, np.array(rows, dtype=float)


def _numbered(header: list[str], prefix: str) -> list[int]:
    idx = []
    for j, name in enumerate(header):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            idx.append(j)
    return idx


def _infer_dt(t: np.ndarray, path: Path) -> float:
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-6 * abs(dt):
        raise DatasetError(f"{path}: time column is not uniformly increasing")
    return dt


def load_dataset(path) -> TrajectoryDataset | FieldDataset:
    """Read a trajectory or field CSV (and its JSON sidecar, when present)."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    header, data = _parse_rows(path)
    if header[0] != "t":
        raise DatasetError(f"{path}: first column must be 't', got {header[0]!r}")
    side_path = _sidecar(path)
    side = json.loads(side_path.read_text(encoding="utf-8")) if side_path.exists() else {}
    t = data[:, 0]
    xs, us, vs = _numbered(header, "x"), _numbered(header, "u"), _numbered(header, "v")
    known = 1 + len(xs) + len(us) + len(vs)
    if known != len(header):
        extra = [h for j, h in enumerate(header) if j and j not in xs + us + vs]
        raise DatasetError(f"{path}: unrecognised columns {extra}")
    if data.shape[0] < 2:
        raise DatasetError(f"{path}: need at least {MIN_SAMPLES} samples")
    dt = float(side["dt"]) if "dt" in side else _infer_dt(t, path)
    t0 = float(side.get("t0", t[0]))
    meta = side.get("meta", {})
    if xs and us:
        raise DatasetError(f"{path}: mixes trajectory (x) and field (u) columns")
    if xs:
        if len(vs) != len(xs):
            raise DatasetError(
                f"{path}: shape mismatch, {len(xs)} state columns but {len(vs)} velocity columns"
            )
        labels = tuple(side.get("dof_labels", ())) or ()
        return TrajectoryDataset(
            states=data[:, xs], velocities=data[:, vs], dt=dt, t0=t0,
            dof_labels=labels, meta=meta,
        )
    if us:
        if vs and len(vs) != len(us):
            raise DatasetError(
                f"{path}: shape mismatch, {len(us)} field columns but {len(vs)} velocity columns"
            )
        if "dx" not in side:
            raise DatasetError(f"{path}: field data needs a sidecar with 'dx'")
        return FieldDataset(
            field=data[:, us], velocities=data[:, vs] if vs else None,
            dx=float(side["dx"]), dt=dt, t0=t0,
            boundary=Boundary(side.get("boundary", Boundary.FIXED_FIXED.value)),
            meta=meta,
        )
    raise DatasetError(f"{path}: no state columns")


# --------------------------------------------------------------------------
# Noise


def add_noise(d: TrajectoryDataset | FieldDataset, spec: NoiseSpec):
    """Corrupt every recorded column with Gaussian noise of std ``zeta * std(column)``."""
    if spec.level_zeta == 0:
        return d
    rng = np.random.default_rng(spec.seed)

    def corrupt(a):
        sd = a.std(axis=0)
        return a + rng.standard_normal(a.shape) * (spec.level_zeta * sd)

    meta = dict(d.meta)
    meta["noise_zeta"] = spec.level_zeta
    meta["noise_seed"] = spec.seed
    if isinstance(d, TrajectoryDataset):
        return replace(d, states=corrupt(d.states), velocities=corrupt(d.velocities), meta=meta)
    vel = corrupt(d.velocities) if d.velocities is not None else None
    return replace(d, field=corrupt(d.field), velocities=vel, meta=meta)


# --------------------------------------------------------------------------
# Smoothing

SMOOTH_POLYORDER = 6
# Window as a fraction of the shortest significant oscillation period.
SMOOTH_PERIOD_FRACTION = 0.25
SMOOTH_POWER_QUANTILE = 0.9


def smoothing_window(states: np.ndarray, polyorder: int = SMOOTH_POLYORDER) -> int:
    """Odd Savitzky-Golay window matched to the fastest significant oscillation.

    The cutoff frequency is where the cumulative power spectrum of the
    (mean-removed) states reaches ``SMOOTH_POWER_QUANTILE``.  The window spans
    ``SMOOTH_PERIOD_FRACTION`` of that period, never less than ``polyorder + 1``.
    """
    a = np.asarray(states, dtype=float)
    a = a.reshape(a.shape[0], -1)
    n = a.shape[0]
    spec = (np.abs(np.fft.rfft(a - a.mean(axis=0), axis=0)) ** 2).sum(axis=1)
    spec[0] = 0.0
    total = spec.sum()
    smallest = polyorder + 1 + (polyorder % 2 == 1)
    smallest += smallest % 2 == 0
    if total <= 0:
        return smallest
    k = int(np.searchsorted(np.cumsum(spec) / total, SMOOTH_POWER_QUANTILE)) + 1
    period = n / max(k, 1)
    w = int(round(SMOOTH_PERIOD_FRACTION * period))
    w += w % 2 == 0
    return int(min(max(w, smallest), n - (n % 2 == 0)))


def smooth_dataset(d: TrajectoryDataset | FieldDataset, window: int | None = None,
                   polyorder: int = SMOOTH_POLYORDER):
    """Savitzky-Golay smoothing in time of every recorded column.

    Intended for noisy measurements before differentiation.  ``window=None``
    picks one with :func:`smoothing_window`; a window of 1 or less is a no-op.
    """
    from scipy.signal import savgol_filter

    if window is None:
        window = smoothing_window(d.states, polyorder)
    window = int(window)
    if window <= 1:
        return d
    if window % 2 == 0 or window <= polyorder or window > d.n_samples:
        raise DatasetError(
            f"smoothing window {window} must be odd, > polyorder {polyorder} "
            f"and <= {d.n_samples} samples")

    def f(a):
        return savgol_filter(a, window, polyorder, axis=0, mode="interp")

    meta = dict(d.meta)
    meta["smooth_window"] = window
    meta["smooth_polyorder"] = polyorder
    if isinstance(d, TrajectoryDataset):
        return replace(d, states=f(d.states), velocities=f(d.velocities), meta=meta)
    vel = f(d.velocities) if d.velocities is not None else None
    return replace(d, field=f(d.field), velocities=vel, meta=meta)
