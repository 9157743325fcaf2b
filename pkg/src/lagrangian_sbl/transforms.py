"""Hamiltonians, equations of motion and prediction from a discovered Lagrangian.

Everything here works on candidate ids symbolically; no numerical
differentiation is involved except where a residual is checked against data.

Equations of motion are stored per DOF as residuals

    r_i = a_i + sum_k c_k g_k(x, v)

where ``a_i`` is the acceleration and the features ``g_k`` are named with
their own ids: ``"1"``, ``"x2"``, ``"x1^3"``, ``"(x2-x1)"``, ``"v2"``,
``"sin(x1)"``, ``"cos(x1)"`` for lumped systems and ``"u_3"``, ``"uxx_3"``,
``"uxxxx_3"`` for grid nodes (``uxx``/``uxxxx`` are the ghost-node second and
fourth differences at that node).
"""

from __future__ import annotations

import os
import re
import tempfile
import warnings
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from . import _core
from ._core import T_CONST, T_COS, T_DIFF, T_POW, T_SIN, T_VEL
from .data import MIN_SAMPLES, TRIM, Boundary, FieldDataset, TrajectoryDataset, time_derivative
from .dictionary import CandidateFunction, Kind, dataset_jet, parse_id
from .discovery import (
    DiscoveredLagrangian,
    DiscoveryError,
    LagrangianTerm,
    aggregate_shared_terms,
    expression_text,
)
from .systems import difference_matrix

# Bytes of posterior-band draws held in memory before spilling to a temporary file.
BAND_MEMORY_LIMIT = 512 * 2**20

__all__ = [
    "TransformError",
    "HamiltonianExpression",
    "EquationOfMotion",
    "Drift",
    "Band",
    "legendre_transform",
    "lagrangian_values",
    "hamiltonian_drift",
    "equations_of_motion",
    "predict",
    "posterior_predict_band",
    "generalize_chain",
]


class TransformError(ValueError):
    pass


def _grid_of(dl: DiscoveredLagrangian) -> dict | None:
    if not dl.on_field:
        return None
    grid = dl.provenance.get("grid")
    if not grid:
        raise TransformError("field Lagrangian has no grid information (dx, S, boundary)")
    return {"dx": float(grid["dx"]), "S": int(grid["S"]), "boundary": Boundary(grid["boundary"]).value}


def _check_labels(expected: Sequence[str], d) -> None:
    if expected and tuple(expected) != tuple(d.dof_labels):
        raise TransformError(f"DOF labels differ: expression has {list(expected)}, data has {list(d.dof_labels)}")


# --------------------------------------------------------------------------
# Evaluation of Lagrangian-type sums on data


def _term_values(funcs: Sequence[CandidateFunction], coefs: Sequence[float], d) -> np.ndarray:
    """Sum ``c_k f_k`` along ``d``, weighting field nodes with the trapezoid rule.

    Squared spatial gradients are evaluated in summation-by-parts form,
    ``ux_i^2 -> -u_i (D2 u)_i`` and ``uxx_i^2 -> u_i (D4 u)_i``, which is the
    discrete energy the ghost-node operators conserve.
    """
    jet = dataset_jet(d)
    total = np.zeros(d.n_samples)
    if isinstance(d, FieldDataset):
        w = d.node_weights()
        u = jet["x"]
        sbp = {}
        for fn, order, sign in (("ux", 2, -1.0), ("uxx", 4, 1.0)):
            D = difference_matrix(d.n_nodes, d.dx, order, d.boundary)
            sbp[fn] = sign * u * (u @ D.T)
        for f, c in zip(funcs, coefs):
            (i,) = f.dofs or (None,)
            if f.kind is Kind.SPATIAL_GRADIENT_POWER:
                vals = sbp[f.fn][:, i]
            elif f.kind is Kind.CONSTANT:
                vals = np.ones(d.n_samples)
                total += c * vals
                continue
            else:
                vals = f.value(jet)
            total += c * w[i] * vals
        return total
    for f, c in zip(funcs, coefs):
        total += c * f.value(jet)
    return total


# --------------------------------------------------------------------------
# Hamiltonian


@dataclass(frozen=True)
class HamiltonianExpression:
    """``H = sum_k c_k f_k`` over candidate ids, derived from a Lagrangian."""

    terms: tuple[tuple[str, float], ...]
    source: dict = field(default_factory=dict)
    on_field: bool = False
    dof_labels: tuple[str, ...] = ()

    def functions(self) -> list[CandidateFunction]:
        return [parse_id(fid, self.on_field) for fid, _ in self.terms]

    def coefficients(self) -> dict[str, float]:
        return dict(self.terms)

    def evaluate(self, d) -> np.ndarray:
        _check_labels(self.dof_labels, d)
        return _term_values(self.functions(), [c for _, c in self.terms], d)

    def text(self) -> str:
        return expression_text(self.terms)

    def to_json(self) -> dict:
        return {
            "terms": [{"id": fid, "coefficient": c} for fid, c in self.terms],
            "on_field": self.on_field,
            "dof_labels": list(self.dof_labels),
            "source": self.source,
            "text": self.text(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "HamiltonianExpression":
        return cls(
            terms=tuple((t["id"], float(t["coefficient"])) for t in obj["terms"]),
            source=dict(obj.get("source", {})),
            on_field=bool(obj.get("on_field", False)),
            dof_labels=tuple(obj.get("dof_labels", ())),
        )


def _legendre_factor(f: CandidateFunction) -> float:
    # sum_i v_i df/dv_i = p f for a term homogeneous of degree p in v, so f -> (p - 1) f.
    if f.kind not in tuple(Kind):
        raise TransformError(f"no Legendre rule for candidate kind {f.kind!r}")
    return float(f.velocity_degree - 1)


def legendre_transform(dl: DiscoveredLagrangian) -> HamiltonianExpression:
    """``H = sum_i v_i dL/dv_i - L`` applied term by term to ``dl.total``."""
    merged: dict[str, float] = {}
    for t in dl.total:
        f = parse_id(t.function_id, dl.on_field)
        c = _legendre_factor(f) * t.coefficient_mean
        merged[f.id] = merged.get(f.id, 0.0) + c
    funcs = {fid: parse_id(fid, dl.on_field) for fid in merged}
    order = sorted((fid for fid, c in merged.items() if c != 0.0), key=lambda k: funcs[k].sort_key())
    source = {"lagrangian": dl.text(), "seed": dl.provenance.get("seed")}
    return HamiltonianExpression(tuple((fid, merged[fid]) for fid in order), source,
                                 dl.on_field, tuple(dl.dof_labels))


def lagrangian_values(dl: DiscoveredLagrangian, d) -> np.ndarray:
    """``L(t)`` of the merged Lagrangian along ``d`` (same quadrature as :meth:`HamiltonianExpression.evaluate`)."""
    _check_labels(dl.dof_labels, d)
    funcs = [parse_id(t.function_id, dl.on_field) for t in dl.total]
    return _term_values(funcs, [t.coefficient_mean for t in dl.total], d)


class Drift(NamedTuple):
    series: np.ndarray
    max_drift: float
    relative: bool


def hamiltonian_drift(h: HamiltonianExpression, d, *, zero_tol: float = 1e-12) -> Drift:
    """Evaluate ``H(t)`` along ``d`` and its largest departure from ``H(0)``.

    The drift is relative to ``|H(0)|`` unless ``H(0)`` is effectively zero,
    in which case the absolute drift is returned with ``relative=False``.
    """
    series = h.evaluate(d)
    h0 = float(series[0])
    dev = float(np.max(np.abs(series - h0))) if series.size else 0.0
    scale = float(np.max(np.abs(series))) if series.size else 0.0
    if abs(h0) <= zero_tol * max(scale, 1.0):
        warnings.warn("H(0) is zero; reporting the absolute drift", RuntimeWarning, stacklevel=2)
        return Drift(series, dev, False)
    return Drift(series, dev / abs(h0), True)


# --------------------------------------------------------------------------
# Equations of motion

_FEATURE = [
    (re.compile(r"^1$"), lambda m: (T_CONST, 0, 0, 0)),
    (re.compile(r"^x(\d+)$"), lambda m: (T_POW, int(m[1]) - 1, 0, 1)),
    (re.compile(r"^x(\d+)\^(\d+)$"), lambda m: (T_POW, int(m[1]) - 1, 0, int(m[2]))),
    (re.compile(r"^\(x(\d+)-x(\d+)\)(?:\^(\d+))?$"),
     lambda m: (T_DIFF, int(m[2]) - 1, int(m[1]) - 1, int(m[3] or 1))),
    (re.compile(r"^v(\d+)$"), lambda m: (T_VEL, int(m[1]) - 1, 0, 1)),
    (re.compile(r"^sin\(x(\d+)\)$"), lambda m: (T_SIN, int(m[1]) - 1, 0, 1)),
    (re.compile(r"^cos\(x(\d+)\)$"), lambda m: (T_COS, int(m[1]) - 1, 0, 1)),
    (re.compile(r"^u_(\d+)$"), lambda m: (T_POW, int(m[1]) - 1, 0, 1)),
    (re.compile(r"^u_(\d+)\^(\d+)$"), lambda m: (T_POW, int(m[1]) - 1, 0, int(m[2]))),
]
_GRID_FEATURE = re.compile(r"^(uxx|uxxxx)_(\d+)$")


def _power_id(base: str, p: int) -> str:
    if p == 0:
        return "1"
    return base if p == 1 else f"{base}^{p}"


def _el_features(f: CandidateFunction, i: int) -> list[tuple[str, float]]:
    """Non-inertial part of ``EL_i[f]`` as ``[(feature id, factor)]``."""
    k, d = f.kind, f.degree
    if k in (Kind.CONSTANT, Kind.VELOCITY_POWER):
        return []
    if f.on_field:
        (j,) = f.dofs
        if j != i:
            return []
        if k is Kind.DISPLACEMENT_POWER:
            return [(_power_id(f"u_{i + 1}", d - 1), -float(d))]
        if k is Kind.SPATIAL_GRADIENT_POWER:
            return [(f"uxx_{i + 1}", 2.0)] if f.fn == "ux" else [(f"uxxxx_{i + 1}", -2.0)]
        raise TransformError(f"no Euler-Lagrange rule for field candidate {f.id}")
    if k is Kind.DISPLACEMENT_POWER:
        (j,) = f.dofs
        return [(_power_id(f"x{i + 1}", d - 1), -float(d))] if j == i else []
    if k is Kind.DIFFERENCE_POWER:
        a, b = f.dofs
        if i not in (a, b):
            return []
        base = _power_id(f"(x{b + 1}-x{a + 1})", d - 1)
        return [(base, -float(d) if i == b else float(d))]
    if k is Kind.CROSS_STATE_VELOCITY:
        a, b = f.dofs
        out = []
        if i == a:
            out.append((f"v{b + 1}", -1.0))
        if i == b:
            out.append((f"v{a + 1}", 1.0))
        return out
    if k is Kind.HARMONIC:
        (j,) = f.dofs
        if j != i:
            return []
        return [(f"cos(x{i + 1})", -1.0)] if f.fn == "sin" else [(f"sin(x{i + 1})", 1.0)]
    raise TransformError(f"no Euler-Lagrange rule for candidate kind {k.value}")


def _mass(f: CandidateFunction, i: int) -> float:
    """Coefficient of ``a_i`` in ``EL_i[f]``."""
    if f.kind is Kind.VELOCITY_POWER and f.dofs == (i,):
        if f.degree == 2:
            return 2.0
        if f.degree > 2:
            raise TransformError(f"{f.id}: velocity powers above 2 give a state-dependent mass")
    return 0.0


def _feature_key(fid: str):
    m = _GRID_FEATURE.match(fid)
    if m:
        return (1, int(m[2]), m[1])
    return (0, fid.startswith("v"), fid)


@dataclass(frozen=True)
class EquationOfMotion:
    """Residuals ``a_i + sum_k c_k g_k = 0``, one per DOF, with unit acceleration coefficient."""

    per_dof: tuple[tuple[tuple[str, float], ...], ...]
    on_field: bool = False
    dof_labels: tuple[str, ...] = ()
    grid: dict | None = None
    order: int = 2

    @property
    def n_dof(self) -> int:
        return len(self.per_dof)

    def coefficients(self, i: int) -> dict[str, float]:
        return dict(self.per_dof[i])

    def _acc_name(self, i: int) -> str:
        return f"uddot_{i + 1}" if self.on_field else f"xddot{i + 1}"

    def text(self) -> str:
        lines = []
        for i, terms in enumerate(self.per_dof):
            body = expression_text(terms) if terms else ""
            rhs = self._acc_name(i)
            if body:
                rhs += (" - " + body[1:]) if body.startswith("-") else (" + " + body)
            lines.append(f"{rhs} = 0")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "on_field": self.on_field,
            "dof_labels": list(self.dof_labels),
            "grid": self.grid,
            "per_dof": [[{"id": g, "coefficient": c} for g, c in terms] for terms in self.per_dof],
            "text": self.text().splitlines(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EquationOfMotion":
        return cls(
            per_dof=tuple(tuple((t["id"], float(t["coefficient"])) for t in terms) for terms in obj["per_dof"]),
            on_field=bool(obj.get("on_field", False)),
            dof_labels=tuple(obj.get("dof_labels", ())),
            grid=obj.get("grid"),
            order=int(obj.get("order", 2)),
        )

    # -- numerics -----------------------------------------------------------

    def _grid_matrix(self, name: str) -> np.ndarray:
        if not self.grid:
            raise TransformError("field equations need grid information")
        order = 2 if name == "uxx" else 4
        return difference_matrix(int(self.grid["S"]), float(self.grid["dx"]), order, self.grid["boundary"])

    def term_table(self):
        """Acceleration ``a = -sum c g`` as the integer/real arrays used by the RK4 kernel."""
        rows: list[tuple[int, int, int, int, int, float]] = []
        mats: dict[str, np.ndarray] = {}
        for i, terms in enumerate(self.per_dof):
            for fid, c in terms:
                m = _GRID_FEATURE.match(fid)
                if m:
                    if m[1] not in mats:
                        mats[m[1]] = self._grid_matrix(m[1])
                    row = mats[m[1]][int(m[2]) - 1]
                    rows.extend((i, T_POW, int(j), 0, 1, -c * float(row[j])) for j in np.flatnonzero(row))
                    continue
                for pat, make in _FEATURE:
                    mm = pat.match(fid)
                    if mm:
                        kind, a, b, p = make(mm)
                        rows.append((i, kind, a, b, p, -c))
                        break
                else:
                    raise TransformError(f"unknown equation feature {fid!r}")
        if not rows:
            rows = [(0, T_CONST, 0, 0, 0, 0.0)]
        eq, kind, a, b, p, coef = (np.asarray(col) for col in zip(*rows))
        return (eq.astype(np.int_), kind.astype(np.int_), a.astype(np.int_), b.astype(np.int_),
                p.astype(np.int_), coef.astype(float))

    def feature_values(self, fid: str, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        m = _GRID_FEATURE.match(fid)
        if m:
            return x @ self._grid_matrix(m[1])[int(m[2]) - 1]
        for pat, make in _FEATURE:
            mm = pat.match(fid)
            if mm:
                kind, a, b, p = make(mm)
                break
        else:
            raise TransformError(f"unknown equation feature {fid!r}")
        if kind == T_CONST:
            return np.ones(x.shape[0])
        if kind == T_POW:
            return x[:, a] ** p
        if kind == T_DIFF:
            return (x[:, b] - x[:, a]) ** p
        if kind == T_VEL:
            return v[:, a].copy()
        return np.sin(x[:, a]) if kind == T_SIN else np.cos(x[:, a])

    def residual(self, d) -> np.ndarray:
        """``r_i`` on the data, with accelerations by finite differences (trim rows dropped)."""
        _check_labels(self.dof_labels, d)
        x = np.asarray(d.states, float)
        v = d.velocity_field() if isinstance(d, FieldDataset) else d.velocities
        acc = time_derivative(v, d.dt)
        out = acc.copy()
        for i, terms in enumerate(self.per_dof):
            for fid, c in terms:
                out[:, i] += c * self.feature_values(fid, x, v)
        return out[TRIM:-TRIM]


def _eom_terms(terms: Sequence[LagrangianTerm], i: int, on_field: bool) -> tuple[tuple[str, float], ...]:
    funcs = [parse_id(t.function_id, on_field) for t in terms]
    mass = sum(_mass(f, i) * t.coefficient_mean for f, t in zip(funcs, terms))
    if mass == 0.0:
        raise TransformError(f"DOF {i + 1}: no kinetic term, acceleration coefficient is zero")
    acc: dict[str, float] = {}
    for f, t in zip(funcs, terms):
        for g, factor in _el_features(f, i):
            acc[g] = acc.get(g, 0.0) + factor * t.coefficient_mean / mass
    return tuple((g, acc[g]) for g in sorted(acc, key=_feature_key) if acc[g] != 0.0)


def equations_of_motion(dl: DiscoveredLagrangian) -> EquationOfMotion:
    """Apply the Euler-Lagrange operator symbolically to each DOF's Lagrangian."""
    per_dof = tuple(_eom_terms(terms, i, dl.on_field) for i, terms in enumerate(dl.per_dof))
    return EquationOfMotion(per_dof, dl.on_field, tuple(dl.dof_labels), _grid_of(dl))


# --------------------------------------------------------------------------
# Prediction


def predict(eom: EquationOfMotion, x0, v0, T: float, dt: float, *, substeps: int = 1):
    """Integrate the equations with fixed-step RK4 from ``(x0, v0)``.

    Returns ``round(T / dt) + 1`` rows starting at ``t = 0`` (a
    :class:`FieldDataset` for grid equations).  If the state turns
    non-finite the trajectory is truncated and ``meta["blowup_time"]`` holds
    the time of the first bad row.
    """
    if not (dt > 0) or not (T > 0):
        raise TransformError("T and dt must be positive")
    x0 = np.asarray(x0, float).ravel()
    v0 = np.asarray(v0, float).ravel()
    m = eom.n_dof
    if x0.shape != (m,) or v0.shape != (m,):
        raise TransformError(f"initial conditions must have {m} entries")
    n_out = int(round(T / dt)) + 1
    X, V, n_valid = _core.rk4_term_table(x0, v0, float(dt), n_out, int(substeps), *eom.term_table())
    meta: dict[str, Any] = {"predicted": True, "T": T, "dt": dt, "substeps": int(substeps)}
    if n_valid < n_out:
        if n_valid < MIN_SAMPLES:
            raise TransformError(f"prediction diverged at t = {n_valid * dt:.6g} s, "
                                 f"before {MIN_SAMPLES} samples were produced")
        meta["blowup_time"] = n_valid * dt
        X, V = X[:n_valid], V[:n_valid]
        warnings.warn(f"prediction diverged at t = {n_valid * dt:.6g} s", RuntimeWarning, stacklevel=2)
    labels = eom.dof_labels or tuple(f"x{i + 1}" for i in range(m))
    if eom.on_field:
        g = eom.grid
        return FieldDataset(field=X, dx=float(g["dx"]), dt=dt, boundary=Boundary(g["boundary"]),
                            velocities=V, meta=meta)
    return TrajectoryDataset(X, V, dt, dof_labels=labels, meta=meta)


@dataclass
class Band:
    """Pointwise mean and 2.5/97.5 percentiles over posterior draws.

    Iterating yields ``(mean, lower, upper)``.
    """

    mean: Any
    lower: Any
    upper: Any
    n_used: int
    n_diverged: int

    def __iter__(self) -> Iterator:
        return iter((self.mean, self.lower, self.upper))


def _with_states(template, X, V, tag: str):
    meta = dict(template.meta)
    meta["band"] = tag
    if isinstance(template, FieldDataset):
        return replace(template, field=X, velocities=V, meta=meta)
    return replace(template, states=X, velocities=V, meta=meta)


def _draw(post: Mapping, rng: np.random.Generator) -> np.ndarray:
    mean = np.asarray(post["mean"], float)
    if mean.size == 0:
        return mean
    cov = np.asarray(post["cov"], float)
    cov = 0.5 * (cov + cov.T)
    return rng.multivariate_normal(mean, cov, method="eigh")


def _redraw(dl: DiscoveredLagrangian, rng: np.random.Generator) -> list[list[LagrangianTerm]]:
    out = []
    for i, terms in enumerate(dl.per_dof):
        post = dl.posterior[i] if i < len(dl.posterior) else {"ids": [], "mean": []}
        sample = dict(zip(post["ids"], _draw(post, rng)))
        out.append([replace(t, coefficient_mean=float(sample.get(t.function_id, t.coefficient_mean)))
                    for t in terms])
    return out


def _draw_buffer(shape: tuple[int, ...], stack: ExitStack) -> np.ndarray:
    """Storage for all draws; file-backed once it would not comfortably fit in memory."""
    if np.prod(shape, dtype=float) * 8 <= BAND_MEMORY_LIMIT:
        return np.empty(shape)
    tmp = stack.enter_context(tempfile.TemporaryDirectory(prefix="band-"))
    return np.lib.format.open_memmap(os.path.join(tmp, "draws.npy"), mode="w+", dtype=float, shape=shape)


def posterior_predict_band(dl: DiscoveredLagrangian, x0, v0, T: float, dt: float,
                           n_draws: int, rng: np.random.Generator | int | None = None,
                           *, substeps: int = 1) -> Band:
    """Propagate coefficient uncertainty through RK4 prediction.

    Each draw samples every DOF's selected coefficients from its Gaussian
    posterior, integrates, and diverging draws are dropped and counted.
    """
    if n_draws < 1:
        raise TransformError("n_draws must be >= 1")
    rng = np.random.default_rng(rng)
    n_out = int(round(T / dt)) + 1
    m = len(np.asarray(x0).ravel())
    used, diverged = 0, 0
    template = None
    with ExitStack() as stack:
        # axis 1: positions, velocities
        buf = _draw_buffer((n_draws, 2, n_out, m), stack)
        for _ in range(n_draws):
            per_dof = _redraw(dl, rng)
            eom = EquationOfMotion(
                tuple(_eom_terms(t, i, dl.on_field) for i, t in enumerate(per_dof)),
                dl.on_field, tuple(dl.dof_labels), _grid_of(dl),
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                try:
                    traj = predict(eom, x0, v0, T, dt, substeps=substeps)
                except TransformError:
                    diverged += 1
                    continue
            if traj.n_samples < n_out:
                diverged += 1
                continue
            template = traj
            buf[used, 0] = traj.states
            buf[used, 1] = traj.velocities if not isinstance(traj, FieldDataset) else traj.velocity_field()
            used += 1
        if not used:
            raise TransformError(f"all {n_draws} posterior draws diverged")
        if diverged:
            warnings.warn(f"{diverged} of {n_draws} posterior draws diverged and were excluded",
                          RuntimeWarning, stacklevel=2)
        mean, lo, hi = (np.empty((2, n_out, m)) for _ in range(3))
        step = max(1, int(BAND_MEMORY_LIMIT // (8 * 2 * m * used)) // 4)
        for a in range(0, n_out, step):
            chunk = np.asarray(buf[:used, :, a:a + step])
            mean[:, a:a + step] = chunk.mean(axis=0)
            lo[:, a:a + step], hi[:, a:a + step] = np.percentile(chunk, [2.5, 97.5], axis=0)
    return Band(_with_states(template, *mean, "mean"), _with_states(template, *lo, "lower"),
                _with_states(template, *hi, "upper"), used, diverged)


# --------------------------------------------------------------------------
# Chain generalization

_DIFF_ID = re.compile(r"^\(x(\d+)-x(\d+)\)\^2$")
_KIN_ID = re.compile(r"^xdot(\d+)\^2$")


def generalize_chain(dl: DiscoveredLagrangian, n: int) -> DiscoveredLagrangian:
    """Replicate a discovered grounded chain Lagrangian to ``n`` masses.

    The grounded ``x1^2`` coefficient is kept; the adjacent-difference
    coefficients are averaged, as are their standard deviations.
    """
    if n < 2:
        raise TransformError("a chain needs n >= 2")
    if dl.on_field:
        raise TransformError("field Lagrangians are not chain-structured")
    ground = None
    diffs = []
    for t in dl.total:
        fid = t.function_id
        if _KIN_ID.match(fid):
            continue
        m = _DIFF_ID.match(fid)
        if m and int(m[1]) == int(m[2]) + 1:
            diffs.append(t)
        elif fid == "x1^2":
            ground = t
        else:
            raise TransformError(f"not a chain Lagrangian: unexpected term {fid}")
    if ground is None or not diffs:
        raise TransformError("not a chain Lagrangian: need x1^2 and adjacent difference terms")
    try:
        k_mean, _ = aggregate_shared_terms(dl, "(x*-x*)^2")
    except DiscoveryError as exc:
        raise TransformError(str(exc)) from exc
    k_std = float(np.mean([t.coefficient_std for t in diffs]))

    def diff_term(j, dof):
        # (x_{j+1} - x_j)^2 with zero-based j
        return LagrangianTerm(f"(x{j + 2}-x{j + 1})^2", k_mean, k_std, 1.0, dof)

    per_dof, posterior = [], []
    for j in range(n):
        terms = [LagrangianTerm(f"xdot{j + 1}^2", 0.5, 0.0, 1.0, j)]
        if j == 0:
            terms.append(replace(ground, dof=0))
        if j > 0:
            terms.append(diff_term(j - 1, j))
        if j < n - 1:
            terms.append(diff_term(j, j))
        per_dof.append(terms)
        sel = terms[1:]
        posterior.append({
            "ids": [t.function_id for t in sel],
            "mean": np.array([t.coefficient_mean for t in sel]),
            "cov": np.diag([t.coefficient_std ** 2 for t in sel]),
        })
    total = [LagrangianTerm(f"xdot{j + 1}^2", 0.5, 0.0, 1.0, j) for j in range(n)]
    total.append(replace(ground, dof=0))
    total.extend(diff_term(j, j) for j in range(n - 1))
    provenance = dict(dl.provenance)
    provenance["generalized"] = {"from_n_dof": dl.n_dof, "n": n, "k_mean": k_mean, "k_std": k_std,
                                 "ground": ground.coefficient_mean}
    return DiscoveredLagrangian(
        per_dof=per_dof, total=total, posterior=posterior, provenance=provenance,
        on_field=False, dof_labels=tuple(f"x{j + 1}" for j in range(n)),
    )
