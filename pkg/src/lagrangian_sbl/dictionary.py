"""Candidate Lagrangian library and the Euler-Lagrange operator.

A candidate is a closed-form function of the generalized displacements
``x`` and velocities ``v`` (plus the spatial slopes ``ux`` and curvatures
``uxx`` for field data).  Each candidate knows its own value and partial
derivatives, so the Euler-Lagrange image

    EL_i[f] = d/dt (df/dv_i) - df/dx_i

only needs one numerical operation: the time derivative of ``df/dv_i``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import TRIM, FieldDataset, TrajectoryDataset, spatial_derivatives, time_derivative

__all__ = [
    "Kind",
    "CandidateFunction",
    "DictionaryConfig",
    "Dictionary",
    "EulerLagrangeLibrary",
    "DictionaryError",
    "build_dictionary",
    "evaluate_partials",
    "euler_lagrange_apply",
    "prune_null_columns",
    "extract_regression",
    "parse_id",
    "dataset_jet",
    "PRESETS",
]

log = logging.getLogger(__name__)


class DictionaryError(ValueError):
    pass


class Kind(str, Enum):
    CONSTANT = "constant"
    VELOCITY_POWER = "velocity_power"
    DISPLACEMENT_POWER = "displacement_power"
    DIFFERENCE_POWER = "difference_power"
    CROSS_STATE_VELOCITY = "cross_state_velocity"
    HARMONIC = "harmonic"
    SPATIAL_GRADIENT_POWER = "spatial_gradient_power"


_KIND_ORDER = {k: n for n, k in enumerate(Kind)}


@dataclass(frozen=True)
class CandidateFunction:
    """One basis function of the Lagrangian library.

    ``dofs`` holds zero-based DOF (or node) indices.  Their meaning depends
    on ``kind``: ``(a, b)`` is ``x_b - x_a`` for differences and ``x_a * v_b``
    for cross terms.  ``fn`` is ``"sin"``/``"cos"`` for harmonics and
    ``"ux"``/``"uxx"`` for spatial gradient powers.  ``on_field`` selects the
    ``u`` naming used for grid data.
    """

    kind: Kind
    degree: int = 0
    dofs: tuple[int, ...] = ()
    fn: str = ""
    on_field: bool = False
    id: str = field(default="", compare=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "dofs", tuple(int(i) for i in self.dofs))
        if self.degree < 0:
            raise DictionaryError("degree must be >= 0")
        if kind is not Kind.CONSTANT and not self.dofs:
            raise DictionaryError(f"{kind.value} candidate needs at least one DOF")
        if kind is Kind.HARMONIC and self.fn not in ("sin", "cos"):
            raise DictionaryError("harmonic candidates use fn 'sin' or 'cos'")
        if kind is Kind.SPATIAL_GRADIENT_POWER:
            if self.fn not in ("ux", "uxx"):
                raise DictionaryError("spatial gradient candidates use fn 'ux' or 'uxx'")
            if self.degree != 2:
                raise DictionaryError("spatial gradient candidates must be squares")
        object.__setattr__(self, "id", self._make_id())

    @property
    def involved_dofs(self) -> frozenset[int]:
        return frozenset(self.dofs)

    @property
    def velocity_degree(self) -> int:
        """Total polynomial degree in the velocities (used by the Legendre transform)."""
        if self.kind is Kind.VELOCITY_POWER:
            return self.degree
        if self.kind is Kind.CROSS_STATE_VELOCITY:
            return 1
        return 0

    def _make_id(self) -> str:
        k, d = self.kind, self.degree
        idx = [i + 1 for i in self.dofs]
        if k is Kind.CONSTANT:
            return "1"
        if self.on_field:
            (i,) = idx
            if k is Kind.VELOCITY_POWER:
                return f"udot_{i}^{d}"
            if k is Kind.DISPLACEMENT_POWER:
                return f"u_{i}^{d}"
            if k is Kind.SPATIAL_GRADIENT_POWER:
                return f"{self.fn}_{i}^{d}"
            raise DictionaryError(f"{k.value} is not available for field data")
        if k is Kind.VELOCITY_POWER:
            return f"xdot{idx[0]}^{d}"
        if k is Kind.DISPLACEMENT_POWER:
            return f"x{idx[0]}^{d}"
        if k is Kind.DIFFERENCE_POWER:
            return f"(x{idx[1]}-x{idx[0]})^{d}"
        if k is Kind.CROSS_STATE_VELOCITY:
            return f"x{idx[0]}*v{idx[1]}"
        if k is Kind.HARMONIC:
            return f"{self.fn}(x{idx[0]})"
        raise DictionaryError(f"{k.value} is not available for trajectory data")

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.fn, self.dofs, self.degree)

    # -- evaluation ---------------------------------------------------------

    def value(self, jet: Mapping[str, np.ndarray]) -> np.ndarray:
        x, v = jet["x"], jet["v"]
        k, d = self.kind, self.degree
        if k is Kind.CONSTANT:
            return np.ones(x.shape[0])
        if k is Kind.VELOCITY_POWER:
            return v[:, self.dofs[0]] ** d
        if k is Kind.DISPLACEMENT_POWER:
            return x[:, self.dofs[0]] ** d
        if k is Kind.DIFFERENCE_POWER:
            a, b = self.dofs
            return (x[:, b] - x[:, a]) ** d
        if k is Kind.CROSS_STATE_VELOCITY:
            a, b = self.dofs
            return x[:, a] * v[:, b]
        if k is Kind.HARMONIC:
            return getattr(np, self.fn)(x[:, self.dofs[0]])
        if k is Kind.SPATIAL_GRADIENT_POWER:
            return jet[self.fn][:, self.dofs[0]] ** d
        raise DictionaryError(f"unsupported kind {k}")

    def partial(self, jet: Mapping[str, np.ndarray], var: str, i: int) -> np.ndarray:
        """Closed-form partial derivative with respect to ``var[:, i]``.

        ``var`` is one of ``"x"``, ``"v"``, ``"ux"``, ``"uxx"``.
        """
        x, v = jet["x"], jet["v"]
        n = x.shape[0]
        zero = np.zeros(n)
        k, d = self.kind, self.degree

        def power_rule(base):
            return d * base ** (d - 1) if d > 0 else np.zeros_like(base)

        if k is Kind.CONSTANT:
            return zero
        if k is Kind.VELOCITY_POWER:
            return power_rule(v[:, i]) if var == "v" and i == self.dofs[0] else zero
        if k is Kind.DISPLACEMENT_POWER:
            return power_rule(x[:, i]) if var == "x" and i == self.dofs[0] else zero
        if k is Kind.DIFFERENCE_POWER:
            a, b = self.dofs
            if var != "x" or i not in (a, b):
                return zero
            g = power_rule(x[:, b] - x[:, a])
            return g if i == b else -g
        if k is Kind.CROSS_STATE_VELOCITY:
            a, b = self.dofs
            if var == "x" and i == a:
                return v[:, b].copy()
            if var == "v" and i == b:
                return x[:, a].copy()
            return zero
        if k is Kind.HARMONIC:
            if var != "x" or i != self.dofs[0]:
                return zero
            xi = x[:, i]
            return np.cos(xi) if self.fn == "sin" else -np.sin(xi)
        if k is Kind.SPATIAL_GRADIENT_POWER:
            if var != self.fn or i != self.dofs[0]:
                return zero
            return power_rule(jet[self.fn][:, i])
        raise DictionaryError(f"unsupported kind {k}")


_ID_PATTERNS = [
    (re.compile(r"^1$"), lambda m, f: CandidateFunction(Kind.CONSTANT, on_field=f)),
    (re.compile(r"^xdot(\d+)\^(\d+)$"),
     lambda m, f: CandidateFunction(Kind.VELOCITY_POWER, int(m[2]), (int(m[1]) - 1,))),
    (re.compile(r"^x(\d+)\^(\d+)$"),
     lambda m, f: CandidateFunction(Kind.DISPLACEMENT_POWER, int(m[2]), (int(m[1]) - 1,))),
    (re.compile(r"^\(x(\d+)-x(\d+)\)\^(\d+)$"),
     lambda m, f: CandidateFunction(Kind.DIFFERENCE_POWER, int(m[3]), (int(m[2]) - 1, int(m[1]) - 1))),
    (re.compile(r"^x(\d+)\*v(\d+)$"),
     lambda m, f: CandidateFunction(Kind.CROSS_STATE_VELOCITY, 1, (int(m[1]) - 1, int(m[2]) - 1))),
    (re.compile(r"^(sin|cos)\(x(\d+)\)$"),
     lambda m, f: CandidateFunction(Kind.HARMONIC, 1, (int(m[2]) - 1,), fn=m[1])),
    (re.compile(r"^udot_(\d+)\^(\d+)$"),
     lambda m, f: CandidateFunction(Kind.VELOCITY_POWER, int(m[2]), (int(m[1]) - 1,), on_field=True)),
    (re.compile(r"^u_(\d+)\^(\d+)$"),
     lambda m, f: CandidateFunction(Kind.DISPLACEMENT_POWER, int(m[2]), (int(m[1]) - 1,), on_field=True)),
    (re.compile(r"^(uxx|ux)_(\d+)\^(\d+)$"),
     lambda m, f: CandidateFunction(Kind.SPATIAL_GRADIENT_POWER, int(m[3]), (int(m[2]) - 1,),
                                    fn=m[1], on_field=True)),
]


def parse_id(text: str, on_field: bool = False) -> CandidateFunction:
    """Inverse of :attr:`CandidateFunction.id`."""
    for pat, make in _ID_PATTERNS:
        m = pat.match(text.strip())
        if m:
            return make(m, on_field)
    raise DictionaryError(f"unrecognised candidate id {text!r}")


# --------------------------------------------------------------------------
# Configuration


FAMILIES = ("constant", "velocity", "displacement", "difference", "cross", "harmonic", "spatial")


@dataclass(frozen=True)
class DictionaryConfig:
    """Which candidate families to include.

    ``max_degree`` bounds displacement and difference powers (``1..max_degree``,
    or only the even ones when ``even_powers``).  ``velocity_degree`` bounds
    the velocity powers.  ``adjacent_differences`` restricts difference powers
    to neighbouring DOFs; otherwise all pairs are used.  ``displacement_dofs``
    restricts displacement powers to the listed one-based DOFs (``None`` means
    all).  For field data the ``spatial`` family adds ``ux^2`` and ``uxx^2``
    per node.
    """

    families: tuple[str, ...] = ("constant", "velocity", "displacement")
    max_degree: int = 2
    velocity_degree: int = 2
    even_powers: bool = False
    adjacent_differences: bool = True
    cross_terms: bool = True
    displacement_dofs: tuple[int, ...] | None = None
    spatial_orders: tuple[str, ...] = ("ux", "uxx")

    def __post_init__(self):
        fams = tuple(self.families)
        if not fams:
            raise DictionaryError("empty family selection")
        unknown = sorted(set(fams) - set(FAMILIES))
        if unknown:
            raise DictionaryError(f"unknown families {unknown}; valid: {list(FAMILIES)}")
        if self.max_degree < 1:
            raise DictionaryError("max_degree must be >= 1")
        if self.velocity_degree not in (1, 2):
            raise DictionaryError("velocity_degree must be 1 or 2")
        bad = set(self.spatial_orders) - {"ux", "uxx"}
        if bad:
            raise DictionaryError(f"unknown spatial orders {sorted(bad)}")
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "spatial_orders", tuple(self.spatial_orders))
        if self.displacement_dofs is not None:
            object.__setattr__(self, "displacement_dofs", tuple(int(i) for i in self.displacement_dofs))

    @classmethod
    def from_mapping(cls, block: Mapping) -> "DictionaryConfig":
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(block) - known)
        if extra:
            raise DictionaryError(f"unknown dictionary options {extra}")
        kw = dict(block)
        for key in ("families", "spatial_orders", "displacement_dofs"):
            if key in kw and kw[key] is not None:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    def to_mapping(self) -> dict:
        return {
            "families": list(self.families),
            "max_degree": self.max_degree,
            "velocity_degree": self.velocity_degree,
            "even_powers": self.even_powers,
            "adjacent_differences": self.adjacent_differences,
            "cross_terms": self.cross_terms,
            "displacement_dofs": None if self.displacement_dofs is None else list(self.displacement_dofs),
            "spatial_orders": list(self.spatial_orders),
        }

    def powers(self) -> list[int]:
        step = 2 if self.even_powers else 1
        return list(range(step, self.max_degree + 1, step))


PRESETS: dict[str, DictionaryConfig] = {
    "duffing": DictionaryConfig(("constant", "velocity", "displacement"), max_degree=6),
    "penning": DictionaryConfig(
        ("constant", "velocity", "displacement", "difference", "cross"),
        max_degree=2, adjacent_differences=False, cross_terms=True,
    ),
    "chain": DictionaryConfig(
        ("constant", "velocity", "displacement", "difference"),
        max_degree=4, even_powers=True, adjacent_differences=True,
    ),
    "string": DictionaryConfig(
        ("constant", "velocity", "displacement", "spatial"), max_degree=4, even_powers=True,
    ),
    "beam": DictionaryConfig(
        ("constant", "velocity", "displacement", "spatial"), max_degree=4, even_powers=True,
    ),
}


# --------------------------------------------------------------------------
# Dictionary


def dataset_jet(d: TrajectoryDataset | FieldDataset) -> dict[str, np.ndarray]:
    """The raw variables candidates are evaluated on."""
    if isinstance(d, FieldDataset):
        return {
            "x": d.field,
            "v": d.velocity_field(),
            "ux": spatial_derivatives(d, 1),
            "uxx": spatial_derivatives(d, 2),
        }
    return {"x": d.states, "v": d.velocities}


def _dataset_trim(d) -> int:
    # Differentiating a differenced velocity field widens the contaminated margin.
    if isinstance(d, FieldDataset) and not d.has_velocities:
        return 2 * TRIM
    return TRIM


@dataclass(frozen=True)
class Dictionary:
    functions: tuple[CandidateFunction, ...]
    values: np.ndarray
    source_trim: int = TRIM
    on_field: bool = False

    def __post_init__(self):
        ids = [f.id for f in self.functions]
        if len(ids) < 2:
            raise DictionaryError(f"a dictionary needs K >= 2 candidates, got {len(ids)}")
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DictionaryError(f"duplicate candidate ids {dup}")
        if self.values.shape[1] != len(ids):
            raise DictionaryError("values do not match the function list")

    @property
    def ids(self) -> list[str]:
        return [f.id for f in self.functions]

    @property
    def K(self) -> int:
        return len(self.functions)

    def index(self, fid: str) -> int:
        try:
            return self.ids.index(fid)
        except ValueError:
            raise DictionaryError(f"{fid!r} is not in the dictionary") from None


def _candidates(n_dof: int, cfg: DictionaryConfig, on_field: bool) -> list[CandidateFunction]:
    fams = set(cfg.families)
    out: list[CandidateFunction] = []
    powers = cfg.powers()
    if "constant" in fams:
        out.append(CandidateFunction(Kind.CONSTANT, on_field=on_field))
    if "velocity" in fams:
        vdeg = [2] if on_field else range(1, cfg.velocity_degree + 1)
        for i in range(n_dof):
            out += [CandidateFunction(Kind.VELOCITY_POWER, p, (i,), on_field=on_field) for p in vdeg]
    if "displacement" in fams:
        allowed = range(n_dof) if cfg.displacement_dofs is None else [j - 1 for j in cfg.displacement_dofs]
        for i in allowed:
            if not 0 <= i < n_dof:
                raise DictionaryError(f"displacement DOF {i + 1} out of range")
            out += [CandidateFunction(Kind.DISPLACEMENT_POWER, p, (i,), on_field=on_field) for p in powers]
    if on_field:
        if "spatial" in fams:
            for i in range(n_dof):
                out += [CandidateFunction(Kind.SPATIAL_GRADIENT_POWER, 2, (i,), fn=o, on_field=True)
                        for o in cfg.spatial_orders]
        skipped = fams & {"difference", "cross", "harmonic"}
        if skipped:
            log.info("families %s are not used for field data", sorted(skipped))
        return out
    if "difference" in fams and n_dof > 1:
        pairs = [(i, i + 1) for i in range(n_dof - 1)] if cfg.adjacent_differences \
            else list(combinations(range(n_dof), 2))
        for a, b in pairs:
            out += [CandidateFunction(Kind.DIFFERENCE_POWER, p, (a, b)) for p in powers]
    if "cross" in fams and cfg.cross_terms and n_dof > 1:
        out += [CandidateFunction(Kind.CROSS_STATE_VELOCITY, 1, (a, b))
                for a in range(n_dof) for b in range(n_dof) if a != b]
    if "harmonic" in fams:
        for i in range(n_dof):
            out += [CandidateFunction(Kind.HARMONIC, 1, (i,), fn=fn) for fn in ("sin", "cos")]
    if "spatial" in fams:
        log.info("spatial family ignored for trajectory data")
    return out


def build_dictionary(d: TrajectoryDataset | FieldDataset, config: DictionaryConfig,
                     extra: Iterable[CandidateFunction] = ()) -> Dictionary:
    """Evaluate the configured candidate library on ``d`` (an ``N x K`` matrix)."""
    on_field = isinstance(d, FieldDataset)
    funcs = {f.id: f for f in _candidates(d.n_dof, config, on_field)}
    for f in extra:
        funcs.setdefault(f.id, f)
    ordered = tuple(sorted(funcs.values(), key=CandidateFunction.sort_key))
    jet = dataset_jet(d)
    cols = []
    for f in ordered:
        for i in f.dofs:
            if i >= d.n_dof:
                raise DictionaryError(f"{f.id}: DOF {i + 1} out of range for {d.n_dof} DOFs")
        with np.errstate(over="ignore", invalid="ignore"):
            col = f.value(jet)
        if not np.all(np.isfinite(col)):
            raise DictionaryError(f"candidate {f.id} produced non-finite values")
        cols.append(col)
    values = np.column_stack(cols) if cols else np.zeros((d.n_samples, 0))
    values.setflags(write=False)
    return Dictionary(ordered, values, source_trim=_dataset_trim(d), on_field=on_field)


def evaluate_partials(f: CandidateFunction, d: TrajectoryDataset | FieldDataset,
                      wrt: str, i: int) -> np.ndarray:
    """Partial derivative of ``f`` with respect to state or velocity ``i`` (zero-based)."""
    var = {"state": "x", "velocity": "v", "x": "x", "v": "v", "ux": "ux", "uxx": "uxx"}.get(wrt)
    if var is None:
        raise DictionaryError(f"wrt must be 'state' or 'velocity', got {wrt!r}")
    if not 0 <= i < d.n_dof:
        raise DictionaryError(f"index {i} out of range for {d.n_dof} DOFs")
    return f.partial(dataset_jet(d), var, i)


# --------------------------------------------------------------------------
# Euler-Lagrange library


@dataclass(frozen=True)
class EulerLagrangeLibrary:
    """EL images of every candidate for one DOF, with the trim rows removed.

    ``time_part`` and ``state_part`` keep the two halves of the operator so
    that pruning can recognise columns that cancel (total time derivatives).
    """

    columns: np.ndarray
    target_index: int
    dof: int
    parent_ids: tuple[str, ...]
    functions: tuple[CandidateFunction, ...]
    trim: int
    time_part: np.ndarray | None = None
    state_part: np.ndarray | None = None
    pruned: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.columns.shape[1] != len(self.parent_ids):
            raise DictionaryError("columns and ids are misaligned")
        if not 0 <= self.target_index < len(self.parent_ids):
            raise DictionaryError("target index out of range")

    @property
    def target_id(self) -> str:
        return self.parent_ids[self.target_index]

    def column(self, fid: str) -> np.ndarray:
        return self.columns[:, self.parent_ids.index(fid)]


def _target_function(d, dof: int) -> CandidateFunction:
    return CandidateFunction(Kind.VELOCITY_POWER, 2, (dof,), on_field=isinstance(d, FieldDataset))


def _field_spatial_el(f: CandidateFunction, d: FieldDataset, dof: int) -> np.ndarray:
    # The EL image of a squared slope/curvature uses the same discrete operators
    # as the method-of-lines simulators, so the two stay consistent.
    if f.kind is not Kind.SPATIAL_GRADIENT_POWER or f.dofs[0] != dof:
        return np.zeros(d.n_samples)
    if f.fn == "ux":
        return 2.0 * spatial_derivatives(d, 2)[:, dof]
    return -2.0 * spatial_derivatives(d, 4)[:, dof]


def euler_lagrange_apply(dictionary: Dictionary, dof: int,
                         d: TrajectoryDataset | FieldDataset) -> EulerLagrangeLibrary:
    """Apply ``d/dt d/dv_i - d/dx_i`` (plus spatial terms for fields) to every column."""
    if not 0 <= dof < d.n_dof:
        raise DictionaryError(f"DOF {dof} out of range for {d.n_dof} DOFs")
    target = _target_function(d, dof).id
    if target not in dictionary.ids:
        raise DictionaryError(f"the velocity square {target} must be in the dictionary")
    jet = dataset_jet(d)
    trim = dictionary.source_trim
    n = d.n_samples
    keep = slice(trim, n - trim)
    tp, sp = [], []
    for f in dictionary.functions:
        dv = f.partial(jet, "v", dof)
        t_part = time_derivative(dv, d.dt) if np.any(dv) else np.zeros(n)
        s_part = -f.partial(jet, "x", dof)
        if isinstance(d, FieldDataset):
            s_part = s_part + _field_spatial_el(f, d, dof)
        tp.append(t_part[keep])
        sp.append(s_part[keep])
    time_part = np.column_stack(tp)
    state_part = np.column_stack(sp)
    return EulerLagrangeLibrary(
        columns=time_part + state_part,
        target_index=dictionary.index(target),
        dof=dof,
        parent_ids=tuple(dictionary.ids),
        functions=dictionary.functions,
        trim=trim,
        time_part=time_part,
        state_part=state_part,
    )


def prune_null_columns(el: EulerLagrangeLibrary, tol: float | None = None, *,
                       cancel_tol: float = 1e-4, dup_tol: float = 1e-4) -> EulerLagrangeLibrary:
    """Drop columns that carry no identifiable information.

    Three rules apply, in order:

    * norm below ``tol`` (default ``1e-8`` times the largest column norm);
    * the time and state halves cancel, ``|EL| < cancel_tol * (|time| + |state|)``,
      which flags total time derivatives distorted only by differencing error;
    * the column is a scalar multiple of an earlier kept column (relative
      residual below ``dup_tol``).  When duplicates differ, the one without
      a time-derivative part is kept since it carries no differencing error.

    The target column is never removed.  Removals are recorded as
    ``(id, reason)`` pairs in ``pruned``.
    """
    cols = el.columns
    norms = np.linalg.norm(cols, axis=0)
    if tol is None:
        tol = 1e-8 * float(norms.max()) if norms.size else 0.0
    elif tol <= 0:
        raise ValueError("tol must be positive")
    t_norm = np.linalg.norm(el.time_part, axis=0) if el.time_part is not None else norms
    s_norm = np.linalg.norm(el.state_part, axis=0) if el.state_part is not None else 0 * norms
    removed: list[tuple[str, str]] = []
    survivors = []
    for k, fid in enumerate(el.parent_ids):
        if k == el.target_index:
            survivors.append(k)
        elif norms[k] < tol:
            removed.append((fid, "null"))
        elif norms[k] < cancel_tol * (t_norm[k] + s_norm[k]):
            removed.append((fid, "gauge"))
        else:
            survivors.append(k)

    # The target is compared with nothing: a one-term truth is collinear with it.
    # Among duplicates prefer columns without a time part, then dictionary order.
    def priority(k):
        return (bool(t_norm[k] > 0), k)

    kept: list[int] = []
    for k in sorted(survivors, key=priority):
        if k == el.target_index:
            continue
        c = cols[:, k]
        dup_of = None
        for j in kept:
            u = cols[:, j]
            alpha = (u @ c) / (u @ u)
            if np.linalg.norm(c - alpha * u) < dup_tol * norms[k]:
                dup_of = j
                break
        if dup_of is None:
            kept.append(k)
        else:
            removed.append((el.parent_ids[k], f"duplicate of {el.parent_ids[dup_of]}"))
    kept.append(el.target_index)
    kept.sort()
    for fid, why in removed:
        log.debug("DOF %d: pruned %s (%s)", el.dof + 1, fid, why)
    target_id = el.target_id
    ids = tuple(el.parent_ids[k] for k in kept)
    return EulerLagrangeLibrary(
        columns=cols[:, kept],
        target_index=ids.index(target_id),
        dof=el.dof,
        parent_ids=ids,
        functions=tuple(el.functions[k] for k in kept),
        trim=el.trim,
        time_part=None if el.time_part is None else el.time_part[:, kept],
        state_part=None if el.state_part is None else el.state_part[:, kept],
        pruned=tuple(el.pruned) + tuple(removed),
    )


def extract_regression(el: EulerLagrangeLibrary) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Split off the target column and negate the rest.

    With the negation, ``target = reduced @ beta`` is equivalent to
    ``EL(v_i^2 + sum_k beta_k f_k) = 0``.
    """
    t = el.target_index
    others = [k for k in range(len(el.parent_ids)) if k != t]
    target = el.columns[:, t].copy()
    reduced = -el.columns[:, others]
    ids = [el.parent_ids[k] for k in others]
    return target, reduced, ids


def truth_residual(el: EulerLagrangeLibrary, coefficients: Mapping[str, float]) -> float:
    """Relative EL residual of ``v_i^2 + sum beta_k f_k`` with *unhalved* coefficients."""
    target, reduced, ids = extract_regression(el)
    beta = np.array([coefficients.get(i, 0.0) for i in ids])
    return float(np.linalg.norm(target - reduced @ beta) / np.linalg.norm(target))


def candidates_from_ids(ids: Sequence[str], on_field: bool = False) -> list[CandidateFunction]:
    return [parse_id(i, on_field) for i in ids]
