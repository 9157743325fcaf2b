"""Per-DOF Lagrangian discovery and assembly of the full Lagrangian."""

from __future__ import annotations

import fnmatch
import json
import logging
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .data import FieldDataset, TrajectoryDataset
from .dictionary import (
    DictionaryConfig,
    Kind,
    build_dictionary,
    euler_lagrange_apply,
    extract_regression,
    parse_id,
    prune_null_columns,
)
from .sbl import DegenerateChainError, GibbsChain, Hyperparameters, run_gibbs

__all__ = [
    "LagrangianTerm",
    "DiscoveredLagrangian",
    "DiscoveryError",
    "discover",
    "aggregate_shared_terms",
    "relative_l2_error",
    "expression_text",
    "FIELD_AGREEMENT",
]

log = logging.getLogger(__name__)

# Fraction of grid nodes that must share one support before pooling.
FIELD_AGREEMENT = 0.8


class DiscoveryError(RuntimeError):
    pass


@dataclass(frozen=True)
class LagrangianTerm:
    function_id: str
    coefficient_mean: float
    coefficient_std: float = 0.0
    pip: float = 1.0
    dof: int = 0

    def __post_init__(self):
        if not self.coefficient_std >= 0:
            raise ValueError("coefficient_std must be >= 0")

    def to_json(self) -> dict:
        return {
            "id": self.function_id,
            "mean": self.coefficient_mean,
            "std": self.coefficient_std,
            "pip": self.pip,
            "dof": self.dof,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "LagrangianTerm":
        return cls(obj["id"], float(obj["mean"]), float(obj.get("std", 0.0)),
                   float(obj.get("pip", 1.0)), int(obj.get("dof", 0)))


@dataclass
class DiscoveredLagrangian:
    """Per-DOF and merged Lagrangians with their posterior summaries.

    ``per_dof[i]`` starts with the kinetic term ``0.5 * v_i^2`` followed by
    the selected candidates of DOF ``i``.  ``posterior[i]`` holds the ids,
    means and covariance of those candidates (already halved, like the
    coefficients).  ``pip_table[i]`` lists every candidate that entered the
    regression of DOF ``i`` with its inclusion probability.
    """

    per_dof: list[list[LagrangianTerm]]
    total: list[LagrangianTerm]
    posterior: list[dict[str, Any]]
    provenance: dict[str, Any] = field(default_factory=dict)
    on_field: bool = False
    dof_labels: tuple[str, ...] = ()
    pip_table: list[list[tuple[str, float]]] = field(default_factory=list)
    pruned: list[list[tuple[str, str]]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    consensus: dict[str, Any] = field(default_factory=dict)
    chains: list[GibbsChain | None] = field(default_factory=list, repr=False)

    @property
    def n_dof(self) -> int:
        return len(self.per_dof)

    def coefficients(self) -> dict[str, float]:
        return {t.function_id: t.coefficient_mean for t in self.total}

    def support(self) -> set[str]:
        return {t.function_id for t in self.total}

    def term(self, fid: str) -> LagrangianTerm:
        for t in self.total:
            if t.function_id == fid:
                return t
        raise KeyError(fid)

    def degenerate_dofs(self) -> list[int]:
        return [i for i, terms in enumerate(self.per_dof) if len(terms) == 1]

    def text(self) -> str:
        return expression_text((t.function_id, t.coefficient_mean) for t in self.total)

    def to_json(self) -> dict:
        return {
            "on_field": self.on_field,
            "dof_labels": list(self.dof_labels),
            "total": [t.to_json() for t in self.total],
            "per_dof": [[t.to_json() for t in terms] for terms in self.per_dof],
            "posterior": [
                {"ids": list(p["ids"]), "mean": np.asarray(p["mean"]).tolist(),
                 "cov": np.asarray(p["cov"]).tolist()}
                for p in self.posterior
            ],
            "pip": [[{"id": i, "pip": p} for i, p in rows] for rows in self.pip_table],
            "pruned": [[{"id": i, "reason": r} for i, r in rows] for rows in self.pruned],
            "warnings": list(self.warnings),
            "consensus": self.consensus,
            "provenance": self.provenance,
            "text": self.text(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DiscoveredLagrangian":
        return cls(
            per_dof=[[LagrangianTerm.from_json(t) for t in terms] for terms in obj["per_dof"]],
            total=[LagrangianTerm.from_json(t) for t in obj["total"]],
            posterior=[
                {"ids": list(p["ids"]), "mean": np.asarray(p["mean"], float),
                 "cov": np.asarray(p["cov"], float).reshape(len(p["ids"]), len(p["ids"]))}
                for p in obj.get("posterior", [])
            ],
            provenance=dict(obj.get("provenance", {})),
            on_field=bool(obj.get("on_field", False)),
            dof_labels=tuple(obj.get("dof_labels", ())),
            pip_table=[[(r["id"], float(r["pip"])) for r in rows] for rows in obj.get("pip", [])],
            pruned=[[(r["id"], r["reason"]) for r in rows] for rows in obj.get("pruned", [])],
            warnings=list(obj.get("warnings", [])),
            consensus=dict(obj.get("consensus", {})),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "DiscoveredLagrangian":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# Text rendering


def _pretty(fid: str) -> str:
    m = re.match(r"^xdot(\d+)\^(\d+)$", fid)
    if m:
        return f"v{m[1]}^{m[2]}"
    return fid


def expression_text(pairs: Iterable[tuple[str, float]]) -> str:
    """Render ``[(id, coefficient), ...]`` as ``0.5*v1^2 - 500.0*x1^2``."""
    parts = []
    for fid, c in pairs:
        c = float(c)
        sign = "-" if c < 0 else "+"
        body = f"{abs(c)!r}" if fid == "1" else f"{abs(c)!r}*{_pretty(fid)}"
        parts.append((sign, body))
    if not parts:
        return "0"
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


# --------------------------------------------------------------------------
# Discovery


def _kinetic_id(i: int, on_field: bool) -> str:
    return f"udot_{i + 1}^2" if on_field else f"xdot{i + 1}^2"


def _discover_dof(d, dictionary, i: int, hp: Hyperparameters, keep_chain: bool):
    on_field = isinstance(d, FieldDataset)
    el = prune_null_columns(euler_lagrange_apply(dictionary, i, d))
    target, reduced, ids = extract_regression(el)
    kinetic = LagrangianTerm(_kinetic_id(i, on_field), 0.5, 0.0, 1.0, i)
    post = {"ids": [], "mean": np.zeros(0), "cov": np.zeros((0, 0))}
    pips: list[tuple[str, float]] = []
    warn = None
    chain = None
    if not ids:
        warn = f"DOF {i + 1}: no candidates left after pruning; using the kinetic term only"
        return [kinetic], post, pips, list(el.pruned), warn, chain
    try:
        chain = run_gibbs(reduced, target, hp, ids=ids)
    except DegenerateChainError as exc:
        chain = exc.chain
        warn = f"DOF {i + 1}: {exc}; using the kinetic term only"
        if chain is not None:
            pips = [(fid, float(p)) for fid, p in zip(ids, chain.pip)]
        return [kinetic], post, pips, list(el.pruned), warn, (chain if keep_chain else None)
    pips = [(fid, float(p)) for fid, p in zip(ids, chain.pip)]
    sel = chain.selected_index
    mean = chain.mu_beta / 2.0
    cov = chain.sigma_beta / 4.0
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    terms = [kinetic] + [
        LagrangianTerm(ids[k], float(mean[j]), float(std[j]), float(chain.pip[k]), i)
        for j, k in enumerate(sel)
    ]
    if not sel.size:
        warn = f"DOF {i + 1}: no candidate passed the inclusion threshold; using the kinetic term only"
    post = {"ids": [ids[k] for k in sel], "mean": mean, "cov": cov}
    return terms, post, pips, list(el.pruned), warn, (chain if keep_chain else None)


def _gyro_estimate(term: LagrangianTerm):
    """Convert a per-DOF ``x_p * v_r`` coefficient into the pair coefficient ``G``.

    The pair ``a < b`` is represented as ``G (x_a v_b - x_b v_a)`` in the total.
    """
    p, r = parse_id(term.function_id).dofs
    i = term.dof
    c = term.coefficient_mean
    if i == p:
        other, g = r, c / 2.0 if i < r else -c / 2.0
    else:
        other, g = p, -c / 2.0 if i < p else c / 2.0
    a, b = sorted((i, other))
    return (a, b), g, term.coefficient_std / 2.0


def _merge(per_dof: list[list[LagrangianTerm]], on_field: bool) -> list[LagrangianTerm]:
    best: dict[str, LagrangianTerm] = {}
    gyro: dict[tuple[int, int], tuple[float, float, float, int]] = {}
    for terms in per_dof:
        # Within one DOF, x_i*v_r and x_r*v_i enter the same column up to sign,
        # so their pair contributions add before DOFs are compared.
        local: dict[tuple[int, int], tuple[float, float, float, int]] = {}
        for t in terms:
            if not on_field and parse_id(t.function_id).kind is Kind.CROSS_STATE_VELOCITY:
                pair, g, s = _gyro_estimate(t)
                g0, s0, p0, _ = local.get(pair, (0.0, 0.0, 0.0, t.dof))
                local[pair] = (g0 + g, float(np.hypot(s0, s)), max(p0, t.pip), t.dof)
                continue
            prev = best.get(t.function_id)
            if prev is None or t.coefficient_std < prev.coefficient_std:
                best[t.function_id] = t
        for pair, est in local.items():
            if pair not in gyro or est[1] < gyro[pair][1]:
                gyro[pair] = est
    for (a, b), (g, s, pip, dof) in gyro.items():
        best[f"x{a + 1}*v{b + 1}"] = LagrangianTerm(f"x{a + 1}*v{b + 1}", g, s, pip, dof)
        best[f"x{b + 1}*v{a + 1}"] = LagrangianTerm(f"x{b + 1}*v{a + 1}", -g, s, pip, dof)
    funcs = {fid: parse_id(fid, on_field) for fid in best}
    order = sorted(best, key=lambda fid: funcs[fid].sort_key())
    return [best[fid] for fid in order]


def _support_signature(terms: Sequence[LagrangianTerm]) -> tuple[str, ...]:
    return tuple(sorted(re.sub(r"_\d+", "", t.function_id) for t in terms))


def _consensus(per_dof: list[list[LagrangianTerm]]) -> dict[str, Any]:
    sigs = [_support_signature(t) for t in per_dof]
    pattern, count = Counter(sigs).most_common(1)[0]
    dissent = [i + 1 for i, s in enumerate(sigs) if s != pattern]
    return {
        "pattern": list(pattern),
        "agreement": count / len(sigs),
        "dissenting_nodes": dissent,
        "ok": count / len(sigs) >= FIELD_AGREEMENT,
    }


def discover(d: TrajectoryDataset | FieldDataset, dict_cfg: DictionaryConfig,
             hp: Hyperparameters = Hyperparameters(), *, keep_chains: bool = False,
             truth: Mapping[str, float] | None = None) -> DiscoveredLagrangian:
    """Identify the Lagrangian of ``d`` one DOF (or grid node) at a time.

    Each DOF gets its own Euler-Lagrange library, regression and Gibbs chain
    (seeded with ``hp.seed``).  Coefficients are halved so that kinetic terms
    read ``0.5 v_i^2``.
    """
    on_field = isinstance(d, FieldDataset)
    dictionary = build_dictionary(d, dict_cfg)
    per_dof, posterior, pip_table, pruned, notes, chains = [], [], [], [], [], []
    for i in range(d.n_dof):
        try:
            terms, post, pips, removed, warn, chain = _discover_dof(d, dictionary, i, hp, keep_chains)
        except Exception as exc:
            raise DiscoveryError(f"DOF {i + 1}: {exc}") from exc
        per_dof.append(terms)
        posterior.append(post)
        pip_table.append(pips)
        pruned.append(removed)
        chains.append(chain)
        if warn:
            warnings.warn(warn, RuntimeWarning, stacklevel=2)
            notes.append(warn)
    consensus = _consensus(per_dof) if on_field else {}
    if consensus and not consensus["ok"]:
        msg = (f"only {consensus['agreement']:.0%} of nodes share one support; "
               f"dissenting nodes {consensus['dissenting_nodes']}")
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    provenance = {
        "dataset": dict(d.meta),
        "dictionary": dict_cfg.to_mapping(),
        "sbl": hp.to_mapping(),
        "seed": hp.seed,
        "n_candidates": dictionary.K,
    }
    if on_field:
        provenance["grid"] = {"dx": d.dx, "S": d.n_nodes, "boundary": d.boundary.value}
    dl = DiscoveredLagrangian(
        per_dof=per_dof,
        total=_merge(per_dof, on_field),
        posterior=posterior,
        provenance=provenance,
        on_field=on_field,
        dof_labels=tuple(d.dof_labels),
        pip_table=pip_table,
        pruned=pruned,
        warnings=notes,
        consensus=consensus,
        chains=chains if keep_chains else [],
    )
    if truth is not None:
        dl.provenance["relative_l2_error"] = relative_l2_error(dl, truth)
    return dl


# --------------------------------------------------------------------------
# Reporting


def aggregate_shared_terms(dl: DiscoveredLagrangian, pattern: str) -> tuple[float, float]:
    """Pooled mean and (population) standard deviation of terms matching ``pattern``.

    ``pattern`` is a shell-style template such as ``"ux_*^2"``.  For field
    data the nodes must agree on one support first.
    """
    if dl.on_field and dl.consensus and not dl.consensus.get("ok", True):
        raise DiscoveryError(
            f"cannot pool: node supports disagree (dissenting nodes {dl.consensus['dissenting_nodes']})"
        )
    values = [t.coefficient_mean for t in dl.total if fnmatch.fnmatchcase(t.function_id, pattern)]
    if not values:
        raise DiscoveryError(f"no discovered term matches {pattern!r}")
    arr = np.asarray(values)
    return float(arr.mean()), float(arr.std())


def _as_mapping(obj) -> dict[str, float]:
    if isinstance(obj, DiscoveredLagrangian):
        return obj.coefficients()
    if isinstance(obj, Mapping):
        return {str(k): float(v) for k, v in obj.items()}
    return {t.function_id: t.coefficient_mean for t in obj}


def relative_l2_error(dl, truth, pattern: str | None = None) -> float:
    """``100 * |beta - beta*| / |beta*|`` over the union of ids, in percent.

    ``dl`` and ``truth`` may be a :class:`DiscoveredLagrangian`, a mapping
    ``id -> coefficient`` or a list of terms.  ``pattern`` restricts the
    comparison to matching ids.
    """
    found = _as_mapping(dl)
    true = _as_mapping(truth)
    if not true:
        raise ValueError("truth is empty")
    ids = sorted(set(found) | set(true))
    if pattern is not None:
        ids = [i for i in ids if fnmatch.fnmatchcase(i, pattern)]
    b = np.array([found.get(i, 0.0) for i in ids])
    bt = np.array([true.get(i, 0.0) for i in ids])
    denom = np.linalg.norm(bt)
    if denom == 0:
        raise ValueError("truth has zero norm over the compared ids")
    return float(100.0 * np.linalg.norm(b - bt) / denom)
