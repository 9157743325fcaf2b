"""Spike-and-slab linear regression by Gibbs sampling.

Model::

    y | beta, z, s2   ~ N(L_z beta_z, s2 I)
    beta_z | s2, th   ~ N(0, s2 th I)
    z_k | q           ~ Bernoulli(q)
    s2 ~ IG(a_sigma, b_sigma),  th ~ IG(a_theta, b_theta),  q ~ Beta(a_q, b_q)

One sweep updates the indicators one at a time from ``p(z_k | z_-k, th, q, y)``
(``beta`` and ``s2`` integrated out), then draws ``s2`` and ``beta`` jointly
given the new pattern, then ``th`` and ``q``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import _core

__all__ = [
    "Hyperparameters",
    "GibbsState",
    "GibbsChain",
    "DegenerateChainError",
    "fb_initialize",
    "sample_beta",
    "sample_z",
    "sample_sigma2",
    "sample_theta_slab",
    "sample_q",
    "run_gibbs",
    "log_marginal_likelihood",
]

log = logging.getLogger(__name__)

RATE_FLOOR = 1e-12


class DegenerateChainError(RuntimeError):
    """Raised when inference cannot produce a non-empty model.

    ``chain`` holds the (all-empty) chain when the sampler itself ran.
    """

    def __init__(self, message: str, chain: "GibbsChain | None" = None):
        super().__init__(message)
        self.chain = chain


@dataclass(frozen=True)
class Hyperparameters:
    a_sigma: float = 1e-4
    b_sigma: float = 1e-4
    a_theta: float = 0.5
    b_theta: float = 0.5
    a_q: float = 0.1
    b_q: float = 1.0
    q0: float = 0.1
    theta0: float = 10.0
    n_samples: int = 5000
    n_burnin: int = 1000
    pip_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "a_theta", "b_theta", "a_q", "b_q", "theta0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 < self.q0 < 1:
            raise ValueError(f"q0 must lie in (0, 1), got {self.q0}")
        if self.n_samples <= 0 or self.n_burnin < 0:
            raise ValueError("n_samples must be > 0 and n_burnin >= 0")
        if not 0 < self.pip_threshold < 1:
            raise ValueError(f"pip_threshold must lie in (0, 1), got {self.pip_threshold}")

    @classmethod
    def from_mapping(cls, block: Mapping) -> "Hyperparameters":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(block) - known)
        if extra:
            raise ValueError(f"unknown sbl options {extra}")
        return cls(**dict(block))

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def with_seed(self, seed: int) -> "Hyperparameters":
        return replace(self, seed=int(seed))


@dataclass
class GibbsState:
    z: np.ndarray
    beta_r: np.ndarray
    sigma2: float
    theta_slab: float
    q: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int8)
        self.beta_r = np.asarray(self.beta_r, dtype=float)
        if self.beta_r.shape != (int(self.z.sum()),):
            raise ValueError("beta_r length must equal the number of active indicators")
        if not (self.sigma2 > 0 and self.theta_slab > 0):
            raise ValueError("sigma2 and theta_slab must be positive")
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")

    @property
    def h(self) -> int:
        return int(self.z.sum())

    def to_json(self) -> dict:
        return {
            "z": self.z.tolist(),
            "beta_r": self.beta_r.tolist(),
            "sigma2": self.sigma2,
            "theta_slab": self.theta_slab,
            "q": self.q,
        }


@dataclass
class GibbsChain:
    """Post-burn-in samples and posterior summaries.

    Coefficients (``beta``, ``mu_beta``, ``sigma_beta``) are in the units of
    the original, unscaled design.  ``beta`` is ``n_samples x K`` with zeros
    for inactive columns; ``mu_beta``/``sigma_beta`` cover the selected
    columns only, in column order.
    """

    z: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    pip: np.ndarray
    selected: np.ndarray
    mu_beta: np.ndarray
    sigma_beta: np.ndarray
    ids: tuple[str, ...] = ()
    z_init: np.ndarray | None = None
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]

    @property
    def samples(self) -> list[GibbsState]:
        out = []
        for z, b, s2, th, q in zip(self.z, self.beta, self.sigma2, self.theta, self.q):
            out.append(GibbsState(z.copy(), b[z.astype(bool)], float(s2), float(th), float(q)))
        return out

    @property
    def selected_index(self) -> np.ndarray:
        return np.flatnonzero(self.selected)

    def model_frequencies(self) -> dict[tuple[int, ...], float]:
        """Fraction of samples visiting each indicator pattern."""
        pats, counts = np.unique(self.z, axis=0, return_counts=True)
        return {tuple(int(v) for v in p): c / self.n_samples for p, c in zip(pats, counts)}

    def dump_jsonl(self, target, **extra) -> None:
        """Write one JSON line per retained sample to a path or an open text file.

        ``extra`` fields (e.g. ``dof=1``) are prepended to every record.
        """
        if hasattr(target, "write"):
            for k, s in enumerate(self.samples):
                target.write(json.dumps({**extra, "sample": k, **s.to_json()}) + "\n")
            return
        with Path(target).open("w", encoding="utf-8") as fh:
            self.dump_jsonl(fh, **extra)


# --------------------------------------------------------------------------
# Forward-backward initialization


def _bic(design, target, active) -> float:
    n = target.shape[0]
    h = len(active)
    if h:
        coef, *_ = np.linalg.lstsq(design[:, active], target, rcond=None)
        resid = target - design[:, active] @ coef
    else:
        resid = target
    floor = 1e-14 * float(target @ target) + 1e-300
    rss = max(float(resid @ resid), floor)
    return n * math.log(rss / n) + h * math.log(n)


def fb_initialize(design, target) -> np.ndarray:
    """Greedy forward-backward choice of the starting indicator vector.

    The forward pass visits the inactive columns left to right and adds a
    column when it lowers the Bayesian information criterion of the
    least-squares fit; the backward pass visits the active set right to left
    and drops a column when that does not raise it.  The two passes repeat
    until the active set stops changing, so a column rejected early can
    still enter once the columns that explain most of the target are in.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    if not np.any(design):
        raise DegenerateChainError("design matrix is all zeros")
    K = design.shape[1]
    usable = [k for k in range(K) if np.any(design[:, k])]
    active: list[int] = []
    best = _bic(design, target, active)
    seen = {()}
    while True:
        for k in usable:
            if k in active:
                continue
            trial = _bic(design, target, sorted(active + [k]))
            if trial < best:
                active = sorted(active + [k])
                best = trial
        for k in reversed(list(active)):
            rest = [j for j in active if j != k]
            trial = _bic(design, target, rest)
            if trial <= best:
                active = rest
                best = trial
        key = tuple(active)
        if key in seen:
            break
        seen.add(key)
    z = np.zeros(K, dtype=np.int8)
    z[active] = 1
    return z


# --------------------------------------------------------------------------
# Conditional samplers


def _cholesky(a: np.ndarray) -> np.ndarray:
    return _core._pyfallback._cholesky(a)


def _posterior(G_s: np.ndarray, g_s: np.ndarray, theta: float):
    """Cholesky factor of ``G + I/theta``, the mean ``(G + I/theta)^-1 g`` and ``g' mean``."""
    h = g_s.shape[0]
    c = _cholesky(G_s + np.eye(h) / theta)
    w = solve_triangular(c, g_s, lower=True)
    mu = solve_triangular(c.T, w, lower=False)
    return c, mu, float(w @ w)


def _inverse_gamma(rng, shape: float, rate: float) -> float:
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def sample_beta(state: GibbsState, design_r, target, rng) -> np.ndarray:
    """Draw the active coefficients from ``N(mu, sigma2 (L'L + I/theta)^-1)``."""
    design_r = np.asarray(design_r, dtype=float)
    if design_r.ndim != 2 or design_r.shape[1] < 1:
        raise ValueError("sample_beta needs at least one active column")
    c, mu, _ = _posterior(design_r.T @ design_r, design_r.T @ target, state.theta_slab)
    eps = rng.standard_normal(mu.shape[0])
    return mu + math.sqrt(state.sigma2) * solve_triangular(c.T, eps, lower=False)


def _sigma2_rate(yy: float, quad: float, hp: Hyperparameters) -> float:
    rate = hp.b_sigma + 0.5 * (yy - quad)
    if rate < RATE_FLOOR:
        log.debug("sigma2 rate %.3g clamped to %.1g", rate, RATE_FLOOR)
        rate = RATE_FLOOR
    return rate


def sample_sigma2(state: GibbsState, design_r, target, rng,
                  hp: Hyperparameters = Hyperparameters()) -> float:
    """Draw the noise variance from ``IG(a + N/2, b + (y'y - mu' A mu)/2)``, ``beta`` integrated out."""
    target = np.asarray(target, dtype=float)
    yy = float(target @ target)
    quad = 0.0
    if state.h:
        design_r = np.asarray(design_r, dtype=float)
        _, _, quad = _posterior(design_r.T @ design_r, design_r.T @ target, state.theta_slab)
    return _inverse_gamma(rng, hp.a_sigma + 0.5 * target.shape[0], _sigma2_rate(yy, quad, hp))


def sample_theta_slab(state: GibbsState, rng, hp: Hyperparameters = Hyperparameters()) -> float:
    b = state.beta_r
    return _inverse_gamma(rng, hp.a_theta + 0.5 * b.shape[0],
                          hp.b_theta + float(b @ b) / (2.0 * state.sigma2))


def sample_q(state: GibbsState, rng, hp: Hyperparameters = Hyperparameters()) -> float:
    K, h = state.z.shape[0], state.h
    q = rng.beta(hp.a_q + h, hp.b_q + K - h)
    # keep strictly inside (0, 1) so the log-odds stay finite
    return float(np.clip(q, 1e-300, 1.0 - 1e-16))


def log_marginal_likelihood(design, target, z, theta: float,
                            hp: Hyperparameters = Hyperparameters()) -> float:
    """``log p(y | z, theta)`` up to a pattern-independent constant."""
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    return float(_core.log_marginal(design.T @ design, design.T @ target, float(target @ target),
                                    float(target.shape[0]), np.asarray(z, dtype=np.int8),
                                    float(theta), hp.a_sigma, hp.b_sigma))


def sample_z(state: GibbsState, design, target, rng,
             hp: Hyperparameters = Hyperparameters()) -> np.ndarray:
    """One systematic scan over all indicators; returns the new pattern."""
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    z = np.array(state.z, dtype=np.int8)
    u = rng.random(z.shape[0])
    _core.sweep_indicators(design.T @ design, design.T @ target, float(target @ target),
                           float(target.shape[0]), z, float(state.theta_slab), float(state.q),
                           hp.a_sigma, hp.b_sigma, u)
    return z


# --------------------------------------------------------------------------
# Driver


def _initial_sigma2(design, target, z) -> float:
    idx = np.flatnonzero(z)
    if idx.size:
        coef, *_ = np.linalg.lstsq(design[:, idx], target, rcond=None)
        resid = target - design[:, idx] @ coef
    else:
        resid = target
    v = float(np.var(resid))
    return v if v > 0 else 1e-12 * max(float(np.var(target)), 1e-300)


def run_gibbs(design, target, hp: Hyperparameters = Hyperparameters(),
              ids: Sequence[str] = (), z0: np.ndarray | None = None) -> GibbsChain:
    """Run the sampler and summarise the chain.

    Columns are scaled to unit norm and the target to unit root-mean-square
    internally, so the selected support does not depend on the units of
    either; all outputs are in the original units.  ``z0`` overrides the
    forward-backward initialization.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    if design.ndim != 2 or target.shape != (design.shape[0],):
        raise ValueError(f"design {design.shape} and target {target.shape} are incompatible")
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(target))):
        raise ValueError("design and target must be finite")
    n, K = design.shape
    if K == 0:
        raise DegenerateChainError("no candidate columns left")
    scale = np.linalg.norm(design, axis=0)
    if np.any(scale == 0):
        raise DegenerateChainError(f"design has all-zero columns at {np.flatnonzero(scale == 0).tolist()}")
    y_scale = float(np.sqrt(np.mean(target**2)))
    if y_scale == 0:
        raise DegenerateChainError("target is identically zero")
    Ls = design / scale
    ys = target / y_scale
    G = Ls.T @ Ls
    g = Ls.T @ ys
    yy = float(ys @ ys)
    rng = np.random.default_rng(hp.seed)

    z = fb_initialize(Ls, ys) if z0 is None else np.array(z0, dtype=np.int8)
    z_init = z.copy()
    sigma2 = _initial_sigma2(Ls, ys, z)
    theta = hp.theta0
    q = hp.q0

    total = hp.n_burnin + hp.n_samples
    Z = np.zeros((hp.n_samples, K), dtype=np.int8)
    B = np.zeros((hp.n_samples, K))
    S2 = np.zeros(hp.n_samples)
    TH = np.zeros(hp.n_samples)
    Q = np.zeros(hp.n_samples)
    shape_sigma = hp.a_sigma + 0.5 * n
    for it in range(total):
        u = rng.random(K)
        _core.sweep_indicators(G, g, yy, float(n), z, theta, q, hp.a_sigma, hp.b_sigma, u)
        idx = np.flatnonzero(z)
        h = idx.size
        if h:
            c, mu, quad = _posterior(G[np.ix_(idx, idx)], g[idx], theta)
        else:
            quad = 0.0
        sigma2 = _inverse_gamma(rng, shape_sigma, _sigma2_rate(yy, quad, hp))
        if h:
            beta = mu + math.sqrt(sigma2) * solve_triangular(c.T, rng.standard_normal(h), lower=False)
            bb = float(beta @ beta)
        else:
            beta = np.zeros(0)
            bb = 0.0
        theta = _inverse_gamma(rng, hp.a_theta + 0.5 * h, hp.b_theta + bb / (2.0 * sigma2))
        q = float(np.clip(rng.beta(hp.a_q + h, hp.b_q + K - h), 1e-300, 1.0 - 1e-16))
        j = it - hp.n_burnin
        if j >= 0:
            Z[j] = z
            B[j, idx] = beta * (y_scale / scale[idx])
            S2[j] = sigma2 * y_scale**2
            TH[j] = theta
            Q[j] = q

    pip = Z.mean(axis=0)
    selected = (pip > hp.pip_threshold).astype(np.int8)
    sel = np.flatnonzero(selected)
    if sel.size:
        _, mu, _ = _posterior(G[np.ix_(sel, sel)], g[sel], float(TH.mean()))
        c = _cholesky(G[np.ix_(sel, sel)] + np.eye(sel.size) / float(TH.mean()))
        cinv = solve_triangular(c, np.eye(sel.size), lower=True)
        cov = float(S2.mean()) * (cinv.T @ cinv)
        s = scale[sel]
        mu_beta = mu * (y_scale / s)
        sigma_beta = cov / np.outer(s, s)
    else:
        mu_beta = np.zeros(0)
        sigma_beta = np.zeros((0, 0))
    chain = GibbsChain(
        z=Z, beta=B, sigma2=S2, theta=TH, q=Q, pip=pip, selected=selected,
        mu_beta=mu_beta, sigma_beta=sigma_beta,
        ids=tuple(ids) if ids else tuple(f"c{k + 1}" for k in range(K)),
        z_init=z_init, hyperparameters=hp,
    )
    if not Z.any():
        raise DegenerateChainError("every post-burn-in sample is the empty model", chain)
    return chain
