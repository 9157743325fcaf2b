"""Pure-Python reference implementations of the hot kernels.

Both kernels mirror the compiled versions in ``_ext.pyx`` operation by
operation and consume the same pre-drawn uniforms, so the two backends
produce the same chains.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["log_marginal", "sweep_indicators", "rk4_term_table", "CholeskyError"]

MAX_JITTER_STEPS = 8

# Term kinds understood by rk4_term_table.
T_CONST, T_POW, T_DIFF, T_VEL, T_SIN, T_COS = range(6)


class CholeskyError(np.linalg.LinAlgError):
    pass


def _cholesky(a: np.ndarray) -> np.ndarray:
    h = a.shape[0]
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * float(np.trace(a)) / h
    for _ in range(MAX_JITTER_STEPS):
        try:
            return np.linalg.cholesky(a + jitter * np.eye(h))
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise CholeskyError(f"matrix of size {h} is not positive definite after jitter")


def log_marginal(G, g, yy, n, z, theta, a_sigma, b_sigma) -> float:
    """Log marginal likelihood of indicator pattern ``z`` up to a constant.

    ``G = L^T L`` and ``g = L^T y`` of the (standardized) design; ``beta`` and
    the noise variance are integrated out, the slab variance is held fixed.
    """
    idx = np.flatnonzero(z)
    h = idx.size
    if h == 0:
        logdet, quad = 0.0, 0.0
    else:
        a = G[np.ix_(idx, idx)] + np.eye(h) / theta
        c = _cholesky(a)
        w = np.linalg.solve(c, g[idx]) if h > 1 else g[idx] / c[0, 0]
        logdet = -2.0 * float(np.sum(np.log(np.diag(c))))
        quad = float(w @ w)
    rss = max(yy - quad, 0.0)
    return 0.5 * logdet - 0.5 * h * math.log(theta) - (a_sigma + 0.5 * n) * math.log(b_sigma + 0.5 * rss)


def sweep_indicators(G, g, yy, n, z, theta, q, a_sigma, b_sigma, uniforms) -> float:
    """One systematic scan over the indicators; ``z`` (int8) is updated in place.

    Returns the log marginal likelihood of the final pattern.
    """
    K = z.shape[0]
    logit_q = math.log(q) - math.log1p(-q)
    current = log_marginal(G, g, yy, n, z, theta, a_sigma, b_sigma)
    for k in range(K):
        old = z[k]
        z[k] = 1 - old
        flipped = log_marginal(G, g, yy, n, z, theta, a_sigma, b_sigma)
        l1, l0 = (flipped, current) if old == 0 else (current, flipped)
        # P(z_k = 1) = q / (q + lambda (1 - q)),  lambda = p(y|z_k=0) / p(y|z_k=1)
        s = logit_q + l1 - l0
        p1 = 1.0 / (1.0 + math.exp(-s)) if s > -700 else 0.0
        new = 1 if uniforms[k] < p1 else 0
        z[k] = new
        if new != old:
            current = flipped
    return current


class _Accel:
    """Vectorised evaluation of ``acc[eq] += coef * feature`` for a term table."""

    def __init__(self, m, eq, kind, a, b, p, coef):
        self.m = m
        self.eq = np.asarray(eq, dtype=np.intp)
        self.kind = np.asarray(kind)
        self.a = np.asarray(a, dtype=np.intp)
        self.b = np.asarray(b, dtype=np.intp)
        self.p = np.asarray(p, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        known = {T_CONST, T_POW, T_DIFF, T_VEL, T_SIN, T_COS}
        if not set(np.unique(self.kind)).issubset(known):
            raise ValueError("unknown term kind in table")
        self.masks = {k: self.kind == k for k in known}

    def __call__(self, x, v):
        f = np.empty(self.kind.shape[0])
        m = self.masks
        f[m[T_CONST]] = 1.0
        sel = m[T_POW]
        f[sel] = x[self.a[sel]] ** self.p[sel]
        sel = m[T_DIFF]
        f[sel] = (x[self.b[sel]] - x[self.a[sel]]) ** self.p[sel]
        sel = m[T_VEL]
        f[sel] = v[self.a[sel]]
        sel = m[T_SIN]
        f[sel] = np.sin(x[self.a[sel]])
        sel = m[T_COS]
        f[sel] = np.cos(x[self.a[sel]])
        return np.bincount(self.eq, weights=self.coef * f, minlength=self.m)


def rk4_term_table(x0, v0, dt, n_out, substeps, eq, kind, a, b, p, coef):
    """Integrate ``x'' = sum coef * feature`` with classical RK4.

    Output rows are spaced ``dt`` apart; each interval takes ``substeps``
    RK4 steps.  Returns ``(X, V, n_valid)`` where ``n_valid < n_out`` marks a
    blow-up (rows from ``n_valid`` on are NaN).
    """
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    m = x.shape[0]
    acc = _Accel(m, eq, kind, a, b, p, coef)
    X = np.full((n_out, m), np.nan)
    V = np.full((n_out, m), np.nan)
    X[0], V[0] = x, v
    h = dt / substeps
    # blow-up is detected below, so overflow on the way there is expected
    with np.errstate(over="ignore", invalid="ignore"):
        for row in range(1, n_out):
            for _ in range(substeps):
                k1x, k1v = v, acc(x, v)
                k2x = v + 0.5 * h * k1v
                k2v = acc(x + 0.5 * h * k1x, k2x)
                k3x = v + 0.5 * h * k2v
                k3v = acc(x + 0.5 * h * k2x, k3x)
                k4x = v + h * k3v
                k4v = acc(x + h * k3x, k4x)
                x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                return X, V, row
            X[row], V[row] = x, v
    return X, V, n_out
