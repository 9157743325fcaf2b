# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: the indicator sweep of the Gibbs sampler and RK4 over a term table."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, sqrt, sin, cos, isfinite

cnp.import_array()

cdef int MAX_JITTER_STEPS = 8


from lagrangian_sbl._core._pyfallback import CholeskyError


cdef int _chol(double[:, ::1] a, int h, double jitter) noexcept nogil:
    """In-place lower Cholesky of the leading h x h block with ``jitter`` on the diagonal."""
    cdef int i, j, k
    cdef double s
    for j in range(h):
        s = a[j, j] + jitter
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if s <= 0.0 or not isfinite(s):
            return -1
        s = sqrt(s)
        a[j, j] = s
        for i in range(j + 1, h):
            for k in range(j):
                a[i, j] -= a[i, k] * a[j, k]
            a[i, j] /= s
    return 0


cdef double _log_marginal(double[:, ::1] G, double[::1] g, double yy, double n,
                          signed char[::1] z, double theta, double a_sigma, double b_sigma,
                          double[:, ::1] work, double[::1] w, int[::1] idx, int* status) noexcept nogil:
    cdef int K = z.shape[0]
    cdef int h = 0, i, j, k, step
    cdef double logdet = 0.0, quad = 0.0, s, trace = 0.0, jitter, rss
    for k in range(K):
        if z[k]:
            idx[h] = k
            h += 1
    status[0] = 0
    if h > 0:
        for i in range(h):
            trace += G[idx[i], idx[i]] + 1.0 / theta
        jitter = 0.0
        for step in range(MAX_JITTER_STEPS + 1):
            for i in range(h):
                for j in range(i + 1):
                    work[i, j] = G[idx[i], idx[j]]
                work[i, i] += 1.0 / theta
            if _chol(work, h, jitter) == 0:
                break
            jitter = 1e-12 * trace / h if step == 0 else 2.0 * jitter
        else:
            status[0] = -1
            return 0.0
        # forward solve L w = g_active
        for i in range(h):
            s = g[idx[i]]
            for k in range(i):
                s -= work[i, k] * w[k]
            w[i] = s / work[i, i]
            quad += w[i] * w[i]
            logdet -= 2.0 * log(work[i, i])
    rss = yy - quad
    if rss < 0.0:
        rss = 0.0
    return 0.5 * logdet - 0.5 * h * log(theta) - (a_sigma + 0.5 * n) * log(b_sigma + 0.5 * rss)


def log_marginal(G, g, double yy, double n, z, double theta, double a_sigma, double b_sigma):
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef signed char[::1] zv = np.ascontiguousarray(z, dtype=np.int8)
    cdef int K = zv.shape[0]
    cdef double[:, ::1] work = np.empty((max(K, 1), max(K, 1)))
    cdef double[::1] w = np.empty(max(K, 1))
    cdef int[::1] idx = np.empty(max(K, 1), dtype=np.intc)
    cdef int status = 0
    cdef double out = _log_marginal(Gv, gv, yy, n, zv, theta, a_sigma, b_sigma, work, w, idx, &status)
    if status != 0:
        raise CholeskyError(f"matrix is not positive definite after jitter")
    return out


def sweep_indicators(G, g, double yy, double n, signed char[::1] z, double theta, double q,
                     double a_sigma, double b_sigma, double[::1] uniforms):
    """One systematic scan over the indicators; ``z`` (int8) is updated in place."""
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef int K = z.shape[0]
    cdef double[:, ::1] work = np.empty((max(K, 1), max(K, 1)))
    cdef double[::1] w = np.empty(max(K, 1))
    cdef int[::1] idx = np.empty(max(K, 1), dtype=np.intc)
    cdef int status = 0, k
    cdef signed char old, new
    cdef double logit_q = log(q) - log1p(-q)
    cdef double current, flipped, l0, l1, s, p1
    current = _log_marginal(Gv, gv, yy, n, z, theta, a_sigma, b_sigma, work, w, idx, &status)
    if status != 0:
        raise CholeskyError("matrix is not positive definite after jitter")
    for k in range(K):
        old = z[k]
        z[k] = 1 - old
        flipped = _log_marginal(Gv, gv, yy, n, z, theta, a_sigma, b_sigma, work, w, idx, &status)
        if status != 0:
            z[k] = old
            raise CholeskyError("matrix is not positive definite after jitter")
        if old == 0:
            l1 = flipped
            l0 = current
        else:
            l1 = current
            l0 = flipped
        s = logit_q + l1 - l0
        p1 = 1.0 / (1.0 + exp(-s)) if s > -700 else 0.0
        new = 1 if uniforms[k] < p1 else 0
        z[k] = new
        if new != old:
            current = flipped
    return current


cdef inline double _ipow(double x, int p) noexcept nogil:
    cdef double r = 1.0
    cdef int i
    for i in range(p):
        r *= x
    return r


cdef void _accel(double[::1] x, double[::1] v, double[::1] out, int m,
                 long[::1] eq, long[::1] kind, long[::1] a, long[::1] b, long[::1] p,
                 double[::1] coef) noexcept nogil:
    cdef Py_ssize_t t, nt = kind.shape[0]
    cdef int i
    cdef double f
    for i in range(m):
        out[i] = 0.0
    for t in range(nt):
        if kind[t] == 0:
            f = 1.0
        elif kind[t] == 1:
            f = _ipow(x[a[t]], p[t])
        elif kind[t] == 2:
            f = _ipow(x[b[t]] - x[a[t]], p[t])
        elif kind[t] == 3:
            f = v[a[t]]
        elif kind[t] == 4:
            f = sin(x[a[t]])
        else:
            f = cos(x[a[t]])
        out[eq[t]] += coef[t] * f


def rk4_term_table(x0, v0, double dt, int n_out, int substeps, eq, kind, a, b, p, coef):
    """Integrate ``x'' = sum coef * feature`` with classical RK4 (see the fallback for details)."""
    cdef long[::1] eqv = np.ascontiguousarray(eq, dtype=np.int_)
    cdef long[::1] kv = np.ascontiguousarray(kind, dtype=np.int_)
    cdef long[::1] av = np.ascontiguousarray(a, dtype=np.int_)
    cdef long[::1] bv = np.ascontiguousarray(b, dtype=np.int_)
    cdef long[::1] pv = np.ascontiguousarray(p, dtype=np.int_)
    cdef double[::1] cv = np.ascontiguousarray(coef, dtype=np.float64)
    if np.any(np.asarray(kind) > 5) or np.any(np.asarray(kind) < 0):
        raise ValueError("unknown term kind in table")
    cdef double[::1] x = np.array(x0, dtype=np.float64)
    cdef double[::1] v = np.array(v0, dtype=np.float64)
    cdef int m = x.shape[0]
    Xa = np.full((n_out, m), np.nan)
    Va = np.full((n_out, m), np.nan)
    cdef double[:, ::1] X = Xa
    cdef double[:, ::1] V = Va
    cdef double[::1] xs = np.empty(m)
    cdef double[::1] vs = np.empty(m)
    cdef double[::1] k1v = np.empty(m)
    cdef double[::1] k2v = np.empty(m)
    cdef double[::1] k3v = np.empty(m)
    cdef double[::1] k4v = np.empty(m)
    cdef double[::1] k2x = np.empty(m)
    cdef double[::1] k3x = np.empty(m)
    cdef double[::1] k4x = np.empty(m)
    cdef double h = dt / substeps
    cdef int row, sub, i
    cdef bint ok = True
    with nogil:
        for i in range(m):
            X[0, i] = x[i]
            V[0, i] = v[i]
        for row in range(1, n_out):
            for sub in range(substeps):
                _accel(x, v, k1v, m, eqv, kv, av, bv, pv, cv)
                for i in range(m):
                    k2x[i] = v[i] + 0.5 * h * k1v[i]
                    xs[i] = x[i] + 0.5 * h * v[i]
                _accel(xs, k2x, k2v, m, eqv, kv, av, bv, pv, cv)
                for i in range(m):
                    k3x[i] = v[i] + 0.5 * h * k2v[i]
                    xs[i] = x[i] + 0.5 * h * k2x[i]
                _accel(xs, k3x, k3v, m, eqv, kv, av, bv, pv, cv)
                for i in range(m):
                    k4x[i] = v[i] + h * k3v[i]
                    xs[i] = x[i] + h * k3x[i]
                _accel(xs, k4x, k4v, m, eqv, kv, av, bv, pv, cv)
                for i in range(m):
                    x[i] = x[i] + (h / 6.0) * (v[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
                    v[i] = v[i] + (h / 6.0) * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            ok = True
            for i in range(m):
                if not (isfinite(x[i]) and isfinite(v[i])):
                    ok = False
            if not ok:
                break
            for i in range(m):
                X[row, i] = x[i]
                V[row, i] = v[i]
    if not ok:
        return Xa, Va, row
    return Xa, Va, n_out
