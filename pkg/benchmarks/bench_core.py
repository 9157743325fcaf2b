"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_core.py``.  Each kernel is timed on the
same inputs for every importable backend and the results are checked to
agree before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lagrangian_sbl import _core
from lagrangian_sbl.systems import chain_table


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def sweep_case(K: int, n: int, sweeps: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, K))
    X /= np.linalg.norm(X, axis=0)
    beta = np.zeros(K)
    beta[: K // 3] = rng.normal(0, 3, K // 3)
    y = X @ beta + 0.05 * rng.standard_normal(n)
    G, g, yy = X.T @ X, X.T @ y, float(y @ y)
    u = rng.random((sweeps, K))

    def run(mod):
        z = np.zeros(K, dtype=np.int8)
        out = 0.0
        for s in range(sweeps):
            out = mod.sweep_indicators(G, g, yy, n, z, 10.0, 0.2, 1e-4, 1e-4, u[s])
        return z.copy(), out

    return run


def rk4_case(table, x0, n_out: int, substeps: int, dt: float):
    eq, kind, a, b, p, coef = (np.asarray(c) for c in table)
    args = (eq.astype(np.int_), kind.astype(np.int_), a.astype(np.int_), b.astype(np.int_),
            p.astype(np.int_), coef.astype(float))

    def run(mod):
        X, V, n_valid = mod.rk4_term_table(np.asarray(x0, float), np.zeros(len(x0)), dt, n_out, substeps, *args)
        return X, n_valid

    return run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    scale = 0.1 if args.quick else 1.0
    backends = _core.backends()
    duffing = ([0, 0, 0], [_core.T_POW] * 3, [0, 0, 0], [0, 0, 0], [1, 3, 5], [-1000.0, -5000.0, -90000.0])
    cases = {
        "gibbs sweep K=25 N=3000": sweep_case(25, 3000, int(200 * scale)),
        "rk4 duffing 1000x10": rk4_case(duffing, [0.35], int(1000 * scale) + 2, 10, 5e-4),
        "rk4 chain n=100": rk4_case(chain_table(100, 1.0, 5000.0), np.linspace(0.1, 1.0, 100),
                                    int(2000 * scale) + 2, 10, 1e-3),
    }
    print(f"backends: {', '.join(backends)} (active: {_core.BACKEND})")
    print(f"{'case':<28}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for label, run in cases.items():
        results = {name: run(mod) for name, mod in backends.items()}
        ref = results["python"]
        for name, res in results.items():
            if not all(np.allclose(r, s, rtol=1e-9, atol=1e-12, equal_nan=True) for r, s in zip(ref, res)):
                raise SystemExit(f"{label}: backend {name} disagrees with the Python reference")
        times = {name: _best_of(lambda m=mod: run(m), args.repeat) for name, mod in backends.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<28}" + "".join(f"{times[n] * 1e3:>10.1f}ms" for n in backends) + f"{speed:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
