"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (see ``conftest.record``) that is printed
inline and again in the terminal summary.
"""

import time
import warnings
from dataclasses import replace

import numpy as np

from conftest import SYSTEMS, clean_data, discovered, record
from oracles import best_subset, enumerate_posterior, sparse_problem, toy_problem
from lagrangian_sbl import cli
from lagrangian_sbl.data import TRIM, FieldDataset, time_derivative
from lagrangian_sbl.dictionary import (
    PRESETS,
    CandidateFunction,
    Kind,
    build_dictionary,
    dataset_jet,
    euler_lagrange_apply,
    prune_null_columns,
)
from lagrangian_sbl.discovery import aggregate_shared_terms, discover, relative_l2_error
from lagrangian_sbl.sbl import (
    GibbsState,
    Hyperparameters,
    fb_initialize,
    run_gibbs,
    sample_beta,
    sample_q,
    sample_sigma2,
    sample_theta_slab,
)
from lagrangian_sbl.systems import SystemSpec, paper_spec, simulate, true_lagrangian
from lagrangian_sbl.transforms import (
    equations_of_motion,
    generalize_chain,
    hamiltonian_drift,
    lagrangian_values,
    legendre_transform,
    posterior_predict_band,
    predict,
)


def _close(value, target, rel):
    return abs(value - target) <= rel * abs(target)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# -- 1: Duffing ------------------------------------------------------------------------


def test_criterion_01_duffing_rediscovery():
    spec = paper_spec("duffing")
    d = clean_data("duffing")
    truth = true_lagrangian(spec)
    passes, notes = 0, []
    for seed in range(5):
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            dl = discover(d, PRESETS["duffing"], Hyperparameters(seed=seed))
        elapsed = time.perf_counter() - t0
        c = dl.coefficients()
        err = relative_l2_error(dl, truth)
        ok = (dl.support() == set(truth)
              and all(_close(c[k], v, 0.03) for k, v in (("x1^2", -500.0), ("x1^4", -1250.0), ("x1^6", -15000.0)))
              and err <= 2.0 and elapsed <= 120.0)
        passes += ok
        notes.append(f"{err:.4f}%/{elapsed:.0f}s")
    assert record(1, passes >= 4, f"Duffing {passes}/5 seeds pass; error/runtime {', '.join(notes)}")


# -- 2: Penning trap -------------------------------------------------------------------


def test_criterion_02_penning():
    dl = discovered("penning")
    support = dl.support()
    needed = {"xdot1^2", "xdot2^2", "xdot3^2", "x1^2", "x2^2", "x3^2"}
    c = dl.coefficients()
    # antisymmetric cross structure: x1*v2 and x2*v1 with opposite signs (or one representative)
    cross = [c.get("x1*v2", 0.0), -c.get("x2*v1", 0.0)]
    antisym = any(cross) and (0.0 in cross or np.sign(cross[0]) == np.sign(cross[1]))
    eom = equations_of_motion(dl)
    e1, e3 = eom.coefficients(0), eom.coefficients(2)
    eom_ok = _close(abs(e1["v2"]), 100.0, 0.03) and _close(abs(e1["x1"]), 50.0, 0.03) \
        and _close(abs(e3["x3"]), 100.0, 0.03)
    quad = relative_l2_error(dl, true_lagrangian(paper_spec("penning")), "x?^2")
    ok = needed <= support and antisym and eom_ok and quad <= 1.0
    assert record(2, ok, f"Penning EOM |v2|={abs(e1['v2']):.3f} |x1|={abs(e1['x1']):.3f} "
                         f"|x3|={abs(e3['x3']):.3f}; quadratic-block error {quad:.2e}%")


# -- 3: 3-DOF chain --------------------------------------------------------------------


def test_criterion_03_chain():
    dl = discovered("chain")
    expected = {"xdot1^2", "xdot2^2", "xdot3^2", "x1^2", "(x2-x1)^2", "(x3-x2)^2"}
    c = dl.coefficients()
    vals = [-c[k] for k in ("x1^2", "(x2-x1)^2", "(x3-x2)^2")]
    ok = dl.support() == expected and all(_close(v, 2500.0, 0.01) for v in vals)
    assert record(3, ok, f"chain support exact={dl.support() == expected}; "
                         f"coefficients {', '.join(f'{v:.2f}' for v in vals)}")


# -- 4: string -------------------------------------------------------------------------


def test_criterion_04_string():
    dl = discovered("string")
    eom = equations_of_motion(dl)
    c2 = np.array([-eom.coefficients(i)[f"uxx_{i + 1}"] for i in range(eom.n_dof)])
    form = all(set(eom.coefficients(i)) == {f"uxx_{i + 1}"} for i in range(eom.n_dof))
    mean, std = aggregate_shared_terms(dl, "ux_*^2")
    spread = std / abs(mean)
    ok = form and _close(c2.mean(), 100.0, 0.05) and spread < 0.02
    assert record(4, ok, f"string c^2={c2.mean():.4f}; pooled spread {spread:.2e}")


# -- 5: beam ---------------------------------------------------------------------------


def test_criterion_05_beam():
    dl = discovered("beam")
    eom = equations_of_motion(dl)
    coef = np.array([abs(eom.coefficients(i)[f"uxxxx_{i + 1}"]) for i in range(eom.n_dof)])
    support = {t.function_id for t in dl.total}
    exact = all(f.startswith(("udot_", "uxx_")) and f.endswith("^2") for f in support) \
        and len(support) == 2 * dl.n_dof
    ok = exact and np.all(np.abs(coef - 2.1231) <= 0.05 * 2.1231)
    assert record(5, ok, f"beam |coefficient| {coef.mean():.5f}; support exact={exact}")


# -- 6: Hamiltonian ----------------------------------------------------------------------


def test_criterion_06_hamiltonian_conservation():
    drifts, ident = {}, {}
    for name in SYSTEMS:
        d = clean_data(name)
        dl = discovered(name)
        h = legendre_transform(dl)
        drifts[name] = hamiltonian_drift(h, d).max_drift
        if name == "penning":
            continue  # velocity-dependent potential: identity not expected
        lhs = h.evaluate(d) + lagrangian_values(dl, d)
        rhs = np.sum(d.node_weights() * d.velocities**2, axis=1) if isinstance(d, FieldDataset) \
            else np.sum(d.velocities**2, axis=1)
        ident[name] = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
    ok = all(v < 1e-2 for v in drifts.values()) and all(v <= 1e-12 for v in ident.values())
    assert record(6, ok, f"max drift {max(drifts.values()):.2e}; max identity gap {max(ident.values()):.1e}")


# -- 7: prediction ------------------------------------------------------------------------


def test_criterion_07_prediction():
    notes, ok = [], True
    for name in ("duffing", "penning", "chain"):
        spec = paper_spec(name)
        T = 2 * spec.T
        truth = simulate(replace(spec, T=T + spec.dt))
        dl = discovered(name)
        traj = predict(equations_of_motion(dl), spec.x0, spec.v0, T, spec.dt, substeps=10)
        n = traj.n_samples
        err = _rel(traj.states, truth.states[:n])
        band = posterior_predict_band(dl, spec.x0, spec.v0, T, spec.dt, 100, 0, substeps=10)
        x = truth.states[:n]
        inside = np.all((band.lower.states <= x) & (x <= band.upper.states), axis=1)
        cover = float(inside.mean())
        ok &= n == truth.n_samples and err < 0.02 and cover > 0.90
        notes.append(f"{name} {100 * err:.3f}%/{100 * cover:.1f}%")
    assert record(7, ok, "error/coverage " + ", ".join(notes))


# -- 8: 100-DOF chain ----------------------------------------------------------------------


def test_criterion_08_hundred_dof_chain():
    t0 = time.perf_counter()
    n, T, dt = 100, 100.0, 1e-3
    x0 = tuple(np.linspace(0.1, 1.0, n))
    v0 = (0.0,) * n
    spec = SystemSpec("chain", {"n": n, "m": 1.0, "k": 5000.0}, x0=x0, v0=v0, T=T + dt, dt=dt)
    truth = simulate(spec)
    g = generalize_chain(discovered("chain"), n)
    traj = predict(equations_of_motion(g), x0, v0, T, dt, substeps=spec.substeps)
    err = _rel(traj.states, truth.states[: traj.n_samples])
    elapsed = time.perf_counter() - t0
    ok = traj.n_samples == truth.n_samples and err < 0.05 and elapsed <= 300.0
    assert record(8, ok, f"100-DOF chain error {100 * err:.3f}% in {elapsed:.0f}s")


# -- 9: noise sweep -------------------------------------------------------------------------

def _inversions(medians):
    vals = [v for v in medians if v is not None]
    return sum(b < a for a, b in zip(vals, vals[1:]))


def test_criterion_09_noise_sweep():
    hp = Hyperparameters()
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name in ("duffing", "penning", "chain", "string"):
            rows += cli.noise_sweep(paper_spec(name), PRESETS[name], hp, seeds=range(5))
    table = cli.sweep_table(rows)
    levels = sorted(next(iter(table.values())))
    inv = {name: _inversions([table[name][z] for z in levels]) for name in table}
    duff = table["duffing"][0.05]
    duff_ok = duff is not None and 7.91 / 2 <= duff <= 7.91 * 2
    # Levels where no seed recovers the support are "--" and drop out of the
    # monotonicity count.  For the chain that is accepted from zeta = 0.05 on.
    chain_ok = all(table["chain"][z] is not None for z in levels if z < 0.05)
    ok = all(v <= 1 for v in inv.values()) and duff_ok and chain_ok
    summary = "; ".join(f"{k}: " + " ".join("--" if table[k][z] is None else f"{table[k][z]:.3g}" for z in levels)
                        for k in table)
    assert record(9, ok, f"inversions {inv}; Duffing@0.05={duff if duff is None else round(duff, 3)}; medians {summary}")


# -- 10: sampler -------------------------------------------------------------------------------


def _within_3se(draws, mean):
    draws = np.asarray(draws)
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    return bool(np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se))


def test_criterion_10_sampler():
    gaps = []
    for seed in range(3):
        X, y = toy_problem(seed)
        hp = Hyperparameters(n_samples=100_000, n_burnin=2000, seed=seed)
        exact = enumerate_posterior(X, y, hp)
        freq = run_gibbs(X, y, hp).model_frequencies()
        gaps.append(max(abs(p - freq.get(z, 0.0)) for z, p in exact.items()))
    enum_ok = max(gaps) < 0.02

    rng = np.random.default_rng(1)
    hp = Hyperparameters(a_sigma=3.0, b_sigma=2.0, a_theta=3.0, b_theta=2.0)
    X = np.random.default_rng(6).standard_normal((40, 3))
    y = X @ [1.0, -0.5, 0.25] + 0.3 * np.random.default_rng(7).standard_normal(40)
    state = GibbsState(np.array([1, 1, 1]), np.array([0.5, -1.0, 0.3]), 0.7, 4.0, 0.3)
    A = X.T @ X + np.eye(3) / 4.0
    mu = np.linalg.solve(A, X.T @ y)
    quad = X.T @ y @ mu
    mc = [
        _within_3se([sample_beta(state, X, y, rng) for _ in range(10_000)], mu),
        _within_3se([sample_sigma2(state, X, y, rng, hp) for _ in range(10_000)],
                    (hp.b_sigma + 0.5 * (y @ y - quad)) / (hp.a_sigma + 20.0 - 1)),
        _within_3se([sample_theta_slab(state, rng, hp) for _ in range(10_000)],
                    (hp.b_theta + (0.25 + 1.0 + 0.09) / (2 * 0.7)) / (hp.a_theta + 1.5 - 1)),
        _within_3se([sample_q(state, rng, hp) for _ in range(10_000)],
                    (hp.a_q + 3) / (hp.a_q + hp.b_q + 3)),
    ]
    fb = [np.array_equal(fb_initialize(*sparse_problem(s, K=K)[:2]), best_subset(*sparse_problem(s, K=K)[:2]))
          for s in range(20) for K in (3, 6, 10)]
    ok = enum_ok and all(mc) and all(fb)
    assert record(10, ok, f"enumeration gap {max(gaps):.4f}; MC checks {sum(mc)}/4; "
                          f"fb matches exhaustive {sum(fb)}/{len(fb)}")


# -- 11: operators ------------------------------------------------------------------------------


def _gauge_extras(name, n_dof):
    if name in ("string", "beam"):
        return []
    return [CandidateFunction(Kind.CROSS_STATE_VELOCITY, 1, (i, i)) for i in range(n_dof)]


def test_criterion_11_operators():
    el_gap, fd_gap, gauge_ok = 0.0, 0.0, True
    for name in SYSTEMS:
        d = clean_data(name)
        eom = equations_of_motion(discovered(name))
        acc = time_derivative(np.asarray(d.velocity_field() if isinstance(d, FieldDataset) else d.velocities), d.dt)[TRIM:-TRIM]
        el_gap = max(el_gap, float(np.linalg.norm(eom.residual(d)) / np.linalg.norm(acc)))

        dic = build_dictionary(d, PRESETS[name], extra=_gauge_extras(name, d.n_dof))
        jet = dataset_jet(d)
        for f in dic.functions:
            for var in ("x", "v", "ux", "uxx"):
                if var not in jet:
                    continue
                for i in sorted(f.involved_dofs):
                    h = 1e-6 * max(1.0, float(np.max(np.abs(jet[var][:, i]))))
                    up = {k: a.copy() for k, a in jet.items()}
                    dn = {k: a.copy() for k, a in jet.items()}
                    up[var][:, i] += h
                    dn[var][:, i] -= h
                    fd = (f.value(up) - f.value(dn)) / (2 * h)
                    an = f.partial(jet, var, i)
                    scale = max(1.0, float(np.max(np.abs(an))))
                    fd_gap = max(fd_gap, float(np.max(np.abs(fd - an))) / scale)

        for dof in range(d.n_dof):
            el = prune_null_columns(euler_lagrange_apply(dic, dof, d))
            kept = set(el.parent_ids)
            bad = {"1"} | {f.id for f in _gauge_extras(name, d.n_dof)}
            pairs = [(f"x{a + 1}*v{b + 1}", f"x{b + 1}*v{a + 1}") for a in range(d.n_dof) for b in range(a + 1, d.n_dof)]
            if kept & bad or any(p <= kept for p in map(set, pairs)):
                gauge_ok = False
    ok = el_gap < 1e-3 and fd_gap < 1e-5 and gauge_ok
    assert record(11, ok, f"EL symbolic/numeric gap {el_gap:.1e}; partial/FD gap {fd_gap:.1e}; "
                          f"gauge candidates pruned={gauge_ok}")
