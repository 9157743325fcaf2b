import math
import re
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SYSTEMS, clean_data, discovered
from lagrangian_sbl.data import TRIM, FieldDataset, TrajectoryDataset, time_derivative
from lagrangian_sbl.dictionary import parse_id
from lagrangian_sbl.discovery import DiscoveredLagrangian, LagrangianTerm, relative_l2_error
from lagrangian_sbl.systems import paper_spec, simulate, true_lagrangian
from lagrangian_sbl.transforms import (
    EquationOfMotion,
    HamiltonianExpression,
    TransformError,
    equations_of_motion,
    generalize_chain,
    hamiltonian_drift,
    lagrangian_values,
    legendre_transform,
    posterior_predict_band,
    predict,
)


def make_dl(coefs, n_dof, std=0.0, on_field=False, grid=None):
    """A DiscoveredLagrangian from ``{id: coefficient}``, each term filed under the DOFs it involves."""
    terms = {fid: parse_id(fid, on_field) for fid in coefs}
    per_dof, posterior = [], []
    for i in range(n_dof):
        mine = [LagrangianTerm(fid, c, std, 1.0, i) for fid, c in coefs.items() if i in terms[fid].dofs]
        mine.sort(key=lambda t: terms[t.function_id].velocity_degree != 2)
        per_dof.append(mine)
        sel = mine[1:]
        posterior.append({"ids": [t.function_id for t in sel],
                          "mean": np.array([t.coefficient_mean for t in sel]),
                          "cov": np.eye(len(sel)) * std**2})
    total = [LagrangianTerm(fid, c, std, 1.0, min(terms[fid].dofs, default=0)) for fid, c in coefs.items()]
    prov = {"grid": grid} if grid else {}
    labels = () if on_field else tuple(f"x{i + 1}" for i in range(n_dof))
    return DiscoveredLagrangian(per_dof, total, posterior, provenance=prov, on_field=on_field, dof_labels=labels)


def _truth_dl(name):
    spec = paper_spec(name)
    grid = {"dx": spec.dx, "S": spec.S, "boundary": "fixed-fixed" if name == "string" else "clamped-free"} \
        if spec.is_field else None
    n = spec.S if spec.is_field else clean_data(name).n_dof
    return make_dl(true_lagrangian(spec), n, on_field=spec.is_field, grid=grid)


# -- Legendre transform ------------------------------------------------------------


def test_legendre_harmonic():
    h = legendre_transform(make_dl({"xdot1^2": 0.5, "x1^2": -500.0}, 1))
    assert h.coefficients() == {"xdot1^2": 0.5, "x1^2": 500.0}


def test_legendre_free_particle():
    assert legendre_transform(make_dl({"xdot1^2": 0.5}, 1)).coefficients() == {"xdot1^2": 0.5}


def test_legendre_rules_per_kind():
    dl = make_dl({"xdot1^2": 0.5, "xdot2^1": 3.0, "1": 2.0, "x1*v2": 7.0, "sin(x1)": 1.5,
                  "(x2-x1)^4": -2.0}, 2)
    h = legendre_transform(dl).coefficients()
    assert h == {"xdot1^2": 0.5, "1": -2.0, "sin(x1)": -1.5, "(x2-x1)^4": 2.0}


def test_penning_hamiltonian_has_no_cross_terms():
    h = legendre_transform(discovered("penning")).coefficients()
    assert not any("*" in k for k in h)
    assert h["x1^2"] == pytest.approx(-25.0, rel=1e-4) and h["x2^2"] == pytest.approx(-25.0, rel=1e-4)
    assert h["x3^2"] == pytest.approx(50.0, rel=1e-4)
    assert all(h[f"xdot{i}^2"] == 0.5 for i in (1, 2, 3))


def test_penning_printed_sign_is_not_conserved():
    # With the potential sign flipped in the plane the expression is not a constant of motion.
    d = clean_data("penning")
    ours = legendre_transform(discovered("penning"))
    assert hamiltonian_drift(ours, d).max_drift < 1e-2
    flipped = HamiltonianExpression(
        tuple((k, -c if k in ("x1^2", "x2^2", "x3^2") else c) for k, c in ours.terms), dof_labels=ours.dof_labels)
    assert hamiltonian_drift(flipped, d).max_drift > 1e-2


_POTENTIALS = ["x1^2", "x1^4", "x2^2", "(x2-x1)^2", "(x2-x1)^4", "sin(x1)", "cos(x2)", "1"]


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from(_POTENTIALS), st.floats(-1e3, 1e3, allow_nan=False), max_size=5),
       st.integers(0, 10**6))
def test_legendre_identity(pot, seed):
    coefs = {"xdot1^2": 0.5, "xdot2^2": 0.5, **pot}
    dl = make_dl(coefs, 2)
    r = np.random.default_rng(seed)
    d = TrajectoryDataset(r.uniform(-2, 2, (30, 2)), r.uniform(-2, 2, (30, 2)), 0.1)
    lhs = legendre_transform(dl).evaluate(d) + lagrangian_values(dl, d)
    rhs = np.sum(d.velocities**2, axis=1)
    scale = 1.0 + sum(abs(c) for c in pot.values()) * 16
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_legendre_identity_on_fields():
    for name in ("string", "beam"):
        d = clean_data(name)
        dl = discovered(name)
        lhs = legendre_transform(dl).evaluate(d) + lagrangian_values(dl, d)
        rhs = np.sum(d.node_weights() * d.velocities**2, axis=1)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


def test_hamiltonian_json_round_trip():
    h = legendre_transform(discovered("chain"))
    back = HamiltonianExpression.from_json(h.to_json())
    assert back.terms == h.terms and back.text() == h.text()


# -- drift ----------------------------------------------------------------------------


def test_true_duffing_hamiltonian_is_conserved():
    h = legendre_transform(_truth_dl("duffing"))
    assert hamiltonian_drift(h, clean_data("duffing")).max_drift < 1e-3


def test_constant_hamiltonian_has_no_drift():
    h = HamiltonianExpression((("1", 3.0),))
    assert hamiltonian_drift(h, clean_data("duffing")).max_drift == 0.0


def test_wrong_sign_potential_drifts():
    h = legendre_transform(make_dl({"xdot1^2": 0.5, "x1^2": 500.0, "x1^4": -1250.0, "x1^6": -15000.0}, 1))
    assert hamiltonian_drift(h, clean_data("duffing")).max_drift > 1e-1


def test_zero_hamiltonian_reports_absolute_drift():
    d = TrajectoryDataset(np.zeros((10, 1)), np.zeros((10, 1)), 0.1)
    with pytest.warns(RuntimeWarning, match="absolute"):
        res = hamiltonian_drift(HamiltonianExpression((("xdot1^2", 0.5),)), d)
    assert res.relative is False and res.max_drift == 0.0


def test_label_mismatch():
    h = legendre_transform(discovered("duffing"))
    with pytest.raises(TransformError, match="labels"):
        h.evaluate(clean_data("chain"))


@pytest.mark.parametrize("name", SYSTEMS)
def test_discovered_hamiltonians_are_conserved(name):
    assert hamiltonian_drift(legendre_transform(discovered(name)), clean_data(name)).max_drift < 1e-2


# -- equations of motion -----------------------------------------------------------------


def test_harmonic_equation():
    eom = equations_of_motion(make_dl({"xdot1^2": 0.5, "x1^2": -500.0}, 1))
    assert eom.coefficients(0) == {"x1": 1000.0}
    assert eom.text() == "xddot1 + 1000.0*x1 = 0"


def test_duffing_equation_coefficients():
    eom = equations_of_motion(discovered("duffing"))
    c = eom.coefficients(0)
    # the linear coefficient agrees with the published 996.92 to within its spread
    assert abs(c["x1"] - 996.92) < 0.01 * 996.92
    assert c["x1^3"] == pytest.approx(5000.0, rel=1e-3)
    assert c["x1^5"] == pytest.approx(90000.0, rel=1e-3)


def test_penning_equations():
    eom = equations_of_motion(discovered("penning"))
    c1, c2, c3 = (eom.coefficients(i) for i in range(3))
    assert c1["v2"] == pytest.approx(-100.0, rel=1e-3) and c1["x1"] == pytest.approx(-50.0, rel=1e-3)
    assert c2["v1"] == pytest.approx(100.0, rel=1e-3) and c2["x2"] == pytest.approx(-50.0, rel=1e-3)
    assert c3 == pytest.approx({"x3": 100.0}, rel=1e-3)


def test_chain_equations():
    c = equations_of_motion(discovered("chain")).coefficients(1)
    assert set(c) == {"(x2-x1)", "(x3-x2)"}
    assert c["(x2-x1)"] == pytest.approx(5000.0, rel=1e-3) and c["(x3-x2)"] == pytest.approx(-5000.0, rel=1e-3)


def test_string_equation_wave_speed():
    eom = equations_of_motion(discovered("string"))
    c2 = [-eom.coefficients(i)[f"uxx_{i + 1}"] for i in range(eom.n_dof)]
    assert np.allclose(c2, 100.0, rtol=1e-3)
    first = eom.text().splitlines()[0]
    assert re.fullmatch(r"uddot_1 - (\S+)\*uxx_1 = 0", first)
    assert float(first.split()[2].split("*")[0]) == pytest.approx(100.0, rel=1e-3)


def test_beam_equation_stiffness():
    eom = equations_of_motion(discovered("beam"))
    c = [eom.coefficients(i)[f"uxxxx_{i + 1}"] for i in range(eom.n_dof)]
    assert np.allclose(np.abs(c), 2.1231, rtol=0.05)


@pytest.mark.parametrize("name", SYSTEMS)
def test_symbolic_equations_match_numeric_el(name):
    d = clean_data(name)
    eom = equations_of_motion(discovered(name))
    acc = time_derivative(d.velocities, d.dt)[TRIM:-TRIM]
    r = eom.residual(d)
    assert np.linalg.norm(r) / np.linalg.norm(acc) < 1e-3


def test_equation_json_round_trip():
    eom = equations_of_motion(discovered("string"))
    back = EquationOfMotion.from_json(eom.to_json())
    assert back == eom


def test_missing_kinetic_term():
    with pytest.raises(TransformError, match="kinetic"):
        equations_of_motion(make_dl({"x1^2": -1.0, "xdot1^1": 1.0}, 1))


# -- prediction ---------------------------------------------------------------------------


def test_predict_harmonic_oscillator():
    eom = EquationOfMotion(((("x1", 1000.0),),))
    traj = predict(eom, [1.0], [0.0], 1.0, 1e-4)
    assert traj.n_samples == 10001
    assert np.max(np.abs(traj.states[:, 0] - np.cos(math.sqrt(1000.0) * traj.times))) < 1e-4


def test_predict_zero_initial_condition():
    traj = predict(equations_of_motion(discovered("chain")), [0, 0, 0], [0, 0, 0], 0.5, 1e-3)
    assert not np.any(traj.states) and not np.any(traj.velocities)


def test_predict_discovered_duffing_over_one_second():
    spec = paper_spec("duffing")
    truth = simulate(spec.__class__(spec.name, spec.params, spec.x0, spec.v0, T=1.0 + spec.dt, dt=spec.dt))
    traj = predict(equations_of_motion(discovered("duffing")), spec.x0, spec.v0, 1.0, spec.dt, substeps=10)
    err = np.linalg.norm(traj.states - truth.states[: traj.n_samples]) / np.linalg.norm(truth.states[: traj.n_samples])
    assert err < 0.02


def test_predict_true_equation_conserves_energy():
    dl = _truth_dl("duffing")
    spec = paper_spec("duffing")
    traj = predict(equations_of_motion(dl), spec.x0, spec.v0, spec.T, 5e-4)
    assert hamiltonian_drift(legendre_transform(dl), traj).max_drift < 1e-3


def test_predict_field_returns_field():
    dl = discovered("string")
    spec = paper_spec("string")
    d = clean_data("string")
    traj = predict(equations_of_motion(dl), d.field[0], d.velocities[0], 0.2, spec.dt, substeps=4)
    assert isinstance(traj, FieldDataset)
    assert np.max(np.abs(traj.field - d.field[:201])) < 1e-2 * np.max(np.abs(d.field))


def test_predict_reports_blow_up():
    eom = EquationOfMotion(((("x1^3", -1e3),),))
    with pytest.warns(RuntimeWarning, match="diverged"):
        traj = predict(eom, [1.0], [0.0], 1.0, 0.001)
    assert traj.meta["blowup_time"] < 1.0 and 5 <= traj.n_samples < 1001
    assert np.all(np.isfinite(traj.states))
    with pytest.raises(TransformError, match="diverged"):
        predict(eom, [1e3], [0.0], 1.0, 0.01)


def test_predict_rejects_bad_arguments():
    eom = EquationOfMotion(((("x1", 1.0),),))
    with pytest.raises(TransformError):
        predict(eom, [1.0], [0.0], 1.0, 0.0)
    with pytest.raises(TransformError):
        predict(eom, [1.0, 2.0], [0.0], 1.0, 0.1)


# -- posterior band --------------------------------------------------------------------------


def test_band_collapses_without_uncertainty():
    dl = make_dl({"xdot1^2": 0.5, "x1^2": -500.0, "x1^4": -1250.0}, 1, std=0.0)
    band = posterior_predict_band(dl, [0.3], [0.0], 0.2, 1e-3, 5, 0)
    ref = predict(equations_of_motion(dl), [0.3], [0.0], 0.2, 1e-3)
    for part in band:
        assert np.allclose(part.states, ref.states, atol=1e-12)


def test_band_mean_converges_to_point_prediction():
    ref = None
    gaps = []
    for std in (1.0, 0.1, 0.01):
        dl = make_dl({"xdot1^2": 0.5, "x1^2": -500.0}, 1, std=std)
        ref = predict(equations_of_motion(dl), [0.3], [0.0], 0.2, 1e-3)
        band = posterior_predict_band(dl, [0.3], [0.0], 0.2, 1e-3, 40, 1)
        gaps.append(np.max(np.abs(band.mean.states - ref.states)))
    assert gaps[2] < gaps[1] < gaps[0]


def test_single_draw_band():
    band = posterior_predict_band(discovered("duffing"), [0.35], [0.0], 0.1, 5e-4, 1, 3)
    assert np.array_equal(band.mean.states, band.lower.states)
    assert np.array_equal(band.mean.states, band.upper.states)
    assert band.n_used == 1 and band.n_diverged == 0


def test_band_spills_large_draw_sets_to_disk(monkeypatch):
    from lagrangian_sbl import transforms

    dl = discovered("chain")
    args = (dl, [1.0, 2.0, 3.0], [0.0, 0.0, 0.0], 0.3, 1e-3, 20, 5)
    ref = posterior_predict_band(*args)
    monkeypatch.setattr(transforms, "BAND_MEMORY_LIMIT", 4096)
    small = posterior_predict_band(*args)
    for a, b in zip(ref, small):
        assert np.array_equal(a.states, b.states) and np.array_equal(a.velocities, b.velocities)


def test_duffing_band_covers_truth():
    spec = paper_spec("duffing")
    truth = clean_data("duffing")
    T = spec.T - spec.dt
    band = posterior_predict_band(discovered("duffing"), spec.x0, spec.v0, T, spec.dt, 100, 0, substeps=10)
    x = truth.states[: band.mean.n_samples, 0]
    inside = (band.lower.states[:, 0] <= x) & (x <= band.upper.states[:, 0])
    assert inside.mean() > 0.95


def test_diverging_draws_are_counted():
    # a huge spread on a stabilising term makes some draws unstable
    dl = make_dl({"xdot1^2": 0.5, "x1^2": -0.5, "x1^4": -1.0}, 1, std=2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        band = posterior_predict_band(dl, [3.0], [0.0], 5.0, 0.01, 40, 2)
    assert band.n_diverged > 0 and band.n_used + band.n_diverged == 40


# -- chain generalization ------------------------------------------------------------------------


def _paper_chain():
    return make_dl({"xdot1^2": 0.5, "xdot2^2": 0.5, "xdot3^2": 0.5, "x1^2": -2497.68,
                    "(x2-x1)^2": -2497.41, "(x3-x2)^2": -2497.41}, 3)


def test_generalize_reproduces_pooled_values():
    g = generalize_chain(_paper_chain(), 3)
    assert g.coefficients() == {"xdot1^2": 0.5, "xdot2^2": 0.5, "xdot3^2": 0.5, "x1^2": -2497.68,
                                "(x2-x1)^2": -2497.41, "(x3-x2)^2": -2497.41}


def test_generalize_smallest_chain():
    g = generalize_chain(_paper_chain(), 2)
    assert sorted(g.coefficients()) == ["(x2-x1)^2", "x1^2", "xdot1^2", "xdot2^2"]
    assert [len(t) for t in g.per_dof] == [3, 2]


def test_generalize_averages_differences():
    dl = make_dl({"xdot1^2": 0.5, "xdot2^2": 0.5, "xdot3^2": 0.5, "x1^2": -2500.0,
                  "(x2-x1)^2": -2490.0, "(x3-x2)^2": -2510.0}, 3)
    g = generalize_chain(dl, 50)
    assert g.term("(x50-x49)^2").coefficient_mean == pytest.approx(-2500.0)
    assert g.n_dof == 50 and g.provenance["generalized"]["n"] == 50
    truth = true_lagrangian(paper_spec("chain").__class__.from_mapping(
        {"name": "chain", "params": {"n": 50}, "x0": [0.0] * 50, "v0": [0.0] * 50}))
    assert relative_l2_error(g, truth) < 1e-9


def test_generalize_rejects_other_structures():
    with pytest.raises(TransformError):
        generalize_chain(discovered("duffing"), 5)
    with pytest.raises(TransformError):
        generalize_chain(_paper_chain(), 1)
