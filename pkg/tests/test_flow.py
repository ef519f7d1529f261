import math
from dataclasses import replace

import mpmath
import numpy as np
import pytest

from chflow.diagnostics import l2_distance
from chflow.flow import (
    BlowUpError,
    FlowState,
    SolverConfig,
    biharmonic_propagate,
    linf_semigroup_probe,
    nonlinear_cfl,
    phi1,
    phi2,
    rhs_galerkin,
    rk4_stable,
    solve,
    step_etd,
    step_galerkin_rk4,
)
from chflow.initial import random_field
from chflow.potentials import double_well, zero_potential
from chflow.initial import tanh_front
from chflow.spectral import RealField, SpectralField, ball_mask, forward, make_grid

from conftest import constant, cosine, random_real


def state_of(u):
    return FlowState(0.0, forward(u), 0)


# -- linear propagator -----------------------------------------------------------


def test_propagate_zero_time_identity(grid8):
    F = forward(random_real(grid8, 1))
    assert np.array_equal(biharmonic_propagate(F, 0.0).coeffs, F.coeffs)


def test_propagate_ln2_halves_unit_mode(grid8):
    F = forward(cosine(grid8, (0, 0, 1), mean=0.3))
    G = biharmonic_propagate(F, math.log(2))
    assert G[(0, 0, 1)] == pytest.approx(0.25, rel=1e-15)
    assert G[(0, 0, 0)] == F[(0, 0, 0)]


def test_propagate_semigroup(grid8):
    F = forward(random_real(grid8, 2))
    a = biharmonic_propagate(biharmonic_propagate(F, 0.013), 0.021)
    b = biharmonic_propagate(F, 0.034)
    scale = np.max(np.abs(b.coeffs))
    assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-14 * scale


def test_propagate_rejects_negative(grid8):
    with pytest.raises(ValueError):
        biharmonic_propagate(forward(random_real(grid8)), -1e-3)


# -- right-hand side -----------------------------------------------------------------


def test_rhs_constant_is_zero(grid8):
    r = rhs_galerkin(state_of(constant(grid8, 0.4)), double_well())
    assert np.max(np.abs(r.coeffs)) < 1e-14


def test_rhs_zero_potential_is_minus_biharmonic(grid8):
    F = forward(random_real(grid8, 3))
    r = rhs_galerkin(FlowState(0.0, F, 0), zero_potential())
    np.testing.assert_allclose(r.coeffs, -grid8.xi4 * F.coeffs, rtol=1e-14, atol=0)


@pytest.mark.parametrize("rule", ["two_thirds", "padded(3)"])
@pytest.mark.parametrize("k", [(1, 0, 0), (1, 1, 0), (2, 1, 0)])
def test_rhs_linearization_double_well(grid16, rule, k):
    eps = 1e-6
    F = forward(cosine(grid16, k, eps))
    r = rhs_galerkin(FlowState(0.0, F, 0), double_well(), rule=rule)
    xi2 = sum(v * v for v in k)
    expected = (-(xi2**2) + 4 * xi2) * eps / 2
    assert r[k].real == pytest.approx(expected, rel=1e-10, abs=1e-18)


def test_rhs_supported_in_ball(grid16):
    F = forward(random_real(grid16, 4))
    r = rhs_galerkin(FlowState(0.0, F, 0), double_well(), n=3.0)
    assert not r.coeffs[~ball_mask(grid16, 3.0)].any()


# -- phi functions ----------------------------------------------------------------------


def test_phi_functions_against_high_precision():
    z = np.array([-50.0, -3.0, -0.5, -0.1000001, -0.0999999, -1e-3, -1e-9, 0.0, 1e-6, 0.05])
    mpmath.mp.dps = 40
    for zi, a, b in zip(z, phi1(z), phi2(z)):
        zm = mpmath.mpf(float(zi))
        e1 = 1 if zi == 0 else (mpmath.exp(zm) - 1) / zm
        e2 = mpmath.mpf(1) / 2 if zi == 0 else (mpmath.exp(zm) - 1 - zm) / zm**2
        assert a == pytest.approx(float(e1), rel=1e-14)
        assert b == pytest.approx(float(e2), rel=1e-14)


# -- single steps ---------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["galerkin_rk4", "etd1", "etdrk2"])
def test_zero_field_fixed_point(grid8, scheme):
    cfg = SolverConfig(scheme, 1e-4, 1e-4)
    s = state_of(constant(grid8, 0.0))
    step = step_galerkin_rk4 if scheme == "galerkin_rk4" else step_etd
    out = step(s, double_well(), cfg)
    assert not out.u_hat.coeffs.any()
    assert out.step_count == 1 and out.t == 1e-4


@pytest.mark.parametrize("scheme", ["galerkin_rk4", "etd1", "etdrk2"])
def test_dc_preserved_exactly(grid8, scheme):
    u = random_real(grid8, 5, 0.3)
    s = state_of(RealField(grid8, u.samples + 0.2))
    cfg = SolverConfig(scheme, 1e-5, 1e-5)
    step = step_galerkin_rk4 if scheme == "galerkin_rk4" else step_etd
    out = step(s, double_well(), cfg)
    assert out.u_hat.coeffs[0, 0, 0] == s.u_hat.coeffs[0, 0, 0]


@pytest.mark.parametrize("scheme", ["etd1", "etdrk2"])
@pytest.mark.parametrize("dt", [1e-4, 0.37, 5.0])
def test_etd_linear_limit_exact(grid8, scheme, dt):
    F = forward(random_real(grid8, 6))
    out = step_etd(FlowState(0.0, F, 0), zero_potential(), SolverConfig(scheme, dt, dt))
    exact = biharmonic_propagate(F, dt)
    scale = np.max(np.abs(exact.coeffs))
    assert np.max(np.abs(out.u_hat.coeffs - exact.coeffs)) <= 1e-13 * scale


def test_rk4_one_step_error_order_five(grid8):
    # [DERIVED] per-step error against the exact propagator for |xi|^4 = 16
    F = forward(cosine(grid8, (2, 0, 0)))
    dts = np.array([2e-3, 4e-3, 8e-3, 1.6e-2])
    errs = []
    for dt in dts:
        out = step_galerkin_rk4(FlowState(0.0, F, 0), zero_potential(),
                                SolverConfig("galerkin_rk4", dt, dt))
        errs.append(abs(out.u_hat[(2, 0, 0)] - biharmonic_propagate(F, dt)[(2, 0, 0)]))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(5.0, abs=0.2)


def test_cutoff_confinement(grid16):
    u = random_real(grid16, 7, 0.3)
    for scheme in ("galerkin_rk4", "etd1", "etdrk2"):
        cfg = SolverConfig(scheme, 1e-4, 3e-4, n_cutoff=3.5)
        state, _, _ = solve(u, double_well(), cfg)
        assert not state.u_hat.coeffs[~ball_mask(grid16, 3.5)].any()


def test_step_etd_rejects_rk4(grid8):
    with pytest.raises(ValueError):
        step_etd(state_of(constant(grid8, 0)), double_well(), SolverConfig("galerkin_rk4", 1, 1))


# -- solve -------------------------------------------------------------------------------


def test_solve_zero_time(grid8):
    u = random_real(grid8, 8, 0.1)
    state, records, snaps = solve(u, double_well(), SolverConfig("etdrk2", 1e-3, 0.0))
    assert state.step_count == 0 and len(records) == 1 and snaps == []
    np.testing.assert_array_equal(state.u_hat.coeffs, forward(u).coeffs)


def test_solve_record_schedule(grid8):
    cfg = SolverConfig("etdrk2", 1e-3, 0.01, record_every=4)
    _, records, snaps = solve(random_real(grid8, 9, 0.1), double_well(), cfg, snapshot_every=5)
    assert [round(r.t, 9) for r in records] == [0.0, 0.004, 0.008, 0.01]
    assert [s.step_count for s in snaps] == [0, 5, 10]


def test_solve_single_mode_linear(grid16):
    u = cosine(grid16, (1, 1, 0), 0.8)
    state, _, _ = solve(u, zero_potential(), SolverConfig("etdrk2", 0.01, 0.5))
    exact = 0.4 * math.exp(-0.5 * 4)
    assert state.u_hat[(1, 1, 0)].real == pytest.approx(exact, rel=1e-12)


def test_solve_observer_sees_every_state(grid8):
    seen = []
    solve(random_real(grid8, 1, 0.1), double_well(), SolverConfig("etd1", 1e-3, 5e-3),
          observer=lambda s: seen.append(s.step_count))
    assert seen == [0, 1, 2, 3, 4, 5]


def test_solve_deterministic(grid16):
    u = random_field(grid16, 0.0, 0.2, seed=3, smoothing=2.0)
    cfg = SolverConfig("etdrk2", 1e-3, 0.02, record_every=5)
    a = solve(u, double_well(), cfg)[1]
    b = solve(u, double_well(), cfg)[1]
    assert [r.values() for r in a] == [r.values() for r in b]


def test_blow_up_carries_partial_output(grid8):
    u = random_real(grid8, 2, 5.0)
    cfg = SolverConfig("etd1", 0.5, 50.0)
    with pytest.raises(BlowUpError) as info:
        solve(u, double_well(), cfg, snapshot_every=1)
    exc = info.value
    assert exc.records and exc.records[0].t == 0.0
    assert exc.state is not None and np.all(np.isfinite(exc.state.u_hat.coeffs))
    assert "blow-up" in str(exc)


def test_etdrk2_second_order(grid16):
    # [DERIVED] self-convergence against a dt/8 reference, 16^3 double well to T=0.1
    u = random_field(grid16, 0.0, 0.5, seed=11, smoothing=2.0)
    spec = double_well()
    dt = 2e-3
    ref = solve(u, spec, SolverConfig("etdrk2", dt / 8, 0.1))[0].u_hat
    e1 = l2_distance(solve(u, spec, SolverConfig("etdrk2", dt, 0.1))[0].u_hat, ref)
    e2 = l2_distance(solve(u, spec, SolverConfig("etdrk2", dt / 2, 0.1))[0].u_hat, ref)
    assert e1 / e2 == pytest.approx(4.0, rel=0.3)


def test_etd1_first_order(grid16):
    u = random_field(grid16, 0.0, 0.5, seed=11, smoothing=2.0)
    spec = double_well()
    dt = 2e-3
    ref = solve(u, spec, SolverConfig("etdrk2", dt / 16, 0.1))[0].u_hat
    e1 = l2_distance(solve(u, spec, SolverConfig("etd1", dt, 0.1))[0].u_hat, ref)
    e2 = l2_distance(solve(u, spec, SolverConfig("etd1", dt / 2, 0.1))[0].u_hat, ref)
    assert e1 / e2 == pytest.approx(2.0, rel=0.2)


def test_rk4_agrees_with_etdrk2_under_cutoff(grid16):
    u = random_field(grid16, 0.0, 0.5, seed=4, smoothing=1.5)
    spec = double_well()
    a = solve(u, spec, SolverConfig("galerkin_rk4", 1e-4, 0.05, n_cutoff=4))[0].u_hat
    b = solve(u, spec, SolverConfig("etdrk2", 1e-4, 0.05, n_cutoff=4))[0].u_hat
    assert l2_distance(a, b) < 1e-6 * l2_distance(a, SpectralField(grid16, 0 * a.coeffs))


# -- config and stability screens ------------------------------------------------------------


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("euler", 1e-3, 1.0)
    with pytest.raises(ValueError):
        SolverConfig("etdrk2", 0.0, 1.0)
    with pytest.raises(ValueError):
        SolverConfig("etdrk2", 1e-3, -1.0)
    with pytest.raises(ValueError):
        SolverConfig("etdrk2", 1e-3, 1.0, record_every=0)
    with pytest.raises(ValueError):
        SolverConfig("etdrk2", 3e-3, 0.01).n_steps
    assert SolverConfig("etdrk2", 1e-4, 1.0).n_steps == 10_000


def test_rk4_stability_screen(grid16):
    corner = (math.sqrt(3) * 8) ** 4
    assert rk4_stable(grid16, SolverConfig("galerkin_rk4", 2.7 / corner, 0.0))
    assert not rk4_stable(grid16, SolverConfig("galerkin_rk4", 2.9 / corner, 0.0))
    assert rk4_stable(grid16, SolverConfig("galerkin_rk4", 2.7 / 81, 0.0, n_cutoff=3))


def test_nonlinear_cfl(grid16):
    cfg = SolverConfig("etdrk2", 1e-3, 0.0, n_cutoff=2)
    # max |phi'(u)| at u = 0 is 4
    assert nonlinear_cfl(grid16, cfg, constant(grid16, 0.0), double_well()) == pytest.approx(
        1e-3 * 4 * 4)


# -- semigroup probe ----------------------------------------------------------------------------


def test_probe_constant_no_violation(grid16):
    r = linf_semigroup_probe(constant(grid16, 0.7), 1.0, 101)
    assert r.first_violation is None and r.as_dict()["empirical_T1"] == 1.0


def test_probe_single_mode_no_violation(grid16):
    r = linf_semigroup_probe(cosine(grid16, (1, 2, 0), 0.5), 1.0, 101)
    assert r.first_violation is None
    assert np.all(np.diff(r.linf) < 0)


def test_probe_detects_overshoot():
    g = make_grid(32, 4 * math.pi)

    r = linf_semigroup_probe(tanh_front(g, 1.0), 1.0, 101)
    assert r.first_violation == pytest.approx(0.01)
    assert r.as_dict()["max_linf"] > r.linf0


def test_probe_preconditions(grid8):
    with pytest.raises(ValueError):
        linf_semigroup_probe(constant(grid8, 1), 0.0)
    with pytest.raises(ValueError):
        linf_semigroup_probe(constant(grid8, 1), 1.0, samples=1)


def test_config_replace_keeps_rule():
    cfg = SolverConfig("etdrk2", 1e-3, 1.0, dealias="padded(3)")
    assert str(replace(cfg, n_cutoff=4).dealias) == "padded(3)"

