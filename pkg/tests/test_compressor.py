"""Dynamic-model tests: stage operating points, balance equations, the
assembled equation set, and the Euler propagator."""

import math

import numpy as np
import pytest

from compmon.compressor import (
    CompressorGeometry,
    CompressorModel,
    DegenerateOperatingPointError,
    ModelInput,
    StateLayout,
    _polytropic_work,
    pipe_rhs,
    sensor_rhs,
    stage_operating_point,
    stage_temperature_rhs,
)
from compmon.perfmap import interp_coeffs, map_lookup
from compmon.realgas import ThermoStateTV, props_tp, props_tv
from tests.conftest import SUCTION_P, SUCTION_T


# ---------------------------------------------------------------------------
# Polytropic work and exponent
# ---------------------------------------------------------------------------


def test_volume_exponent_from_ratios():
    nv, _ = _polytropic_work(1.0, 1.0, 4.0, 0.5, 1.0)
    assert nv == pytest.approx(2.0)


def test_equal_pressures_zero_work():
    nv, yp = _polytropic_work(1.3, 0.6, 1.3, 0.55, 12345.0)
    assert yp == 0.0


def test_polytropic_work_closed_form():
    # compare against the textbook expression away from singular exponents
    pr1, vr1, pr2, vr2, rt = 1.2, 0.62, 1.65, 0.52, 57500.0
    nv, yp = _polytropic_work(pr1, vr1, pr2, vr2, rt)
    expected = pr1 * vr1 * nv / (nv - 1.0) * ((pr2 / pr1) ** ((nv - 1.0) / nv) - 1.0) * rt
    assert yp == pytest.approx(expected, rel=1e-12)


def test_isothermal_exponent_limit():
    # pr2*vr2 == pr1*vr1 makes nv == 1; the limit form must kick in
    pr1, vr1 = 1.2, 0.6
    pr2 = 1.5
    vr2 = pr1 * vr1 / pr2
    nv, yp = _polytropic_work(pr1, vr1, pr2, vr2, 1.0)
    assert nv == pytest.approx(1.0)
    assert yp == pytest.approx(pr1 * vr1 * math.log(pr2 / pr1), rel=1e-9)


def test_degenerate_operating_point_raises():
    with pytest.raises(DegenerateOperatingPointError):
        _polytropic_work(1.5, 0.5, 1.2, 0.6, 1.0)


# ---------------------------------------------------------------------------
# Stage operating point vs straight-line oracle
# ---------------------------------------------------------------------------


def test_stage_operating_point_golden(co2, testbed):
    model, u, _ = testbed
    grid = model.grids[0]
    d2 = model.geometry.d2[0]
    speed = 250.0
    tr_suc = SUCTION_T / co2.tc
    pr_suc = SUCTION_P / co2.pc
    suction_tp = props_tp(co2, tr_suc, pr_suc)
    trf_stage = tr_suc + 0.045
    pr2 = 1.72

    op = stage_operating_point(
        co2,
        grid,
        ThermoStateTV(tr_suc, suction_tp.vr),
        pr2,
        trf_stage,
        speed,
        d2,
        dphi=1e-3,
        dmu=-2e-3,
    )

    # independent straight-line composition of the six steps
    u2 = math.pi * speed * d2
    mach = u2 / suction_tp.a
    disc = props_tp(co2, trf_stage, pr2)
    nv = -math.log(pr2 / pr_suc) / math.log(disc.vr / suction_tp.vr)
    yp = (
        pr_suc
        * suction_tp.vr
        * nv
        / (nv - 1.0)
        * ((pr2 / pr_suc) ** ((nv - 1.0) / nv) - 1.0)
        * co2.r_specific
        * co2.tc
    )
    psi_p = 2.0 * yp / u2**2
    phi_map, mu_map = map_lookup(grid, interp_coeffs(grid, mach, psi_p))
    mdot = (phi_map + 1e-3) / suction_tp.vr * 0.25 * math.pi * d2**2 * u2 * co2.pc / (
        co2.r_specific * co2.tc
    )
    dh = (mu_map - 2e-3) * u2**2

    assert op.mach == pytest.approx(mach, rel=1e-12)
    assert op.nv == pytest.approx(nv, rel=1e-9)
    assert op.psi_p == pytest.approx(psi_p, rel=1e-9)
    assert op.phi == pytest.approx(phi_map + 1e-3, rel=1e-9)
    assert op.mu == pytest.approx(mu_map - 2e-3, rel=1e-9)
    assert op.mdot == pytest.approx(mdot, rel=1e-9)
    assert op.dh == pytest.approx(dh, rel=1e-9)
    assert op.eta_p == pytest.approx(op.psi_p / (2.0 * op.mu), rel=1e-14)


def test_stage_accepts_discharge_state(co2, testbed):
    model, _, x0 = testbed
    lay = model.layout
    suction = ThermoStateTV(x0[lay.pipe_trf(0)], x0[lay.pipe_vr(0)])
    discharge = ThermoStateTV(x0[lay.pipe_trf(1)], x0[lay.pipe_vr(1)])
    op = stage_operating_point(
        co2, model.grids[0], suction, discharge, x0[lay.stage_trf(1)], 250.0, 0.25
    )
    assert op.pr2 == pytest.approx(props_tv(co2, discharge.tr, discharge.vr).pr, rel=1e-12)


# ---------------------------------------------------------------------------
# Component balance equations
# ---------------------------------------------------------------------------


def test_stage_temperature_rhs_zero_at_convergence(co2):
    assert stage_temperature_rhs(30.0, -0.8, 0.3, -0.5, 0.5, 4.5, 0.03, co2) == 0.0


def test_stage_temperature_rhs_sign_and_magnitude(co2):
    val = stage_temperature_rhs(30.0, -0.8, 0.4, -0.5, 0.5, 4.5, 0.03, co2)
    expected = 30.0 * 0.1 * 0.5 / (0.03 * 4.5) * (co2.r_specific * co2.tc / co2.pc)
    assert val == pytest.approx(expected, rel=1e-14)
    assert val > 0.0
    # negative mass flow enters with its magnitude
    val_neg = stage_temperature_rhs(-30.0, -0.8, 0.4, -0.5, 0.5, 4.5, 0.03, co2)
    assert val_neg == pytest.approx(val)


def test_pipe_equilibrium(co2):
    state = ThermoStateTV(1.21, 0.52)
    props = props_tv(co2, state.tr, state.vr)
    dtrf, dvr = pipe_rhs(state, (25.0, props.hr), (25.0, props.hr), 0.0, 3.0, co2)
    assert dtrf == pytest.approx(0.0, abs=1e-15)
    assert dvr == pytest.approx(0.0, abs=1e-15)


def test_pipe_filling_reduces_specific_volume(co2):
    state = ThermoStateTV(1.21, 0.52)
    props = props_tv(co2, state.tr, state.vr)
    _, dvr = pipe_rhs(state, (30.0, props.hr), (25.0, props.hr), 0.0, 3.0, co2)
    assert dvr < 0.0


def test_pipe_step_response_matches_fine_reference(co2):
    # enthalpy step at the inlet, balanced mass flow: integrate the same RHS
    # at two very different substeps
    def integrate(dt):
        tr, vr = 1.21, 0.52
        hr_in = props_tv(co2, 1.26, 0.54).hr
        t = 0.0
        while t < 10.0 - 1e-9:
            dtrf, dvr = pipe_rhs(ThermoStateTV(tr, vr), (25.0, hr_in), (25.0, 0.0), 0.0, 3.0, co2)
            tr += dt * dtrf
            vr += dt * dvr
            t += dt
        return tr, vr

    tr_fine, vr_fine = integrate(1e-3)
    tr_coarse, vr_coarse = integrate(5e-2)
    assert tr_coarse == pytest.approx(tr_fine, rel=1e-4)
    assert vr_coarse == pytest.approx(vr_fine, rel=1e-4)


def test_pipe_mass_bookkeeping(co2):
    # isolated pipe: integrated mass equals initial plus net inflow
    tr, vr = 1.21, 0.52
    volume = 3.0
    spec_vol = lambda v: v * co2.r_specific * co2.tc / co2.pc
    mass0 = volume / spec_vol(vr)
    net = 0.0
    dt = 1e-3
    hr_in = props_tv(co2, 1.24, 0.5).hr
    for k in range(int(100.0 / dt)):
        mdot_in = 25.0 + 3.0 * math.sin(2 * math.pi * k * dt / 17.0)
        mdot_out = 25.0
        dtrf, dvr = pipe_rhs(ThermoStateTV(tr, vr), (mdot_in, hr_in), (mdot_out, 0.0), 0.0, volume, co2)
        tr += dt * dtrf
        vr += dt * dvr
        net += dt * (mdot_in - mdot_out)
    mass_end = volume / spec_vol(vr)
    assert mass_end == pytest.approx(mass0 + net, rel=1e-6)


def test_sensor_first_order_responses():
    assert sensor_rhs(1.2, 1.2, 10.0) == 0.0
    # step response: 63.2 percent risen at t = tau
    trs, dt, tau = 0.0, 1e-3, 10.0
    for _ in range(int(tau / dt)):
        trs += dt * sensor_rhs(1.0, trs, tau)
    assert trs == pytest.approx(1.0 - math.exp(-1.0), abs=1e-3)
    # ramp response: steady lag of tau * slope
    slope = 0.01
    trs, t = 0.0, 0.0
    for _ in range(int(8 * tau / dt)):
        trs += dt * sensor_rhs(slope * t, trs, tau)
        t += dt
    assert slope * t - trs == pytest.approx(tau * slope, rel=1e-2)


# ---------------------------------------------------------------------------
# Assembled equation set
# ---------------------------------------------------------------------------


def test_constant_state_entries_zero(testbed, rng):
    model, u, x0 = testbed
    lay = model.layout
    for _ in range(5):
        x = x0 * (1.0 + 0.02 * rng.standard_normal(x0.size))
        x = model.box_clip(x)
        dx = model.rhs(x, u)
        assert dx[lay.pipe_trf(0)] == 0.0
        assert dx[lay.pipe_vr(0)] == 0.0
        for i in (1, 2):
            assert dx[lay.stage_dmu(i)] == 0.0
            assert dx[lay.stage_dphi(i)] == 0.0


def test_rhs_matches_component_composition(co2, testbed):
    model, u, x0 = testbed
    lay = model.layout
    geo = model.geometry
    x = x0.copy()
    dx = model.rhs(x, u)

    p0 = props_tv(co2, x[lay.pipe_trf(0)], x[lay.pipe_vr(0)])
    p1 = props_tv(co2, x[lay.pipe_trf(1)], x[lay.pipe_vr(1)])
    op1 = stage_operating_point(
        co2,
        model.grids[0],
        ThermoStateTV(x[lay.pipe_trf(0)], x[lay.pipe_vr(0)]),
        p1.pr,
        x[lay.stage_trf(1)],
        u[0],
        geo.d2[0],
        dphi=x[lay.stage_dphi(1)],
        dmu=x[lay.stage_dmu(1)],
    )
    op2 = stage_operating_point(
        co2,
        model.grids[1],
        ThermoStateTV(x[lay.pipe_trf(1)], x[lay.pipe_vr(1)]),
        u[-1] / co2.pc,
        x[lay.stage_trf(2)],
        u[1],
        geo.d2[1],
        dphi=x[lay.stage_dphi(2)],
        dmu=x[lay.stage_dmu(2)],
    )
    assert dx[lay.stage_trf(1)] == pytest.approx(
        stage_temperature_rhs(op1.mdot, op1.hr1, op1.dhr, op1.hr2, op1.vr2, op1.cvr2, geo.v2[0], co2),
        rel=1e-9,
    )
    assert dx[lay.stage_trf(2)] == pytest.approx(
        stage_temperature_rhs(op2.mdot, op2.hr1, op2.dhr, op2.hr2, op2.vr2, op2.cvr2, geo.v2[1], co2),
        rel=1e-9,
    )
    dtrf, dvr = pipe_rhs(
        ThermoStateTV(x[lay.pipe_trf(1)], x[lay.pipe_vr(1)]),
        (op1.mdot, op1.hr2),
        (op2.mdot, 0.0),
        0.0,
        geo.pipe_volume[1],
        co2,
    )
    assert dx[lay.pipe_trf(1)] == pytest.approx(dtrf, rel=1e-9)
    assert dx[lay.pipe_vr(1)] == pytest.approx(dvr, rel=1e-9)
    assert dx[lay.pipe_trs(1)] == pytest.approx(
        sensor_rhs(x[lay.pipe_trf(1)], x[lay.pipe_trs(1)], geo.tau_pipe[1])
    )


def test_steady_state_derivatives_vanish(testbed, steady_state):
    model, u, _ = testbed
    dx = model.rhs(steady_state, u)
    assert np.max(np.abs(dx)) < 1e-8


def test_stage_energy_fixed_point_at_steady_state(testbed, steady_state):
    model, u, _ = testbed
    ops = model.operating_points(steady_state, u)
    for op in ops:
        assert abs(op.hr1 + op.dhr - op.hr2) < 1e-8


def test_operating_point_efficiency_identity(testbed, steady_state, rng):
    model, u, _ = testbed
    for _ in range(5):
        x = steady_state * (1.0 + 0.01 * rng.standard_normal(steady_state.size))
        x = model.box_clip(x)
        for op in model.operating_points(x, u):
            assert op.eta_p == pytest.approx(op.psi_p / (2.0 * op.mu), rel=1e-13)


def test_output_vector(co2, testbed, steady_state):
    model, u, _ = testbed
    lay = model.layout
    y = model.output(steady_state, u)
    assert y.size == 7  # 1 + 3N for N = 2
    assert y[lay.out_pipe_ts(0)] == pytest.approx(steady_state[lay.pipe_trs(0)] * co2.tc)
    p1 = props_tv(co2, steady_state[lay.pipe_trf(1)], steady_state[lay.pipe_vr(1)])
    assert y[lay.out_pipe_p(1)] == pytest.approx(p1.pr * co2.pc, rel=1e-12)
    ops = model.operating_points(steady_state, u)
    assert y[lay.out_mdot()] == pytest.approx(ops[0].mdot, rel=1e-12)


def test_output_scaling_identity(co2, testbed, steady_state):
    model, u, _ = testbed
    lay = model.layout
    x = steady_state.copy()
    x[lay.stage_trs(1)] = 1.0
    y = model.output(x, u)
    assert y[lay.out_stage_ts(1)] == pytest.approx(co2.tc)


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------


def test_propagate_steady_state_unchanged(testbed, steady_state):
    model, u, _ = testbed
    x1 = model.propagate(steady_state, u, u, dt_macro=1.0, dt_micro=0.05)
    assert np.max(np.abs(x1 - steady_state)) < 1e-12


def test_propagate_step_halving_convergence(testbed, steady_state):
    model, u, _ = testbed
    u_hi = u.copy()
    u_hi[0] *= 1.04
    u_hi[1] *= 1.04
    u_hi[-1] *= 1.02

    def run(dt_micro):
        x = steady_state.copy()
        for k in range(60):
            frac0 = k / 60.0
            frac1 = (k + 1) / 60.0
            u0 = u + frac0 * (u_hi - u)
            u1 = u + frac1 * (u_hi - u)
            x = model.propagate(x, u0, u1, dt_macro=1.0, dt_micro=dt_micro)
        return x

    x_coarse = run(0.05)
    x_fine = run(0.025)
    rel = np.abs(x_coarse - x_fine) / np.maximum(np.abs(x_fine), 1e-6)
    assert np.max(rel) < 1e-3


def test_propagate_input_interpolation_matches_exact_ramp(testbed, steady_state):
    model, u, _ = testbed
    u_next = u.copy()
    u_next[0] += 5.0
    u_next[1] += 5.0
    x_interp = model.propagate(steady_state, u, u_next, dt_macro=1.0, dt_micro=0.05)
    # manual integration with the exact (linear) input trajectory
    x = steady_state.copy()
    for k in range(20):
        frac = k * 0.05
        u_star = (1.0 - frac) * u + frac * u_next
        x = x + 0.05 * model.rhs(x, u_star)
        x = model.box_clip(x)
    assert np.max(np.abs(x_interp - x)) < 1e-12


def test_propagate_states_stay_in_domain(testbed, steady_state, rng):
    model, u, _ = testbed
    lo, hi = model.bounds.arrays(model.layout)
    x = steady_state * (1.0 + 0.03 * rng.standard_normal(steady_state.size))
    x = model.box_clip(x)
    for _ in range(10):
        x = model.propagate(x, u, u, dt_macro=1.0, dt_micro=0.05)
        assert np.all(x >= lo - 1e-15)
        assert np.all(x <= hi + 1e-15)


def test_propagate_rejects_bad_substep():
    with pytest.raises(ValueError):
        make_model_for_errors().propagate(np.zeros(14), np.ones(3), np.ones(3), 1.0, 2.0)


def make_model_for_errors():
    from tests.conftest import make_testbed

    return make_testbed()[0]


# ---------------------------------------------------------------------------
# Plumbing
# ---------------------------------------------------------------------------


def test_geometry_validation():
    with pytest.raises(ValueError):
        CompressorGeometry(2, (0.25,), (0.03, 0.02), (3.0, 3.0, 2.0), (10.0, 10.0), (10.0, 10.0))
    with pytest.raises(ValueError):
        CompressorGeometry(
            2, (0.25, -0.24), (0.03, 0.02), (3.0, 3.0, 2.0), (10.0, 10.0), (10.0, 10.0)
        )


def test_model_input_round_trip():
    u = ModelInput(speeds=(250.0, 251.0), discharge_pressure=1.5e7)
    back = ModelInput.from_array(u.as_array())
    assert back == u
    with pytest.raises(ValueError):
        ModelInput(speeds=(0.0, 1.0), discharge_pressure=1e5)


def test_state_layout_names():
    lay = StateLayout(2)
    names = lay.state_names()
    assert len(names) == lay.n_states == 14
    assert names[0] == "P0_trf"
    assert names[lay.stage_dmu(2)] == "S2_dmu"
    assert lay.output_names()[-1] == "Ts_S2"
