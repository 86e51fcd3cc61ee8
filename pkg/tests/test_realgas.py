"""Property-engine tests: sub-equation kernels, both solution approaches,
and thermodynamic consistency of the assembled surfaces."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compmon import realgas
from compmon.realgas import (
    ConvergenceError,
    FluidSpec,
    ValidityError,
    bwrs_pressure,
    bwrs_volume_derivs,
    props_tp,
    props_tv,
    solve_pressure_explicit,
    solve_volume_explicit,
)

# Golden sub-equation pressures, frozen from a 50-digit mpmath transcription
# of the published coefficient tables (see oracle note in the repo tests).
GOLDEN_PR_SIMPLE_12_2 = 0.53515051630050844849
GOLDEN_PR_REFERENCE_12_2 = 0.54112106142946014001

SUPERCRIT_TR = np.linspace(1.0, 1.6, 10)
SUPERCRIT_VR = np.linspace(0.5, 5.0, 10)


def test_ideal_gas_limit_compressibility():
    pr = bwrs_pressure("simple", 2.0, 1000.0)
    assert pr * 1000.0 / 2.0 == pytest.approx(1.0, abs=1e-3)


def test_golden_bwrs_values():
    assert bwrs_pressure("simple", 1.2, 2.0) == pytest.approx(GOLDEN_PR_SIMPLE_12_2, rel=1e-14)
    assert bwrs_pressure("reference", 1.2, 2.0) == pytest.approx(
        GOLDEN_PR_REFERENCE_12_2, rel=1e-14
    )


def test_domain_violation_raises():
    with pytest.raises(ValidityError):
        bwrs_pressure("reference", 0.2, 1.0)
    with pytest.raises(ValidityError):
        bwrs_pressure("simple", 5.0, 1.0)
    with pytest.raises(ValidityError):
        bwrs_pressure("simple", 1.0, -1.0)


@pytest.mark.parametrize("kind", ["simple", "reference"])
def test_volume_derivatives_match_finite_differences(kind):
    for tr in SUPERCRIT_TR:
        for vr in SUPERCRIT_VR:
            h = 1e-6 * vr
            d1, d2 = bwrs_volume_derivs(kind, tr, vr)
            fd1 = (bwrs_pressure(kind, tr, vr + h) - bwrs_pressure(kind, tr, vr - h)) / (2.0 * h)
            assert d1 == pytest.approx(fd1, rel=1e-6)
            # Wider step for the second difference: with 1e-6*vr the oracle
            # itself carries ~1e-4 roundoff.
            h2 = 1e-4 * vr
            fd2 = (
                bwrs_pressure(kind, tr, vr + h2)
                - 2.0 * bwrs_pressure(kind, tr, vr)
                + bwrs_pressure(kind, tr, vr - h2)
            ) / (h2 * h2)
            assert d2 == pytest.approx(fd2, rel=1e-4, abs=1e-8)


def test_volume_derivative_ideal_limit():
    d1, _ = bwrs_volume_derivs("simple", 2.0, 1000.0)
    assert d1 == pytest.approx(-2.0 / 1000.0**2, rel=1e-3)


def test_temperature_derivative_matches_finite_differences(co2):
    for tr in SUPERCRIT_TR:
        for vr in SUPERCRIT_VR:
            h = 1e-6 * tr
            dp = realgas.bwrs_dp_dtr("simple", tr, vr)
            fd = (bwrs_pressure("simple", tr + h, vr) - bwrs_pressure("simple", tr - h, vr)) / (
                2.0 * h
            )
            assert dp == pytest.approx(fd, rel=1e-5)


# ---------------------------------------------------------------------------
# Volume-explicit one-step split
# ---------------------------------------------------------------------------


def _split_oracle(spec, tr, vr):
    """Damped Newton on the pressure residual, iterated to machine precision."""
    w = spec.blend
    q = 1.0 - spec.omega_ref / spec.omega
    vr_s = vr
    for _ in range(200):
        vr_r = vr_s + (vr - vr_s) / w
        eps = realgas._pr_raw(realgas.BWRS_SIMPLE, tr, vr_s) - realgas._pr_raw(
            realgas.BWRS_REFERENCE, tr, vr_r
        )
        if abs(eps) < 1e-15:
            return vr_s, vr_r
        d1 = realgas._dpr_dv_raw(realgas.BWRS_SIMPLE, tr, vr_s) - q * realgas._dpr_dv_raw(
            realgas.BWRS_REFERENCE, tr, vr_r
        )
        vr_s -= eps / d1
    return vr_s, vr_s + (vr - vr_s) / w


def test_split_fixed_point_when_residual_vanishes(co2):
    # Locate a state where the two sub-equation pressures cross, then check
    # the one-step split stays put there.
    tr = 1.1
    f = lambda v: bwrs_pressure("simple", tr, v) - bwrs_pressure("reference", tr, v)
    lo, hi = 10.0, 60.0
    if f(lo) * f(hi) > 0:
        pytest.skip("no sub-equation pressure crossing on the scanned interval")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    vr = 0.5 * (lo + hi)
    vr_s, vr_r = solve_volume_explicit(co2, tr, vr)
    assert vr_s == pytest.approx(vr, rel=1e-12)
    assert vr_r == pytest.approx(vr, rel=1e-12)


def test_split_blending_identity_exact(co2):
    for tr in SUPERCRIT_TR:
        for vr in SUPERCRIT_VR:
            vr_s, vr_r = solve_volume_explicit(co2, tr, vr)
            blended = vr_s + co2.blend * (vr_r - vr_s)
            assert blended == pytest.approx(vr, abs=1e-10)


def test_split_pressure_round_trip_near_critical(co2):
    tr, vr = 1.15, 0.9
    props = props_tv(co2, tr, vr)
    _, _, vr_back = solve_pressure_explicit(co2, tr, props.pr)
    assert abs(vr_back - vr) / vr <= 1e-4


def test_split_matches_multistep_oracle(co2):
    trs = np.linspace(1.05, 1.6, 20)
    vrs = np.linspace(0.5, 5.0, 20)
    for tr in trs:
        for vr in vrs:
            vr_s, _ = solve_volume_explicit(co2, tr, vr)
            vr_s_ref, _ = _split_oracle(co2, tr, vr)
            assert vr_s == pytest.approx(vr_s_ref, rel=1e-3)


# ---------------------------------------------------------------------------
# Pressure-explicit solution
# ---------------------------------------------------------------------------


def test_pressure_explicit_ideal_limit(co2):
    _, _, vr = solve_pressure_explicit(co2, 2.0, 0.001)
    assert vr == pytest.approx(2.0 / 0.001, rel=1e-3)


def test_pressure_explicit_round_trip(co2):
    for tr in SUPERCRIT_TR:
        for vr in SUPERCRIT_VR:
            props = props_tv(co2, tr, vr)
            # Both sub-equation volumes solve their equations at this pr.
            vr_s, vr_r, _ = solve_pressure_explicit(co2, tr, props.pr)
            p_s = bwrs_pressure("simple", tr, vr_s)
            p_r = bwrs_pressure("reference", tr, vr_r)
            assert p_s == pytest.approx(props.pr, rel=1e-9)
            assert p_r == pytest.approx(props.pr, rel=1e-9)


def test_pressure_explicit_pure_round_trip_identity(co2):
    # Solving at a sub-equation-implied pressure recovers the input volume.
    for tr in SUPERCRIT_TR:
        for vr in SUPERCRIT_VR:
            pr = bwrs_pressure("simple", tr, vr)
            v_back = realgas._solve_fluid_volume(realgas.BWRS_SIMPLE, tr, pr)
            assert v_back == pytest.approx(vr, rel=1e-9)


def test_pressure_explicit_near_critical_converges(co2):
    vr_s, vr_r, vr = solve_pressure_explicit(co2, 1.02, 1.05)
    assert vr > 0.0
    assert bwrs_pressure("simple", 1.02, vr_s) == pytest.approx(1.05, rel=1e-9)


def test_pressure_explicit_domain_checks(co2):
    with pytest.raises(ValidityError):
        solve_pressure_explicit(co2, 1.0, 11.0)
    with pytest.raises(ValidityError):
        solve_pressure_explicit(co2, 0.1, 1.0)


# ---------------------------------------------------------------------------
# Property assembly
# ---------------------------------------------------------------------------


def test_props_tv_tp_mutual_consistency(co2):
    for tr in SUPERCRIT_TR:
        for vr in SUPERCRIT_VR:
            a = props_tv(co2, tr, vr)
            b = props_tp(co2, tr, a.pr)
            for field in ("vr", "hr", "ur", "cvr", "a", "dpr_dtr_v", "dpr_dvr_t"):
                va, vb = getattr(a, field), getattr(b, field)
                assert va == pytest.approx(vb, rel=1e-3, abs=1e-9), field


def test_surface_derivatives_match_finite_differences(co2):
    for tr in np.linspace(1.0, 1.6, 20):
        for vr in np.linspace(0.5, 5.0, 20):
            p = props_tv(co2, tr, vr)
            ht = 1e-6 * tr
            hv = 1e-6 * vr
            fd_t = (props_tv(co2, tr + ht, vr).pr - props_tv(co2, tr - ht, vr).pr) / (2 * ht)
            fd_v = (props_tv(co2, tr, vr + hv).pr - props_tv(co2, tr, vr - hv).pr) / (2 * hv)
            assert p.dpr_dtr_v == pytest.approx(fd_t, rel=1e-5)
            assert p.dpr_dvr_t == pytest.approx(fd_v, rel=1e-5)
            assert p.dpr_dvr_t < 0.0  # mechanical stability on the gas branch


def test_maxwell_style_identity(co2):
    # dh/dp at constant T equals v - T*(dv/dT)_p on the blended surface.
    for tr in np.linspace(1.05, 1.5, 6):
        for pr in np.linspace(1.1, 2.5, 6):
            hp = 1e-6 * pr
            ht = 1e-6 * tr
            dh_dp = (props_tp(co2, tr, pr + hp).hr - props_tp(co2, tr, pr - hp).hr) / (2 * hp)
            dv_dt = (props_tp(co2, tr + ht, pr).vr - props_tp(co2, tr - ht, pr).vr) / (2 * ht)
            rhs = props_tp(co2, tr, pr).vr - tr * dv_dt
            assert dh_dp == pytest.approx(rhs, rel=1e-3)


def test_speed_of_sound_ideal_limit(co2):
    tr = 1.3
    props = props_tv(co2, tr, 500.0)
    t = tr * co2.tc
    cv = co2.cvr_ideal(tr) * co2.r_specific
    gamma = (cv + co2.r_specific) / cv
    a_ideal = math.sqrt(gamma * co2.r_specific * t)
    assert props.a == pytest.approx(a_ideal, rel=5e-3)


def test_cv_departure_consistent_with_u_departure(co2):
    # cv departure is the temperature derivative of the energy departure.
    for kind in (realgas.BWRS_SIMPLE, realgas.BWRS_REFERENCE):
        for tr in (1.05, 1.3, 1.6):
            for vr in (0.6, 1.5, 4.0):
                h = 1e-6 * tr
                fd = (
                    realgas._u_departure_raw(kind, tr + h, vr)
                    - realgas._u_departure_raw(kind, tr - h, vr)
                ) / (2 * h)
                assert realgas._cv_departure_raw(kind, tr, vr) == pytest.approx(fd, rel=1e-5)


@settings(max_examples=200, deadline=None)
@given(
    tr=st.floats(min_value=1.02, max_value=1.6),
    vr=st.floats(min_value=0.45, max_value=6.0),
)
def test_partition_identity_property(tr, vr):
    co2 = FluidSpec(
        tc=304.28,
        pc=73.77e5,
        omega=0.224,
        r_specific=188.92,
        cv_ideal_coeffs=(316.88, 1.35901, -7.9550e-4, 1.69711e-7),
    )
    vr_s, vr_r = solve_volume_explicit(co2, tr, vr)
    assert abs(vr_s + co2.blend * (vr_r - vr_s) - vr) <= 1e-10


# ---------------------------------------------------------------------------
# FluidSpec configuration plumbing
# ---------------------------------------------------------------------------


def test_fluid_spec_config_round_trip(tmp_path, co2):
    path = tmp_path / "fluid.json"
    import json

    path.write_text(json.dumps(co2.to_config()))
    back = FluidSpec.from_config(str(path))
    assert back == co2


def test_fluid_spec_invariants():
    with pytest.raises(ValueError):
        FluidSpec(tc=-1.0, pc=1e5, omega=0.2, r_specific=100.0, cv_ideal_coeffs=(700.0,))
    with pytest.raises(ValueError):
        FluidSpec(tc=300.0, pc=1e5, omega=0.2, r_specific=100.0, cv_ideal_coeffs=(-700.0,))
