"""Lee-Kesler-Ploecker (LKP) real-gas property engine.

Thermal behaviour is described with the three-parameter corresponding-states
principle: two BWRS-type sub-equations, one for a *simple* fluid and one for a
*reference* fluid, are blended through the acentric factor of the process gas.
All quantities are carried in reduced form (``Tr = T/Tc``, ``pr = p/pc``,
``vr = v*pc/(R*Tc)``, ``hr = h/(R*Tc)``, ``cvr = cv/R``).

Two solution paths are provided:

* ``solve_pressure_explicit`` -- the classic route: given ``(Tr, pr)``, each
  sub-equation is solved iteratively for its reduced volume (damped Newton
  with a bracketing fallback that always lands on the gas branch).
* ``solve_volume_explicit`` -- a fast one-step second-order root correction
  for gaseous/supercritical states: given ``(Tr, vr)``, the pair
  ``(vr_S, vr_R)`` consistent with the volume blending rule is obtained from
  a single quadratic Taylor step around the start point ``vr_S = vr``.

Caloric properties are the sum of an ideal-gas part, integrated from a
polynomial ``cv_id(T)`` correlation (enthalpy reference ``h_id(Tc) = 0``),
and the departure implied by the sub-equations.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)

__all__ = [
    "ValidityError",
    "ConvergenceError",
    "BwrsConstants",
    "BWRS_SIMPLE",
    "BWRS_REFERENCE",
    "OMEGA_REFERENCE",
    "FluidSpec",
    "ThermoStateTV",
    "ThermoProps",
    "TR_MIN",
    "TR_MAX",
    "PR_MAX",
    "VR_MIN",
    "bwrs_pressure",
    "bwrs_dp_dtr",
    "bwrs_volume_derivs",
    "solve_volume_explicit",
    "solve_pressure_explicit",
    "props_tv",
    "props_tp",
]

from . import _fastpath

# Corresponding-states validity window (reduced temperature / pressure).
TR_MIN = 0.3
TR_MAX = 4.0
PR_MAX = 10.0
# Smallest admissible reduced volume (dense-phase guard).
VR_MIN = 1.0 / 11.7


class ValidityError(ValueError):
    """Requested state lies outside the corresponding-states validity domain."""

    def __init__(self, message: str, **coords: float):
        if coords:
            message = f"{message} ({', '.join(f'{k}={v:.6g}' for k, v in coords.items())})"
        super().__init__(message)
        self.coords = coords


class ConvergenceError(RuntimeError):
    """Iterative volume solution failed to meet its tolerance."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class BwrsConstants:
    """Coefficient set of one BWRS-type sub-equation."""

    b1: float
    b2: float
    b3: float
    b4: float
    c1: float
    c2: float
    c3: float
    c4: float
    d1: float
    d2: float
    beta: float
    gamma: float


# Sub-equation coefficients transcribed from the primary corresponding-states
# source: B. I. Lee and M. G. Kesler, AIChE J. 21 (1975) 510-527, Table I.
# d1/d2 are printed there as "d1 x 1e4"; the plain values are stored here.
# The Ploecker extension changes mixture combination rules only, not these
# pure-component coefficient sets.  (constants table v1)
BWRS_SIMPLE = BwrsConstants(
    b1=0.1181193,
    b2=0.265728,
    b3=0.154790,
    b4=0.030323,
    c1=0.0236744,
    c2=0.0186984,
    c3=0.0,
    c4=0.042724,
    d1=0.155488e-4,
    d2=0.623689e-4,
    beta=0.65392,
    gamma=0.060167,
)
BWRS_REFERENCE = BwrsConstants(
    b1=0.2026579,
    b2=0.331511,
    b3=0.027655,
    b4=0.203488,
    c1=0.0313385,
    c2=0.0503618,
    c3=0.016901,
    c4=0.041577,
    d1=0.48736e-4,
    d2=0.0740336e-4,
    beta=1.226,
    gamma=0.03754,
)
# Acentric factor of the reference fluid (n-octane) from the same source.
OMEGA_REFERENCE = 0.3978

_KINDS = {"simple": BWRS_SIMPLE, "reference": BWRS_REFERENCE}


def _as_tuple(c: BwrsConstants) -> tuple:
    return (c.b1, c.b2, c.b3, c.b4, c.c1, c.c2, c.c3, c.c4, c.d1, c.d2, c.beta, c.gamma)


_SIMPLE_T = _as_tuple(BWRS_SIMPLE)
_REFERENCE_T = _as_tuple(BWRS_REFERENCE)
_USE_FAST = _fastpath.HAVE_NUMBA


@dataclass(frozen=True)
class FluidSpec:
    """Critical constants and ideal-gas caloric closure of one process fluid.

    ``cv_ideal_coeffs`` are polynomial coefficients of ``cv_id(T)`` in
    J/(kg K) with T in K, ascending powers, up to fourth order.
    """

    tc: float
    pc: float
    omega: float
    r_specific: float
    cv_ideal_coeffs: tuple[float, ...]
    omega_ref: float = OMEGA_REFERENCE
    t_valid_min: float = 220.0
    t_valid_max: float = 600.0

    def __post_init__(self):
        if self.tc <= 0.0 or self.pc <= 0.0 or self.r_specific <= 0.0:
            raise ValueError("tc, pc and r_specific must be positive")
        if self.omega <= 0.0 or self.omega_ref <= 0.0:
            raise ValueError("acentric factors must be positive")
        if not self.cv_ideal_coeffs or len(self.cv_ideal_coeffs) > 5:
            raise ValueError("cv_ideal_coeffs must hold 1..5 polynomial coefficients")
        if self.t_valid_min >= self.t_valid_max:
            raise ValueError("empty temperature validity range")
        for t in (self.t_valid_min, self.t_valid_max, 0.5 * (self.t_valid_min + self.t_valid_max)):
            if self._cv_ideal(t) <= 0.0:
                raise ValueError(f"cv_id({t:.1f} K) is not positive")
        object.__setattr__(self, "cv_ideal_coeffs", tuple(float(c) for c in self.cv_ideal_coeffs))

    @property
    def blend(self) -> float:
        """Interpolation factor omega/omega_ref of the volume blending rule."""
        return self.omega / self.omega_ref

    def _cv_ideal(self, t: float) -> float:
        acc = 0.0
        for c in reversed(self.cv_ideal_coeffs):
            acc = acc * t + c
        return acc

    def cvr_ideal(self, tr: float) -> float:
        """Reduced ideal-gas isochoric heat capacity cv_id/R."""
        return self._cv_ideal(tr * self.tc) / self.r_specific

    def hr_ideal(self, tr: float) -> float:
        """Reduced ideal-gas enthalpy, referenced so that hr_ideal(1) = 0."""
        t = tr * self.tc
        acc = 0.0
        for i, c in enumerate(self.cv_ideal_coeffs):
            acc += c * (t ** (i + 1) - self.tc ** (i + 1)) / (i + 1)
        return acc / (self.r_specific * self.tc) + (tr - 1.0)

    @classmethod
    def from_config(cls, source) -> "FluidSpec":
        """Build from a mapping or a JSON file path with the documented keys."""
        if isinstance(source, (str, bytes)) or hasattr(source, "read"):
            with open(source) as fh:  # type: ignore[arg-type]
                source = json.load(fh)
        return cls(
            tc=float(source["tc_kelvin"]),
            pc=float(source["pc_pascal"]),
            omega=float(source["omega"]),
            omega_ref=float(source.get("omega_ref", OMEGA_REFERENCE)),
            r_specific=float(source["r_specific"]),
            cv_ideal_coeffs=tuple(float(c) for c in source["cv_ideal_coeffs"]),
            t_valid_min=float(source.get("t_valid_min", 220.0)),
            t_valid_max=float(source.get("t_valid_max", 600.0)),
        )

    def to_config(self) -> dict:
        return {
            "tc_kelvin": self.tc,
            "pc_pascal": self.pc,
            "omega": self.omega,
            "omega_ref": self.omega_ref,
            "r_specific": self.r_specific,
            "cv_ideal_coeffs": list(self.cv_ideal_coeffs),
            "t_valid_min": self.t_valid_min,
            "t_valid_max": self.t_valid_max,
        }


@dataclass(frozen=True)
class ThermoStateTV:
    """Reduced (temperature, specific volume) state."""

    tr: float
    vr: float

    def __post_init__(self):
        if not (TR_MIN <= self.tr <= TR_MAX):
            raise ValidityError("reduced temperature outside validity window", tr=self.tr)
        if self.vr < VR_MIN:
            raise ValidityError("reduced volume below dense-phase bound", vr=self.vr)


@dataclass(frozen=True)
class ThermoProps:
    """Full property bundle at one thermodynamic state."""

    tr: float
    vr: float
    pr: float
    hr: float
    ur: float
    cvr: float
    a: float
    dpr_dtr_v: float
    dpr_dvr_t: float
    vr_s: float
    vr_r: float


# ---------------------------------------------------------------------------
# BWRS sub-equation kernels (scalar, hot path)
# ---------------------------------------------------------------------------


def _pr_raw(c: BwrsConstants, tr: float, v: float) -> float:
    t1 = 1.0 / tr
    b = c.b1 - c.b2 * t1 - c.b3 * t1 * t1 - c.b4 * t1 * t1 * t1
    cc = c.c1 - c.c2 * t1 + c.c3 * t1 * t1 * t1
    d = c.d1 + c.d2 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    e1 = math.exp(-c.gamma * iv2)
    return (
        tr * (iv + b * iv2 + cc * iv3 + d * iv3 * iv3)
        + c.c4 * t1 * t1 * iv3 * (c.beta + c.gamma * iv2) * e1
    )


def _dpr_dv_raw(c: BwrsConstants, tr: float, v: float) -> float:
    t1 = 1.0 / tr
    b = c.b1 - c.b2 * t1 - c.b3 * t1 * t1 - c.b4 * t1 * t1 * t1
    cc = c.c1 - c.c2 * t1 + c.c3 * t1 * t1 * t1
    d = c.d1 + c.d2 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    iv4 = iv2 * iv2
    g = c.gamma
    e1 = math.exp(-g * iv2)
    poly = -tr * (iv2 + 2.0 * b * iv3 + 3.0 * cc * iv4 + 6.0 * d * iv4 * iv3)
    expo = e1 * (
        -3.0 * c.beta * iv4
        + (2.0 * c.beta * g - 5.0 * g) * iv4 * iv2
        + 2.0 * g * g * iv4 * iv4
    )
    return poly + c.c4 * t1 * t1 * expo


def _d2pr_dv2_raw(c: BwrsConstants, tr: float, v: float) -> float:
    t1 = 1.0 / tr
    b = c.b1 - c.b2 * t1 - c.b3 * t1 * t1 - c.b4 * t1 * t1 * t1
    cc = c.c1 - c.c2 * t1 + c.c3 * t1 * t1 * t1
    d = c.d1 + c.d2 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    iv5 = iv3 * iv2
    g = c.gamma
    e1 = math.exp(-g * iv2)
    poly = tr * (2.0 * iv3 + 6.0 * b * iv2 * iv2 + 12.0 * cc * iv5 + 42.0 * d * iv5 * iv3)
    expo = e1 * (
        12.0 * c.beta * iv5
        + (30.0 * g - 18.0 * c.beta * g) * iv5 * iv2
        + (4.0 * c.beta * g * g - 26.0 * g * g) * iv5 * iv2 * iv2
        + 4.0 * g * g * g * iv5 * iv3 * iv3
    )
    return poly + c.c4 * t1 * t1 * expo


def _dpr_dtr_raw(c: BwrsConstants, tr: float, v: float) -> float:
    t1 = 1.0 / tr
    # d(Tr*B)/dTr etc. collapse to short forms: b1 + b3/Tr^2 + 2 b4/Tr^3, ...
    bt = c.b1 + c.b3 * t1 * t1 + 2.0 * c.b4 * t1 * t1 * t1
    ct = c.c1 - 2.0 * c.c3 * t1 * t1 * t1
    dt = c.d1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    e1 = math.exp(-c.gamma * iv2)
    return (
        iv
        + bt * iv2
        + ct * iv3
        + dt * iv3 * iv3
        - 2.0 * c.c4 * t1 * t1 * t1 * iv3 * (c.beta + c.gamma * iv2) * e1
    )


def _u_departure_raw(c: BwrsConstants, tr: float, v: float) -> float:
    t1 = 1.0 / tr
    iv = 1.0 / v
    iv2 = iv * iv
    e_term = (
        c.c4
        / (2.0 * tr * tr * tr * c.gamma)
        * (c.beta + 1.0 - (c.beta + 1.0 + c.gamma * iv2) * math.exp(-c.gamma * iv2))
    )
    return (
        -(c.b2 + 2.0 * c.b3 * t1 + 3.0 * c.b4 * t1 * t1) * iv
        - (c.c2 - 3.0 * c.c3 * t1 * t1) * 0.5 * iv2
        + 0.2 * c.d2 * iv2 * iv2 * iv
        + 3.0 * tr * e_term
    )


def _cv_departure_raw(c: BwrsConstants, tr: float, v: float) -> float:
    t1 = 1.0 / tr
    iv = 1.0 / v
    iv2 = iv * iv
    e_term = (
        c.c4
        / (2.0 * tr * tr * tr * c.gamma)
        * (c.beta + 1.0 - (c.beta + 1.0 + c.gamma * iv2) * math.exp(-c.gamma * iv2))
    )
    return (
        2.0 * (c.b3 + 3.0 * c.b4 * t1) * t1 * t1 * iv
        - 3.0 * c.c3 * t1 * t1 * t1 * iv2
        - 6.0 * e_term
    )


def _check_domain(tr: float, vrf: float) -> None:
    if not (TR_MIN <= tr <= TR_MAX):
        raise ValidityError("reduced temperature outside validity window", tr=tr)
    if vrf <= 0.0:
        raise ValidityError("reduced volume must be positive", vr=vrf)


def bwrs_pressure(kind: str, tr: float, vrf: float) -> float:
    """Reduced pressure of one sub-equation at (Tr, reduced sub-fluid volume)."""
    _check_domain(tr, vrf)
    return _pr_raw(_KINDS[kind], tr, vrf)


def bwrs_dp_dtr(kind: str, tr: float, vrf: float) -> float:
    """Isochoric reduced-pressure derivative of one sub-equation."""
    _check_domain(tr, vrf)
    return _dpr_dtr_raw(_KINDS[kind], tr, vrf)


def bwrs_volume_derivs(kind: str, tr: float, vrf: float) -> tuple[float, float]:
    """First and second isothermal volume derivatives of one sub-equation."""
    _check_domain(tr, vrf)
    c = _KINDS[kind]
    return _dpr_dv_raw(c, tr, vrf), _d2pr_dv2_raw(c, tr, vrf)


# ---------------------------------------------------------------------------
# Volume-explicit approach: one-step second-order root correction
# ---------------------------------------------------------------------------


def _split_newton(spec: FluidSpec, tr: float, vr: float) -> tuple[float, float]:
    """Multi-step root of the sub-equation pressure residual along the
    blending constraint; preserves the blending identity by construction."""
    w = spec.blend
    q = 1.0 - spec.omega_ref / spec.omega
    vr_s = vr
    eps = math.nan
    for _ in range(_MAX_ITER):
        vr_r = vr_s + (vr - vr_s) / w
        if vr_r <= 0.0:
            vr_s = 0.5 * (vr_s + vr)
            continue
        eps = _pr_raw(BWRS_SIMPLE, tr, vr_s) - _pr_raw(BWRS_REFERENCE, tr, vr_r)
        scale = abs(_pr_raw(BWRS_SIMPLE, tr, vr_s)) + 1.0
        if abs(eps) <= 1e-13 * scale:
            return vr_s, vr_r
        d1 = _dpr_dv_raw(BWRS_SIMPLE, tr, vr_s) - q * _dpr_dv_raw(BWRS_REFERENCE, tr, vr_r)
        if d1 == 0.0:
            break
        step = -eps / d1
        while vr_s + step <= 0.0:
            step *= 0.5
        vr_s += step
    raise ConvergenceError("volume split residual iteration stalled", residual=eps)


def solve_volume_explicit(spec: FluidSpec, tr: float, vr: float) -> tuple[float, float]:
    """Split a gaseous/supercritical (Tr, vr) state into (vr_S, vr_R).

    The sub-equation volume pair must satisfy equal sub-equation pressures and
    the blending identity ``vr = vr_S + (omega/omega_ref)*(vr_R - vr_S)``.
    Starting from ``vr_S = vr`` a single second-order root step is taken; the
    root branch of smaller magnitude is used, which reproduces the start
    point exactly when the pressure residual is already zero.  If the
    quadratic model has no real root (or the step leaves the admissible
    volume range), a multi-step damped Newton on the same residual takes
    over and the event is flagged through the module logger.
    """
    _check_domain(tr, vr)
    if _USE_FAST:
        vr_s, vr_r, status = _fastpath.split_volume(
            _SIMPLE_T, _REFERENCE_T, tr, vr, spec.blend, 1.0 - spec.omega_ref / spec.omega, 3
        )
        if status == 0:
            return vr_s, vr_r
        log.warning("one-step volume split fell back to iteration at Tr=%.4g vr=%.4g", tr, vr)
        return _split_newton(spec, tr, vr)
    w = spec.blend
    q = 1.0 - spec.omega_ref / spec.omega  # d(vr_R)/d(vr_S) along the constraint
    eps = _pr_raw(BWRS_SIMPLE, tr, vr) - _pr_raw(BWRS_REFERENCE, tr, vr)
    if eps == 0.0:
        return vr, vr
    d1 = _dpr_dv_raw(BWRS_SIMPLE, tr, vr) - q * _dpr_dv_raw(BWRS_REFERENCE, tr, vr)
    d2 = _d2pr_dv2_raw(BWRS_SIMPLE, tr, vr) - q * q * _d2pr_dv2_raw(BWRS_REFERENCE, tr, vr)
    disc = d1 * d1 - 2.0 * eps * d2
    if disc < 0.0 or d1 == 0.0:
        log.warning("one-step volume split fell back to iteration at Tr=%.4g vr=%.4g", tr, vr)
        return _split_newton(spec, tr, vr)
    # Smaller-magnitude quadratic root in the numerically stable form.
    denom = d1 + math.copysign(math.sqrt(disc), d1)
    step = -2.0 * eps / denom
    vr_s = vr + step
    vr_r = vr_s + (vr - vr_s) / w
    if vr_s <= 0.0 or vr_r <= 0.0:
        log.warning("one-step volume split left the domain at Tr=%.4g vr=%.4g", tr, vr)
        return _split_newton(spec, tr, vr)
    # Polish the second-order step with up to three cheap Newton corrections
    # so the split sits on the equal-pressure manifold to near machine
    # precision; this keeps the analytic surface derivatives consistent with
    # finite differences of the returned pressure.
    for _ in range(3):
        p_s = _pr_raw(BWRS_SIMPLE, tr, vr_s)
        res = p_s - _pr_raw(BWRS_REFERENCE, tr, vr_r)
        if abs(res) <= 1e-12 * (abs(p_s) + 1.0):
            break
        slope = _dpr_dv_raw(BWRS_SIMPLE, tr, vr_s) - q * _dpr_dv_raw(BWRS_REFERENCE, tr, vr_r)
        if slope == 0.0:
            break
        corr = -res / slope
        while vr_s + corr <= 0.0:
            corr *= 0.5
        vr_s += corr
        vr_r = vr_s + (vr - vr_s) / w
    return vr_s, vr_r


# ---------------------------------------------------------------------------
# Pressure-explicit approach: per-fluid iterative volume solution
# ---------------------------------------------------------------------------

_MAX_ITER = 50
_P_RTOL = 1e-10


def _solve_fluid_volume(c: BwrsConstants, tr: float, pr: float) -> float:
    """Gas-branch volume of one sub-equation at (Tr, pr).

    Damped Newton from the ideal-gas start; if the iteration strays from the
    gas branch (non-negative slope) or stalls, an expanding bracket built
    from the large-volume side pins the outermost root by bisection.
    """
    if _USE_FAST:
        ct = _SIMPLE_T if c is BWRS_SIMPLE else _REFERENCE_T if c is BWRS_REFERENCE else _as_tuple(c)
        v, ok = _fastpath.solve_fluid_volume(ct, tr, pr, _MAX_ITER, _P_RTOL)
        if not ok:
            raise ConvergenceError("no gas-branch solution found", residual=pr)
        return v
    v = tr / pr
    for it in range(_MAX_ITER):
        f = _pr_raw(c, tr, v) - pr
        if abs(f) <= _P_RTOL * pr:
            return v
        df = _dpr_dv_raw(c, tr, v)
        if df >= 0.0:
            break
        step = -f / df
        # Damp into (0, inf); halving also guards near-critical overshoot.
        while v + step <= 0.0:
            step *= 0.5
        v_new = v + step
        if abs(_pr_raw(c, tr, v_new) - pr) > abs(f):
            step *= 0.5
            v_new = v + step
        v = v_new
    return _bisect_gas_branch(c, tr, pr)


def _bisect_gas_branch(c: BwrsConstants, tr: float, pr: float) -> float:
    hi = max(4.0 * tr / pr, 200.0)
    if _pr_raw(c, tr, hi) - pr > 0.0:
        raise ConvergenceError("no gas-branch bracket above ideal-gas volume", residual=pr)
    lo = hi
    for _ in range(200):
        lo *= 0.7
        if _pr_raw(c, tr, lo) - pr > 0.0:
            break
        if lo < 1e-4:
            raise ConvergenceError("volume bracket collapsed", residual=pr)
    else:
        raise ConvergenceError("gas-branch bracket not found", residual=pr)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _pr_raw(c, tr, mid) - pr > 0.0:
            lo = mid
        else:
            hi = mid
        if abs(_pr_raw(c, tr, mid) - pr) <= _P_RTOL * pr:
            return mid
    raise ConvergenceError(
        "bisection exceeded iteration cap", residual=abs(_pr_raw(c, tr, mid) - pr) / pr
    )


def solve_pressure_explicit(spec: FluidSpec, tr: float, pr: float) -> tuple[float, float, float]:
    """Solve both sub-equations at (Tr, pr); returns (vr_S, vr_R, vr)."""
    if not (TR_MIN <= tr <= TR_MAX):
        raise ValidityError("reduced temperature outside validity window", tr=tr)
    if not (0.0 < pr <= PR_MAX):
        raise ValidityError("reduced pressure outside validity window", pr=pr)
    vr_s = _solve_fluid_volume(BWRS_SIMPLE, tr, pr)
    vr_r = _solve_fluid_volume(BWRS_REFERENCE, tr, pr)
    vr = vr_s + spec.blend * (vr_r - vr_s)
    return vr_s, vr_r, vr


# ---------------------------------------------------------------------------
# Property assembly
# ---------------------------------------------------------------------------


def _assemble(
    spec: FluidSpec, tr: float, vr: float, vr_s: float, vr_r: float, pr_exact: float | None = None
) -> ThermoProps:
    w = spec.blend
    if _USE_FAST:
        pr, dpr_dtr, dpr_dvr, u_dep, cv_dep = _fastpath.assemble_core(
            _SIMPLE_T, _REFERENCE_T, tr, vr, vr_s, vr_r, w
        )
    else:
        pr_s = _pr_raw(BWRS_SIMPLE, tr, vr_s)
        pr_r = _pr_raw(BWRS_REFERENCE, tr, vr_r)
        pr = pr_s + w * (pr_r - pr_s)

        dpv_s = _dpr_dv_raw(BWRS_SIMPLE, tr, vr_s)
        dpv_r = _dpr_dv_raw(BWRS_REFERENCE, tr, vr_r)
        dpt_s = _dpr_dtr_raw(BWRS_SIMPLE, tr, vr_s)
        dpt_r = _dpr_dtr_raw(BWRS_REFERENCE, tr, vr_r)
        # Blended surface derivatives via the implicit volume blending rule.
        dpr_dvr = 1.0 / ((1.0 - w) / dpv_s + w / dpv_r)
        dvr_dtr_p = -((1.0 - w) * dpt_s / dpv_s + w * dpt_r / dpv_r)
        dpr_dtr = -dpr_dvr * dvr_dtr_p

        u_dep = (1.0 - w) * _u_departure_raw(BWRS_SIMPLE, tr, vr_s) + w * _u_departure_raw(
            BWRS_REFERENCE, tr, vr_r
        )
        cv_dep = (1.0 - w) * _cv_departure_raw(BWRS_SIMPLE, tr, vr_s) + w * _cv_departure_raw(
            BWRS_REFERENCE, tr, vr_r
        )
    if pr_exact is not None:
        pr = pr_exact
    ur = spec.hr_ideal(tr) - tr + u_dep
    hr = ur + pr * vr
    cvr = spec.cvr_ideal(tr) + cv_dep

    a2 = vr * vr * spec.r_specific * spec.tc * (tr * dpr_dtr * dpr_dtr / cvr - dpr_dvr)
    a = math.sqrt(a2) if a2 > 0.0 else 0.0

    return ThermoProps(
        tr=tr,
        vr=vr,
        pr=pr,
        hr=hr,
        ur=ur,
        cvr=cvr,
        a=a,
        dpr_dtr_v=dpr_dtr,
        dpr_dvr_t=dpr_dvr,
        vr_s=vr_s,
        vr_r=vr_r,
    )


def props_tv(spec: FluidSpec, tr: float, vr: float) -> ThermoProps:
    """All properties at (Tr, vr) through the volume-explicit approach."""
    vr_s, vr_r = solve_volume_explicit(spec, tr, vr)
    return _assemble(spec, tr, vr, vr_s, vr_r)


def props_tp(spec: FluidSpec, tr: float, pr: float) -> ThermoProps:
    """All properties at (Tr, pr) through the pressure-explicit approach.

    The sub-equation volumes are exact here, so the requested pressure is
    reported back unchanged."""
    vr_s, vr_r, vr = solve_pressure_explicit(spec, tr, pr)
    return _assemble(spec, tr, vr, vr_s, vr_r, pr_exact=pr)
