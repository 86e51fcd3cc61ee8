"""Optional compiled kernels for the property engine.

The pure-Python implementations in ``realgas`` remain the reference; when
numba is importable the inner loops below replace them transparently.  The
numerics are identical: same polynomial forms, same Newton/bisection logic,
same blending.  Coefficients are passed as flat tuples so the compiled
signatures stay cacheable across processes.
"""

from __future__ import annotations

import math

try:  # pragma: no cover - exercised implicitly by the test suite
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def _pr(c, tr, v):
    b1, b2, b3, b4, c1, c2, c3, c4, d1, d2, beta, gamma = c
    t1 = 1.0 / tr
    b = b1 - b2 * t1 - b3 * t1 * t1 - b4 * t1 * t1 * t1
    cc = c1 - c2 * t1 + c3 * t1 * t1 * t1
    d = d1 + d2 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    e1 = math.exp(-gamma * iv2)
    return tr * (iv + b * iv2 + cc * iv3 + d * iv3 * iv3) + c4 * t1 * t1 * iv3 * (
        beta + gamma * iv2
    ) * e1


@njit(cache=True)
def _pr_and_dpv(c, tr, v):
    b1, b2, b3, b4, c1, c2, c3, c4, d1, d2, beta, gamma = c
    t1 = 1.0 / tr
    b = b1 - b2 * t1 - b3 * t1 * t1 - b4 * t1 * t1 * t1
    cc = c1 - c2 * t1 + c3 * t1 * t1 * t1
    d = d1 + d2 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    iv4 = iv2 * iv2
    e1 = math.exp(-gamma * iv2)
    pr = tr * (iv + b * iv2 + cc * iv3 + d * iv3 * iv3) + c4 * t1 * t1 * iv3 * (
        beta + gamma * iv2
    ) * e1
    dpoly = -tr * (iv2 + 2.0 * b * iv3 + 3.0 * cc * iv4 + 6.0 * d * iv4 * iv3)
    dexpo = e1 * (
        -3.0 * beta * iv4 + (2.0 * beta * gamma - 5.0 * gamma) * iv4 * iv2 + 2.0 * gamma * gamma * iv4 * iv4
    )
    return pr, dpoly + c4 * t1 * t1 * dexpo


@njit(cache=True)
def _dpv_and_d2(c, tr, v):
    b1, b2, b3, b4, c1, c2, c3, c4, d1, d2, beta, gamma = c
    t1 = 1.0 / tr
    b = b1 - b2 * t1 - b3 * t1 * t1 - b4 * t1 * t1 * t1
    cc = c1 - c2 * t1 + c3 * t1 * t1 * t1
    d = d1 + d2 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    iv4 = iv2 * iv2
    iv5 = iv3 * iv2
    g = gamma
    e1 = math.exp(-g * iv2)
    d1v = -tr * (iv2 + 2.0 * b * iv3 + 3.0 * cc * iv4 + 6.0 * d * iv4 * iv3) + c4 * t1 * t1 * e1 * (
        -3.0 * beta * iv4 + (2.0 * beta * g - 5.0 * g) * iv4 * iv2 + 2.0 * g * g * iv4 * iv4
    )
    d2v = tr * (2.0 * iv3 + 6.0 * b * iv4 + 12.0 * cc * iv5 + 42.0 * d * iv5 * iv3) + c4 * t1 * t1 * e1 * (
        12.0 * beta * iv5
        + (30.0 * g - 18.0 * beta * g) * iv5 * iv2
        + (4.0 * beta * g * g - 26.0 * g * g) * iv5 * iv2 * iv2
        + 4.0 * g * g * g * iv5 * iv3 * iv3
    )
    return d1v, d2v


@njit(cache=True)
def _dpt(c, tr, v):
    b1, b2, b3, b4, c1, c2, c3, c4, d1, d2, beta, gamma = c
    t1 = 1.0 / tr
    bt = b1 + b3 * t1 * t1 + 2.0 * b4 * t1 * t1 * t1
    ct = c1 - 2.0 * c3 * t1 * t1 * t1
    iv = 1.0 / v
    iv2 = iv * iv
    iv3 = iv2 * iv
    e1 = math.exp(-gamma * iv2)
    return (
        iv
        + bt * iv2
        + ct * iv3
        + d1 * iv3 * iv3
        - 2.0 * c4 * t1 * t1 * t1 * iv3 * (beta + gamma * iv2) * e1
    )


@njit(cache=True)
def _departures(c, tr, v):
    b1, b2, b3, b4, c1, c2, c3, c4, d1, d2, beta, gamma = c
    t1 = 1.0 / tr
    iv = 1.0 / v
    iv2 = iv * iv
    e_term = (
        c4 / (2.0 * tr * tr * tr * gamma)
        * (beta + 1.0 - (beta + 1.0 + gamma * iv2) * math.exp(-gamma * iv2))
    )
    u_dep = (
        -(b2 + 2.0 * b3 * t1 + 3.0 * b4 * t1 * t1) * iv
        - (c2 - 3.0 * c3 * t1 * t1) * 0.5 * iv2
        + 0.2 * d2 * iv2 * iv2 * iv
        + 3.0 * tr * e_term
    )
    cv_dep = 2.0 * (b3 + 3.0 * b4 * t1) * t1 * t1 * iv - 3.0 * c3 * t1 * t1 * t1 * iv2 - 6.0 * e_term
    return u_dep, cv_dep


@njit(cache=True)
def solve_fluid_volume(c, tr, pr, max_iter, rtol):
    """Gas-branch volume: damped Newton then expanding-bracket bisection.

    Returns (volume, ok); ok is False when no bracket exists.
    """
    v = tr / pr
    for _ in range(max_iter):
        f, df = _pr_and_dpv(c, tr, v)
        f -= pr
        if abs(f) <= rtol * pr:
            return v, True
        if df >= 0.0:
            break
        step = -f / df
        while v + step <= 0.0:
            step *= 0.5
        v_new = v + step
        if abs(_pr(c, tr, v_new) - pr) > abs(f):
            step *= 0.5
            v_new = v + step
        v = v_new
    # bisection from the large-volume side pins the gas branch
    hi = tr / pr * 4.0
    if hi < 200.0:
        hi = 200.0
    if _pr(c, tr, hi) - pr > 0.0:
        return v, False
    lo = hi
    found = False
    for _ in range(200):
        lo *= 0.7
        if _pr(c, tr, lo) - pr > 0.0:
            found = True
            break
        if lo < 1e-4:
            return v, False
    if not found:
        return v, False
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = _pr(c, tr, mid) - pr
        if abs(fm) <= rtol * pr:
            return mid, True
        if fm > 0.0:
            lo = mid
        else:
            hi = mid
    return mid, True


@njit(cache=True)
def split_volume(cs, cr, tr, vr, w, q, polish_iters):
    """One-step second-order split plus Newton polish.

    Returns (vr_s, vr_r, status): status 0 ok, 1 needs the slow fallback.
    """
    eps = _pr(cs, tr, vr) - _pr(cr, tr, vr)
    if eps == 0.0:
        return vr, vr, 0
    d1s, d2s = _dpv_and_d2(cs, tr, vr)
    d1r, d2r = _dpv_and_d2(cr, tr, vr)
    d1 = d1s - q * d1r
    d2 = d2s - q * q * d2r
    disc = d1 * d1 - 2.0 * eps * d2
    if disc < 0.0 or d1 == 0.0:
        return vr, vr, 1
    sq = math.sqrt(disc)
    denom = d1 + sq if d1 >= 0.0 else d1 - sq
    step = -2.0 * eps / denom
    vr_s = vr + step
    vr_r = vr_s + (vr - vr_s) / w
    if vr_s <= 0.0 or vr_r <= 0.0:
        return vr, vr, 1
    for _ in range(polish_iters):
        ps, ds = _pr_and_dpv(cs, tr, vr_s)
        prr, dr = _pr_and_dpv(cr, tr, vr_r)
        res = ps - prr
        if abs(res) <= 1e-12 * (abs(ps) + 1.0):
            break
        slope = ds - q * dr
        if slope == 0.0:
            break
        corr = -res / slope
        while vr_s + corr <= 0.0:
            corr *= 0.5
        vr_s += corr
        vr_r = vr_s + (vr - vr_s) / w
    return vr_s, vr_r, 0


@njit(cache=True)
def assemble_core(cs, cr, tr, vr, vr_s, vr_r, w):
    """Blended pressure, surface derivatives and departure terms."""
    pr_s, dpv_s = _pr_and_dpv(cs, tr, vr_s)
    pr_r, dpv_r = _pr_and_dpv(cr, tr, vr_r)
    pr = pr_s + w * (pr_r - pr_s)
    dpt_s = _dpt(cs, tr, vr_s)
    dpt_r = _dpt(cr, tr, vr_r)
    dpr_dvr = 1.0 / ((1.0 - w) / dpv_s + w / dpv_r)
    dvr_dtr_p = -((1.0 - w) * dpt_s / dpv_s + w * dpt_r / dpv_r)
    dpr_dtr = -dpr_dvr * dvr_dtr_p
    u_s, cv_s = _departures(cs, tr, vr_s)
    u_r, cv_r = _departures(cr, tr, vr_r)
    u_dep = (1.0 - w) * u_s + w * u_r
    cv_dep = (1.0 - w) * cv_s + w * cv_r
    return pr, dpr_dtr, dpr_dvr, u_dep, cv_dep
