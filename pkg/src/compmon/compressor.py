"""Dynamic model of an N-stage centrifugal compression unit.

The unit consists of a suction pipe, N stages, N-1 intermediate pipes and a
discharge pipe whose pressure is a known input.  The state vector stacks, in
flow order, the suction-pipe block (fluid temperature, sensor temperature,
specific volume), one block per stage (artificial discharge fluid
temperature, sensor temperature, work-input deviation, flow deviation) and
one block per intermediate pipe (as the suction pipe, without the constant
dynamics).  All temperatures and volumes are reduced.

A stage operating point is resolved in six steps: suction properties through
the volume-explicit path, discharge pressure from the downstream pipe state
(or from the input for the last stage), discharge properties through the
pressure-explicit path at the stage's artificial temperature, the polytropic
volume exponent, the polytropic work, and finally the map lookup that yields
the flow coefficient and work input factor.  An artificial energy balance
drives the stage temperature toward the value at which the map-implied
compression work equals the enthalpy rise, so the algebraic loop of the
classic quasi-steady formulation never has to be iterated.

Intermediate pipes are open well-mixed reservoirs; temperature sensors are
first-order lags.  Time integration is forward Euler with linear
interpolation of the sampled inputs across the macro step and clipping of
the state into its physical domain after every substep.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .perfmap import MapGrid, interp_coeffs, map_lookup
from .realgas import (
    TR_MAX,
    TR_MIN,
    VR_MIN,
    FluidSpec,
    ThermoProps,
    ThermoStateTV,
    props_tp,
    props_tv,
)

log = logging.getLogger(__name__)

__all__ = [
    "DegenerateOperatingPointError",
    "ModelError",
    "CompressorGeometry",
    "ModelInput",
    "OperatingPoint",
    "StateLayout",
    "ModelBounds",
    "CompressorModel",
    "stage_operating_point",
    "stage_temperature_rhs",
    "pipe_rhs",
    "sensor_rhs",
]


class ModelError(RuntimeError):
    """Model evaluation failed; carries the component attribution."""

    def __init__(self, message: str, component: str = ""):
        super().__init__(f"{component}: {message}" if component else message)
        self.component = component


class DegenerateOperatingPointError(ModelError):
    """Polytropic exponent undefined for the given pressure/volume ratios."""


@dataclass(frozen=True)
class CompressorGeometry:
    """Geometric and sensor constants of the unit.

    ``pipe_volume`` covers pipes P0..PN (N+1 entries); ``tau_pipe`` covers
    the instrumented pipes P0..P(N-1).
    """

    n_stages: int
    d2: tuple[float, ...]
    v2: tuple[float, ...]
    pipe_volume: tuple[float, ...]
    tau_pipe: tuple[float, ...]
    tau_stage: tuple[float, ...]

    def __post_init__(self):
        n = self.n_stages
        if n < 1:
            raise ValueError("need at least one stage")
        if len(self.d2) != n or len(self.v2) != n or len(self.tau_stage) != n:
            raise ValueError("per-stage constants must have n_stages entries")
        if len(self.pipe_volume) != n + 1:
            raise ValueError("pipe_volume must cover P0..PN")
        if len(self.tau_pipe) != n:
            raise ValueError("tau_pipe must cover P0..P(N-1)")
        for name in ("d2", "v2", "pipe_volume", "tau_pipe", "tau_stage"):
            if any(v <= 0.0 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be positive")
        for j in range(n):
            ratio = self.v2[j] / self.pipe_volume[j + 1]
            if not (0.003 <= ratio <= 0.03):
                log.warning(
                    "stage %d discharge volume ratio %.3g is far from the "
                    "recommended 0.01",
                    j + 1,
                    ratio,
                )

    @classmethod
    def from_config(cls, cfg: dict) -> "CompressorGeometry":
        return cls(
            n_stages=int(cfg["n_stages"]),
            d2=tuple(cfg["d2"]),
            v2=tuple(cfg["v2"]),
            pipe_volume=tuple(cfg["pipe_volume"]),
            tau_pipe=tuple(cfg["tau_pipe"]),
            tau_stage=tuple(cfg["tau_stage"]),
        )

    def to_config(self) -> dict:
        return {
            "n_stages": self.n_stages,
            "d2": list(self.d2),
            "v2": list(self.v2),
            "pipe_volume": list(self.pipe_volume),
            "tau_pipe": list(self.tau_pipe),
            "tau_stage": list(self.tau_stage),
        }


@dataclass(frozen=True)
class ModelInput:
    """Known inputs: shaft speed per stage (1/s) and discharge pressure (Pa)."""

    speeds: tuple[float, ...]
    discharge_pressure: float

    def __post_init__(self):
        if any(n <= 0.0 for n in self.speeds):
            raise ValueError("shaft speeds must be positive")
        if self.discharge_pressure <= 0.0:
            raise ValueError("discharge pressure must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([*self.speeds, self.discharge_pressure], dtype=float)

    @classmethod
    def from_array(cls, u: np.ndarray) -> "ModelInput":
        return cls(speeds=tuple(float(v) for v in u[:-1]), discharge_pressure=float(u[-1]))


@dataclass(frozen=True)
class OperatingPoint:
    """Resolved stage operating point.

    ``phi`` and ``mu`` are the effective coefficients (map value plus the
    deviation state), so the polytropic-efficiency identity
    ``eta_p = psi_p / (2 mu)`` holds exactly as stored.
    """

    mach: float
    psi_p: float
    phi: float
    mu: float
    nv: float
    yp: float
    eta_p: float
    mdot: float
    dh: float
    # map values and thermodynamic interim results carried for reuse
    phi_map: float
    mu_map: float
    u2: float
    pr1: float
    vr1: float
    hr1: float
    a1: float
    pr2: float
    vr2: float
    hr2: float
    cvr2: float
    dhr: float
    extrapolated: bool


def _polytropic_work(pr1, vr1, pr2, vr2, rt_c, strict: bool = True) -> tuple[float, float]:
    """Polytropic volume exponent and specific work per the Zeuner change of
    state; removable singularities evaluated through their limits.

    ``strict`` raises in the expansion quadrant (falling pressure with
    non-shrinking volume); the lenient variant extends the work formula
    continuously there, which keeps sigma-point evaluations alive under
    wide covariances (negative work maps to a clamped zero-head query).
    """
    if pr2 == pr1:
        lnv = math.log(vr2 / vr1)
        nv = 0.0 if lnv != 0.0 else 1.0
        return nv, 0.0
    lnr = math.log(pr2 / pr1)
    lnv = math.log(vr2 / vr1)
    if strict and lnr < 0.0 and lnv >= 0.0:
        raise DegenerateOperatingPointError(
            f"polytropic exponent undefined: pr2/pr1={pr2 / pr1:.6g}, "
            f"vr2/vr1={vr2 / vr1:.6g}",
            component="stage",
        )
    nv = math.inf if lnv == 0.0 else -lnr / lnv
    e = 1.0 + lnv / lnr  # (nv - 1)/nv without forming nv
    if abs(e) < 1e-9:
        yp = pr1 * vr1 * lnr * rt_c
    else:
        yp = (pr2 * vr2 - pr1 * vr1) / e * rt_c
    return nv, yp


def _stage_op_from_props(
    spec: FluidSpec,
    grid: MapGrid,
    suction: ThermoProps,
    pr2: float,
    trf_stage: float,
    speed: float,
    d2: float,
    dphi: float,
    dmu: float,
    strict: bool = True,
) -> OperatingPoint:
    discharge = props_tp(spec, trf_stage, pr2)
    u2 = math.pi * speed * d2
    mach = u2 / suction.a
    nv, yp = _polytropic_work(
        suction.pr, suction.vr, pr2, discharge.vr, spec.r_specific * spec.tc, strict=strict
    )
    psi_p = 2.0 * yp / (u2 * u2)
    m = interp_coeffs(grid, mach, psi_p)
    phi_map, mu_map = map_lookup(grid, m)
    phi = phi_map + dphi
    mu = mu_map + dmu
    mdot = phi / suction.vr * 0.25 * math.pi * d2 * d2 * u2 * spec.pc / (
        spec.r_specific * spec.tc
    )
    dh = mu * u2 * u2
    dhr = dh / (spec.r_specific * spec.tc)
    eta_p = psi_p / (2.0 * mu) if mu != 0.0 else math.inf
    return OperatingPoint(
        mach=mach,
        psi_p=psi_p,
        phi=phi,
        mu=mu,
        nv=nv,
        yp=yp,
        eta_p=eta_p,
        mdot=mdot,
        dh=dh,
        phi_map=phi_map,
        mu_map=mu_map,
        u2=u2,
        pr1=suction.pr,
        vr1=suction.vr,
        hr1=suction.hr,
        a1=suction.a,
        pr2=pr2,
        vr2=discharge.vr,
        hr2=discharge.hr,
        cvr2=discharge.cvr,
        dhr=dhr,
        extrapolated=m.extrapolated,
    )


def stage_operating_point(
    spec: FluidSpec,
    grid: MapGrid,
    suction: ThermoStateTV,
    discharge,
    trf_stage: float,
    speed: float,
    d2: float,
    dphi: float = 0.0,
    dmu: float = 0.0,
) -> OperatingPoint:
    """Resolve one stage operating point.

    ``discharge`` is either the downstream pipe state (``ThermoStateTV``) or
    the known reduced discharge pressure (float) for the last stage.
    """
    suction_props = props_tv(spec, suction.tr, suction.vr)
    if isinstance(discharge, ThermoStateTV):
        pr2 = props_tv(spec, discharge.tr, discharge.vr).pr
    else:
        pr2 = float(discharge)
    return _stage_op_from_props(spec, grid, suction_props, pr2, trf_stage, speed, d2, dphi, dmu)


def stage_temperature_rhs(
    mdot: float,
    hr1: float,
    dhr: float,
    hr2: float,
    vr2: float,
    cvr2: float,
    v2: float,
    spec: FluidSpec,
) -> float:
    """Rate of the artificial stage discharge temperature; zero exactly at
    the converged operating point where ``hr1 + dhr == hr2``."""
    return (
        abs(mdot)
        * (hr1 + dhr - hr2)
        * vr2
        / (v2 * cvr2)
        * (spec.r_specific * spec.tc / spec.pc)
    )


def _pipe_rhs_from_props(
    props: ThermoProps,
    mdot_in: float,
    hr_in: float,
    mdot_out: float,
    dq_dt: float,
    volume: float,
    spec: FluidSpec,
) -> tuple[float, float]:
    scale = spec.r_specific * spec.tc / spec.pc
    net = mdot_in - mdot_out
    dtrf = (
        props.vr
        / (volume * props.cvr)
        * (
            dq_dt / (spec.r_specific * spec.tc)
            + mdot_in * (hr_in - props.hr)
            + props.tr * props.dpr_dtr_v * net * props.vr
        )
        * scale
    )
    dvr = -props.vr * props.vr / volume * net * scale
    return dtrf, dvr


def pipe_rhs(
    state: ThermoStateTV,
    inflow: tuple[float, float],
    outflow: tuple[float, float],
    dq_dt: float,
    volume: float,
    spec: FluidSpec,
) -> tuple[float, float]:
    """Energy and mass balance of an open well-mixed pipe reservoir.

    ``inflow`` is (mass flow, carried reduced enthalpy); ``outflow`` carries
    the leaving mass flow (its enthalpy is the reservoir's own, evaluated
    here).  Returns (dTr_f/dt, dvr/dt).
    """
    props = props_tv(spec, state.tr, state.vr)
    return _pipe_rhs_from_props(props, inflow[0], inflow[1], outflow[0], dq_dt, volume, spec)


def sensor_rhs(trf: float, trs: float, tau: float) -> float:
    """First-order temperature sensor lag."""
    return (trf - trs) / tau


class StateLayout:
    """Index bookkeeping of the stacked state and output vectors."""

    def __init__(self, n_stages: int):
        self.n = n_stages
        self.n_states = 3 + 4 * n_stages + 3 * (n_stages - 1)
        self.n_outputs = 1 + 3 * n_stages

    def pipe_block(self, j: int) -> int:
        # pipes P0..P(N-1) carry states; P0 at 0, pipe j >= 1 behind j stages
        if not (0 <= j < self.n):
            raise IndexError(f"pipe P{j} carries no state block")
        return 0 if j == 0 else 7 * j

    def pipe_trf(self, j: int) -> int:
        return self.pipe_block(j)

    def pipe_trs(self, j: int) -> int:
        return self.pipe_block(j) + 1

    def pipe_vr(self, j: int) -> int:
        return self.pipe_block(j) + 2

    def stage_block(self, i: int) -> int:
        if not (1 <= i <= self.n):
            raise IndexError(f"no stage S{i}")
        return 3 + 7 * (i - 1)

    def stage_trf(self, i: int) -> int:
        return self.stage_block(i)

    def stage_trs(self, i: int) -> int:
        return self.stage_block(i) + 1

    def stage_dmu(self, i: int) -> int:
        return self.stage_block(i) + 2

    def stage_dphi(self, i: int) -> int:
        return self.stage_block(i) + 3

    def out_mdot(self) -> int:
        return 0

    def out_pipe_ts(self, j: int) -> int:
        return 1 + 3 * j

    def out_pipe_p(self, j: int) -> int:
        return 2 + 3 * j

    def out_stage_ts(self, i: int) -> int:
        return 3 * i

    def state_names(self) -> list[str]:
        names = ["P0_trf", "P0_trs", "P0_vr"]
        for i in range(1, self.n + 1):
            names += [f"S{i}_trf", f"S{i}_trs", f"S{i}_dmu", f"S{i}_dphi"]
            if i < self.n:
                names += [f"P{i}_trf", f"P{i}_trs", f"P{i}_vr"]
        return names

    def output_names(self) -> list[str]:
        names = ["mdot_P0"]
        for j in range(self.n):
            names += [f"Ts_P{j}", f"p_P{j}", f"Ts_S{j + 1}"]
        return names


@dataclass(frozen=True)
class ModelBounds:
    """Physical state domain; temperatures additionally limited by
    process-specific bounds inside the corresponding-states window."""

    tr_low: float = TR_MIN
    tr_high: float = TR_MAX

    def __post_init__(self):
        object.__setattr__(self, "tr_low", max(TR_MIN, self.tr_low))
        object.__setattr__(self, "tr_high", min(TR_MAX, self.tr_high))
        if self.tr_low >= self.tr_high:
            raise ValueError("empty temperature domain")

    def arrays(self, layout: StateLayout) -> tuple[np.ndarray, np.ndarray]:
        lo = np.full(layout.n_states, -np.inf)
        hi = np.full(layout.n_states, np.inf)
        for j in range(layout.n):
            lo[layout.pipe_trf(j)] = self.tr_low
            hi[layout.pipe_trf(j)] = self.tr_high
            lo[layout.pipe_trs(j)] = self.tr_low
            hi[layout.pipe_trs(j)] = self.tr_high
            lo[layout.pipe_vr(j)] = VR_MIN
        for i in range(1, layout.n + 1):
            lo[layout.stage_trf(i)] = self.tr_low
            hi[layout.stage_trf(i)] = self.tr_high
            lo[layout.stage_trs(i)] = self.tr_low
            hi[layout.stage_trs(i)] = self.tr_high
        return lo, hi


class CompressorModel:
    """Bundled dynamic equation set (f, g) plus the Euler propagator."""

    def __init__(
        self,
        spec: FluidSpec,
        geometry: CompressorGeometry,
        grids: list[MapGrid],
        bounds: ModelBounds | None = None,
        lenient_stage_math: bool = True,
    ):
        if len(grids) != geometry.n_stages:
            raise ValueError("one map grid per stage required")
        self.spec = spec
        self.geometry = geometry
        self.grids = list(grids)
        self.layout = StateLayout(geometry.n_stages)
        self.bounds = bounds or ModelBounds()
        # estimator use keeps stage math continuous in the expansion
        # quadrant so a single wide sigma point cannot stall a filter step
        self.lenient_stage_math = lenient_stage_math
        self._box_lo, self._box_hi = self.bounds.arrays(self.layout)
        # volume floor consistent with the reduced-pressure validity ceiling:
        # at the dense-phase bound alone the implied pressure can leave the
        # corresponding-states window by an order of magnitude
        from .realgas import PR_MAX, solve_pressure_explicit

        vr_floor = max(
            VR_MIN, solve_pressure_explicit(spec, self.bounds.tr_high, 0.98 * PR_MAX)[2]
        )
        for j in range(self.layout.n):
            idx = self.layout.pipe_vr(j)
            self._box_lo[idx] = max(self._box_lo[idx], vr_floor)

    # -- shared evaluation --------------------------------------------------

    def _resolve(self, x: np.ndarray, u: np.ndarray, grids) -> tuple[list, list]:
        """Operating points of all stages plus properties of all pipe states.

        Pipe properties are computed once and shared between the upstream
        stage (discharge pressure), the downstream stage (suction) and the
        pipe balance itself.
        """
        lay = self.layout
        spec = self.spec
        n = lay.n
        pipe_props = []
        for j in range(n):
            tr = x[lay.pipe_trf(j)]
            vr = x[lay.pipe_vr(j)]
            try:
                pipe_props.append(props_tv(spec, tr, vr))
            except Exception as err:
                raise ModelError(str(err), component=f"P{j}") from err
        ops = []
        for i in range(1, n + 1):
            suction = pipe_props[i - 1]
            pr2 = u[-1] / spec.pc if i == n else pipe_props[i].pr
            try:
                op = _stage_op_from_props(
                    spec,
                    grids[i - 1],
                    suction,
                    pr2,
                    x[lay.stage_trf(i)],
                    u[i - 1],
                    self.geometry.d2[i - 1],
                    x[lay.stage_dphi(i)],
                    x[lay.stage_dmu(i)],
                    strict=not self.lenient_stage_math,
                )
            except ModelError as err:
                raise ModelError(str(err), component=f"S{i}") from err
            except Exception as err:
                raise ModelError(str(err), component=f"S{i}") from err
            ops.append(op)
        return ops, pipe_props

    def operating_points(self, x: np.ndarray, u: np.ndarray, grids=None) -> list[OperatingPoint]:
        return self._resolve(np.asarray(x, float), np.asarray(u, float), grids or self.grids)[0]

    def rhs(self, x: np.ndarray, u: np.ndarray, grids=None) -> np.ndarray:
        """Full time derivative of the state vector."""
        return self.rhs_and_ops(x, u, grids)[0]

    def rhs_and_ops(self, x: np.ndarray, u: np.ndarray, grids=None):
        """Time derivative plus the stage operating points of the same
        evaluation (shared interim results)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        grids = grids or self.grids
        lay = self.layout
        geo = self.geometry
        ops, pipe_props = self._resolve(x, u, grids)
        dx = np.zeros(lay.n_states)
        # suction pipe: constant thermodynamic state, lagged sensor
        dx[lay.pipe_trs(0)] = sensor_rhs(x[lay.pipe_trf(0)], x[lay.pipe_trs(0)], geo.tau_pipe[0])
        for i in range(1, lay.n + 1):
            op = ops[i - 1]
            dx[lay.stage_trf(i)] = stage_temperature_rhs(
                op.mdot, op.hr1, op.dhr, op.hr2, op.vr2, op.cvr2, geo.v2[i - 1], self.spec
            )
            dx[lay.stage_trs(i)] = sensor_rhs(
                x[lay.stage_trf(i)], x[lay.stage_trs(i)], geo.tau_stage[i - 1]
            )
            # deviation states carry no dynamics
        for j in range(1, lay.n):
            op_in = ops[j - 1]
            op_out = ops[j]
            dtrf, dvr = _pipe_rhs_from_props(
                pipe_props[j], op_in.mdot, op_in.hr2, op_out.mdot, 0.0, geo.pipe_volume[j], self.spec
            )
            dx[lay.pipe_trf(j)] = dtrf
            dx[lay.pipe_vr(j)] = dvr
            dx[lay.pipe_trs(j)] = sensor_rhs(
                x[lay.pipe_trf(j)], x[lay.pipe_trs(j)], geo.tau_pipe[j]
            )
        return dx, ops

    def output(self, x: np.ndarray, u: np.ndarray, grids=None) -> np.ndarray:
        """Measured output vector (mass flow, sensor temperatures, pipe
        pressures in SI units)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        grids = grids or self.grids
        lay = self.layout
        ops, pipe_props = self._resolve(x, u, grids)
        y = np.zeros(lay.n_outputs)
        y[lay.out_mdot()] = ops[0].mdot
        for j in range(lay.n):
            y[lay.out_pipe_ts(j)] = x[lay.pipe_trs(j)] * self.spec.tc
            y[lay.out_pipe_p(j)] = pipe_props[j].pr * self.spec.pc
        for i in range(1, lay.n + 1):
            y[lay.out_stage_ts(i)] = x[lay.stage_trs(i)] * self.spec.tc
        return y

    # -- integration ---------------------------------------------------------

    @property
    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Effective state box (physical domain refined for EOS validity)."""
        return self._box_lo.copy(), self._box_hi.copy()

    def box_clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self._box_lo, self._box_hi)

    def propagate(
        self,
        x: np.ndarray,
        u_prev: np.ndarray,
        u_next: np.ndarray,
        dt_macro: float = 1.0,
        dt_micro: float = 0.05,
        grids=None,
        clip=None,
    ) -> np.ndarray:
        """Forward-Euler macro step with linear input interpolation.

        Inputs are sampled quantities; their linear interpolant is evaluated
        at the start of every substep.  After each substep the state is
        clipped into the physical domain (the model's own box clip unless a
        different projection is supplied).
        """
        if dt_micro > dt_macro:
            raise ValueError("dt_micro must not exceed dt_macro")
        x = np.asarray(x, dtype=float).copy()
        u_prev = np.asarray(u_prev, dtype=float)
        u_next = np.asarray(u_next, dtype=float)
        clip = clip or self.box_clip
        n_sub = max(1, round(dt_macro / dt_micro))
        h = dt_macro / n_sub
        for k in range(n_sub):
            frac = k * h / dt_macro
            u_star = (1.0 - frac) * u_prev + frac * u_next
            try:
                dx = self.rhs(x, u_star, grids)
            except ModelError as err:
                raise ModelError(
                    f"{err} at substep {k} (t+{k * h:.3f} s)", component=err.component
                ) from err
            x += h * dx
            x = clip(x)
        return x
