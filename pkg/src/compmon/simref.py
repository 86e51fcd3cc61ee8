"""Reference plant: ground-truth generator for monitoring experiments.

The simulated plant deliberately differs from the monitoring model so that
estimator runs face a realistic model mismatch:

* the property engine runs on perturbed fluid parameters (acentric factor
  and ideal-gas heat capacity scaled by configurable factors);
* stage performance maps are C1-continuous tensor interpolants on a dense
  350-node grid instead of the estimator's bilinear 140-node grid;
* stage discharge temperatures are converged algebraically every substep
  instead of being carried as artificial states;
* the temperature information leaving an intermediate pipe is delayed by
  plug-flow mass transport instead of being ideally mixed.

A scripted scenario sweeps shaft speed and discharge pressure across smooth
ramps, injects scripted map alterations (fault events), and emits 1 Hz
measurements with seeded, counter-based Gaussian noise, together with a
truth log of all internal quantities.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .compressor import (
    CompressorGeometry,
    CompressorModel,
    ModelBounds,
    StateLayout,
    _pipe_rhs_from_props,
    _polytropic_work,
)
from .perfmap import MapGrid, make_grid
from .realgas import FluidSpec, props_tp, props_tv

__all__ = [
    "TRUTH_MAP_VERSION",
    "StageMapShape",
    "TRUTH_STAGE_SHAPES",
    "truth_surge",
    "truth_phi",
    "truth_mu",
    "sample_truth_grid",
    "ReferenceMap",
    "PlugFlowDelay",
    "transport_delay",
    "FaultEvent",
    "ScenarioConfig",
    "ScenarioError",
    "Trajectory",
    "shaped_pressure_trajectory",
    "MeasurementSet",
    "ReferencePlant",
    "generate_measurements",
    "converged_discharge_temperature",
    "initial_state_guess",
    "default_scenario",
    "default_geometry",
    "default_fluid",
    "estimator_grid_geometry",
]

TRUTH_MAP_VERSION = "truth-maps-v1"


class ScenarioError(RuntimeError):
    """Scenario definition or plant integration failure."""


# ---------------------------------------------------------------------------
# Synthetic truth map surfaces (versioned fixture)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageMapShape:
    """Per-stage modifiers of the shared analytic map surfaces."""

    phi_scale: float = 1.0
    mu_shift: float = 0.0


TRUTH_STAGE_SHAPES = (StageMapShape(), StageMapShape(phi_scale=0.95, mu_shift=0.012))


def truth_surge(mach: float) -> float:
    """True surge-line head coefficient of the synthetic stages."""
    return 1.06 - 0.22 * mach


def truth_phi(mach: float, psi_p: float, shape: StageMapShape = StageMapShape()) -> float:
    """Flow coefficient surface: from choke flow at zero head down to the
    surge flow, dropping steeply toward the surge line."""
    psi_n = min(max(psi_p / truth_surge(mach), 0.0), 1.0)
    phi_surge = 0.005 + 0.004 * mach
    phi_choke = 0.020 + 0.014 * mach
    phi = phi_surge + (phi_choke - phi_surge) * (1.0 - psi_n**1.9) ** 0.62
    return phi * shape.phi_scale


def truth_mu(mach: float, psi_p: float, shape: StageMapShape = StageMapShape()) -> float:
    """Work-input-factor surface; rises with head so the polytropic
    efficiency improves toward the surge side."""
    psi_n = min(max(psi_p / truth_surge(mach), 0.0), 1.0)
    return 0.20 + 0.03 * mach + (0.34 - 0.06 * mach) * psi_n + 0.05 * psi_n**3 + shape.mu_shift


def sample_truth_grid(grid: MapGrid, stage: int) -> MapGrid:
    """Estimator-geometry grid filled with the true surface values."""
    shape = TRUTH_STAGE_SHAPES[stage - 1]
    phi = np.zeros(grid.size)
    mu = np.zeros(grid.size)
    for j in range(grid.ny):
        for i in range(grid.nx):
            mach = grid.mach_nodes[i]
            psi_abs = grid.psi_nodes[j] * grid.surge_psi[i]
            k = grid.flat_index(i, j)
            phi[k] = truth_phi(mach, psi_abs, shape)
            mu[k] = truth_mu(mach, psi_abs, shape)
    return grid.with_values(phi_values=phi, mu_values=mu)


# ---------------------------------------------------------------------------
# C1 tensor interpolation on the dense reference grid
# ---------------------------------------------------------------------------


def _pchip_slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Shape-preserving cubic Hermite slopes (Fritsch-Carlson)."""
    n = x.size
    h = np.diff(x)
    d = np.diff(y) / h
    m = np.zeros(n)
    same_sign = d[:-1] * d[1:] > 0.0
    if np.any(same_sign):
        w1 = 2.0 * h[1:] + h[:-1]
        w2 = h[1:] + 2.0 * h[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            harm = (w1 + w2) / (w1 / d[:-1] + w2 / d[1:])
        m[1:-1] = np.where(same_sign, harm, 0.0)
    m[0] = ((2.0 * h[0] + h[1]) * d[0] - h[0] * d[1]) / (h[0] + h[1])
    if m[0] * d[0] <= 0.0:
        m[0] = 0.0
    elif d[0] * d[1] < 0.0 and abs(m[0]) > 3.0 * abs(d[0]):
        m[0] = 3.0 * d[0]
    m[-1] = ((2.0 * h[-1] + h[-2]) * d[-1] - h[-1] * d[-2]) / (h[-1] + h[-2])
    if m[-1] * d[-1] <= 0.0:
        m[-1] = 0.0
    elif d[-1] * d[-2] < 0.0 and abs(m[-1]) > 3.0 * abs(d[-1]):
        m[-1] = 3.0 * d[-1]
    return m


def _hermite(x: np.ndarray, y: np.ndarray, m: np.ndarray, xq: float) -> float:
    if xq <= x[0]:
        return float(y[0])
    if xq >= x[-1]:
        return float(y[-1])
    k = int(np.searchsorted(x, xq, side="right")) - 1
    h = x[k + 1] - x[k]
    t = (xq - x[k]) / h
    t2 = t * t
    t3 = t2 * t
    return float(
        y[k] * (2 * t3 - 3 * t2 + 1)
        + m[k] * h * (t3 - 2 * t2 + t)
        + y[k + 1] * (-2 * t3 + 3 * t2)
        + m[k + 1] * h * (t3 - t2)
    )


class _TensorPchip:
    """C1 surface: cubic Hermite rows along the head axis, cubic Hermite
    across Mach of the row values."""

    def __init__(self, mach_nodes, psi_nodes, values):
        self.x = np.asarray(mach_nodes, float)
        self.y = np.asarray(psi_nodes, float)
        self.v = np.asarray(values, float)  # shape (nx, ny)
        self.row_slopes = np.vstack([_pchip_slopes(self.y, self.v[i]) for i in range(self.x.size)])

    def _rows_at(self, psi_n: float) -> np.ndarray:
        """All Mach-row values at one head coordinate (shared cell/fraction)."""
        y = self.y
        if psi_n <= y[0]:
            return self.v[:, 0].copy()
        if psi_n >= y[-1]:
            return self.v[:, -1].copy()
        k = int(np.searchsorted(y, psi_n, side="right")) - 1
        h = y[k + 1] - y[k]
        t = (psi_n - y[k]) / h
        t2 = t * t
        t3 = t2 * t
        return (
            self.v[:, k] * (2 * t3 - 3 * t2 + 1)
            + self.row_slopes[:, k] * h * (t3 - 2 * t2 + t)
            + self.v[:, k + 1] * (-2 * t3 + 3 * t2)
            + self.row_slopes[:, k + 1] * h * (t3 - t2)
        )

    def __call__(self, mach: float, psi_n: float) -> float:
        rows = self._rows_at(psi_n)
        return _hermite(self.x, rows, _pchip_slopes(self.x, rows), mach)


class ReferenceMap:
    """Dense C1 reference performance map of one stage."""

    def __init__(self, stage: int, nx: int = 14, ny: int = 25, mach_span=(0.40, 0.92)):
        self.stage = stage
        shape = TRUTH_STAGE_SHAPES[stage - 1]
        self.mach_nodes = np.linspace(mach_span[0], mach_span[1], nx)
        self.psi_nodes = np.linspace(0.0, 1.0, ny)
        phi = np.zeros((nx, ny))
        mu = np.zeros((nx, ny))
        for i, mach in enumerate(self.mach_nodes):
            for j, psi_n in enumerate(self.psi_nodes):
                psi_abs = psi_n * truth_surge(mach)
                phi[i, j] = truth_phi(mach, psi_abs, shape)
                mu[i, j] = truth_mu(mach, psi_abs, shape)
        self._phi = _TensorPchip(self.mach_nodes, self.psi_nodes, phi)
        self._mu = _TensorPchip(self.mach_nodes, self.psi_nodes, mu)
        self.clamp_events = 0

    @property
    def n_nodes(self) -> int:
        return self.mach_nodes.size * self.psi_nodes.size

    def query(self, mach: float, psi_p: float) -> tuple[float, float]:
        psi_n = psi_p / truth_surge(mach)
        if psi_n < 0.0 or psi_n > 1.0 or not (self.mach_nodes[0] <= mach <= self.mach_nodes[-1]):
            self.clamp_events += 1
            psi_n = min(max(psi_n, 0.0), 1.0)
            mach = min(max(mach, self.mach_nodes[0]), self.mach_nodes[-1])
        return self._phi(mach, psi_n), self._mu(mach, psi_n)


# ---------------------------------------------------------------------------
# Plug-flow transport delay
# ---------------------------------------------------------------------------


class PlugFlowDelay:
    """Temperature transport through a pipe: the outlet shows the inlet
    temperature that entered one pipe filling (by mass) earlier."""

    def __init__(self):
        self._cum = 0.0
        self._buffer: deque[tuple[float, float]] = deque()
        self.warmup_flagged = False

    def push(self, dt: float, mdot: float, temp_in: float) -> None:
        self._cum += max(mdot, 0.0) * dt
        self._buffer.append((self._cum, temp_in))

    def outlet(self, pipe_mass: float) -> float:
        target = self._cum - pipe_mass
        buf = self._buffer
        if not buf:
            raise ScenarioError("transport delay queried with empty history")
        if target <= buf[0][0]:
            self.warmup_flagged = True
            return buf[0][1]
        while len(buf) >= 2 and buf[1][0] <= target:
            buf.popleft()
        if len(buf) == 1:
            return buf[0][1]
        (c0, t0), (c1, t1) = buf[0], buf[1]
        w = (target - c0) / (c1 - c0) if c1 > c0 else 1.0
        return t0 + w * (t1 - t0)


def transport_delay(times, temps_in, mdots, pipe_mass: float) -> float:
    """Functional wrapper: outlet temperature implied by sampled histories."""
    delay = PlugFlowDelay()
    times = np.asarray(times, float)
    for k in range(1, times.size):
        delay.push(times[k] - times[k - 1], mdots[k], temps_in[k])
    return delay.outlet(pipe_mass)


# ---------------------------------------------------------------------------
# Scenario definition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FaultEvent:
    time_s: float
    stage: int
    quantity: str  # "mu" or "phi"
    offset: float

    def __post_init__(self):
        if self.quantity not in ("mu", "phi"):
            raise ScenarioError(f"unknown fault quantity {self.quantity!r}")


class Trajectory:
    """Piecewise-linear breakpoint table."""

    def __init__(self, points):
        pts = sorted((float(t), float(v)) for t, v in points)
        self.t = np.array([p[0] for p in pts])
        self.v = np.array([p[1] for p in pts])
        if self.t.size == 0:
            raise ScenarioError("empty trajectory table")

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.t, self.v))


def shaped_pressure_trajectory(points, tau: float, t_grid: np.ndarray) -> np.ndarray:
    """First-order response of the breakpoint target on a fixed time grid."""
    target = Trajectory(points)
    out = np.empty(t_grid.size)
    p = target(t_grid[0])
    out[0] = p
    for k in range(1, t_grid.size):
        dt = t_grid[k] - t_grid[k - 1]
        goal = target(t_grid[k])
        p = goal + (p - goal) * math.exp(-dt / tau)
        out[k] = p
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    duration_s: float
    sample_period_s: float = 1.0
    suction_pressure_pa: float = 100e5
    suction_temperature_k: float = 353.15
    speed_points: tuple = ()
    discharge_points: tuple = ()
    discharge_tau_s: float = 30.0
    noise_std_mdot: float = 0.1
    noise_std_temperature: float = 0.1
    noise_std_pressure: float = 0.1e5
    fault_events: tuple[FaultEvent, ...] = ()
    seed: int = 0
    omega_scale: float = 1.02
    cv_scale: float = 1.01
    warmup_s: float = 150.0
    dt_micro: float = 0.05  # monitor-model substep (stiff artificial states)
    dt_plant: float = 0.2  # reference-plant substep (algebraic stage solves)
    plant: str = "reference"  # "reference" (mismatched) or "monitor"

    def __post_init__(self):
        if self.duration_s <= 0.0 or self.sample_period_s <= 0.0:
            raise ScenarioError("duration and sample period must be positive")
        if not self.speed_points or not self.discharge_points:
            raise ScenarioError("speed_points and discharge_points are required")
        for t, _ in tuple(self.speed_points) + tuple(self.discharge_points):
            if t < 0.0 or t > self.duration_s:
                raise ScenarioError("trajectory breakpoints must lie in [0, duration]")
        if self.plant not in ("reference", "monitor"):
            raise ScenarioError(f"unknown plant kind {self.plant!r}")

    @classmethod
    def from_config(cls, source) -> "ScenarioConfig":
        if isinstance(source, (str, bytes)):
            with open(source) as fh:
                source = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(source) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = dict(source)
        kwargs["speed_points"] = tuple((float(t), float(v)) for t, v in kwargs["speed_points"])
        kwargs["discharge_points"] = tuple(
            (float(t), float(v)) for t, v in kwargs["discharge_points"]
        )
        kwargs["fault_events"] = tuple(
            FaultEvent(**ev) if isinstance(ev, dict) else FaultEvent(*ev)
            for ev in kwargs.get("fault_events", ())
        )
        return cls(**kwargs)

    def to_config(self) -> dict:
        cfg = {
            k: getattr(self, k)
            for k in self.__dataclass_fields__
            if k not in ("speed_points", "discharge_points", "fault_events")
        }
        cfg["speed_points"] = [list(p) for p in self.speed_points]
        cfg["discharge_points"] = [list(p) for p in self.discharge_points]
        cfg["fault_events"] = [
            {"time_s": e.time_s, "stage": e.stage, "quantity": e.quantity, "offset": e.offset}
            for e in self.fault_events
        ]
        return cfg


@dataclass
class MeasurementSet:
    """Sampled measurement stream plus the aligned truth log and metadata."""

    time: np.ndarray
    outputs: np.ndarray  # clean outputs + noise
    inputs: np.ndarray  # n_S1..n_SN, p_PN as sampled
    clean_outputs: np.ndarray
    output_names: list[str]
    input_names: list[str]
    truth: dict[str, np.ndarray]
    metadata: dict

    def measurement_rows(self):
        for k in range(self.time.size):
            yield (self.time[k], self.outputs[k], self.inputs[k])


# ---------------------------------------------------------------------------
# Defaults for the two-stage supercritical test case
# ---------------------------------------------------------------------------


def default_fluid() -> FluidSpec:
    """Supercritical CO2 parameter set of the two-stage test case."""
    return FluidSpec(
        tc=304.28,
        pc=73.77e5,
        omega=0.224,
        r_specific=188.92,
        cv_ideal_coeffs=(316.88, 1.35901, -7.9550e-4, 1.69711e-7),
        t_valid_min=220.0,
        t_valid_max=600.0,
    )


def default_geometry() -> CompressorGeometry:
    return CompressorGeometry(
        n_stages=2,
        d2=(0.25, 0.24),
        v2=(0.03, 0.02),
        pipe_volume=(3.0, 3.0, 2.0),
        tau_pipe=(10.0, 10.0),
        tau_stage=(10.0, 10.0),
    )


def estimator_grid_geometry(nx: int = 10, ny: int = 14) -> MapGrid:
    """Empty estimator grid spanning the expected operating domain with a
    generous expected surge line."""
    return make_grid(0.45, 0.90, nx, ny, surge_table=lambda m: 1.12 - 0.18 * m)


def default_scenario(duration_s: float = 3600.0, seed: int = 7, **overrides) -> ScenarioConfig:
    """Flexible-operation scenario: speed sweeps between 70 and 105 percent
    with coordinated discharge-pressure setpoints, one work-input fault on
    stage 1 at 40 minutes."""
    speed = (
        (0.0, 250.0),
        (30.0, 250.0),
        (420.0, 262.0),
        (700.0, 262.0),
        (1200.0, 190.0),
        (1680.0, 240.0),
        (2160.0, 210.0),
        (2340.0, 255.0),
        (2700.0, 255.0),
        (3120.0, 225.0),
        (3600.0, 250.0),
    )
    pressure = (
        (0.0, 152e5),
        (30.0, 152e5),
        (420.0, 159e5),
        (700.0, 159e5),
        (1200.0, 126e5),
        (1680.0, 147e5),
        (2160.0, 135e5),
        (2340.0, 154e5),
        (2700.0, 154e5),
        (3120.0, 141e5),
        (3600.0, 151e5),
    )
    if duration_s != 3600.0:
        scale = duration_s / 3600.0
        speed = tuple((t * scale, v) for t, v in speed)
        pressure = tuple((t * scale, v) for t, v in pressure)
    cfg = dict(
        duration_s=duration_s,
        speed_points=speed,
        discharge_points=pressure,
        fault_events=(FaultEvent(time_s=2400.0 * duration_s / 3600.0, stage=1, quantity="mu", offset=0.1),),
        seed=seed,
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


# ---------------------------------------------------------------------------
# Reference plant integration
# ---------------------------------------------------------------------------


def converged_discharge_temperature(
    spec: FluidSpec,
    suction,
    pr2: float,
    speed: float,
    d2: float,
    query,
    trf_guess: float,
    tol: float = 1e-10,
) -> tuple[float, dict]:
    """Stage discharge temperature at which the map-implied compression work
    matches the enthalpy rise.

    ``query(mach, psi_p) -> (phi, mu)`` supplies the reference map.  Returns
    the converged reduced temperature and the stage quantities there.
    """
    u2 = math.pi * speed * d2
    mach = u2 / suction.a
    rt = spec.r_specific * spec.tc

    def residual(trf: float):
        disc = props_tp(spec, trf, pr2)
        nv, yp = _polytropic_work(suction.pr, suction.vr, pr2, disc.vr, rt)
        psi_p = 2.0 * yp / (u2 * u2)
        phi, mu = query(mach, psi_p)
        dhr = mu * u2 * u2 / rt
        detail = {
            "mach": mach,
            "psi_p": psi_p,
            "phi": phi,
            "mu": mu,
            "nv": nv,
            "yp": yp,
            "disc": disc,
            "dhr": dhr,
            "u2": u2,
        }
        return suction.hr + dhr - disc.hr, detail

    # Quasi-Newton from the warm start: the residual slope is dominated by
    # -dh/dT at constant pressure, approximated from the discharge state.
    t1 = max(trf_guess, suction.tr)
    f1, det1 = residual(t1)
    for _ in range(40):
        if abs(f1) <= tol:
            return t1, det1
        disc = det1["disc"]
        cp_r = disc.cvr - t1 * disc.dpr_dtr_v**2 / disc.dpr_dvr_t
        slope = -max(cp_r, 0.5)
        t2 = min(max(t1 - f1 / slope, suction.tr * 0.9), suction.tr * 1.6)
        if t2 == t1:
            break
        t1 = t2
        f1, det1 = residual(t1)
    # Bisection fallback over a generous bracket.
    lo, hi = suction.tr * 0.95, suction.tr * 1.6
    flo, _ = residual(lo)
    fhi, _ = residual(hi)
    if flo * fhi > 0.0:
        raise ScenarioError(
            f"no stage-temperature root in bracket (f({lo:.3f})={flo:.3g}, f({hi:.3f})={fhi:.3g})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm, detm = residual(mid)
        if abs(fm) <= tol:
            return mid, detm
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
    raise ScenarioError("stage-temperature bisection exceeded iteration cap")


class ReferencePlant:
    """Mismatched two-model plant integrated per scenario."""

    def __init__(self, scenario: ScenarioConfig, fluid: FluidSpec, geometry: CompressorGeometry):
        self.scenario = scenario
        self.geometry = geometry
        # Deliberate parameter mismatch against the monitoring model.
        self.spec = replace(
            fluid,
            omega=fluid.omega * scenario.omega_scale,
            cv_ideal_coeffs=tuple(c * scenario.cv_scale for c in fluid.cv_ideal_coeffs),
        )
        self.maps = [ReferenceMap(i + 1) for i in range(geometry.n_stages)]
        self.tr_suc = scenario.suction_temperature_k / self.spec.tc
        self.pr_suc = scenario.suction_pressure_pa / self.spec.pc
        self.suction = props_tp(self.spec, self.tr_suc, self.pr_suc)
        n = geometry.n_stages
        # dynamic states: per intermediate pipe (trf, vr); sensors P0..P(N-1), S1..SN
        self.pipe_trf = np.zeros(n - 1)
        self.pipe_vr = np.zeros(n - 1)
        self.sens_pipe = np.zeros(n)
        self.sens_stage = np.zeros(n)
        self.delays = [PlugFlowDelay() for _ in range(n - 1)]
        self.stage_trf = np.zeros(n)  # converged values, warm starts
        self.mass_residual = np.zeros(n - 1)  # bookkeeping for balance checks
        self._pipe_mass0 = np.zeros(n - 1)
        self._net_in = np.zeros(n - 1)

    # -- map access with fault overlay ------------------------------------

    def map_query(self, stage: int, t: float, mach: float, psi_p: float) -> tuple[float, float]:
        phi, mu = self.maps[stage - 1].query(mach, psi_p)
        for ev in self.scenario.fault_events:
            if ev.stage == stage and t >= ev.time_s:
                if ev.quantity == "mu":
                    mu += ev.offset
                else:
                    phi += ev.offset
        return phi, mu

    # -- initialization -----------------------------------------------------

    def initialize(self, u0: np.ndarray) -> None:
        n = self.geometry.n_stages
        pr_dis = u0[-1] / self.spec.pc
        # geometric pressure ladder as the crude start
        ratios = (pr_dis / self.pr_suc) ** (1.0 / n)
        trf_guess = self.tr_suc
        suction = self.suction
        for j in range(n - 1):
            pr_j = self.pr_suc * ratios ** (j + 1)
            trf_guess = trf_guess + 0.035
            disc = props_tp(self.spec, trf_guess, pr_j)
            self.pipe_trf[j] = trf_guess
            self.pipe_vr[j] = disc.vr
        self.stage_trf[:] = trf_guess + 0.02
        self.sens_pipe[0] = self.tr_suc
        self.sens_pipe[1:] = self.pipe_trf
        self.sens_stage[:] = self.stage_trf
        for j in range(n - 1):
            mass = self.geometry.pipe_volume[j + 1] / (
                self.pipe_vr[j] * self.spec.r_specific * self.spec.tc / self.spec.pc
            )
            self.delays[j].push(1.0, mass * 2.0, self.pipe_trf[j])
        self._pipe_mass0 = np.array(
            [
                self.geometry.pipe_volume[j + 1]
                / (self.pipe_vr[j] * self.spec.r_specific * self.spec.tc / self.spec.pc)
                for j in range(n - 1)
            ]
        )
        self._net_in[:] = 0.0

    # -- one micro step -----------------------------------------------------

    def step(self, t: float, u: np.ndarray, dt: float) -> dict:
        geo = self.geometry
        spec = self.spec
        n = geo.n_stages
        rt_over_pc = spec.r_specific * spec.tc / spec.pc

        stage_detail = []
        suction_states = [self.suction]
        pipe_props = []
        exit_temps = np.zeros(max(n - 1, 1))
        for j in range(n - 1):
            props = props_tv(spec, self.pipe_trf[j], self.pipe_vr[j])
            pipe_props.append(props)
            pipe_mass = geo.pipe_volume[j + 1] / (props.vr * rt_over_pc)
            t_exit = self.delays[j].outlet(pipe_mass)
            exit_temps[j] = t_exit
            # plug-flow exit state feeds the next stage suction
            suction_states.append(props_tp(spec, t_exit, props.pr))

        mdots = np.zeros(n)
        for i in range(1, n + 1):
            suction = suction_states[i - 1]
            pr2 = u[-1] / spec.pc if i == n else pipe_props[i - 1].pr
            trf, det = converged_discharge_temperature(
                spec,
                suction,
                pr2,
                u[i - 1],
                geo.d2[i - 1],
                lambda mach, psi, _i=i: self.map_query(_i, t, mach, psi),
                self.stage_trf[i - 1],
            )
            self.stage_trf[i - 1] = trf
            mdot = det["phi"] / suction.vr * 0.25 * math.pi * geo.d2[i - 1] ** 2 * det["u2"] / rt_over_pc
            mdots[i - 1] = mdot
            eta = det["psi_p"] / (2.0 * det["mu"]) if det["mu"] > 0 else math.inf
            stage_detail.append(
                {
                    "mach": det["mach"],
                    "psi_p": det["psi_p"],
                    "phi": det["phi"],
                    "mu": det["mu"],
                    "eta_p": eta,
                    "yp": det["yp"],
                    "vdot_s": det["phi"] * 0.25 * math.pi * geo.d2[i - 1] ** 2 * det["u2"],
                    "mdot": mdot,
                    "trf": trf,
                    "hr2": det["disc"].hr,
                    "suction": suction,
                    "t_exit": exit_temps[i - 1] if i <= n - 1 else math.nan,
                }
            )

        # pipe balances: energy via the mixed reservoir, mass bookkept exactly
        for j in range(n - 1):
            dtrf, _ = _pipe_rhs_from_props(
                pipe_props[j],
                mdots[j],
                stage_detail[j]["hr2"],
                mdots[j + 1],
                0.0,
                geo.pipe_volume[j + 1],
                spec,
            )
            self.pipe_trf[j] += dt * dtrf
            mass = geo.pipe_volume[j + 1] / (self.pipe_vr[j] * rt_over_pc)
            mass += dt * (mdots[j] - mdots[j + 1])
            self.pipe_vr[j] = geo.pipe_volume[j + 1] / (mass * rt_over_pc)
            self.delays[j].push(dt, mdots[j], self.stage_trf[j])
            self._net_in[j] += dt * (mdots[j] - mdots[j + 1])

        # sensors: P0 sees the suction, P_j the plug-flow exit temperature
        self.sens_pipe[0] += dt * (self.tr_suc - self.sens_pipe[0]) / geo.tau_pipe[0]
        for j in range(n - 1):
            self.sens_pipe[j + 1] += dt * (exit_temps[j] - self.sens_pipe[j + 1]) / geo.tau_pipe[j + 1]
        for i in range(n):
            self.sens_stage[i] += dt * (self.stage_trf[i] - self.sens_stage[i]) / geo.tau_stage[i]

        return {"stages": stage_detail, "pipe_props": pipe_props, "mdots": mdots}

    def clean_outputs(self, detail: dict) -> np.ndarray:
        n = self.geometry.n_stages
        y = np.zeros(1 + 3 * n)
        y[0] = detail["mdots"][0]
        y[1] = self.sens_pipe[0] * self.spec.tc
        y[2] = self.scenario.suction_pressure_pa
        for j in range(1, n):
            y[1 + 3 * j] = self.sens_pipe[j] * self.spec.tc
            y[2 + 3 * j] = detail["pipe_props"][j - 1].pr * self.spec.pc
        for i in range(1, n + 1):
            y[3 * i] = self.sens_stage[i - 1] * self.spec.tc
        return y

    def mass_balance_residual(self) -> np.ndarray:
        """Relative mass bookkeeping error per intermediate pipe."""
        res = np.zeros(self.geometry.n_stages - 1)
        for j in range(self.geometry.n_stages - 1):
            mass_now = self.geometry.pipe_volume[j + 1] / (
                self.pipe_vr[j] * self.spec.r_specific * self.spec.tc / self.spec.pc
            )
            expected = self._pipe_mass0[j] + self._net_in[j]
            res[j] = (mass_now - expected) / expected
        return res


# ---------------------------------------------------------------------------
# Monitor-identical plant (self-consistency experiments)
# ---------------------------------------------------------------------------


def initial_state_guess(
    model: CompressorModel, suction_temperature_k: float, suction_pressure_pa: float, u0
) -> np.ndarray:
    """Rough but feasible model state: geometric pressure ladder across the
    stages, modest temperature rise per stage."""
    lay = model.layout
    spec = model.spec
    n = model.geometry.n_stages
    tr_suc = suction_temperature_k / spec.tc
    pr_suc = suction_pressure_pa / spec.pc
    suc = props_tp(spec, tr_suc, pr_suc)
    x = np.zeros(lay.n_states)
    x[lay.pipe_trf(0)] = tr_suc
    x[lay.pipe_trs(0)] = tr_suc
    x[lay.pipe_vr(0)] = suc.vr
    pr_dis = u0[-1] / spec.pc
    ratios = (pr_dis / pr_suc) ** (1.0 / n)
    trf = tr_suc
    for i in range(1, n + 1):
        trf = trf + 0.035
        x[lay.stage_trf(i)] = trf
        x[lay.stage_trs(i)] = trf
        if i < n:
            disc = props_tp(spec, trf, pr_suc * ratios**i)
            x[lay.pipe_trf(i)] = trf
            x[lay.pipe_trs(i)] = trf
            x[lay.pipe_vr(i)] = disc.vr
    return x


class _MonitorPlant:
    """Plant that reuses the monitoring model itself: no mismatch."""

    def __init__(self, scenario: ScenarioConfig, fluid: FluidSpec, geometry: CompressorGeometry):
        self.scenario = scenario
        self.spec = fluid
        self.geometry = geometry
        grid_geo = estimator_grid_geometry()
        self.grids = [sample_truth_grid(grid_geo, i + 1) for i in range(geometry.n_stages)]
        self.model = CompressorModel(fluid, geometry, self.grids, ModelBounds(0.95, 1.9))
        self.x = None

    def initialize(self, u0: np.ndarray) -> None:
        self.x = initial_state_guess(
            self.model,
            self.scenario.suction_temperature_k,
            self.scenario.suction_pressure_pa,
            u0,
        )

    def step(self, t: float, u_prev: np.ndarray, u_next: np.ndarray, dt: float) -> None:
        self.x = self.model.propagate(
            self.x, u_prev, u_next, dt_macro=dt, dt_micro=self.scenario.dt_micro
        )

    def outputs(self, u: np.ndarray) -> np.ndarray:
        return self.model.output(self.x, u)


# ---------------------------------------------------------------------------
# Measurement generation
# ---------------------------------------------------------------------------


def _input_arrays(scenario: ScenarioConfig, geometry: CompressorGeometry):
    n_samples = int(round(scenario.duration_s / scenario.sample_period_s)) + 1
    t = np.arange(n_samples) * scenario.sample_period_s
    speed = Trajectory(scenario.speed_points)
    speeds = np.array([speed(tk) for tk in t])
    pressures = shaped_pressure_trajectory(scenario.discharge_points, scenario.discharge_tau_s, t)
    u = np.column_stack([np.tile(speeds, (geometry.n_stages, 1)).T, pressures])
    return t, u


def generate_measurements(
    scenario: ScenarioConfig,
    fluid: FluidSpec | None = None,
    geometry: CompressorGeometry | None = None,
) -> MeasurementSet:
    """Integrate the scenario plant and emit the sampled, noisy measurement
    stream together with the truth log."""
    fluid = fluid or default_fluid()
    geometry = geometry or default_geometry()
    t_s, u_s = _input_arrays(scenario, geometry)
    layout = StateLayout(geometry.n_stages)
    n = geometry.n_stages

    rng = np.random.Generator(np.random.Philox(key=scenario.seed))
    noise_scale = np.zeros(layout.n_outputs)
    noise_scale[0] = scenario.noise_std_mdot
    for j in range(n):
        noise_scale[1 + 3 * j] = scenario.noise_std_temperature
        noise_scale[2 + 3 * j] = scenario.noise_std_pressure
    for i in range(1, n + 1):
        noise_scale[3 * i] = scenario.noise_std_temperature

    truth: dict[str, list] = {"t": []}
    clean = np.zeros((t_s.size, layout.n_outputs))

    if scenario.plant == "monitor":
        plant = _MonitorPlant(scenario, fluid, geometry)
        plant.initialize(u_s[0])
        # settle to a near-steady start
        warm_steps = int(scenario.warmup_s / scenario.sample_period_s)
        for _ in range(warm_steps):
            plant.step(0.0, u_s[0], u_s[0], scenario.sample_period_s)
        lay = plant.model.layout
        for k in range(t_s.size):
            if k > 0:
                plant.step(t_s[k - 1], u_s[k - 1], u_s[k], scenario.sample_period_s)
            clean[k] = plant.outputs(u_s[k])
            ops = plant.model.operating_points(plant.x, u_s[k])
            truth["t"].append(t_s[k])
            for i, op in enumerate(ops, start=1):
                for name, val in (
                    ("mach", op.mach),
                    ("psi_p", op.psi_p),
                    ("phi", op.phi),
                    ("mu", op.mu),
                    ("eta_p", op.eta_p),
                    ("yp", op.yp),
                    ("mdot", op.mdot),
                    ("t_stage", plant.x[lay.stage_trf(i)] * fluid.tc),
                ):
                    truth.setdefault(f"S{i}_{name}", []).append(val)
            for j in range(1, n):
                truth.setdefault(f"P{j}_t_fluid", []).append(plant.x[lay.pipe_trf(j)] * fluid.tc)
                truth.setdefault(f"P{j}_vr", []).append(plant.x[lay.pipe_vr(j)])
        mass_residual = np.zeros(max(n - 1, 1))
        plant_spec = fluid
        map_meta = {"kind": "bilinear-truth", "version": TRUTH_MAP_VERSION}
    else:
        plant = ReferencePlant(scenario, fluid, geometry)
        plant.initialize(u_s[0])
        dt = scenario.dt_plant
        warm_steps = int(round(scenario.warmup_s / dt))
        for k in range(warm_steps):
            try:
                plant.step(0.0, u_s[0], dt)
            except Exception as err:
                raise ScenarioError(f"plant warmup failed at {k * dt:.2f} s: {err}") from err
        # reset mass bookkeeping after warmup
        plant._pipe_mass0 = np.array(
            [
                geometry.pipe_volume[j + 1]
                / (plant.pipe_vr[j] * plant.spec.r_specific * plant.spec.tc / plant.spec.pc)
                for j in range(n - 1)
            ]
        )
        plant._net_in[:] = 0.0
        sub = max(1, int(round(scenario.sample_period_s / dt)))
        h = scenario.sample_period_s / sub
        detail = plant.step(0.0, u_s[0], 0.0)  # evaluate without advancing
        for k in range(t_s.size):
            if k > 0:
                for s in range(sub):
                    tau = t_s[k - 1] + s * h
                    frac = (tau - t_s[k - 1]) / scenario.sample_period_s
                    u_star = (1.0 - frac) * u_s[k - 1] + frac * u_s[k]
                    try:
                        detail = plant.step(tau, u_star, h)
                    except Exception as err:
                        raise ScenarioError(
                            f"plant integration failed at t={tau:.2f} s: {err}"
                        ) from err
            clean[k] = plant.clean_outputs(detail)
            truth["t"].append(t_s[k])
            for i, det in enumerate(detail["stages"], start=1):
                for name in ("mach", "psi_p", "phi", "mu", "eta_p", "yp", "mdot"):
                    truth.setdefault(f"S{i}_{name}", []).append(det[name])
                truth.setdefault(f"S{i}_t_stage", []).append(plant.stage_trf[i - 1] * plant.spec.tc)
            for j in range(1, n):
                truth.setdefault(f"P{j}_t_fluid", []).append(
                    detail["stages"][j - 1]["t_exit"] * plant.spec.tc
                )
                truth.setdefault(f"P{j}_vr", []).append(plant.pipe_vr[j - 1])
        mass_residual = plant.mass_balance_residual()
        plant_spec = plant.spec
        map_meta = {
            "kind": "pchip-c1",
            "version": TRUTH_MAP_VERSION,
            "n_nodes": plant.maps[0].n_nodes,
        }

    noise = rng.normal(0.0, 1.0, size=clean.shape) * noise_scale
    outputs = clean + noise

    est_grid = estimator_grid_geometry()
    resample_gap = _map_resampling_gap(est_grid)

    metadata = {
        "seed": scenario.seed,
        "plant": scenario.plant,
        "omega_scale": scenario.omega_scale if scenario.plant == "reference" else 1.0,
        "cv_scale": scenario.cv_scale if scenario.plant == "reference" else 1.0,
        "truth_map": map_meta,
        "fault_events": [
            {"time_s": e.time_s, "stage": e.stage, "quantity": e.quantity, "offset": e.offset}
            for e in scenario.fault_events
        ],
        "plant_omega": plant_spec.omega,
        "mass_balance_residual": [float(r) for r in np.atleast_1d(mass_residual)],
        "map_resampling_gap": resample_gap,
    }

    input_names = [f"n_S{i}" for i in range(1, n + 1)] + [f"p_P{n}"]
    return MeasurementSet(
        time=t_s,
        outputs=outputs,
        inputs=u_s,
        clean_outputs=clean,
        output_names=layout.output_names(),
        input_names=input_names,
        truth={k: np.asarray(v) for k, v in truth.items()},
        metadata=metadata,
    )


def _map_resampling_gap(grid: MapGrid) -> dict:
    """Worst-case discrepancy between the dense C1 reference maps and their
    bilinear resampling on the estimator grid (scenario metadata)."""
    from .perfmap import interp_coeffs, map_lookup

    gaps = {}
    for stage in (1, 2):
        ref = ReferenceMap(stage)
        sampled = sample_truth_grid(grid, stage)
        worst_phi = worst_mu = 0.0
        for mach in np.linspace(grid.mach_nodes[0], grid.mach_nodes[-1], 25):
            for psi_n in np.linspace(0.0, 0.95, 25):
                psi_abs = psi_n * sampled.surge_at(mach)
                phi_ref, mu_ref = ref.query(mach, psi_abs)
                m = interp_coeffs(sampled, mach, psi_abs)
                phi_b, mu_b = map_lookup(sampled, m)
                worst_phi = max(worst_phi, abs(phi_ref - phi_b))
                worst_mu = max(worst_mu, abs(mu_ref - mu_b))
        gaps[f"stage{stage}"] = {"phi": worst_phi, "mu": worst_mu}
    return gaps
