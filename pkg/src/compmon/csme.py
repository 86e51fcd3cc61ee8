"""Coupled state and map estimation.

One estimation step per measurement sample:

a. adapt the process noise: the deviation-state entries are scaled by the
   interpolated local map uncertainty (normalized to its grid minimum), and
   each stage-temperature entry follows the squared previous model residual
   of that artificial state, so an unconverged stage temperature receives a
   wide channel;
b. run the constrained unscented filter against the measurement, with the
   revised map vectors embedded in the model;
c. gate on the startup condition (relative settling of the covariance
   diagonal) before any map learning starts;
d-f. weight the deviation estimates by their filter variances and feed the
   implied local flow/work values into the per-stage recursive map
   estimators;
g. project the updated actual maps onto the interpolation constraint at the
   current operating point (revised maps), then reset the deviation states.

The infinity-norm gap between the actual and the revised work-input map,
thresholded by the scaled deviation variance, yields the per-stage fault
indication; a configurable count of consecutive indications raises the
stage's fault flag.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .compressor import CompressorModel, ModelError, OperatingPoint
from .cukf import ConstraintSpec, GaussianBelief, NoiseConfig, UtParams, correct, predict
from .perfmap import InterpCoeffs, MapGrid, build_regularizers, interp_coeffs
from .realgas import props_tp
from .rme import RmeConfig, RmeState, rme_init, rme_update

log = logging.getLogger(__name__)

__all__ = [
    "CsmeConfig",
    "CsmeError",
    "ProjectionError",
    "StageEstimate",
    "CsmeState",
    "StepRecord",
    "CoupledEstimator",
    "lil",
    "startup_check",
    "revise_map",
    "fault_indicator",
    "default_noise",
]


def default_noise(layout) -> NoiseConfig:
    """Hand-tuned noise defaults for the two-stage test configuration."""
    rx_std = {}
    for name in layout.state_names():
        if name.endswith("_trs"):
            rx_std[name] = 1e-5
        elif name.endswith("_trf"):
            rx_std[name] = 1e-4
        elif name.endswith("_vr"):
            rx_std[name] = 1e-4
        else:  # deviation states
            rx_std[name] = 1e-3
    ry_std = {}
    for name in layout.output_names():
        if name.startswith("mdot"):
            ry_std[name] = 0.1
        elif name.startswith("Ts"):
            ry_std[name] = 0.1
        else:  # pressures in Pa
            ry_std[name] = 0.1e5
    return NoiseConfig.from_stds(layout.state_names(), layout.output_names(), rx_std, ry_std)


class CsmeError(RuntimeError):
    """Estimation step failed; the previous state remains valid."""


class ProjectionError(CsmeError):
    """Revised-map projection impossible (no active interpolation node)."""


@dataclass(frozen=True)
class CsmeConfig:
    """Tuning constants of the coupled estimator."""

    w_p: float = 100.0  # initial covariance scale on the process noise
    w_tr: float = 1e-2  # stage-temperature noise adaptation gain
    rx_trf_floor: float = 1e-16  # keeps the covariance positive at convergence
    start_threshold: float = 0.02  # startup gate on the covariance diagonal
    wf: float = 2.0  # fault indication threshold factor
    nf: int = 5  # consecutive indications before flagging
    w2_phi: float = 1e-4
    w2_mu: float = 1e-4
    wg_phi: float | None = None  # default 1e-4 / rx0{dphi}
    wg_mu: float | None = None
    wc_phi: float | None = None
    wc_mu: float | None = None
    dt_macro: float = 1.0
    dt_micro: float = 0.05
    ut: UtParams = UtParams()

    @classmethod
    def from_config(cls, cfg: dict) -> "CsmeConfig":
        known = set(cls.__dataclass_fields__) - {"ut"}
        unknown = set(cfg) - known - {"ut_alpha", "ut_beta", "ut_kappa"}
        if unknown:
            raise CsmeError(f"unknown estimator keys: {sorted(unknown)}")
        ut = UtParams(
            alpha=float(cfg.get("ut_alpha", 1.0)),
            beta=float(cfg.get("ut_beta", 2.0)),
            kappa=float(cfg.get("ut_kappa", 0.0)),
        )
        kwargs = {k: cfg[k] for k in cfg if k in known}
        return cls(ut=ut, **kwargs)


@dataclass
class StageEstimate:
    """Per-stage map estimation state."""

    rme_phi: RmeState
    rme_mu: RmeState
    revised_phi: np.ndarray
    revised_mu: np.ndarray
    fault_counter: int = 0
    fault_flagged: bool = False

    def copy(self) -> "StageEstimate":
        return StageEstimate(
            rme_phi=self.rme_phi.copy(),
            rme_mu=self.rme_mu.copy(),
            revised_phi=self.revised_phi.copy(),
            revised_mu=self.revised_mu.copy(),
            fault_counter=self.fault_counter,
            fault_flagged=self.fault_flagged,
        )


@dataclass
class CsmeState:
    belief: GaussianBelief
    stages: list[StageEstimate]
    started: bool
    prev_diag: np.ndarray
    k: int

    def copy(self) -> "CsmeState":
        return CsmeState(
            belief=self.belief.copy(),
            stages=[s.copy() for s in self.stages],
            started=self.started,
            prev_diag=self.prev_diag.copy(),
            k=self.k,
        )


@dataclass
class StepRecord:
    """Per-step monitoring quantities (one CSV row)."""

    t: float
    k: int
    started: bool
    mean: np.ndarray
    cov_diag: np.ndarray
    stage_rows: list[dict]


# ---------------------------------------------------------------------------
# Pure helper operations
# ---------------------------------------------------------------------------


def lil(w_r: float) -> float:
    """Local information level in percent; clamped for extrapolated
    queries where the comonotonicity premise does not hold."""
    if w_r < 1.0:
        log.warning("local information weight %.4g < 1 (extrapolated query); clamped", w_r)
        return 100.0
    return 100.0 / math.sqrt(w_r)


def startup_check(diag_curr: np.ndarray, diag_prev: np.ndarray, threshold: float) -> bool:
    """True when the covariance diagonal has settled in relative terms."""
    rel = np.abs(diag_curr - diag_prev) / np.maximum(np.abs(diag_prev), 1e-300)
    return bool(np.max(rel) < threshold)


def revise_map(
    z_actual: np.ndarray, p_diag: np.ndarray, m: InterpCoeffs, z_hat: float
) -> np.ndarray:
    """Minimal weighted adjustment of the actual map meeting the
    interpolation constraint at the current operating point.

    Only the nodes of the active interpolation cell can move; the inverse
    node uncertainties act as the weights, so well-known nodes stay put.
    Solves the equality-constrained diagonal quadratic program in closed
    form (the dense matrix formulation reduces to the active cell).
    """
    active = [(i, w) for i, w in zip(m.indices, m.weights) if w != 0.0]
    if not active:
        raise ProjectionError("all interpolation coefficients vanish")
    denom = sum(w * w * p_diag[i] for i, w in active)
    if denom <= 0.0:
        raise ProjectionError("active nodes carry no adjustable uncertainty")
    innov = z_hat - sum(w * z_actual[i] for i, w in active)
    revised = z_actual.copy()
    for i, w in active:
        revised[i] += innov * w * p_diag[i] / denom
    return revised


def fault_indicator(
    z_actual_mu: np.ndarray,
    revised_mu: np.ndarray,
    px_dmu: float,
    wf: float,
    nf: int,
    counter: int,
) -> tuple[bool, bool, int]:
    """Gap-based fault logic: indication when the actual/revised map gap
    exceeds the scaled deviation uncertainty, flag after nf+1 consecutive
    indications."""
    gap = float(np.max(np.abs(z_actual_mu - revised_mu)))
    indicated = gap > wf * math.sqrt(max(px_dmu, 0.0))
    counter = counter + 1 if indicated else 0
    flagged = counter >= nf + 1
    return indicated, flagged, counter


# ---------------------------------------------------------------------------
# The estimator
# ---------------------------------------------------------------------------


class CoupledEstimator:
    """Couples the constrained filter with per-stage map estimation."""

    def __init__(
        self,
        model: CompressorModel,
        noise: NoiseConfig,
        config: CsmeConfig = CsmeConfig(),
        phi_priors=None,
        mu_priors=None,
    ):
        self.model = model
        self.layout = model.layout
        self.noise = noise
        self.config = config
        n_states = self.layout.n_states
        if noise.rx.size != n_states or noise.ry.size != self.layout.n_outputs:
            raise CsmeError("noise dimensions do not match the model")
        self.grid_geometry = [g for g in model.grids]
        lg_unit, lc_unit = build_regularizers(model.grids[0])
        self._regs = []
        for i in range(model.geometry.n_stages):
            if model.grids[i].mach_nodes.shape == model.grids[0].mach_nodes.shape and np.array_equal(
                model.grids[i].mach_nodes, model.grids[0].mach_nodes
            ) and np.array_equal(model.grids[i].psi_nodes, model.grids[0].psi_nodes):
                self._regs.append((lg_unit, lc_unit))
            else:
                self._regs.append(build_regularizers(model.grids[i]))
        rx = noise.rx
        lay = self.layout
        self._rme_cfg = []
        n_m = model.grids[0].size
        zeros = np.zeros(n_m)
        for i in range(1, model.geometry.n_stages + 1):
            wg_phi = config.wg_phi if config.wg_phi is not None else 1e-4 / rx[lay.stage_dphi(i)]
            wc_phi = config.wc_phi if config.wc_phi is not None else 1e-4 / rx[lay.stage_dphi(i)]
            wg_mu = config.wg_mu if config.wg_mu is not None else 1e-4 / rx[lay.stage_dmu(i)]
            wc_mu = config.wc_mu if config.wc_mu is not None else 1e-4 / rx[lay.stage_dmu(i)]
            lg, lc = self._regs[i - 1]
            phi_prior = zeros if phi_priors is None else np.asarray(phi_priors[i - 1], float)
            mu_prior = zeros if mu_priors is None else np.asarray(mu_priors[i - 1], float)
            self._rme_cfg.append(
                (
                    RmeConfig(z_prior=phi_prior, w2=config.w2_phi, lg=wg_phi * lg, lc=wc_phi * lc),
                    RmeConfig(z_prior=mu_prior, w2=config.w2_mu, lg=wg_mu * lg, lc=wc_mu * lc),
                )
            )
        self._box_lo, self._box_hi = model.box_bounds

    # -- initialization ------------------------------------------------------

    def init_state(self, y0: np.ndarray, u0: np.ndarray) -> CsmeState:
        """State from the first measurement sample: temperatures from the
        sensors, volumes from the measured pressures, zero deviations."""
        lay = self.layout
        spec = self.model.spec
        x = np.zeros(lay.n_states)
        for j in range(lay.n):
            tr = y0[lay.out_pipe_ts(j)] / spec.tc
            pr = y0[lay.out_pipe_p(j)] / spec.pc
            props = props_tp(spec, tr, pr)
            x[lay.pipe_trf(j)] = tr
            x[lay.pipe_trs(j)] = tr
            x[lay.pipe_vr(j)] = props.vr
        for i in range(1, lay.n + 1):
            tr = y0[lay.out_stage_ts(i)] / spec.tc
            x[lay.stage_trf(i)] = tr
            x[lay.stage_trs(i)] = tr
        x = np.clip(x, self._box_lo, self._box_hi)
        belief = GaussianBelief(x, self.config.w_p * np.diag(self.noise.rx))
        stages = []
        for cfg_phi, cfg_mu in self._rme_cfg:
            st_phi = rme_init(cfg_phi)
            st_mu = rme_init(cfg_mu)
            stages.append(
                StageEstimate(
                    rme_phi=st_phi,
                    rme_mu=st_mu,
                    revised_phi=st_phi.z.copy(),
                    revised_mu=st_mu.z.copy(),
                )
            )
        return CsmeState(
            belief=belief,
            stages=stages,
            started=False,
            prev_diag=np.diag(belief.cov).copy(),
            k=0,
        )

    def restart(self, state: CsmeState) -> CsmeState:
        """Re-initialize the map estimators with the current actual maps as
        the trusted prior (keeps the filter belief)."""
        new = state.copy()
        for i, stage in enumerate(new.stages):
            cfg_phi, cfg_mu = self._rme_cfg[i]
            stage.rme_phi = rme_init(replace(cfg_phi, z_prior=stage.rme_phi.z.copy()))
            stage.rme_mu = rme_init(replace(cfg_mu, z_prior=stage.rme_mu.z.copy()))
            stage.revised_phi = stage.rme_phi.z.copy()
            stage.revised_mu = stage.rme_mu.z.copy()
            stage.fault_counter = 0
        return new

    # -- helpers --------------------------------------------------------------

    def _revised_grids(self, state: CsmeState) -> list[MapGrid]:
        return [
            self.grid_geometry[i].with_values(s.revised_phi, s.revised_mu)
            for i, s in enumerate(state.stages)
        ]

    def _coeffs_for(self, grid: MapGrid, op: OperatingPoint) -> InterpCoeffs:
        return interp_coeffs(grid, op.mach, op.psi_p)

    def _constraints(self, u: np.ndarray, grids: list[MapGrid]) -> ConstraintSpec:
        lay = self.layout

        def coupling(point: np.ndarray):
            ops = self.model.operating_points(point, u, grids)
            bounds = []
            for i, op in enumerate(ops, start=1):
                mu_floor = max(0.0, 0.5 * op.psi_p) - op.mu_map
                bounds.append((lay.stage_dmu(i), mu_floor, np.inf))
                bounds.append((lay.stage_dphi(i), -op.phi_map, np.inf))
            return bounds

        return ConstraintSpec(self._box_lo.copy(), self._box_hi.copy(), coupling)

    def adjust_noise(self, state: CsmeState, u_prev: np.ndarray, grids: list[MapGrid]):
        """Step (a): time-variant process noise plus the per-stage local
        information data (w_R, LIL, previous-coefficient rows)."""
        lay = self.layout
        rx = self.noise.rx.copy()
        f_prev, ops_prev = self.model.rhs_and_ops(state.belief.mean, u_prev, grids)
        stage_info = []
        for i, op in enumerate(ops_prev, start=1):
            m_prev = self._coeffs_for(grids[i - 1], op)
            diag_mu = np.diag(state.stages[i - 1].rme_mu.p)
            w_r = float(m_prev.dot(diag_mu) / np.min(diag_mu))
            rx[lay.stage_dphi(i)] *= w_r
            rx[lay.stage_dmu(i)] *= w_r
            rx[lay.stage_trf(i)] = max(
                self.config.w_tr * f_prev[lay.stage_trf(i)] ** 2, self.config.rx_trf_floor
            )
            stage_info.append(
                {"w_r": w_r, "lil": lil(w_r), "m_prev": m_prev, "extrapolated": m_prev.extrapolated}
            )
        return rx, stage_info

    # -- the step --------------------------------------------------------------

    def step(self, state: CsmeState, y: np.ndarray, u_prev: np.ndarray, u: np.ndarray, t: float = math.nan):
        """Advance one measurement sample; returns (new state, record).

        Any failure raises without touching the input state.
        """
        cfg = self.config
        lay = self.layout
        grids = self._revised_grids(state)
        try:
            rx_k, stage_info = self.adjust_noise(state, u_prev, grids)

            constraints = self._constraints(u, grids)
            belief = predict(
                state.belief,
                lambda p: self.model.propagate(
                    p, u_prev, u, dt_macro=cfg.dt_macro, dt_micro=cfg.dt_micro, grids=grids
                ),
                rx_k,
                constraints,
                cfg.ut,
            )
            belief = correct(
                belief,
                y,
                lambda p: self.model.output(p, u, grids),
                self.noise.ry,
                constraints,
                cfg.ut,
            )

            diag_curr = np.diag(belief.cov).copy()
            started = state.started or startup_check(
                diag_curr, state.prev_diag, cfg.start_threshold
            )

            new_stages = [s.copy() for s in state.stages]
            ops_now = self.model.operating_points(belief.mean, u, grids)
            stage_rows = []
            mean = belief.mean.copy()
            for i, op in enumerate(ops_now, start=1):
                stage = new_stages[i - 1]
                info = stage_info[i - 1]
                m_k = self._coeffs_for(grids[i - 1], op)
                row = {
                    "stage": i,
                    "mach": op.mach,
                    "psi_p": op.psi_p,
                    "phi": op.phi,
                    "mu": op.mu,
                    "eta_p": op.eta_p,
                    "yp": op.yp,
                    "vdot_s": op.phi * 0.25 * math.pi * self.model.geometry.d2[i - 1] ** 2 * op.u2,
                    "mdot": op.mdot,
                    "w_r": info["w_r"],
                    "lil": info["lil"],
                    "extrapolated": op.extrapolated,
                    "indicated": False,
                    "flagged": stage.fault_flagged,
                    "gap_mu": float(
                        np.max(np.abs(stage.rme_mu.z - stage.revised_mu))
                    ),
                }
                if started:
                    dphi = mean[lay.stage_dphi(i)]
                    dmu = mean[lay.stage_dmu(i)]
                    w1_phi = 1.0 / diag_curr[lay.stage_dphi(i)]
                    w1_mu = 1.0 / diag_curr[lay.stage_dmu(i)]
                    phi_hat = float(m_k.dot(stage.revised_phi)) + dphi
                    mu_hat = float(m_k.dot(stage.revised_mu)) + dmu
                    stage.rme_phi = rme_update(stage.rme_phi, m_k, phi_hat, w1_phi)
                    stage.rme_mu = rme_update(stage.rme_mu, m_k, mu_hat, w1_mu)
                    stage.revised_phi = revise_map(
                        stage.rme_phi.z, np.diag(stage.rme_phi.p), m_k, phi_hat
                    )
                    stage.revised_mu = revise_map(
                        stage.rme_mu.z, np.diag(stage.rme_mu.p), m_k, mu_hat
                    )
                    mean[lay.stage_dphi(i)] = 0.0
                    mean[lay.stage_dmu(i)] = 0.0
                    indicated, flagged, counter = fault_indicator(
                        stage.rme_mu.z,
                        stage.revised_mu,
                        diag_curr[lay.stage_dmu(i)],
                        cfg.wf,
                        cfg.nf,
                        stage.fault_counter,
                    )
                    stage.fault_counter = counter
                    stage.fault_flagged = stage.fault_flagged or flagged
                    row["indicated"] = indicated
                    row["flagged"] = stage.fault_flagged
                    row["gap_mu"] = float(np.max(np.abs(stage.rme_mu.z - stage.revised_mu)))
                stage_rows.append(row)

            new_belief = GaussianBelief(mean, belief.cov)
            new_state = CsmeState(
                belief=new_belief,
                stages=new_stages,
                started=started,
                prev_diag=diag_curr,
                k=state.k + 1,
            )
            record = StepRecord(
                t=t,
                k=new_state.k,
                started=started,
                mean=mean.copy(),
                cov_diag=diag_curr,
                stage_rows=stage_rows,
            )
            return new_state, record
        except CsmeError:
            raise
        except Exception as err:
            raise CsmeError(f"estimation step {state.k + 1} failed: {err}") from err
