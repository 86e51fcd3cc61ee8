"""Constrained Unscented Kalman Filter with additive noise.

State constraints are enforced by clipping: every sigma point is projected
onto the valid physical domain before it enters the model, and the
correction step updates each sigma point individually with the common
Kalman gain, clips it, and recombines the clipped ensemble.  On a
linear-Gaussian system with inactive constraints the scheme reduces exactly
to the textbook Kalman filter (the recombined covariance is the Joseph form
plus the gain-transformed measurement noise).

The box part of the constraint set is static; entry couplings (such as a
work-input deviation floor that depends on the head coefficient implied by
the same point) are supplied as a callable evaluated per point.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "FilterNumericsError",
    "GaussianBelief",
    "UtParams",
    "ConstraintSpec",
    "NoiseConfig",
    "sigma_points",
    "predict",
    "correct",
    "belief_to_csv",
]


class FilterNumericsError(RuntimeError):
    """Covariance factorization failed beyond repair."""


@dataclass
class GaussianBelief:
    """State estimate with covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise ValueError("covariance shape does not match the mean")
        asym = np.max(np.abs(self.cov - self.cov.T)) if n else 0.0
        scale = max(np.max(np.abs(self.cov)), 1.0)
        if asym > 1e-9 * scale:
            raise ValueError("covariance is not symmetric")
        self.cov = 0.5 * (self.cov + self.cov.T)

    @property
    def dim(self) -> int:
        return self.mean.size

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy())


@dataclass(frozen=True)
class UtParams:
    """Scaled unscented-transformation parameters."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0

    def lam(self, n: int) -> float:
        return self.alpha * self.alpha * (n + self.kappa) - n


@dataclass
class ConstraintSpec:
    """Valid state domain: per-entry intervals plus optional couplings.

    ``coupling(point)`` returns additional ``(index, lower, upper)`` bounds
    evaluated for that point; they are applied after the box projection.
    """

    lower: np.ndarray
    upper: np.ndarray
    coupling: object = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("empty constraint interval")

    @classmethod
    def unconstrained(cls, n: int) -> "ConstraintSpec":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    def clip(self, point: np.ndarray) -> np.ndarray:
        clipped = np.clip(point, self.lower, self.upper)
        if self.coupling is not None:
            for idx, lo, hi in self.coupling(clipped):
                clipped[idx] = min(max(clipped[idx], lo), hi)
        return clipped

    def satisfied(self, point: np.ndarray, tol: float = 1e-12) -> bool:
        if np.any(point < self.lower - tol) or np.any(point > self.upper + tol):
            return False
        if self.coupling is not None:
            for idx, lo, hi in self.coupling(point.copy()):
                if point[idx] < lo - tol or point[idx] > hi + tol:
                    return False
        return True


@dataclass
class NoiseConfig:
    """Diagonal process and measurement noise (variances)."""

    rx: np.ndarray
    ry: np.ndarray

    def __post_init__(self):
        self.rx = np.asarray(self.rx, dtype=float)
        self.ry = np.asarray(self.ry, dtype=float)
        if np.any(self.rx < 0.0) or np.any(self.ry <= 0.0):
            raise ValueError("noise variances must be positive (rx may carry zeros only if floored later)")

    @classmethod
    def from_stds(cls, state_names, output_names, rx_std: dict, ry_std: dict) -> "NoiseConfig":
        """Build from per-name standard deviations; '*' is the default key."""

        def resolve(names, table):
            out = np.zeros(len(names))
            for k, name in enumerate(names):
                if name in table:
                    out[k] = float(table[name]) ** 2
                elif "*" in table:
                    out[k] = float(table["*"]) ** 2
                else:
                    raise KeyError(f"no noise std for {name!r} and no '*' default")
            return out

        return cls(resolve(state_names, rx_std), resolve(output_names, ry_std))


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with escalating symmetric jitter."""
    sym = 0.5 * (mat + mat.T)
    n = sym.shape[0]
    jitter = 1e-12 * max(np.trace(sym) / max(n, 1), 1e-300)
    for attempt in range(4):
        try:
            return np.linalg.cholesky(sym if attempt == 0 else sym + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FilterNumericsError("covariance square root failed after jitter escalation")


def sigma_points(belief: GaussianBelief, params: UtParams = UtParams()):
    """Symmetric scaled sigma set and its mean/covariance weights."""
    n = belief.dim
    lam = params.lam(n)
    if n + lam <= 0.0:
        raise ValueError("scaling parameters give a nonpositive spread")
    root = _sqrt_psd((n + lam) * belief.cov)
    pts = np.empty((2 * n + 1, n))
    pts[0] = belief.mean
    for i in range(n):
        pts[1 + i] = belief.mean + root[:, i]
        pts[1 + n + i] = belief.mean - root[:, i]
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - params.alpha**2 + params.beta)
    return pts, wm, wc


def _recombine(points: np.ndarray, wm: np.ndarray, wc: np.ndarray):
    mean = wm @ points
    dev = points - mean
    cov = dev.T @ (dev * wc[:, None])
    return mean, cov


def predict(
    belief: GaussianBelief,
    propagate_fn,
    rx: np.ndarray,
    constraints: ConstraintSpec,
    params: UtParams = UtParams(),
) -> GaussianBelief:
    """Time update: clip, propagate and recombine the sigma set; add the
    process noise; clip the predicted mean."""
    pts, wm, wc = sigma_points(belief, params)
    prop = np.empty_like(pts)
    for i in range(pts.shape[0]):
        clipped = constraints.clip(pts[i])
        try:
            prop[i] = propagate_fn(clipped)
        except Exception as err:
            raise type(err)(f"sigma point {i}: {err}") from err
    mean, cov = _recombine(prop, wm, wc)
    cov += np.diag(np.asarray(rx, dtype=float))
    mean = constraints.clip(mean)
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def correct(
    belief: GaussianBelief,
    y_meas: np.ndarray,
    output_fn,
    ry: np.ndarray,
    constraints: ConstraintSpec,
    params: UtParams = UtParams(),
) -> GaussianBelief:
    """Measurement update with per-point correction and clipping."""
    y_meas = np.asarray(y_meas, dtype=float)
    if not np.all(np.isfinite(y_meas)):
        raise ValueError("measurement vector contains non-finite entries")
    pts, wm, wc = sigma_points(belief, params)
    clipped = np.empty_like(pts)
    for i in range(pts.shape[0]):
        clipped[i] = constraints.clip(pts[i])
    outs = np.empty((pts.shape[0], y_meas.size))
    for i in range(pts.shape[0]):
        try:
            outs[i] = output_fn(clipped[i])
        except Exception as err:
            raise type(err)(f"sigma point {i}: {err}") from err
    y_hat = wm @ outs
    dev_y = outs - y_hat
    s = dev_y.T @ (dev_y * wc[:, None]) + np.diag(np.asarray(ry, dtype=float))
    dev_x = clipped - belief.mean
    c = dev_x.T @ (dev_y * wc[:, None])
    try:
        gain = np.linalg.solve(s, c.T).T
    except np.linalg.LinAlgError:
        log.warning("innovation covariance singular; applying diagonal regularization")
        reg = 1e-9 * max(np.trace(s) / max(s.shape[0], 1), 1e-300)
        gain = np.linalg.solve(s + reg * np.eye(s.shape[0]), c.T).T
    updated = np.empty_like(clipped)
    for i in range(clipped.shape[0]):
        updated[i] = constraints.clip(clipped[i] + gain @ (y_meas - outs[i]))
    mean, cov = _recombine(updated, wm, wc)
    cov += gain @ np.diag(np.asarray(ry, dtype=float)) @ gain.T
    mean = constraints.clip(mean)
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def belief_to_csv(belief: GaussianBelief, names, path) -> None:
    """Dump the mean and covariance diagonal with state names."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "mean", "variance"])
        for name, m, v in zip(names, belief.mean, np.diag(belief.cov)):
            writer.writerow([name, f"{m:.12g}", f"{v:.12g}"])
