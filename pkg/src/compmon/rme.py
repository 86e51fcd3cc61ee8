"""Recursive map estimation: regularized recursive least squares over the
grid vectors of a performance map.

The estimated quantity is one grid vector (flow coefficient or work input
factor of one stage).  Offline gradient and curvature matrices regularize
the otherwise ill-posed problem -- observations only touch the four nodes of
one interpolation cell, and without regularization distant nodes would be
unobservable.  The recursion is the classic weighted RLS with the
information of the regularizers folded into the initial matrix, so the
recursive trajectory coincides with the batch regularized weighted
least-squares solution at every step.

The diagonal of the companion matrix serves as the per-node uncertainty
level: small entries mark regions where information has accumulated.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .perfmap import InterpCoeffs

__all__ = [
    "RmeConfigError",
    "RmeConfig",
    "RmeState",
    "rme_init",
    "rme_update",
    "uncertainty_at",
    "save_checkpoint",
    "load_checkpoint",
]

_CHECKPOINT_VERSION = "rme-checkpoint-v1"


class RmeConfigError(ValueError):
    """Invalid estimator configuration."""


@dataclass(frozen=True)
class RmeConfig:
    """Prior vector, prior weight, and weighted regularizer matrices."""

    z_prior: np.ndarray
    w2: float
    lg: np.ndarray
    lc: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z_prior", np.asarray(self.z_prior, dtype=float))
        object.__setattr__(self, "lg", np.asarray(self.lg, dtype=float))
        object.__setattr__(self, "lc", np.asarray(self.lc, dtype=float))
        n = self.z_prior.size
        if self.w2 <= 0.0:
            raise RmeConfigError("the prior weight must be positive")
        if self.lg.shape != (n, n) or self.lc.shape != (n, n):
            raise RmeConfigError("regularizer shapes do not match the grid vector")


@dataclass
class RmeState:
    """Current grid-vector estimate and its uncertainty matrix."""

    z: np.ndarray
    p: np.ndarray

    def copy(self) -> "RmeState":
        return RmeState(self.z.copy(), self.p.copy())


def rme_init(config: RmeConfig) -> RmeState:
    """Fold the prior and the offline regularizers into the start state."""
    n = config.z_prior.size
    info = config.w2 * np.eye(n) + config.lg + config.lc
    try:
        p0 = np.linalg.inv(info)
    except np.linalg.LinAlgError as err:  # w2 > 0 makes info PD; belt and braces
        raise RmeConfigError(f"initial information matrix is singular: {err}") from err
    p0 = 0.5 * (p0 + p0.T)
    z0 = p0 @ (config.w2 * config.z_prior)
    return RmeState(z=z0, p=p0)


def _sparse_pm(p: np.ndarray, m: InterpCoeffs) -> np.ndarray:
    idx = list(m.indices)
    return p[:, idx] @ np.asarray(m.weights)


def rme_update(state: RmeState, m: InterpCoeffs, z_obs: float, w1: float) -> RmeState:
    """One weighted RLS step for the observation ``m^T z = z_obs``."""
    if w1 <= 0.0:
        raise RmeConfigError("observation weight must be positive")
    pm = _sparse_pm(state.p, m)
    denom = 1.0 / w1 + float(m.dot(pm))
    innov = z_obs - float(m.dot(state.z))
    z_new = state.z + pm * (innov / denom)
    p_new = state.p - np.outer(pm, pm) / denom
    p_new = 0.5 * (p_new + p_new.T)
    return RmeState(z=z_new, p=p_new)


def uncertainty_at(state: RmeState, m: InterpCoeffs) -> float:
    """Interpolated uncertainty level at the query point."""
    return float(m.dot(np.diag(state.p)))


def save_checkpoint(state: RmeState, path) -> None:
    """Versioned restorable dump of the estimator state."""
    with open(path, "wb") as fh:
        header = json.dumps({"version": _CHECKPOINT_VERSION, "n": int(state.z.size)})
        fh.write(header.encode() + b"\n")
        buf = io.BytesIO()
        np.savez(buf, z=state.z, p=state.p)
        fh.write(buf.getvalue())


def load_checkpoint(path) -> RmeState:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("version") != _CHECKPOINT_VERSION:
            raise RmeConfigError(f"unsupported checkpoint version {header.get('version')!r}")
        data = np.load(io.BytesIO(fh.read()))
        state = RmeState(z=data["z"], p=data["p"])
    if state.z.size != header["n"] or state.p.shape != (header["n"], header["n"]):
        raise RmeConfigError("checkpoint arrays are inconsistent with the header")
    return state
