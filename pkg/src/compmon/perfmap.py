"""Stage performance maps on a rectangular normalized grid.

A map relates the machine Mach number and the polytropic head coefficient to
the flow coefficient and the work input factor.  Grid rows sit at fixed Mach
numbers; the head coordinate is normalized row-wise by an expected surge-line
table, so the grid columns span [0, 1] between zero head and the surge
estimate.  Lookups are bilinear, which keeps the interpolation row vector
sparse (at most four entries), comonotone, and independent of the stored map
values -- the property the recursive estimator relies on.

Besides lookups, this module assembles the gradient and curvature
regularization matrices used by the recursive map estimation.  They are built
once per grid from differences of the row/column node-selection matrices and
are shared by all map quantities up to a scalar weight.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "MapGrid",
    "InterpCoeffs",
    "GridError",
    "interp_coeffs",
    "map_lookup",
    "build_regularizers",
    "geometric_psi_nodes",
    "make_grid",
    "grid_to_config",
    "grid_from_config",
    "map_to_csv",
]


class GridError(ValueError):
    """Grid definition or query violates the map-grid contract."""


@dataclass(frozen=True)
class MapGrid:
    """Rectangular normalized performance-map grid.

    ``phi_values`` and ``mu_values`` are flat grid vectors of length
    ``Nx*Ny`` ordered column-stacked: flat index = j*Nx + i with i the Mach
    row index and j the normalized-head column index.
    """

    mach_nodes: np.ndarray
    psi_nodes: np.ndarray
    surge_psi: np.ndarray
    phi_values: np.ndarray
    mu_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mach_nodes", np.asarray(self.mach_nodes, dtype=float))
        object.__setattr__(self, "psi_nodes", np.asarray(self.psi_nodes, dtype=float))
        object.__setattr__(self, "surge_psi", np.asarray(self.surge_psi, dtype=float))
        object.__setattr__(self, "phi_values", np.asarray(self.phi_values, dtype=float))
        object.__setattr__(self, "mu_values", np.asarray(self.mu_values, dtype=float))
        if self.mach_nodes.ndim != 1 or self.mach_nodes.size < 2:
            raise GridError("need at least two Mach nodes")
        if np.any(np.diff(self.mach_nodes) <= 0.0):
            raise GridError("mach_nodes must be strictly increasing")
        if np.any(np.diff(self.psi_nodes) <= 0.0):
            raise GridError("psi_nodes must be strictly increasing")
        if self.surge_psi.shape != self.mach_nodes.shape:
            raise GridError("surge table must carry one entry per Mach node")
        if np.any(self.surge_psi <= 0.0):
            raise GridError("surge-line head estimates must be positive")
        n = self.size
        if self.phi_values.shape != (n,) or self.mu_values.shape != (n,):
            raise GridError(f"grid vectors must have length {n}")
        if not (np.all(np.isfinite(self.phi_values)) and np.all(np.isfinite(self.mu_values))):
            raise GridError("grid vectors must be finite")

    @property
    def nx(self) -> int:
        return self.mach_nodes.size

    @property
    def ny(self) -> int:
        return self.psi_nodes.size

    @property
    def size(self) -> int:
        return self.mach_nodes.size * self.psi_nodes.size

    def flat_index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def surge_at(self, mach: float) -> float:
        """Surge-line head estimate, linear in Mach, clamped at the table ends."""
        return float(np.interp(mach, self.mach_nodes, self.surge_psi))

    def with_values(self, phi_values=None, mu_values=None) -> "MapGrid":
        """Snapshot with replaced grid vectors (geometry shared)."""
        return replace(
            self,
            phi_values=self.phi_values if phi_values is None else np.asarray(phi_values, float),
            mu_values=self.mu_values if mu_values is None else np.asarray(mu_values, float),
        )


@dataclass(frozen=True)
class InterpCoeffs:
    """Sparse bilinear interpolation row: at most four nonzero coefficients."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]
    cell_index: tuple[int, int]
    extrapolated: bool
    size: int

    def dense(self) -> np.ndarray:
        m = np.zeros(self.size)
        m[list(self.indices)] = self.weights
        return m

    def dot(self, values: np.ndarray) -> float:
        acc = 0.0
        for idx, w in zip(self.indices, self.weights):
            acc += w * values[idx]
        return acc


def _locate(nodes: np.ndarray, x: float) -> tuple[int, float, bool]:
    """Cell index and fractional coordinate, clamped into the node hull."""
    if x <= nodes[0]:
        return 0, 0.0, x < nodes[0]
    if x >= nodes[-1]:
        return nodes.size - 2, 1.0, x > nodes[-1]
    k = int(np.searchsorted(nodes, x, side="right")) - 1
    t = (x - nodes[k]) / (nodes[k + 1] - nodes[k])
    return k, t, False


def interp_coeffs(grid: MapGrid, mach: float, psi_p: float) -> InterpCoeffs:
    """Bilinear interpolation row for a raw (Mach, head-coefficient) query.

    The head coordinate is normalized by the surge-line estimate at the query
    Mach before the cell lookup.  Out-of-hull queries are clamped onto the
    hull boundary and flagged.
    """
    if not (math.isfinite(mach) and math.isfinite(psi_p)):
        raise GridError(f"non-finite map query (mach={mach}, psi_p={psi_p})")
    psi_n = psi_p / grid.surge_at(mach)
    i, tx, ex_x = _locate(grid.mach_nodes, mach)
    j, ty, ex_y = _locate(grid.psi_nodes, psi_n)
    w00 = (1.0 - tx) * (1.0 - ty)
    w10 = tx * (1.0 - ty)
    w01 = (1.0 - tx) * ty
    w11 = tx * ty
    return InterpCoeffs(
        indices=(
            grid.flat_index(i, j),
            grid.flat_index(i + 1, j),
            grid.flat_index(i, j + 1),
            grid.flat_index(i + 1, j + 1),
        ),
        weights=(w00, w10, w01, w11),
        cell_index=(i, j),
        extrapolated=ex_x or ex_y,
        size=grid.size,
    )


def map_lookup(grid: MapGrid, m: InterpCoeffs) -> tuple[float, float]:
    """Interpolated (flow coefficient, work input factor) for a coefficient row."""
    if m.size != grid.size:
        raise GridError("interpolation row does not match the grid size")
    return m.dot(grid.phi_values), m.dot(grid.mu_values)


def _selection_rows(grid: MapGrid):
    """Node-selection matrices: one per psi column (rows over Mach) and one
    per Mach row (rows over psi)."""
    n, nx, ny = grid.size, grid.nx, grid.ny
    col_mats = []  # fixed psi_j: picks column j, shape (Nx, N)
    for j in range(ny):
        mat = np.zeros((nx, n))
        for i in range(nx):
            mat[i, grid.flat_index(i, j)] = 1.0
        col_mats.append(mat)
    row_mats = []  # fixed mach_i: picks row i, shape (Ny, N)
    for i in range(nx):
        mat = np.zeros((ny, n))
        for j in range(ny):
            mat[j, grid.flat_index(i, j)] = 1.0
        row_mats.append(mat)
    return col_mats, row_mats


def build_regularizers(grid: MapGrid) -> tuple[np.ndarray, np.ndarray]:
    """Unit-weight mean-gradient and mean-curvature matrices of the grid.

    Both are symmetric positive semidefinite, annihilate constant maps, and
    the curvature matrix also annihilates maps affine in the grid
    coordinates.  Quantity-specific scalar weights multiply these outputs.
    """
    if grid.nx < 3 or grid.ny < 3:
        raise GridError("regularizers need at least a 3x3 grid")
    col_mats, row_mats = _selection_rows(grid)
    x = grid.mach_nodes
    y = grid.psi_nodes
    n = grid.size

    lg = np.zeros((n, n))
    dy_slopes = []
    for j in range(grid.ny - 1):
        d = (col_mats[j + 1] - col_mats[j]) / (y[j + 1] - y[j])
        dy_slopes.append(d)
        lg += d.T @ d / (grid.ny - 1)
    dx_slopes = []
    for i in range(grid.nx - 1):
        d = (row_mats[i + 1] - row_mats[i]) / (x[i + 1] - x[i])
        dx_slopes.append(d)
        lg += d.T @ d / (grid.nx - 1)

    lc = np.zeros((n, n))
    for j in range(grid.ny - 2):
        c = (dy_slopes[j + 1] - dy_slopes[j]) / ((y[j + 2] - y[j]) / 2.0)
        lc += c.T @ c / (grid.ny - 2)
    for i in range(grid.nx - 2):
        c = (dx_slopes[i + 1] - dx_slopes[i]) / ((x[i + 2] - x[i]) / 2.0)
        lc += c.T @ c / (grid.nx - 2)

    lg = 0.5 * (lg + lg.T)
    lc = 0.5 * (lc + lc.T)
    return lg, lc


def geometric_psi_nodes(ny: int, ratio: float = 0.8) -> np.ndarray:
    """Normalized head nodes on [0, 1] with spacing shrinking toward the
    surge side by the given geometric ratio."""
    if ny < 2:
        raise GridError("need at least two head nodes")
    widths = ratio ** np.arange(ny - 1)
    nodes = np.concatenate(([0.0], np.cumsum(widths)))
    return nodes / nodes[-1]


def make_grid(
    mach_lo: float,
    mach_hi: float,
    nx: int,
    ny: int,
    surge_table,
    phi_values=None,
    mu_values=None,
    psi_ratio: float = 0.8,
) -> MapGrid:
    """Grid with uniform Mach rows and geometrically densified head columns.

    ``surge_table`` is either a callable of Mach or a sequence of per-node
    surge-line estimates.  Missing grid vectors default to zero (no prior
    map).
    """
    mach_nodes = np.linspace(mach_lo, mach_hi, nx)
    surge = (
        np.array([float(surge_table(m)) for m in mach_nodes])
        if callable(surge_table)
        else np.asarray(surge_table, dtype=float)
    )
    n = nx * ny
    return MapGrid(
        mach_nodes=mach_nodes,
        psi_nodes=geometric_psi_nodes(ny, psi_ratio),
        surge_psi=surge,
        phi_values=np.zeros(n) if phi_values is None else phi_values,
        mu_values=np.zeros(n) if mu_values is None else mu_values,
    )


def grid_to_config(grid: MapGrid) -> dict:
    return {
        "mach_nodes": grid.mach_nodes.tolist(),
        "psi_nodes": grid.psi_nodes.tolist(),
        "surge_psi": grid.surge_psi.tolist(),
        "phi_values": grid.phi_values.tolist(),
        "mu_values": grid.mu_values.tolist(),
    }


def grid_from_config(source) -> MapGrid:
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            source = json.load(fh)
    grid = MapGrid(
        mach_nodes=source["mach_nodes"],
        psi_nodes=source["psi_nodes"],
        surge_psi=source["surge_psi"],
        phi_values=source["phi_values"],
        mu_values=source["mu_values"],
    )
    # configured maps must be physical; estimator-internal snapshots may dip
    # below zero transiently while learning
    if np.any(grid.phi_values < 0.0) or np.any(grid.mu_values < 0.0):
        raise GridError("configured grid vectors must be nonnegative")
    return grid


def map_to_csv(grid: MapGrid, path, uncertainty_phi=None, uncertainty_mu=None) -> None:
    """Dump the map snapshot with absolute and normalized head coordinates."""
    up = np.zeros(grid.size) if uncertainty_phi is None else np.asarray(uncertainty_phi)
    um = np.zeros(grid.size) if uncertainty_mu is None else np.asarray(uncertainty_mu)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "mach",
                "psi_normalized",
                "psi_absolute",
                "phi",
                "mu",
                "uncertainty_phi",
                "uncertainty_mu",
            ]
        )
        for j in range(grid.ny):
            for i in range(grid.nx):
                k = grid.flat_index(i, j)
                mach = grid.mach_nodes[i]
                psi_n = grid.psi_nodes[j]
                writer.writerow(
                    [
                        f"{mach:.10g}",
                        f"{psi_n:.10g}",
                        f"{psi_n * grid.surge_psi[i]:.10g}",
                        f"{grid.phi_values[k]:.10g}",
                        f"{grid.mu_values[k]:.10g}",
                        f"{up[k]:.10g}",
                        f"{um[k]:.10g}",
                    ]
                )
