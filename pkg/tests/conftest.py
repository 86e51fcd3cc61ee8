import numpy as np
import pytest

from compmon.compressor import CompressorModel, ModelBounds, ModelInput
from compmon.realgas import FluidSpec

# Supercritical CO2 fixture used throughout: critical point per the two-stage
# test case, acentric factor and specific gas constant from standard property
# collections, cv_id(T) fitted from tabulated ideal-gas heat capacities.
CO2 = FluidSpec(
    tc=304.28,
    pc=73.77e5,
    omega=0.224,
    r_specific=188.92,
    cv_ideal_coeffs=(316.88, 1.35901, -7.9550e-4, 1.69711e-7),
    t_valid_min=220.0,
    t_valid_max=600.0,
)


@pytest.fixture
def co2() -> FluidSpec:
    return CO2


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


SUCTION_T = 353.15
SUCTION_P = 100e5


def make_testbed():
    """Two-stage monitor model with true map values on the estimator grid."""
    from compmon.simref import (
        default_geometry,
        estimator_grid_geometry,
        initial_state_guess,
        sample_truth_grid,
    )

    geometry = default_geometry()
    grids = [sample_truth_grid(estimator_grid_geometry(), i + 1) for i in range(2)]
    model = CompressorModel(CO2, geometry, grids, ModelBounds(0.95, 1.9))
    u = ModelInput(speeds=(250.0, 250.0), discharge_pressure=152e5).as_array()
    x0 = initial_state_guess(model, SUCTION_T, SUCTION_P, u)
    return model, u, x0


@pytest.fixture(scope="session")
def testbed():
    return make_testbed()


@pytest.fixture(scope="session")
def steady_state(testbed):
    """Model state settled under constant inputs."""
    model, u, x0 = testbed
    x = x0.copy()
    for _ in range(400):
        x = model.propagate(x, u, u, dt_macro=1.0, dt_micro=0.05)
    return x
