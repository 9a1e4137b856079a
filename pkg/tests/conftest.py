"""Shared fixtures: trained models are expensive, so they are session-scoped."""

import pytest

from tendonctl.dynamic_ctrl import OptimizerConfig
from tendonctl.harness import build_pedal_rig, train_pedal_dynamics
from tendonctl.plant import default_ankle_geometry, default_arm_geometry
from tendonctl.static_ctrl import init_from_geometry


@pytest.fixture(scope="session")
def ankle_geom():
    return default_ankle_geometry()


@pytest.fixture(scope="session")
def arm_geom():
    return default_arm_geometry()


@pytest.fixture(scope="session")
def static_model(ankle_geom):
    """Geometric pre-trained intersensory model for the ankle (read-only).

    Tests that mutate the model (online updates) must deepcopy it first.
    """
    return init_from_geometry(ankle_geom, grid_points=15, f_samples=12, seed=0)


@pytest.fixture(scope="session")
def pedal_opt_cfg():
    # horizon must cover the car's 0.3 s pedal transport delay (25 * 20 ms)
    return OptimizerConfig(horizon=25)


@pytest.fixture(scope="session")
def pedal_rig_factory(static_model):
    def factory(seed=0):
        return build_pedal_rig(seed=seed, static_model=static_model)
    return factory


@pytest.fixture(scope="session")
def pedal_dynamics(pedal_rig_factory, pedal_opt_cfg):
    """Seed-0 trained task-dynamics model for the pedal rig."""
    return train_pedal_dynamics(lambda: pedal_rig_factory(0), seed=0,
                                opt_cfg=pedal_opt_cfg)
