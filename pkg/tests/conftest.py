"""Shared fixtures for the neurocalib test suite."""

import numpy as np
import pytest

from neurocalib.Modules.Channel_Model import SystemConfig
from neurocalib.Modules.Calibration_Tools import TrainingHyper


@pytest.fixture
def rng():
    """Seeded generator for test inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def crandn(rng):
    """Circularly-symmetric complex Gaussian arrays with unit variance."""
    def draw(*shape):
        return (rng.standard_normal(shape)+1j*rng.standard_normal(shape))/np.sqrt(2.0)
    return draw


@pytest.fixture
def small_cfg():
    """Small system: 8 antennas, 2 users, pilot length 2."""
    return SystemConfig(M=8, K=2, L=2)


@pytest.fixture
def tiny_hyper():
    """Hyperparameters small enough for a few-second training run."""
    return TrainingHyper(hidden_zf=(16, 16),
                         hidden_ls=(8,),
                         hidden_map=(16,),
                         hidden_blackbox=(16,),
                         epochs=2,
                         batch_size=32,
                         lr=1e-3)
