import numpy as np
import pytest

from temperlab.distributions import GaussianSpec, GeometricPath


@pytest.fixture
def std_normal():
    return GaussianSpec(mean=[0.0], covariance=[[1.0]])


@pytest.fixture
def shifted_normal():
    return GaussianSpec(mean=[3.0], covariance=[[1.0]])


@pytest.fixture
def gauss_path(std_normal, shifted_normal):
    return GeometricPath.from_specs(std_normal.as_potential(), shifted_normal.as_potential())


def rel_err(computed, expected):
    return abs(computed - expected) / max(abs(expected), 1e-300)


def gauss_1d(mean, var):
    return GaussianSpec(mean=[float(mean)], covariance=[[float(var)]])


def rng(seed=0):
    return np.random.default_rng(seed)
