import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from fsilab.models.geometry import DimMode, GeometryConfig
from fsilab.services.generator import GeneratorService

hypothesis_settings.register_profile(
    "fast", max_examples=10, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
hypothesis_settings.register_profile(
    "ci", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
hypothesis_settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))

np.seterr(all="warn")


def analogue(n: int) -> GeometryConfig:
    return GeometryConfig(dim_mode=DimMode.ANALOGUE2D, n=n)


def box(n: int) -> GeometryConfig:
    return GeometryConfig(dim_mode=DimMode.BOX3D, n=n)


@pytest.fixture(scope="session")
def generator_service():
    """One service for the whole session so assembled generators are cached."""
    return GeneratorService()


@pytest.fixture(scope="session")
def build(generator_service):
    def _build(n: int, rho: float = 0.0, dim_mode: DimMode = DimMode.ANALOGUE2D):
        return generator_service.build(GeometryConfig(dim_mode=dim_mode, n=n), rho)
    return _build


@pytest.fixture(scope="session")
def gen4(build):
    return build(4, 0.0)


@pytest.fixture(scope="session")
def gen8(build):
    return build(8, 0.0)


@pytest.fixture(scope="session")
def gen8_rho1(build):
    return build(8, 1.0)


@pytest.fixture(scope="session")
def gen16(build):
    return build(16, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
