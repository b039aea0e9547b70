import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ghostspec.config import load
from ghostspec.experiment import Spectrum
from ghostspec.sample import fano_model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REFERENCE_PARAMS = (806.0, 30.0, -16.0, 0.5, 1.0)


@pytest.fixture(scope="session")
def fig5():
    return load("figure5")


@pytest.fixture
def apparatus(fig5):
    return fig5.apparatus()


@pytest.fixture
def short_scan(fig5):
    """Ten bins around the dip at 1 s dwell."""
    return replace(fig5.scan, lambda_start_nm=790.0, lambda_stop_nm=817.0, dwell_s=1.0, repeats=5)


def synthetic(params=REFERENCE_PARAMS, lam=None, std=0.0, n=20, mode="quantum"):
    lam = np.arange(740.0, 871.0, 1.0) if lam is None else np.asarray(lam, dtype=float)
    y = fano_model(params, lam)
    return Spectrum(lam, y, np.full(lam.size, float(std)), np.full(lam.size, n), mode=mode)
