import numpy as np
import pytest

from fastgrasp.objects import ObjectModel
from fastgrasp.simenv import Env, EnvConfig
from fastgrasp.synthesis import CachedGraspBank, SynthesisConfig


@pytest.fixture(scope="session")
def sphere_object():
    return ObjectModel("sphere_40mm", "sphere", (0.04,))


@pytest.fixture(scope="session")
def sphere_bank(sphere_object):
    # small bank is enough for env plumbing tests
    return CachedGraspBank([sphere_object], SynthesisConfig(quota=20), seed=1234,
                           candidates_per_reset=20)


@pytest.fixture()
def sphere_env(sphere_object, sphere_bank):
    cfg = EnvConfig(objects=[sphere_object])
    return Env(cfg, sphere_bank, np.random.default_rng(0))
