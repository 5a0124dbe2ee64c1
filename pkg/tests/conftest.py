"""Session fixtures: the simulated reference dataset and a fully trained bundle.

Training the bundle takes several minutes; set HRTFPCA_TEST_CACHE to a
directory to persist the dataset and bundle across pytest sessions.
"""

import os
from pathlib import Path

import pytest

from hrtfpca import predictors, sim
from hrtfpca.dataset import load_dataset, save_dataset

SIM_SEED = 1250


def _cache_root() -> Path | None:
    value = os.environ.get("HRTFPCA_TEST_CACHE")
    return Path(value) if value else None


@pytest.fixture(scope="session")
def sim_dataset(tmp_path_factory):
    """The reference dataset: a measured pack if HRTFPCA_DATASET points at
    one, otherwise the simulated campaign."""
    override = os.environ.get("HRTFPCA_DATASET")
    if override:
        return load_dataset(override)
    cache = _cache_root()
    if cache and (cache / "dataset" / "manifest.json").is_file():
        return load_dataset(cache / "dataset")
    ds = sim.simulate_dataset(45, seed=SIM_SEED)
    # persist and reload so tests see the float32-rounded on-disk form
    target = (cache / "dataset") if cache else tmp_path_factory.mktemp("ds") / "pack"
    save_dataset(ds, target)
    return load_dataset(target)


@pytest.fixture(scope="session")
def fitted_spca(sim_dataset):
    return predictors.fit_pipeline_spca(sim_dataset, q=200)


@pytest.fixture(scope="session")
def bundle(sim_dataset):
    cache = _cache_root()
    if cache and (cache / "bundle" / "bundle.json").is_file():
        return predictors.load_bundle(cache / "bundle")
    trained = predictors.train_bundle(
        sim_dataset, q=200, plan=predictors.TrainingPlan(seed=0)
    )
    if cache:
        predictors.save_bundle(trained, cache / "bundle")
    return trained
