import numpy as np
import pytest

from graspslip import data, evaluation, models


@pytest.fixture(scope="session")
def synth_sets():
    """40 deterministic synthetic sets, half failing."""
    return data.synth_force_dataset(40, seed=7)


@pytest.fixture(scope="session")
def synth_split(synth_sets):
    return data.split(synth_sets, 0.8, seed=0)


@pytest.fixture(scope="session")
def trained_c(synth_split):
    """A variant-C model good enough to exercise metrics and streaming."""
    train_sets, _ = synth_split
    config = models.TrainConfig(epochs=12, lstm_units=32, seed=0)
    model, history = evaluation.fit_variant("C", train_sets, config, labels="truth")
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
