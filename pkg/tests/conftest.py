import pytest

from tests.factories import sample_dataset, two_state_model


@pytest.fixture
def planted_model():
    return two_state_model()


@pytest.fixture
def planted_dataset(planted_model):
    return sample_dataset(planted_model, N=30, T=80, seed=1)
