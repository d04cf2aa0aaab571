import numpy as np
import pytest

from toontex.charmodel import build_character, seam_test_character, tiny_chain_character


@pytest.fixture(scope="session")
def tiny_char():
    return tiny_chain_character()


@pytest.fixture(scope="session")
def rabbit():
    return build_character("rabbit")


@pytest.fixture(scope="session")
def seam_char():
    return seam_test_character()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
