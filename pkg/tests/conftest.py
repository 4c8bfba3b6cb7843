import numpy as np
import pytest

from dynrisk import FiniteFilteredSpace, dyadic_uniform


@pytest.fixture
def two_uniform():
    return FiniteFilteredSpace([0.5, 0.5], [[[0, 1]], [[0], [1]]])


@pytest.fixture
def four_tree():
    """Uniform 4-outcome space, F_1 = {01}{23}, F_2 discrete."""
    return dyadic_uniform(2)


@pytest.fixture
def four_paired():
    """Uniform 4-outcome, T=2, F_1 = F_2 = {01}{23}: no refinement at step 2."""
    return FiniteFilteredSpace(
        [0.25] * 4,
        [[[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0, 1], [2, 3]]],
    )


def rng(seed):
    return np.random.default_rng(seed)
