import pytest

from twofilter import make_finite_hmm, make_lgssm
from twofilter.model import simulate_lgssm

TRANS = [[0.9, 0.1], [0.2, 0.8]]
EMIT = [[0.7, 0.3], [0.4, 0.6]]
UNIFORM_INIT = [0.5, 0.5]


@pytest.fixture
def hmm01():
    return make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0, 1])


@pytest.fixture
def hmm010():
    return make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0, 1, 0])


@pytest.fixture
def hmm5():
    return make_finite_hmm(TRANS, EMIT, UNIFORM_INIT, [0, 1, 1, 0, 1])


@pytest.fixture
def lgssm():
    _, ys = simulate_lgssm(0.9, 1.0, 1.0, 1.0, 0.0, 1.0, horizon=6, seed=3)
    return make_lgssm(0.9, 1.0, 1.0, 1.0, 0.0, 1.0, ys)
