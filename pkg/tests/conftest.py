import numpy as np
import pytest

from arxmix.arx import ArxMode
from arxmix.benchmark import DYNAMICS_A, DYNAMICS_B
from arxmix.em import MixtureModel
from arxmix.gate import GateNetwork


def make_oracle_model(scale=200.0):
    """Ground-truth benchmark model with a hand-built gate.

    Two saturated tanh units act as indicators of the boundary lines
    4y - u + 10 = 0 and 5y + u - 6 = 0; their combination puts the
    anchored mode (dynamics B) exactly on the middle region, mode A
    everywhere else, up to a ~1/scale sliver around the boundaries.
    """
    w1 = scale * np.array([[4.0, 5.0], [-1.0, 1.0]])
    b1 = scale * np.array([10.0, -6.0])
    # logit of mode A: large positive unless h1 = +1 and h2 = -1 (region 2)
    w2 = scale * np.array([[-1.0], [1.0]])
    b2 = scale * np.array([1.5])
    gate = GateNetwork([w1, w2], [b1, b2])
    modes = [ArxMode(DYNAMICS_A.copy(), 0.2), ArxMode(DYNAMICS_B.copy(), 0.2)]
    return MixtureModel(modes=modes, gate=gate, variance_mode="pooled")


@pytest.fixture
def oracle_model():
    return make_oracle_model()
