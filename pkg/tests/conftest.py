import numpy as np
import pytest

from nddcert.core import SimulationConfig, SubsystemDescriptor
from nddcert.recipes import FIG2_PARAMS, fig2_network, fig4_network


def make_srna_sub(index=1, epsilon=0.01, nu=1.0, params=None):
    return SubsystemDescriptor(
        index=index,
        kind="srna-feedback",
        params=params or FIG2_PARAMS,
        epsilon=epsilon,
        nu=nu,
        state_dim=1,
        fast_dim=2,
    )


def make_linear_sub(index=1, epsilon=0.1):
    return SubsystemDescriptor(
        index=index, kind="linear-feedback-example", params={}, epsilon=epsilon,
        state_dim=2, fast_dim=0,
    )


@pytest.fixture
def srna_sub():
    return make_srna_sub()


@pytest.fixture
def linear_sub():
    return make_linear_sub()


@pytest.fixture
def fig2_net():
    return fig2_network(10.0, 0.01)


@pytest.fixture
def fig4_net():
    return fig4_network(0.01, 3e-4)


@pytest.fixture
def sim_cfg():
    return SimulationConfig(t_final=40.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
