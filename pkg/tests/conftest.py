import numpy as np
import pytest

from cranpower.network import (ChannelRealization, SimulationParams,
                               build_hex_topology, draw_channel, drop_users)


@pytest.fixture
def params():
    return SimulationParams()


@pytest.fixture
def topo7():
    """One RRH per cell: the 7-BS wrap-around layout used by small MM runs."""
    return build_hex_topology(7, 1, 0.8)


@pytest.fixture
def topo28():
    return build_hex_topology(7, 4, 0.8)


def synthetic_channel(gains, noise_power=1e-11, seed=0) -> ChannelRealization:
    """Hand-built realization for closed-form tests (no topology attached)."""
    gains = np.asarray(gains, dtype=complex)
    K = gains.shape[1]
    return ChannelRealization(
        gains=gains,
        noise_power=noise_power,
        user_positions=np.zeros((K, 2)),
        seed=seed,
    )


def small_channel(topo, params, seed, n_users=3, users_per_cell=1):
    """Channel on the 7-BS layout restricted to the first n_users users."""
    users = drop_users(topo, users_per_cell, seed)[:n_users]
    return draw_channel(topo, users, params, seed)
