"""Shared fixtures: tiny access configs and a known-optimal stub environment."""

from types import SimpleNamespace

import numpy as np
import pytest

from coexlab.access import AccessConfig
from coexlab.env import ACTION_DECREASE


def small_wifi(**overrides):
    base = dict(
        w0=16, max_stage=3, cw_max=64, slot_time_us=9.0, defer_time_us=34.0,
        txop_duration_us=2528.0, payload_bits_per_txop=60672,
    )
    base.update(overrides)
    return AccessConfig(**base)


def small_nru(**overrides):
    base = dict(
        w0=16, max_stage=2, cw_max=64, slot_time_us=9.0, defer_time_us=25.0,
        txop_duration_us=8000.0, payload_bits_per_txop=600000,
    )
    base.update(overrides)
    return AccessConfig(**base)


@pytest.fixture
def wifi_cfg():
    return small_wifi()


@pytest.fixture
def nru_cfg():
    return small_nru()


class AlwaysDecreaseEnv:
    """Stub whose optimal policy is decrease in every state, by construction.

    Reward is +2 for decrease and -1 otherwise; the state wanders inside
    [1.2, 10] so the greedy policy can be probed across that range.  The
    metrics/control records carry fixed placeholder values.
    """

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.s = 5.0
        self._metrics = SimpleNamespace(gamma_nr=1.0, gamma_wf=1.0)
        self._control = SimpleNamespace(t_nr_us=1000.0)

    def reset(self, episode_index=None):
        self.s = float(self._rng.uniform(1.2, 9.5))
        return self.s

    def step(self, action):
        s = self.s
        if action == ACTION_DECREASE:
            reward = 2.0
            s_next = max(1.2, s * 0.95)
        else:
            reward = -1.0
            s_next = min(10.0, s * 1.02 + 0.05)
        self.s = s_next
        return SimpleNamespace(
            state=s, action=action, reward=reward, next_state=s_next,
            metrics=self._metrics, control=self._control,
        )


@pytest.fixture
def stub_env_factory():
    return AlwaysDecreaseEnv
