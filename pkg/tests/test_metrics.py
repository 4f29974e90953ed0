"""Fairness index and normalized utility model."""

import math

import numpy as np
import pytest

from coexlab.errors import ConfigError, UndefinedFairnessError
from coexlab.metrics import (
    UtilityModel,
    clamp_utility,
    jain_index,
    utility,
    utility_fairness,
)


def test_jain_equal_allocations_score_one():
    for x in (0.5, 1.0, 42.0):
        assert jain_index(x, x) == pytest.approx(1.0, abs=1e-12)


def test_jain_single_sided_allocation_scores_half():
    assert jain_index(10.0, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert jain_index(0.0, 3.0) == pytest.approx(0.5, abs=1e-12)


def test_jain_matches_definition_on_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a, b = rng.uniform(0.01, 100.0, size=2)
        expected = (a + b) ** 2 / (2.0 * (a * a + b * b))
        assert jain_index(a, b) == pytest.approx(expected, rel=1e-12)


def test_jain_scale_invariant():
    rng = np.random.default_rng(12)
    for _ in range(50):
        a, b = rng.uniform(0.01, 10.0, size=2)
        scale = rng.uniform(0.1, 1000.0)
        assert jain_index(a, b) == pytest.approx(
            jain_index(scale * a, scale * b), rel=1e-12
        )


def test_jain_range_and_symmetry():
    rng = np.random.default_rng(13)
    for _ in range(100):
        a, b = rng.uniform(0.0, 50.0, size=2)
        if a == 0.0 and b == 0.0:
            continue
        value = jain_index(a, b)
        assert 0.5 <= value <= 1.0
        assert value == pytest.approx(jain_index(b, a), rel=1e-12)


def test_jain_all_zero_is_undefined():
    with pytest.raises(UndefinedFairnessError):
        jain_index(0.0, 0.0)


def test_utility_endpoints():
    model = UtilityModel(b_min_mbps=0.5, b_max_mbps=10.0)
    assert utility(0.5, model) == pytest.approx(0.0, abs=1e-12)
    assert utility(10.0, model) == pytest.approx(1.0, abs=1e-12)


def test_utility_monotone_and_concave_inside_range():
    model = UtilityModel(b_min_mbps=0.5, b_max_mbps=10.0)
    xs = np.linspace(0.5, 10.0, 40)
    us = [utility(x, model) for x in xs]
    assert all(a < b for a, b in zip(us, us[1:]))
    diffs = np.diff(us)
    assert all(a > b for a, b in zip(diffs, diffs[1:]))


def test_utility_outside_range_before_clamping():
    model = UtilityModel(b_min_mbps=0.5, b_max_mbps=10.0)
    assert utility(0.1, model) < 0.0
    assert utility(20.0, model) > 1.0


def test_utility_matches_log_normalization():
    model = UtilityModel(b_min_mbps=0.5, b_max_mbps=10.0)
    for x in (0.7, 1.0, 3.3, 9.0):
        expected = math.log(x / 0.5) / math.log(10.0 / 0.5)
        assert utility(x, model) == pytest.approx(expected, rel=1e-12)


def test_utility_rejects_nonpositive_throughput():
    model = UtilityModel(b_min_mbps=0.5, b_max_mbps=10.0)
    for x in (0.0, -1.0):
        with pytest.raises(ConfigError):
            utility(x, model)


def test_utility_model_rejects_bad_bounds():
    for b_min, b_max in ((1.0, 1.0), (5.0, 2.0), (0.0, 1.0), (-1.0, 2.0)):
        with pytest.raises(ConfigError):
            UtilityModel(b_min_mbps=b_min, b_max_mbps=b_max)


def test_clamp_utility_bounds():
    assert clamp_utility(-3.0) == 1e-3
    assert clamp_utility(0.4) == 0.4
    assert clamp_utility(7.0) == 1.0


def test_utility_fairness_is_jain_on_utilities():
    assert utility_fairness(0.8, 0.8) == pytest.approx(1.0, abs=1e-12)
    assert utility_fairness(0.9, 0.3) == pytest.approx(
        jain_index(0.9, 0.3), rel=1e-12
    )
