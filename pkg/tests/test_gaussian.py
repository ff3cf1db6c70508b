import math

import numpy as np
import pytest

from gem_mix.gaussian import (
    gaussian_norm_moment,
    gaussian_norm_tail,
    mixture_subgaussian_norm,
    sphere_covering_bound,
)
from gem_mix.mixture import MixtureConfig


def test_moment_examples():
    assert gaussian_norm_moment(0, 7) == pytest.approx(1.0, rel=1e-14)
    for d in (1, 2, 5, 20):
        assert gaussian_norm_moment(2, d) == pytest.approx(d, rel=1e-12)
    assert gaussian_norm_moment(1, 2) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert gaussian_norm_moment(2, 3, sigma=2.0) == pytest.approx(12.0, rel=1e-12)


def test_moment_third_power_closed_form():
    # E|X|^3 in d=1 is 2 sqrt(2/pi)
    assert gaussian_norm_moment(3, 1) == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-12)


def test_moment_monte_carlo():
    gen = np.random.default_rng(4)
    for d in (1, 2, 5, 20):
        r = np.linalg.norm(gen.standard_normal((200_000, d)), axis=1)
        for p in (1, 3):
            v = r**p
            se = v.std() / math.sqrt(len(v))
            assert abs(v.mean() - gaussian_norm_moment(p, d)) < 3.5 * se


def test_tail_examples():
    assert gaussian_norm_tail(2, 1) == pytest.approx(math.exp(-1), rel=1e-14)
    assert gaussian_norm_tail(4, 4) == pytest.approx(math.exp(-4), rel=1e-14)
    with pytest.raises(ValueError, match="bound invalid below"):
        gaussian_norm_tail(3, 4)


def test_tail_dominates_empirical():
    gen = np.random.default_rng(1)
    r = np.abs(gen.standard_normal(10**6))
    assert np.mean(r >= 2) == pytest.approx(0.0455, abs=0.002)
    assert np.mean(r >= 2) <= gaussian_norm_tail(2, 1)


def test_subgaussian_norm_examples():
    assert mixture_subgaussian_norm(MixtureConfig([1.0], [[0.0, 0.0]])) == 1.0
    cfg = MixtureConfig([0.5, 0.5], [[5.0, 0.0], [-5.0, 0.0]])
    assert mixture_subgaussian_norm(cfg) == pytest.approx(6.0)
    b = mixture_subgaussian_norm(cfg)
    doubled = MixtureConfig(cfg.weights, 2 * cfg.means)
    assert mixture_subgaussian_norm(doubled) == pytest.approx(2 * b - 1)


def test_covering_examples():
    assert sphere_covering_bound(3, 0.5) == pytest.approx(125.0)
    assert sphere_covering_bound(1, 2.0) == pytest.approx(2.0)
    for d in range(1, 21):
        assert sphere_covering_bound(d, 0.5) <= math.exp(2 * d)
    for eps in (0.0, -1.0, 2.5):
        with pytest.raises(ValueError):
            sphere_covering_bound(2, eps)
