import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gem_mix.mixture import (
    MixtureConfig,
    Sample,
    center_means,
    load_config,
    log_density,
    responsibilities,
    sample,
    save_config,
    separation_stats,
)

from conftest import random_centered_config


def test_config_rejects_bad_weights():
    with pytest.raises(ValueError):
        MixtureConfig([0.5, 0.6], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        MixtureConfig([1.0, 0.0], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        MixtureConfig([0.5, 0.5], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        MixtureConfig([0.5, 0.5], [[np.nan], [1.0]])


def test_config_is_immutable():
    cfg = MixtureConfig([0.5, 0.5], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        cfg.means[0, 0] = 3.0


def test_center_means_examples():
    cfg = center_means(MixtureConfig([0.5, 0.5], [[0, 0], [2, 0]]))
    np.testing.assert_allclose(cfg.means, [[-1, 0], [1, 0]])
    again = center_means(cfg)
    np.testing.assert_array_equal(again.means, cfg.means)
    tri = MixtureConfig(np.full(3, 1 / 3), [[-5, 0], [5, 0], [0, 8.6603]])
    shifted = center_means(tri)
    np.testing.assert_allclose(shifted.means - tri.means, np.tile([0, -8.6603 / 3], (3, 1)), atol=1e-12)
    assert abs(-8.6603 / 3 - (-2.8868)) < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_centering_invariant(M, d, seed):
    gen = np.random.default_rng(seed)
    cfg = random_centered_config(gen, M, d)
    np.testing.assert_allclose(cfg.weights @ cfg.means, 0.0, atol=1e-10)


def test_separation_examples():
    side = 10.0
    tri = MixtureConfig(np.full(3, 1 / 3), [[0, 0], [side, 0], [side / 2, side * math.sqrt(3) / 2]])
    s = separation_stats(tri)
    assert s.r_min == pytest.approx(10) and s.r_max == pytest.approx(10)
    assert s.kappa == 1 and s.d0 == 2
    s = separation_stats(MixtureConfig([0.6, 0.3, 0.1], tri.means))
    assert s.kappa == pytest.approx(6)
    s = separation_stats(MixtureConfig(np.full(3, 1 / 3), np.eye(3, 50)))
    assert s.d0 == 3
    with pytest.raises(ValueError, match="need at least two components"):
        separation_stats(MixtureConfig([1.0], [[0.0, 0.0]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_rmax_vs_max_center_norm(M, d, seed):
    s = separation_stats(random_centered_config(np.random.default_rng(seed), M, d))
    assert 0 < s.r_min <= s.r_max
    assert s.kappa >= 1
    assert s.max_center_norm <= s.r_max * (1 + 1e-12)
    assert s.r_max <= 2 * s.max_center_norm * (1 + 1e-12)


def test_sample_validation_and_determinism(triangle):
    with pytest.raises(ValueError):
        sample(triangle, 0, 1)
    a, b = sample(triangle, 1000, 5), sample(triangle, 1000, 5)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.points, sample(triangle, 1000, 6).points)


def test_sample_thread_count_irrelevant(triangle):
    n = 3 * (1 << 16) + 17
    one = sample(triangle, n, 9, threads=1)
    many = sample(triangle, n, 9, threads=4)
    np.testing.assert_array_equal(one.points, many.points)


def test_single_component_sample_mean():
    d = 3
    cfg = MixtureConfig([1.0], np.zeros((1, d)))
    x = sample(cfg, 10**6, 0).points
    assert np.all(np.abs(x.mean(0)) < 4 / math.sqrt(10**6) * math.sqrt(d))


def test_sample_frequencies_and_means(triangle):
    cfg = MixtureConfig([0.5, 0.3, 0.2], triangle.means)
    s = sample(cfg, 200_000, 3)
    freq = np.bincount(s.labels, minlength=3) / s.n
    se = np.sqrt(cfg.weights * (1 - cfg.weights) / s.n)
    assert np.all(np.abs(freq - cfg.weights) < 5 * se)
    for i in range(3):
        pts = s.points[s.labels == i]
        assert np.all(np.abs(pts.mean(0) - cfg.means[i]) < 5 / math.sqrt(len(pts)))


def test_sample_csv_roundtrip(tmp_path, triangle):
    s = sample(triangle, 50, 2)
    path = tmp_path / "s.csv"
    s.to_csv(path)
    assert path.read_text().splitlines()[0] == "x1,x2,label"
    back = Sample.from_csv(path)
    np.testing.assert_array_equal(back.points, s.points)
    np.testing.assert_array_equal(back.labels, s.labels)


def test_responsibility_examples():
    assert responsibilities([[0.0, 0.0]], [1.0], [3.0, 4.0]) == pytest.approx([1.0])
    np.testing.assert_allclose(responsibilities([[-1.0], [1.0]], [0.5, 0.5], [0.0]), [0.5, 0.5])
    w = responsibilities([[-1.0], [1.0]], [0.5, 0.5], [1.0])
    assert w[1] == pytest.approx(1 / (1 + math.exp(-2)), rel=1e-12)
    assert w[1] == pytest.approx(0.880797, abs=1e-6)
    with pytest.raises(ValueError):
        responsibilities([[-1.0], [1.0]], [0.5, 0.5], [np.inf])


def test_responsibilities_far_away_point():
    w = responsibilities([[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [1e6, -3e5])
    assert np.all(np.isfinite(w))
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert w[1] == 1.0


def _naive_responsibilities(means, weights, x):
    dens = np.array([w * math.exp(-0.5 * float(np.sum((x - m) ** 2))) for w, m in zip(weights, means)])
    return dens / dens.sum()


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_responsibilities_properties(M, d, seed):
    gen = np.random.default_rng(seed)
    cfg = random_centered_config(gen, M, d, scale=2.0)
    x = gen.normal(scale=3.0, size=d)
    w = responsibilities(cfg.means, cfg.weights, x)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
    np.testing.assert_allclose(w, _naive_responsibilities(cfg.means, cfg.weights, x), rtol=1e-9, atol=1e-300)
    # scaling every weight by a constant is an additive shift of log-weights
    np.testing.assert_allclose(responsibilities(cfg.means, cfg.weights * 7.3, x), w, rtol=1e-12, atol=1e-15)
    perm = gen.permutation(M)
    np.testing.assert_allclose(responsibilities(cfg.means[perm], cfg.weights[perm], x), w[perm], rtol=1e-12)


def test_responsibilities_batch_shape(triangle):
    x = sample(triangle, 7, 1).points
    w = responsibilities(triangle.means, triangle.weights, x)
    assert w.shape == (7, 3)
    np.testing.assert_allclose(w[3], responsibilities(triangle.means, triangle.weights, x[3]))


def test_log_density_examples():
    cfg = MixtureConfig([1.0], [[0.5, -1.0]])
    assert log_density(cfg, [0.5, -1.0]) == pytest.approx(-math.log(2 * math.pi), rel=1e-14)
    sym = MixtureConfig([0.5, 0.5], [[-1.0], [1.0]])
    expect = math.log(math.exp(-0.5) / math.sqrt(2 * math.pi))
    assert log_density(sym, [0.0]) == pytest.approx(expect, rel=1e-14)
    assert expect == pytest.approx(-1.41894, abs=1e-5)


def test_log_density_translation_invariant(triangle):
    shift = np.array([3.0, -2.0])
    moved = MixtureConfig(triangle.weights, triangle.means + shift)
    x = np.array([0.3, 0.7])
    assert log_density(moved, x + shift) == pytest.approx(log_density(triangle, x), rel=1e-12)


def test_log_density_integrates_to_one(triangle):
    # importance sampling from a wide Gaussian proposal
    gen = np.random.default_rng(0)
    scale = 6.0
    x = gen.normal(scale=scale, size=(400_000, 2))
    log_q = -0.5 * (x**2).sum(1) / scale**2 - np.log(2 * np.pi * scale**2)
    ratio = np.exp(log_density(triangle, x) - log_q)
    est, se = ratio.mean(), ratio.std() / math.sqrt(len(ratio))
    assert abs(est - 1.0) < 4 * se


def test_config_file_roundtrip(tmp_path, triangle):
    for suffix in (".json", ".toml"):
        path = tmp_path / f"cfg{suffix}"
        save_config(triangle, path)
        back = load_config(path)
        np.testing.assert_array_equal(back.means, triangle.means)
        np.testing.assert_array_equal(back.weights, triangle.weights)


def test_config_strict_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"weights": [1.0], "means": [[0.0]], "sigma": 2}))
    with pytest.raises(ValueError, match="unknown"):
        load_config(path)
    path.write_text(json.dumps({"weights": [1.0], "means": [[0.0]], "dim": 2}))
    with pytest.raises(ValueError, match="dim"):
        load_config(path)
    path.write_text(json.dumps({"weights": [0.5, 0.5], "means": [[0.0], [1.0, 2.0]]}))
    with pytest.raises(ValueError):
        load_config(path)


def test_scaled_and_permuted(triangle):
    s = triangle.scaled(2.0)
    np.testing.assert_allclose(s.means, triangle.means / 2)
    perm = [2, 0, 1]
    p = triangle.permuted(perm)
    np.testing.assert_array_equal(p.means, triangle.means[perm])
    for q in itertools.permutations(range(3)):
        assert separation_stats(triangle.permuted(q)).r_min == pytest.approx(5.0)
