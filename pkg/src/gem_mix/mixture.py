"""Ground-truth isotropic Gaussian mixtures.

A :class:`MixtureConfig` holds known mixing weights and component means with
identity covariance. Sampling, densities and responsibilities all work in log
space so that points far from every centre do not overflow.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np
from scipy.special import logsumexp

from . import rng as _rng

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

ArrayLike = Union[np.ndarray, list, tuple]

# Fixed sampling chunk. Chunk boundaries define the random streams, so this
# constant must not depend on the worker count.
SAMPLE_CHUNK = 1 << 16


def _frozen(a: ArrayLike, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MixtureConfig:
    """Known-weight, unit-covariance Gaussian mixture.

    Attributes:
        weights: Mixing probabilities, shape ``(M,)``.
        means: Component centres, shape ``(M, d)``.
    """

    weights: np.ndarray
    means: np.ndarray

    def __post_init__(self) -> None:
        w = _frozen(self.weights, 1, "weights")
        mu = _frozen(self.means, 2, "means")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        if w.shape[0] != mu.shape[0]:
            raise ValueError(f"{w.shape[0]} weights for {mu.shape[0]} means")
        if mu.shape[0] < 1 or mu.shape[1] < 1:
            raise ValueError("need at least one component in at least one dimension")
        if not np.all(np.isfinite(mu)):
            raise ValueError("means must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
        if mu.shape[0] > 1 and _pairwise(mu)[np.triu_indices(mu.shape[0], 1)].min() <= 0:
            raise ValueError("means must be pairwise distinct")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> int:
        return self.means.shape[0]

    @property
    def pi_min(self) -> float:
        return float(self.weights.min())

    @property
    def pi_max(self) -> float:
        return float(self.weights.max())

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MixtureConfig":
        """Strictly validated construction from a mapping.

        Accepts exactly the keys ``weights``, ``means`` and optionally
        ``dim`` (checked against the means).
        """
        allowed = {"weights", "means", "dim"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown mixture keys: {sorted(unknown)}")
        missing = {"weights", "means"} - set(data)
        if missing:
            raise ValueError(f"missing mixture keys: {sorted(missing)}")
        means = data["means"]
        if not isinstance(means, (list, tuple)) or not all(isinstance(m, (list, tuple)) for m in means):
            raise ValueError("means must be an array of arrays")
        lengths = {len(m) for m in means}
        if len(lengths) != 1:
            raise ValueError("all means must share one dimension")
        cfg = cls(weights=data["weights"], means=means)
        if "dim" in data and int(data["dim"]) != cfg.dim:
            raise ValueError(f"dim={data['dim']} disagrees with means of dimension {cfg.dim}")
        return cfg

    def scaled(self, sigma: float) -> "MixtureConfig":
        """Config for data divided by a shared scale ``sigma``.

        A mixture with covariance ``sigma**2 I`` is equivalent to the unit
        covariance mixture with means ``mu / sigma``.
        """
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return MixtureConfig(self.weights, self.means / sigma)

    def permuted(self, perm: ArrayLike) -> "MixtureConfig":
        perm = np.asarray(perm, dtype=int)
        return MixtureConfig(self.weights[perm], self.means[perm])


@dataclass(frozen=True)
class SeparationStats:
    r_min: float
    r_max: float
    kappa: float
    d0: int
    max_center_norm: float


@dataclass(frozen=True)
class Sample:
    """Draws from a mixture.

    ``labels`` are the hidden memberships and exist for diagnostics only;
    estimators read ``points``.
    """

    points: np.ndarray
    labels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        lab = np.array(self.labels, dtype=np.int64)
        if pts.ndim != 2 or lab.shape != (pts.shape[0],):
            raise ValueError("points must be (n, d) with one label per point")
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def to_csv(self, path: str | Path) -> None:
        d = self.points.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j + 1}" for j in range(d)] + ["label"])
            for x, z in zip(self.points, self.labels):
                writer.writerow([repr(float(v)) for v in x] + [int(z)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "Sample":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if header[-1] != "label" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
            raise ValueError(f"unexpected sample header {header}")
        arr = np.array(body, dtype=float).reshape(len(body), len(header))
        return cls(points=arr[:, :-1], labels=arr[:, -1].astype(np.int64))


def _pairwise(means: np.ndarray) -> np.ndarray:
    diff = means[:, None, :] - means[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def center_means(config: MixtureConfig) -> MixtureConfig:
    """Shift every mean so that the weighted mean is zero."""
    shift = config.weights @ config.means
    return MixtureConfig(config.weights, config.means - shift)


def separation_stats(config: MixtureConfig) -> SeparationStats:
    M = config.components
    if M < 2:
        raise ValueError("need at least two components")
    dist = _pairwise(config.means)[np.triu_indices(M, 1)]
    return SeparationStats(
        r_min=float(dist.min()),
        r_max=float(dist.max()),
        kappa=config.pi_max / config.pi_min,
        d0=min(config.dim, M),
        max_center_norm=float(np.linalg.norm(config.means, axis=1).max()),
    )


def _draw(gen: np.random.Generator, config: MixtureConfig, size: int) -> tuple[np.ndarray, np.ndarray]:
    # order matters for reproducibility: labels first, then the Gaussian noise
    labels = gen.choice(config.components, size=size, p=config.weights)
    noise = gen.standard_normal((size, config.dim))
    return config.means[labels] + noise, labels


def sample(config: MixtureConfig, n: int, seed: int, *, stream: int = 0, threads: int = 1) -> Sample:
    """Draw ``n`` points; bit-identical for any ``threads``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    starts = list(range(0, n, SAMPLE_CHUNK))

    def chunk(idx: int) -> tuple[np.ndarray, np.ndarray]:
        lo = starts[idx]
        size = min(SAMPLE_CHUNK, n - lo)
        return _draw(_rng.generator(seed, _rng.SAMPLE, stream, idx), config, size)

    parts = _rng.parallel_map(chunk, range(len(starts)), threads)
    points = np.concatenate([p for p, _ in parts])
    labels = np.concatenate([z for _, z in parts])
    return Sample(points=points, labels=labels)


def log_joint(means: np.ndarray, weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``log pi_i - ||x - mu_i||^2 / 2`` for every point and component.

    Returns shape ``(n, M)``. Differences are formed before squaring so large
    ``||x||`` does not cancel catastrophically.
    """
    x = np.atleast_2d(x)
    out = np.empty((x.shape[0], means.shape[0]))
    for i, mu in enumerate(means):
        diff = x - mu
        out[:, i] = -0.5 * np.einsum("nd,nd->n", diff, diff)
    out += np.log(weights)
    return out


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def responsibilities(means: ArrayLike, weights: ArrayLike, x: ArrayLike) -> np.ndarray:
    """Posterior membership probabilities ``w_i(x; mu)``.

    Args:
        means: ``(M, d)`` current centres.
        weights: ``(M,)`` mixing weights.
        x: one point ``(d,)`` or a batch ``(n, d)``.

    Returns:
        ``(M,)`` for a single point, otherwise ``(n, M)``.
    """
    means = np.asarray(means, dtype=float)
    weights = np.asarray(weights, dtype=float)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    single = x.ndim == 1
    if x.shape[-1] != means.shape[1]:
        raise ValueError(f"x has dimension {x.shape[-1]}, means have {means.shape[1]}")
    w = _softmax_rows(log_joint(means, weights, x))
    return w[0] if single else w


def log_density(config: MixtureConfig, x: ArrayLike) -> np.ndarray | float:
    """Mixture log density, scalar for one point or ``(n,)`` for a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    lj = log_joint(config.means, config.weights, x)
    out = logsumexp(lj, axis=1) - 0.5 * config.dim * np.log(2 * np.pi)
    return float(out[0]) if single else out


def load_config(path: str | Path) -> MixtureConfig:
    """Read a MixtureConfig from ``.json`` or ``.toml``."""
    path = Path(path)
    if path.suffix == ".toml":
        data = tomllib.loads(path.read_text())
    elif path.suffix == ".json":
        data = json.loads(path.read_text())
    else:
        raise ValueError(f"unsupported config format: {path.suffix}")
    return MixtureConfig.from_dict(data)


def save_config(config: MixtureConfig, path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    elif path.suffix == ".toml":
        rows = ", ".join("[" + ", ".join(repr(float(v)) for v in m) + "]" for m in config.means)
        w = ", ".join(repr(float(v)) for v in config.weights)
        path.write_text(f"weights = [{w}]\nmeans = [{rows}]\ndim = {config.dim}\n")
    else:
        raise ValueError(f"unsupported config format: {path.suffix}")
