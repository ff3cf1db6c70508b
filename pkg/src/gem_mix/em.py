"""Gradient EM iterations for known-weight isotropic mixtures.

The ascent direction for component ``i`` is ``E[w_i(X; mu)(X - mu_i)]``,
with no extra ``pi_i`` factor; at the truth its expectation is
``pi_i (mu_i* - mu_i)``, which is what the default step size
``2 / (pi_min + pi_max)`` is tuned to.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import rng as _rng
from .mixture import MixtureConfig, Sample, _draw, _softmax_rows, log_joint, sample as draw_sample

DIVERGENCE_LIMIT = 1e8
CHUNK = 1 << 17

Points = Union[Sample, np.ndarray]


def _points(data: Points) -> np.ndarray:
    # estimator-facing view: labels are never read past this point
    return data.points if isinstance(data, Sample) else np.asarray(data, dtype=float)


def default_step_size(weights: np.ndarray) -> float:
    weights = np.asarray(weights)
    return 2.0 / (weights.min() + weights.max())


@dataclass
class EmState:
    means_est: np.ndarray
    iteration: int = 0
    step_size: float = 1.0


@dataclass(frozen=True)
class GradientEstimate:
    grad: np.ndarray
    mc_samples: int
    std_err: np.ndarray


@dataclass
class Trajectory:
    """Per-iteration error records of one EM run.

    ``err_comp[t, k]`` is the distance of estimate ``k`` to the reference
    component it was matched to at initialisation.
    """

    t: np.ndarray
    err_total: np.ndarray
    err_comp: np.ndarray
    grad_norm: np.ndarray
    status: str
    iterates: np.ndarray
    perm: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def means(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return int(self.t[-1])

    def to_csv(self, path: str | Path, sidecar: bool = True) -> None:
        """Write ``t, err_total, err_1..err_M, grad_norm, status`` rows.

        With ``sidecar`` the effective run settings go to ``<path>.json``.
        """
        path = Path(path)
        M = self.err_comp.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "err_total"] + [f"err_{k + 1}" for k in range(M)] + ["grad_norm", "status"])
            for row in range(len(self.t)):
                writer.writerow(
                    [int(self.t[row]), repr(float(self.err_total[row]))]
                    + [repr(float(e)) for e in self.err_comp[row]]
                    + [repr(float(self.grad_norm[row])), self.status]
                )
        if sidecar:
            path.with_suffix(path.suffix + ".json").write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")


def match_components(init_means: np.ndarray, true_means: np.ndarray) -> np.ndarray:
    """Assignment of estimates to true centres minimising total squared distance.

    Returns ``perm`` with ``perm[k]`` the true component matched to estimate ``k``.
    """
    init_means = np.asarray(init_means, dtype=float)
    true_means = np.asarray(true_means, dtype=float)
    if init_means.shape != true_means.shape:
        raise ValueError(f"shape mismatch {init_means.shape} vs {true_means.shape}")
    cost = ((init_means[:, None, :] - true_means[None, :, :]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(rows), dtype=int)
    perm[rows] = cols
    return perm


def oracle_gradient_q(config: MixtureConfig, means_est: np.ndarray) -> np.ndarray:
    """Exact ``grad q(mu)``: component ``i`` is ``pi_i (mu_i* - mu_i)``."""
    means_est = np.asarray(means_est, dtype=float)
    if means_est.shape != config.means.shape:
        raise ValueError(f"means_est has shape {means_est.shape}, expected {config.means.shape}")
    return config.weights[:, None] * (config.means - means_est)


def _gradient_sums(x: np.ndarray, weights: np.ndarray, means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lj = log_joint(means, weights, x)
    # squared distances are recoverable from the joint log terms
    sq = -2.0 * (lj - np.log(weights))
    w = _softmax_rows(lj)
    s1 = w.T @ x - w.sum(0)[:, None] * means
    s2 = (w**2 * sq).sum(0)
    return s1, s2


def gradient_moments(points: Points, weights: np.ndarray, means: np.ndarray, chunk: int = CHUNK) -> GradientEstimate:
    """Average of ``w_i(X; mu)(X - mu_i)`` over ``points`` with its standard error.

    Sums are accumulated chunk by chunk in a fixed order, so the result does
    not depend on how the points were produced.
    """
    x = _points(points)
    means = np.asarray(means, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = x.shape[0]
    s1 = np.zeros_like(means)
    s2 = np.zeros(means.shape[0])
    for lo in range(0, n, chunk):
        a, b = _gradient_sums(x[lo : lo + chunk], weights, means)
        s1 += a
        s2 += b
    mean = s1 / n
    if n > 1:
        var = np.maximum(s2 / n - (mean**2).sum(1), 0.0) * n / (n - 1)
    else:
        var = np.zeros(means.shape[0])
    return GradientEstimate(grad=mean, mc_samples=n, std_err=np.sqrt(var / n))


def population_gradient(
    config: MixtureConfig,
    means_est: np.ndarray,
    mc_samples: int = 1_000_000,
    seed: int = 0,
    threads: int = 1,
) -> GradientEstimate:
    """Monte-Carlo estimate of ``grad Q(mu | mu)`` from one shared mega-sample."""
    if mc_samples < 1000:
        raise ValueError("mc_samples must be at least 1000")
    means_est = np.asarray(means_est, dtype=float)
    if means_est.shape != config.means.shape:
        raise ValueError(f"means_est has shape {means_est.shape}, expected {config.means.shape}")
    mega = draw_sample(config, mc_samples, seed, stream=_rng.MEGA, threads=threads)
    return gradient_moments(mega.points, config.weights, means_est)


def sample_gradient(sample: Points, weights: np.ndarray, means_est: np.ndarray) -> np.ndarray:
    """Empirical gradient ``G_n``: ``(1/n) sum_j w_i(X_j; mu)(X_j - mu_i)``."""
    x = _points(sample)
    if x.shape[0] < 1:
        raise ValueError("empty sample")
    return gradient_moments(x, weights, means_est).grad


def _stable_weight_gap(w_a: np.ndarray, w_b: np.ndarray) -> np.ndarray:
    gap = w_a - w_b
    # the dominant entry is the difference of two numbers near one; rebuild
    # it from the small entries, which carry full relative precision
    rows = np.arange(gap.shape[0])
    k = w_b.argmax(1)
    gap[rows, k] = 0.0
    gap[rows, k] = -gap.sum(1)
    return gap


def gradient_gap(
    points: Points,
    weights: np.ndarray,
    means: np.ndarray,
    means_ref: np.ndarray,
    chunk: int = CHUNK,
) -> GradientEstimate:
    """Common-random-number estimate of ``grad Q(mu|mu) - grad Q(mu|mu_ref)``.

    Both gradients are evaluated at ``mu``; only the responsibilities differ.
    With ``mu_ref = mu*`` this is the gradient-stability deviation.
    """
    x = _points(points)
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    n = x.shape[0]
    s1 = np.zeros_like(means)
    s2 = np.zeros(means.shape[0])
    for lo in range(0, n, chunk):
        xc = x[lo : lo + chunk]
        lj = log_joint(means, weights, xc)
        sq = -2.0 * (lj - np.log(weights))
        gap = _stable_weight_gap(_softmax_rows(lj), _softmax_rows(log_joint(means_ref, weights, xc)))
        s1 += gap.T @ xc - gap.sum(0)[:, None] * means
        s2 += (gap**2 * sq).sum(0)
    mean = s1 / n
    var = np.maximum(s2 / n - (mean**2).sum(1), 0.0) * n / max(n - 1, 1)
    return GradientEstimate(grad=mean, mc_samples=n, std_err=np.sqrt(var / n))


def auxiliary_objective(points: Points, weights: np.ndarray, means_prev: np.ndarray, means: np.ndarray) -> float:
    """Empirical ``Q_n(mu | mu_prev)`` up to an additive constant."""
    x = _points(points)
    w = _softmax_rows(log_joint(np.asarray(means_prev, float), np.asarray(weights, float), x))
    sq = -2.0 * (log_joint(np.asarray(means, float), np.ones(len(weights)), x))
    return float(-0.5 * (w * sq).sum() / x.shape[0])


class _Recorder:
    def __init__(self, reference: np.ndarray, perm: np.ndarray):
        self.target = reference[perm]
        self.t: list[int] = []
        self.err: list[np.ndarray] = []
        self.gnorm: list[float] = []
        self.iterates: list[np.ndarray] = []

    def __call__(self, t: int, mu: np.ndarray, grad: np.ndarray | None) -> None:
        self.t.append(t)
        self.err.append(np.linalg.norm(mu - self.target, axis=1))
        self.gnorm.append(float(np.linalg.norm(grad)) if grad is not None else math.nan)
        self.iterates.append(mu.copy())

    def finish(self, status: str, perm: np.ndarray, meta: dict[str, Any]) -> Trajectory:
        err = np.array(self.err)
        return Trajectory(
            t=np.array(self.t),
            err_total=np.sqrt((err**2).sum(1)),
            err_comp=err,
            grad_norm=np.array(self.gnorm),
            status=status,
            iterates=np.array(self.iterates),
            perm=perm,
            meta=meta,
        )


def _out_of_bounds(mu: np.ndarray) -> bool:
    return (not np.all(np.isfinite(mu))) or bool(np.any(np.abs(mu) > DIVERGENCE_LIMIT))


def run_gradient_em(
    source: Literal["population", "sample"],
    config: MixtureConfig,
    init_means: np.ndarray,
    *,
    sample: Points | None = None,
    step_size: float | None = None,
    max_iters: int = 500,
    tol: float = 1e-8,
    mc_samples: int = 1_000_000,
    seed: int = 0,
    reference: np.ndarray | None = None,
    threads: int = 1,
) -> Trajectory:
    """Iterate ``mu <- mu + s * grad`` until the step is below ``tol``.

    Args:
        source: ``"population"`` uses a fixed Monte-Carlo mega-sample drawn from
            ``config`` (common random numbers across iterations);
            ``"sample"`` uses the empirical gradient of ``sample``.
        config: Ground truth. Supplies the mixing weights and, unless
            ``reference`` is given, the centres errors are measured against.
        init_means: ``(M, d)`` starting centres.
        reference: Alternative error target, e.g. a sample-EM fixed point.

    Returns:
        A :class:`Trajectory` with status ``converged``, ``max_iters`` or
        ``diverged``. Non-finite gradients end the run as ``diverged``.
    """
    init = np.array(init_means, dtype=float)
    if init.shape != config.means.shape:
        raise ValueError(f"init_means has shape {init.shape}, expected {config.means.shape}")
    if not np.all(np.isfinite(init)):
        raise ValueError("init_means must be finite")
    weights = config.weights
    s = default_step_size(weights) if step_size is None else float(step_size)
    if s <= 0:
        raise ValueError("step_size must be positive")

    if source == "population":
        data = draw_sample(config, mc_samples, seed, stream=_rng.MEGA, threads=threads).points
    elif source == "sample":
        if sample is None:
            raise ValueError("sample source needs a sample")
        data = _points(sample)
    else:
        raise ValueError(f"unknown gradient source {source!r}")

    ref = config.means if reference is None else np.asarray(reference, dtype=float)
    perm = match_components(init, ref)
    record = _Recorder(ref, perm)
    meta = {
        "source": source,
        "step_size": s,
        "max_iters": max_iters,
        "tol": tol,
        "seed": seed,
        "mc_samples": mc_samples if source == "population" else None,
        "n": int(data.shape[0]),
    }

    mu = init
    status = "max_iters"
    for t in range(max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            g = gradient_moments(data, weights, mu).grad
        record(t, mu, g)
        if not np.all(np.isfinite(g)):
            status = "diverged"
            break
        if t == max_iters:
            break
        new = mu + s * g
        if _out_of_bounds(new):
            status = "diverged"
            break
        step = float(np.linalg.norm(new - mu))
        mu = new
        if step < tol:
            record(t + 1, mu, gradient_moments(data, weights, mu).grad)
            status = "converged"
            break
    return record.finish(status, perm, meta)


def project_to_ball(point: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto the closed ball ``B(center, radius)``."""
    point = np.asarray(point, dtype=float)
    center = np.asarray(center, dtype=float)
    diff = point - center
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    scale = np.where(norm > radius, radius / np.where(norm > 0, norm, 1.0), 1.0)
    return center + diff * scale


def stochastic_em_run(
    source: MixtureConfig | Points,
    init_means: np.ndarray,
    *,
    projection_radius: float,
    batch: int = 1,
    max_iters: int = 10_000,
    weights: np.ndarray | None = None,
    true_means: np.ndarray | None = None,
    step_constant: float | None = None,
    gamma_est: float = 0.0,
    schedule: Literal["harmonic", "constant"] = "harmonic",
    seed: int = 0,
) -> Trajectory:
    """Projected stochastic gradient EM.

    Iteration ``t`` takes ``s_t * G_batch`` and projects each centre back onto
    ``B(mu_i^0, projection_radius)``. ``schedule="harmonic"`` uses
    ``s_t = c / (t + 2)``; ``"constant"`` uses ``s_t = c``. The default
    ``c = 3 / (2 (pi_min - gamma_est))`` is a heuristic and should be tuned.

    ``source`` is either a config (fresh draws every step) or a fixed data
    set; with a fixed set and ``batch == n`` every step uses all points.
    """
    init = np.array(init_means, dtype=float)
    if isinstance(source, MixtureConfig):
        weights = source.weights if weights is None else np.asarray(weights, float)
        true_means = source.means if true_means is None else true_means
        fixed = None
    else:
        fixed = _points(source)
        if weights is None or true_means is None:
            raise ValueError("fixed data needs weights and true_means")
        weights = np.asarray(weights, dtype=float)
    true_means = np.asarray(true_means, dtype=float)
    if batch < 1:
        raise ValueError("batch must be positive")
    pi_min = float(weights.min())
    if step_constant is None:
        if gamma_est >= pi_min:
            raise ValueError("gamma_est must be below pi_min")
        step_constant = 3.0 / (2.0 * (pi_min - gamma_est))

    gen = _rng.generator(seed, _rng.STREAM)
    perm = match_components(init, true_means)
    record = _Recorder(true_means, perm)
    meta = {
        "source": "stream" if fixed is None else "fixed",
        "projection_radius": projection_radius,
        "batch": batch,
        "max_iters": max_iters,
        "step_constant": step_constant,
        "schedule": schedule,
        "seed": seed,
    }
    block: np.ndarray | None = None
    used = 0
    block_batches = 1024

    mu = init.copy()
    record(0, mu, None)
    status = "max_iters"
    for t in range(max_iters):
        if fixed is None:
            if block is None or used == block_batches:
                block, _ = _draw(gen, source, block_batches * batch)
                used = 0
            xb = block[used * batch : (used + 1) * batch]
            used += 1
        elif batch >= fixed.shape[0]:
            xb = fixed
        else:
            xb = fixed[gen.choice(fixed.shape[0], size=batch, replace=False)]
        g = gradient_moments(xb, weights, mu).grad
        s_t = step_constant / (t + 2) if schedule == "harmonic" else step_constant
        new = project_to_ball(mu + s_t * g, init, projection_radius)
        if _out_of_bounds(new):
            status = "diverged"
            record(t + 1, mu, g)
            break
        mu = new
        record(t + 1, mu, g)
    return record.finish(status, perm, meta)
