"""Suprema of empirical processes indexed by centres in the contraction region.

Both estimators here maximise a signed average

    D(mu) = sum_j nu_j w_i(x_j; mu) (x_j - mu_i)

over ``mu`` in the product of balls ``B(mu_k*, a)``. For the Rademacher
average ``nu_j = eps_j / n``; for the gradient deviation ``nu`` puts the
population measure with a plus sign and the empirical measure with a minus
sign. The maximisation is nonconcave, so every value is a lower bound on the
true supremum; ``optimizer_meta`` records the effort spent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Literal, Sequence, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss

from . import rng as _rng
from .em import _points, gradient_moments
from .mixture import MixtureConfig, Sample, sample as draw_sample

Reference = Union[Literal["quadrature", "mc"], tuple]


@dataclass
class SupEstimate:
    value: float
    std_err: float
    replications: int
    optimizer_meta: dict[str, Any] = field(default_factory=dict)
    noise_floor: float = 0.0
    surrogate: float | None = None
    values: np.ndarray | None = None
    argmax: np.ndarray | None = None


def _batch_weights(x: np.ndarray, xsq: np.ndarray, weights: np.ndarray, means: np.ndarray) -> np.ndarray:
    # component-major (M, S, N): reductions over M stay elementwise
    S, M, _ = means.shape
    L = np.empty((M, S, x.shape[0]))
    for k in range(M):
        mk = means[:, k, :]
        L[k] = (mk @ x.T) - 0.5 * xsq[None, :] - 0.5 * (mk**2).sum(1)[:, None] + math.log(weights[k])
    L -= L.max(0)
    np.exp(L, out=L)
    L /= L.sum(0)
    return L


def _field(x: np.ndarray, nu: np.ndarray, W: np.ndarray, means: np.ndarray, i: int) -> tuple[np.ndarray, np.ndarray]:
    nw = nu[None, :] * W[i]
    return nw @ x - nw.sum(1)[:, None] * means[:, i, :], nw


def _field_grad(
    x: np.ndarray, nw: np.ndarray, W: np.ndarray, means: np.ndarray, i: int, u: np.ndarray
) -> np.ndarray:
    proj = u @ x.T - np.einsum("sd,sd->s", means[:, i, :], u)[:, None]
    c = nw * proj
    grad = np.empty_like(means)
    for k in range(means.shape[1]):
        ck = c * W[k]
        grad[:, k, :] = -(ck @ x - ck.sum(1)[:, None] * means[:, k, :])
    grad[:, i, :] += c @ x - c.sum(1)[:, None] * means[:, i, :]
    grad[:, i, :] -= nw.sum(1)[:, None] * u
    return grad


def signed_field(
    x: np.ndarray,
    nu: np.ndarray,
    weights: np.ndarray,
    means: np.ndarray,
    component: int,
    u: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Evaluate ``D(mu)`` for a batch of centre sets and, given ``u``, the gradient of ``<D, u>``.

    Args:
        x: ``(N, d)`` support points.
        nu: ``(N,)`` signed masses.
        means: ``(S, M, d)`` batch of centre sets.
        u: ``(S, d)`` directions, or None to skip the gradient.

    Returns:
        ``D`` of shape ``(S, d)`` and the gradient ``(S, M, d)`` (or None).
    """
    W = _batch_weights(x, (x**2).sum(1), np.asarray(weights, float), means)
    D, nw = _field(x, nu, W, means, component)
    if u is None:
        return D, None
    return D, _field_grad(x, nw, W, means, component, np.asarray(u, float))


def _project(means: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    diff = means - centers[None]
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    scale = np.where(norm > radius, radius / np.maximum(norm, 1e-300), 1.0)
    return centers[None] + diff * scale


def region_starts(centers: np.ndarray, radius: float, count: int, gen: np.random.Generator) -> np.ndarray:
    """Truth, boundary points and interior points of the product of balls."""
    M, d = centers.shape
    starts = [centers.copy()]
    rest = count - 1
    n_boundary = rest // 2
    if rest > 0:
        dirs = _rng.random_unit_vectors(gen, (rest, M), d)
        radii = np.ones((rest, M))
        radii[n_boundary:] = gen.uniform(size=(rest - n_boundary, M)) ** (1.0 / d)
        starts.extend(centers[None] + radius * radii[..., None] * dirs)
    return np.array(starts[:count])


def maximize_over_region(
    objective: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    starts: np.ndarray,
    centers: np.ndarray,
    radius: float,
    iters: int = 200,
    patience: int = 5,
    rtol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Batched projected gradient ascent with per-start backtracking.

    ``objective`` maps ``(S, M, d)`` centres to values ``(S,)`` and gradients.
    A start is retired once its relative gain stays below ``rtol`` for
    ``patience`` consecutive iterations; only live starts are evaluated.
    Returns final values, final centres and the iterations actually run.
    """
    mu = _project(starts.astype(float), centers, radius)
    val, g = objective(mu)
    if radius == 0:
        return val, mu, 0
    gnorm = np.sqrt((g**2).sum((1, 2)))
    eta = 0.25 * radius / np.maximum(gnorm, 1e-300)
    stall = np.zeros(len(mu), dtype=int)
    it = 0
    for it in range(1, iters + 1):
        live = np.flatnonzero(stall < patience)
        if live.size == 0:
            it -= 1
            break
        cand = _project(mu[live] + eta[live, None, None] * g[live], centers, radius)
        cval, cg = objective(cand)
        accept = cval >= val[live]
        gain = np.where(accept, cval - val[live], 0.0)
        idx = live[accept]
        mu[idx], g[idx], val[idx] = cand[accept], cg[accept], cval[accept]
        eta[live] = np.where(accept, eta[live] * 1.5, eta[live] * 0.5)
        small = gain <= rtol * np.maximum(np.abs(val[live]), 1e-300)
        stall[live] = np.where(small, stall[live] + 1, 0)
    return val, mu, it


def population_reference(
    config: MixtureConfig,
    method: Literal["quadrature", "mc"] = "quadrature",
    *,
    nodes: int | None = None,
    mc_samples: int = 1_000_000,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Points and masses representing the true mixture.

    ``quadrature`` is a Gauss-Hermite product rule around each centre
    (``d <= 3`` only); ``mc`` is an independent mega-sample.
    """
    M, d = config.components, config.dim
    if method == "quadrature":
        if d > 3:
            raise ValueError("quadrature reference supports d <= 3")
        k = nodes or {1: 120, 2: 60, 3: 24}[d]
        z, wz = hermgauss(k)
        grids = np.meshgrid(*([z] * d), indexing="ij")
        base = np.sqrt(2.0) * np.stack([g.ravel() for g in grids], axis=1)
        wgrid = np.ones(1)
        for _ in range(d):
            wgrid = np.multiply.outer(wgrid, wz / np.sqrt(np.pi)).ravel()
        pts = np.concatenate([mu + base for mu in config.means])
        mass = np.concatenate([p * wgrid for p in config.weights])
        return pts, mass
    if method == "mc":
        pts = draw_sample(config, mc_samples, seed, stream=_rng.MEGA).points
        return pts, np.full(pts.shape[0], 1.0 / pts.shape[0])
    raise ValueError(f"unknown reference method {method!r}")


def _meta(multistarts: int, iters: int, radius: float, **extra: Any) -> dict[str, Any]:
    return {"multistarts": multistarts, "iters": iters, "region_radius": radius, **extra}


def empirical_rademacher(
    sample: Sample | np.ndarray,
    config: MixtureConfig,
    region_radius: float,
    component: int = 0,
    direction: np.ndarray | None = None,
    *,
    multistarts: int = 16,
    replications: int = 20,
    iters: int = 200,
    seed: int = 0,
    absolute: bool = True,
    warm_starts: np.ndarray | None = None,
) -> SupEstimate:
    """Empirical Rademacher average of ``f(x; mu, u) = w_i(x; mu) <x - mu_i, u>``.

    Each replication draws fresh signs and maximises the signed average over
    the region. With ``absolute`` the supremum is of ``|.|``, which is the
    version whose single-point, zero-radius value is ``|<x - mu_i*, u>|``.

    ``warm_starts`` of shape ``(replications, M, d)`` adds one extra start per
    replication. ``argmax`` of the result holds the best centres per
    replication.
    """
    x = _points(sample)
    n, d = x.shape
    u = np.eye(d)[0] if direction is None else np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(u) - 1) > 1e-9:
        raise ValueError("direction must be a unit vector")
    centers = config.means
    signs = (1.0, -1.0) if absolute else (1.0,)
    values, argmaxes = [], []
    used = 0
    for r in range(replications):
        gen = _rng.generator(seed, _rng.SIGNS, r)
        eps = gen.choice([-1.0, 1.0], size=n)
        nu = eps / n
        starts = region_starts(centers, region_radius, multistarts, _rng.generator(seed, _rng.STARTS, r))
        if warm_starts is not None:
            starts = np.concatenate([np.asarray(warm_starts[r], dtype=float)[None], starts])
        best, best_mu = -math.inf, centers
        for sgn in signs:
            U = np.broadcast_to(sgn * u, (starts.shape[0], d))

            def objective(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
                D, grad = signed_field(x, nu, config.weights, mu, component, U[: mu.shape[0]])
                return D @ (sgn * u), grad

            val, mus, it = maximize_over_region(objective, starts, centers, region_radius, iters)
            used = max(used, it)
            if val.max() > best:
                best, best_mu = float(val.max()), mus[int(val.argmax())]
        values.append(best)
        argmaxes.append(best_mu)
    values_a = np.array(values)
    se = float(values_a.std(ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    return SupEstimate(
        value=float(values_a.mean()),
        std_err=se,
        replications=replications,
        optimizer_meta=_meta(multistarts, used, region_radius, direction=u.tolist(), absolute=absolute,
                             warm_start=warm_starts is not None),
        values=values_a,
        argmax=np.array(argmaxes),
    )


def sphere_net(d: int, eps: float = 0.5, seed: int = 0, candidates: int = 20000) -> np.ndarray:
    """An ``eps``-net of the unit sphere in R^d.

    Exact equiangular points for ``d <= 2``; otherwise a greedy maximal
    ``eps``-separated subset of random candidates.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        k = int(math.ceil(math.pi / (2 * math.asin(eps / 2))))
        ang = 2 * math.pi * np.arange(k) / k
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    cand = _rng.random_unit_vectors(_rng.generator(seed, _rng.STARTS, 99), candidates, d)
    net = [cand[0]]
    dmin = np.linalg.norm(cand - cand[0], axis=1)
    while dmin.max() > eps:
        j = int(dmin.argmax())
        net.append(cand[j])
        dmin = np.minimum(dmin, np.linalg.norm(cand - cand[j], axis=1))
    return np.array(net)


def sup_gradient_deviation(
    sample: Sample | np.ndarray,
    config: MixtureConfig,
    region_radius: float,
    component: int = 0,
    *,
    multistarts: int = 16,
    iters: int = 200,
    seed: int = 0,
    reference: Reference = "quadrature",
    mc_samples: int = 1_000_000,
    covering: bool = False,
) -> SupEstimate:
    """``sup_mu ||G^(i)(mu) - G_n^(i)(mu)||`` over the region.

    Args:
        reference: ``"quadrature"``, ``"mc"`` or an explicit ``(points, masses)``
            pair standing in for the population measure.
        covering: also compute ``2 max_j sup_mu <G_n - G, u_j>`` over a 1/2-net
            of directions (only for ``d <= 4``). The direct maximiser is used
            as an extra start for every direction.

    The optimiser follows ``u = D / ||D||`` at the current centres, i.e. it
    ascends the Euclidean norm directly.
    """
    x = _points(sample)
    n, d = x.shape
    if isinstance(reference, tuple):
        ref_pts, ref_mass = (np.asarray(a, dtype=float) for a in reference)
        method = "explicit"
    else:
        ref_pts, ref_mass = population_reference(config, reference, mc_samples=mc_samples, seed=_rng.derive_seed(seed, 1))
        method = reference
    support = np.concatenate([ref_pts, x])
    nu = np.concatenate([ref_mass, np.full(n, -1.0 / n)])
    centers = config.means

    floor = 0.0
    if method == "mc":
        est = gradient_moments(ref_pts, config.weights, centers)
        floor = float(est.std_err[component])

    support_sq = (support**2).sum(1)

    def norm_objective(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = _batch_weights(support, support_sq, config.weights, mu)
        D, nw = _field(support, nu, W, mu, component)
        norm = np.linalg.norm(D, axis=1)
        u = D / np.maximum(norm, 1e-300)[:, None]
        return norm, _field_grad(support, nw, W, mu, component, u)

    starts = region_starts(centers, region_radius, multistarts, _rng.generator(seed, _rng.STARTS))
    val, mus, it = maximize_over_region(norm_objective, starts, centers, region_radius, iters)
    best = int(np.argmax(val))
    value = float(val[best])
    meta = _meta(multistarts, it, region_radius, reference=method)

    surrogate = None
    if covering:
        if d > 4:
            raise ValueError("covering surrogate only for d <= 4")
        net = sphere_net(d, 0.5, seed)
        meta["covering_size"] = len(net)
        cover_starts = np.concatenate([mus[best][None], starts])
        g_vals = []
        for u in net:
            U = np.broadcast_to(-u, (cover_starts.shape[0], d))

            def lin_objective(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
                D, grad = signed_field(support, nu, config.weights, mu, component, U[: mu.shape[0]])
                return D @ (-u), grad

            v, _, _ = maximize_over_region(lin_objective, cover_starts, centers, region_radius, iters)
            g_vals.append(float(v.max()))
        surrogate = 2.0 * max(g_vals)

    return SupEstimate(
        value=value,
        std_err=floor,
        replications=1,
        optimizer_meta=meta,
        noise_floor=floor,
        surrogate=surrogate,
        argmax=mus[best],
    )


@dataclass
class ScalingResult:
    rows: list[dict[str, Any]]
    slopes: dict[int, float]
    medians: dict[tuple[int, int], float]
    raw: dict[tuple[int, int], np.ndarray]

    def to_csv(self, path: str | Path) -> None:
        cols = ["quantity", "n", "d", "median", "iqr", "slope_fit"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def _nested(small: MixtureConfig, big: MixtureConfig) -> bool:
    d = small.dim
    return (
        np.allclose(small.weights, big.weights, rtol=0, atol=1e-12)
        and np.allclose(small.means, big.means[:, :d], rtol=0, atol=1e-12)
        and np.allclose(big.means[:, d:], 0.0, rtol=0, atol=1e-12)
    )


def scaling_study(
    quantity: Literal["rademacher", "deviation"] | Callable[[np.ndarray, MixtureConfig, int], float],
    n_grid: Sequence[int],
    d_grid: Sequence[int],
    make_config: Callable[[int], MixtureConfig],
    region_radius: float | Callable[[MixtureConfig], float],
    *,
    component: int = 0,
    seeds: int = 20,
    seed: int = 0,
    multistarts: int = 16,
    iters: int = 200,
    replications: int = 1,
    reference: Literal["quadrature", "mc"] = "quadrature",
    coupled: bool = False,
    threads: int = 1,
) -> ScalingResult:
    """Median of a sup-type estimate over seeds on an ``n x d`` grid.

    For every ``d`` the log-log slope of the median against ``n`` is fitted
    (the target for both built-in quantities is -1/2). For the deviation with
    a Monte-Carlo reference the reference noise floor is removed in
    quadrature before fitting. A callable ``quantity(points, config, seed)``
    can be injected to calibrate the harness.

    ``coupled`` uses common random numbers across dimensions. The configs
    must be nested (means of a smaller ``d`` are the leading coordinates of
    the larger ones, zero elsewhere). Each ``(n, seed)`` then draws one sample
    in the largest dimension and every smaller ``d`` uses its leading
    coordinates, which is an exact draw from the smaller model. Rademacher
    signs are shared, and the ascent in dimension ``d`` is warm-started at
    the embedded maximiser from the previous ``d``.
    """
    if len(n_grid) < 3:
        raise ValueError("need at least three sample sizes")
    if isinstance(quantity, str) and quantity not in ("rademacher", "deviation"):
        raise ValueError(f"unknown quantity {quantity!r}")
    name = quantity if isinstance(quantity, str) else getattr(quantity, "__name__", "custom")
    configs = {d: make_config(d) for d in d_grid}
    if coupled:
        if list(d_grid) != sorted(set(d_grid)):
            raise ValueError("coupled study needs strictly increasing dimensions")
        big = configs[d_grid[-1]]
        if not all(_nested(configs[d], big) for d in d_grid):
            raise ValueError("coupled study needs nested configs")
    medians: dict[tuple[int, int], float] = {}
    raw: dict[tuple[int, int], np.ndarray] = {}
    iqrs: dict[tuple[int, int], float] = {}
    slopes: dict[int, float] = {}
    warm: dict[tuple[int, int], np.ndarray] = {}
    for di, d in enumerate(d_grid):
        config = configs[d]
        a = region_radius(config) if callable(region_radius) else region_radius
        ref = None
        if quantity == "deviation":
            ref = population_reference(config, reference, seed=_rng.derive_seed(seed, 2, di))
        for ni, n in enumerate(n_grid):

            def one(s: int) -> tuple[float, np.ndarray | None]:
                if coupled:
                    task_seed = _rng.derive_seed(seed, _rng.TRIALS, ni, s)
                    pts = draw_sample(configs[d_grid[-1]], n, task_seed).points[:, :d]
                else:
                    task_seed = _rng.derive_seed(seed, _rng.TRIALS, di, ni, s)
                    pts = draw_sample(config, n, task_seed).points
                if quantity == "rademacher":
                    ws = None
                    if (ni, s) in warm:
                        prev = warm[(ni, s)]
                        ws = np.zeros(prev.shape[:2] + (d,))
                        ws[..., : prev.shape[2]] = prev
                    est = empirical_rademacher(
                        pts, config, a, component, multistarts=multistarts,
                        replications=replications, iters=iters, seed=task_seed, warm_starts=ws,
                    )
                    return est.value, est.argmax
                if quantity == "deviation":
                    est = sup_gradient_deviation(
                        pts, config, a, component, multistarts=multistarts,
                        iters=iters, seed=task_seed, reference=ref,
                    )
                    return est.value, None
                return float(quantity(pts, config, task_seed)), None

            out = _rng.parallel_map(one, range(seeds), threads)
            vals = np.array([v for v, _ in out])
            if coupled:
                for s, (_, am) in enumerate(out):
                    if am is not None:
                        warm[(ni, s)] = am
            med = float(np.median(vals))
            if quantity == "deviation" and reference == "mc":
                floor = float(gradient_moments(ref[0], config.weights, config.means).std_err[component])
                med = math.sqrt(max(med**2 - floor**2, (1e-3 * med) ** 2))
            q75, q25 = np.percentile(vals, [75, 25])
            medians[(n, d)] = med
            iqrs[(n, d)] = float(q75 - q25)
            raw[(n, d)] = vals
        slopes[d] = loglog_slope(n_grid, [medians[(n, d)] for n in n_grid])
    rows = [
        {"quantity": name, "n": n, "d": d, "median": medians[(n, d)], "iqr": iqrs[(n, d)], "slope_fit": slopes[d]}
        for d in d_grid
        for n in n_grid
    ]
    return ScalingResult(rows=rows, slopes=slopes, medians=medians, raw=raw)
