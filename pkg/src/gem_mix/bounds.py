"""Closed-form convergence constants and an empirical gradient-stability check.

The O-tilde constants of the asymptotic statements are not known; the
functions that need them take an explicit constant (default 1.0) and should
be read as formula shapes, not certified values.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Literal, Sequence

import numpy as np

from . import rng as _rng
from .em import gradient_gap
from .mixture import MixtureConfig, SeparationStats, sample as draw_sample, separation_stats

BISECTION_TOL = 1e-10


class CertificateError(ValueError):
    """Raised when the separation admits no positive contraction radius."""


def gamma_gs(stats: SeparationStats, M: int, radius_a: float) -> float:
    """Gradient-stability constant for radius ``a``.

    ``M^2 (2 kappa + 4) (2 R_max + d0)^2 exp(-(R_min/2 - a)^2 sqrt(d0) / 8)``.
    """
    if radius_a >= stats.r_min / 2:
        raise ValueError("outside admissible radius")
    gap = stats.r_min / 2 - radius_a
    poly = M**2 * (2 * stats.kappa + 4) * (2 * stats.r_max + stats.d0) ** 2
    return poly * math.exp(-(gap**2) * math.sqrt(stats.d0) / 8)


def zeta_rate(pi_min: float, pi_max: float, gamma: float) -> tuple[float, bool]:
    """Contraction factor ``(pi_max - pi_min + 2 gamma) / (pi_max + pi_min)``.

    Returns ``(zeta, contractive)``; ``contractive`` is False once
    ``gamma >= pi_min`` (then ``zeta >= 1``).
    """
    if not (0 < pi_min <= pi_max <= 1):
        raise ValueError("need 0 < pi_min <= pi_max <= 1")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    zeta = (pi_max - pi_min + 2 * gamma) / (pi_max + pi_min)
    return zeta, gamma < pi_min


def explicit_radius(stats: SeparationStats) -> float:
    """``R_min/2 - sqrt(d0) max(4 sqrt(2 [log(R_min/4)]_+), 8 sqrt(3))`` (may be negative)."""
    log_term = max(math.log(stats.r_min / 4), 0.0)
    return stats.r_min / 2 - math.sqrt(stats.d0) * max(4 * math.sqrt(2 * log_term), 8 * math.sqrt(3))


def asymptotic_radius(stats: SeparationStats, M: int, pi_min: float, c_a: float = 1.0) -> float:
    """Shape ``R_min/2 - c_a sqrt(d0) sqrt(log max{M^2 kappa / pi_min, R_max, d0})``."""
    inner = max(M**2 * stats.kappa / pi_min, stats.r_max, stats.d0)
    return stats.r_min / 2 - c_a * math.sqrt(stats.d0) * math.sqrt(math.log(inner))


def contraction_radius(
    stats: SeparationStats,
    M: int,
    pi_min: float,
    constant_mode: Literal["explicit", "solved", "asymptotic"] = "explicit",
    c_a: float = 1.0,
) -> float:
    """Radius ``a`` of the per-component contraction balls.

    ``explicit`` evaluates the closed-form admissibility condition of the
    gradient-stability theorem. ``solved`` returns the largest ``a`` in
    ``[0, R_min/2)`` with ``gamma_gs(a) < pi_min`` (bisection to 1e-10);
    it does not additionally impose the explicit condition. ``asymptotic``
    evaluates the big-O shape with constant ``c_a``.

    Raises:
        CertificateError: no positive admissible radius exists.
    """
    if constant_mode == "explicit":
        a = explicit_radius(stats)
    elif constant_mode == "asymptotic":
        a = asymptotic_radius(stats, M, pi_min, c_a)
    elif constant_mode == "solved":
        if gamma_gs(stats, M, 0.0) >= pi_min:
            raise CertificateError("separation too small for certificate")
        lo, hi = 0.0, stats.r_min / 2
        while hi - lo > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            if gamma_gs(stats, M, mid) < pi_min:
                lo = mid
            else:
                hi = mid
        return lo
    else:
        raise ValueError(f"unknown constant_mode {constant_mode!r}")
    if a <= 0:
        raise CertificateError("separation too small for certificate")
    return a


def eps_unif(
    stats: SeparationStats,
    M: int,
    d: int,
    n: int,
    constant_c: float = 1.0,
    mode: Literal["original", "improved"] = "improved",
) -> float:
    """Uniform gradient-deviation level ``eps_unif(n)``.

    ``improved``: ``c M^{3/2} (1 + 3 R_max)^3 max{1, log kappa} sqrt(d log n / n)``.
    ``original``: ``c max{M^3 (1+R_max)^3 sqrt(d) max{1, log kappa} / sqrt(n),
    (1+R_max) d log^{5/2}(n) / sqrt(n)}``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if constant_c <= 0:
        raise ValueError("constant_c must be positive")
    log_k = max(1.0, math.log(stats.kappa))
    if mode == "improved":
        return constant_c * M**1.5 * (1 + 3 * stats.r_max) ** 3 * log_k * math.sqrt(d * math.log(n) / n)
    if mode == "original":
        first = M**3 * (1 + stats.r_max) ** 3 * math.sqrt(d) * log_k / math.sqrt(n)
        second = (1 + stats.r_max) * d * math.log(n) ** 2.5 / math.sqrt(n)
        return constant_c * max(first, second)
    raise ValueError(f"unknown mode {mode!r}")


def restart_count(M: int, a: float, d: int, delta: float) -> int:
    """Random restarts needed for one initialisation inside the region w.p. ``1 - delta``.

    Equal weights are assumed. ``a = inf`` gives the limiting count.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    miss = math.exp(-a * math.sqrt(d) / 2)
    value = math.log(1 / delta) / math.sqrt(2 * math.pi * M) * (math.e / (1 - miss)) ** M
    return int(math.ceil(value))


def predicted_iterations(zeta: float, err0: float, tol: float) -> int:
    """``ceil(log(tol / err0) / log zeta)``; 0 when already within ``tol``."""
    if err0 <= tol:
        return 0
    if zeta <= 0:
        return 1
    if zeta >= 1:
        raise ValueError("not contractive")
    return int(math.ceil(math.log(tol / err0) / math.log(zeta)))


@dataclass
class BoundReport:
    gamma: float | None
    zeta: float | None
    contractive: bool
    radius_a: float | None
    eps_unif: float | None
    restart_count: int | None
    message: str
    inputs: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


def bound_report(
    config: MixtureConfig,
    n: int | None = None,
    *,
    constant_mode: Literal["explicit", "solved", "asymptotic"] = "explicit",
    c_a: float = 1.0,
    c_eps: float = 1.0,
    eps_mode: Literal["original", "improved"] = "improved",
    delta: float = 0.05,
) -> BoundReport:
    """Evaluate every closed-form constant for one configuration."""
    stats = separation_stats(config)
    M, d = config.components, config.dim
    inputs = {
        "M": M,
        "d": d,
        "d0": stats.d0,
        "r_min": stats.r_min,
        "r_max": stats.r_max,
        "kappa": stats.kappa,
        "pi_min": config.pi_min,
        "pi_max": config.pi_max,
        "n": n,
        "constant_mode": constant_mode,
        "c_a": c_a,
        "c_eps": c_eps,
        "eps_mode": eps_mode,
        "delta": delta,
    }
    eps = eps_unif(stats, M, d, n, c_eps, eps_mode) if n is not None else None
    try:
        a = contraction_radius(stats, M, config.pi_min, constant_mode, c_a)
    except CertificateError as exc:
        return BoundReport(None, None, False, None, eps, None, str(exc), inputs)
    inputs["a"] = a
    try:
        gamma = gamma_gs(stats, M, a)
    except ValueError as exc:
        return BoundReport(None, None, False, a, eps, None, str(exc), inputs)
    zeta, ok = zeta_rate(config.pi_min, config.pi_max, gamma)
    balanced = np.allclose(config.weights, 1.0 / M)
    restarts = restart_count(M, a, d, delta) if balanced and a > 0 else None
    msg = "certificate" if ok else "not contractive"
    return BoundReport(gamma, zeta, ok, a, eps, restarts, msg, inputs)


@dataclass
class GsReport:
    ratios: np.ndarray
    std_errs: np.ndarray
    distances: np.ndarray
    skipped: list[int]
    gamma_hat: float
    std_err: float
    gamma_bound: float
    radius_a: float
    passed: bool


def default_trial_points(config: MixtureConfig, radius_a: float, count: int = 8, seed: int = 0) -> np.ndarray:
    """Trial centres at radii ``a/4, a/2, 3a/4, a - tol`` in random directions.

    Trial ``k`` moves every component by ``radii[k % 4]``.
    """
    gen = _rng.generator(seed, _rng.INIT)
    radii = np.array([0.25, 0.5, 0.75, 1.0 - 1e-9]) * radius_a
    dirs = _rng.random_unit_vectors(gen, (count, config.components), config.dim)
    r = radii[np.arange(count) % 4]
    return config.means[None] + r[:, None, None] * dirs


def verify_gs_empirical(
    config: MixtureConfig,
    trial_points: Sequence[np.ndarray] | np.ndarray | None = None,
    *,
    radius_a: float | None = None,
    mc_samples: int = 1_000_000,
    seed: int = 0,
    mc_points: np.ndarray | None = None,
    region_tol: float = 1e-9,
) -> GsReport:
    """Measure ``||grad Q(mu|mu) - grad q(mu)|| / ||mu - mu*||`` at trial points.

    The deviation is estimated with common random numbers: one mega-sample
    weighs ``(w(X; mu) - w(X; mu*))(X - mu_i)``, which has the same mean as
    the Monte-Carlo population gradient minus the oracle gradient but far
    smaller variance. Points outside the region (or equal to the truth) are
    skipped and listed in ``skipped``.

    PASS means ``gamma_hat + 4 * std_err <= gamma_gs(a)``.
    """
    stats = separation_stats(config)
    if radius_a is None:
        radius_a = contraction_radius(stats, config.components, config.pi_min, "solved")
    if trial_points is None:
        trial_points = default_trial_points(config, radius_a, seed=seed)
    points = (
        draw_sample(config, mc_samples, seed, stream=_rng.MEGA).points if mc_points is None else np.asarray(mc_points)
    )
    ratios, errs, dists, skipped = [], [], [], []
    for k, mu in enumerate(trial_points):
        mu = np.asarray(mu, dtype=float)
        comp_dist = np.linalg.norm(mu - config.means, axis=1)
        dist = float(np.linalg.norm(mu - config.means))
        if np.any(comp_dist > radius_a * (1 + region_tol)) or dist == 0.0:
            skipped.append(k)
            continue
        est = gradient_gap(points, config.weights, mu, config.means)
        ratios.append(float(np.linalg.norm(est.grad)) / dist)
        errs.append(float(np.sqrt((est.std_err**2).sum())) / dist)
        dists.append(dist)
    ratios_a, errs_a = np.array(ratios), np.array(errs)
    bound = gamma_gs(stats, config.components, radius_a)
    if len(ratios_a):
        top = int(np.argmax(ratios_a + 4 * errs_a))
        gamma_hat, se = float(ratios_a.max()), float(errs_a[top])
        passed = bool(np.all(ratios_a + 4 * errs_a <= bound))
    else:
        gamma_hat, se, passed = math.nan, math.nan, False
    return GsReport(ratios_a, errs_a, np.array(dists), skipped, gamma_hat, se, bound, radius_a, passed)
