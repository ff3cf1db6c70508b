"""Closed-form Gaussian and mixture facts used by the bounds."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .mixture import MixtureConfig


def gaussian_norm_moment(p: float, d: int, sigma: float = 1.0) -> float:
    """``E ||X - mu||^p`` for ``X ~ N(mu, sigma^2 I_d)``.

    Equals ``2^(p/2) Gamma((p + d)/2) / Gamma(d/2) * sigma^p``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if p < 0:
        raise ValueError("p must be nonnegative")
    log_val = 0.5 * p * math.log(2.0) + gammaln((p + d) / 2.0) - gammaln(d / 2.0)
    return float(math.exp(log_val) * sigma**p)


def gaussian_norm_tail(r: float, d: int) -> float:
    """Upper bound ``exp(-r sqrt(d) / 2)`` on ``P(||X|| >= r)``, ``X ~ N(0, I_d)``.

    Only valid for ``r >= 2 sqrt(d)``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if r < 2.0 * math.sqrt(d):
        raise ValueError("bound invalid below 2*sqrt(d)")
    return math.exp(-r * math.sqrt(d) / 2.0)


def mixture_subgaussian_norm(config: MixtureConfig) -> float:
    """Sub-gaussian norm bound ``1 + sum_i pi_i ||mu_i||`` (unit variance)."""
    return float(1.0 + config.weights @ np.linalg.norm(config.means, axis=1))


def sphere_covering_bound(d: int, eps: float) -> float:
    """Covering number bound ``(1 + 2/eps)^d`` for the unit sphere in R^d."""
    if not 0 < eps <= 2:
        raise ValueError("eps must lie in (0, 2]")
    if d < 1:
        raise ValueError("d must be at least 1")
    return (1.0 + 2.0 / eps) ** d
