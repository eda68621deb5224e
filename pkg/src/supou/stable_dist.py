"""Stable laws, heavy-tailed jump samplers and the Gamma rate-mixing law.

The stable cumulant uses the ``S_gamma(sigma, rho, c)`` convention

    kappa(zeta) = i c zeta - sigma^gamma |zeta|^gamma (1 - i rho sign(zeta) chi(zeta, gamma))

with ``chi = tan(pi gamma / 2)`` for ``gamma != 1``.  Samplers take an explicit
:class:`numpy.random.Generator`; nothing here touches global random state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "StableParams",
    "TailWeights",
    "PiGamma",
    "stable_cumulant",
    "sigma_rho_from_tails",
    "sample_stable",
    "sample_pi",
    "sample_pareto_jump",
]


@dataclass(frozen=True)
class StableParams:
    """Parameters of ``S_gamma(sigma, rho, c)``.

    ``gamma_idx == 1`` is only accepted with ``rho == 0`` (strictly stable
    Cauchy case); asymmetric 1-stable laws are not supported.
    """

    gamma_idx: float
    sigma: float = 1.0
    rho: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.gamma_idx < 2.0:
            raise ValueError(f"stability index must lie in (0, 2), got {self.gamma_idx}")
        if not self.sigma > 0.0:
            raise ValueError(f"scale must be positive, got {self.sigma}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"skewness must lie in [-1, 1], got {self.rho}")
        if self.gamma_idx == 1.0 and self.rho != 0.0:
            raise ValueError("gamma_idx = 1 requires rho = 0 (strictly stable case only)")


@dataclass(frozen=True)
class TailWeights:
    """Right/left tail weights ``p``, ``q`` and the constant slowly varying factor ``k``.

    ``P(X > x) ~ p k x^-gamma`` and ``P(X <= -x) ~ q k x^-gamma``.
    """

    p_w: float
    q_w: float
    k_const: float = 1.0

    def __post_init__(self):
        if self.p_w < 0 or self.q_w < 0:
            raise ValueError("tail weights must be nonnegative")
        if not self.p_w + self.q_w > 0:
            raise ValueError("at least one tail weight must be positive")
        if not self.k_const > 0:
            raise ValueError("k_const must be positive")


@dataclass(frozen=True)
class PiGamma:
    """Gamma(shape, rate) law for the OU rate parameter xi.

    The density behaves like ``rate^shape / Gamma(shape) * x^(shape - 1)`` at the
    origin, so ``shape`` is the memory exponent alpha.
    """

    shape: float
    rate: float = 1.0

    def __post_init__(self):
        if not self.shape > 0:
            raise ValueError(f"pi shape must be positive, got {self.shape}")
        if not self.rate > 0:
            raise ValueError(f"pi rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def moment(self, p: float) -> float:
        """``E[xi^p]``; infinite when ``shape + p <= 0``."""
        if self.shape + p <= 0:
            return math.inf
        return math.exp(special.gammaln(self.shape + p) - special.gammaln(self.shape)
                        - p * math.log(self.rate))

    def cdf(self, x):
        return special.gammainc(self.shape, self.rate * np.asarray(x, dtype=float))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def sample_size_biased(self, rng: np.random.Generator, size=None):
        """Draw from ``xi pi(dxi) / E[xi]``, which is Gamma(shape + 1, rate)."""
        return rng.gamma(self.shape + 1.0, 1.0 / self.rate, size)


def _chi(zeta, gamma_idx):
    if gamma_idx != 1.0:
        return math.tan(math.pi * gamma_idx / 2.0)
    # only reachable with rho = 0, where the term is multiplied by zero
    with np.errstate(divide="ignore"):
        return math.pi / 2.0 * np.log(np.abs(zeta))


def stable_cumulant(params: StableParams, zeta):
    """Cumulant ``log E exp(i zeta Z)`` of ``Z ~ S_gamma(sigma, rho, c)``.

    Accepts scalars or arrays; returns complex values and exactly 0 at ``zeta = 0``.
    """
    z = np.asarray(zeta, dtype=float)
    g = params.gamma_idx
    absz = np.abs(z)
    if params.rho == 0.0:
        skew = 0.0
    else:
        skew = params.rho * np.sign(z) * _chi(z, g)
    out = 1j * params.c * z - params.sigma**g * absz**g * (1.0 - 1j * skew)
    out = np.where(z == 0.0, 0.0 + 0.0j, out)
    return complex(out) if out.ndim == 0 else out


def sigma_rho_from_tails(gamma_idx: float, tails: TailWeights) -> StableParams:
    """Stable law whose domain of attraction contains tails ``(p, q, k)``.

    ``sigma^gamma = Gamma(2-gamma)/(1-gamma) * (p+q) k * cos(pi gamma/2)`` and
    ``rho = (p-q)/(p+q)``.  At ``gamma = 1`` the continuous limit ``pi/2 (p+q) k``
    is used, and only for ``p = q``.
    """
    if not 0.0 < gamma_idx < 2.0:
        raise ValueError(f"gamma_idx must lie in (0, 2), got {gamma_idx}")
    total = (tails.p_w + tails.q_w) * tails.k_const
    if gamma_idx == 1.0:
        if tails.p_w != tails.q_w:
            raise ValueError("gamma_idx = 1 requires symmetric tails p = q")
        sigma_pow = math.pi / 2.0 * total
    else:
        sigma_pow = (math.gamma(2.0 - gamma_idx) / (1.0 - gamma_idx) * total
                     * math.cos(math.pi * gamma_idx / 2.0))
    rho = (tails.p_w - tails.q_w) / (tails.p_w + tails.q_w)
    return StableParams(gamma_idx, sigma_pow ** (1.0 / gamma_idx), rho, 0.0)


def sample_stable(params: StableParams, rng: np.random.Generator, size=None):
    """Chambers-Mallows-Stuck draw(s) from ``S_gamma(sigma, rho, c)``."""
    g, rho = params.gamma_idx, params.rho
    v = rng.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    if g == 1.0:
        x = np.tan(v)
    else:
        w = rng.standard_exponential(size)
        t = rho * math.tan(math.pi * g / 2.0)
        shift = math.atan(t) / g
        scale = (1.0 + t * t) ** (1.0 / (2.0 * g))
        gv = g * (v + shift)
        x = (scale * np.sin(gv) / np.cos(v) ** (1.0 / g)
             * (np.cos(v - gv) / w) ** ((1.0 - g) / g))
    return params.sigma * x + params.c


def sample_pi(pi: PiGamma, rng: np.random.Generator, size=None):
    return pi.sample(rng, size)


def sample_pareto_jump(gamma_idx: float, w_plus: float, w_minus: float,
                       rng: np.random.Generator, size=None):
    """Signed Pareto jumps with density ``gamma w_pm |x|^(-gamma-1)`` on ``|x| > 1``, normalised.

    The sign is positive with probability ``w_plus / (w_plus + w_minus)``.
    """
    total = w_plus + w_minus
    if not total > 0:
        raise ValueError("w_plus + w_minus must be positive")
    shape = (2,) if size is None else (*np.atleast_1d(size), 2)
    # magnitude and sign uniforms interleaved so the first k draws never depend on size
    u = rng.random(shape)
    mag = (1.0 - u[..., 0]) ** (-1.0 / gamma_idx)
    out = np.where(u[..., 1] < w_plus / total, mag, -mag)
    return float(out) if np.ndim(out) == 0 else out
