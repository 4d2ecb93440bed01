"""First-order oracles with minibatch noise.

Synthetic instances get additive Gaussian noise injected after averaging,
g = grad f + zeta / sqrt(M) with zeta ~ N(0, sigma^2) per coordinate. The WGAN
instance instead averages exact gradients over freshly drawn data and noise
samples. Every draw is keyed by (seed, t, call, side) so replays are exact.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, DomainError

ADDITIVE = "additive_gaussian"
EMPIRICAL = "empirical"


@dataclass(frozen=True)
class OracleParams:
    sigma: float = 0.0
    m_x: int = 1
    m_y: int = 1
    seed: int = 0
    noise_kind: str = ADDITIVE

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ConfigError("must be >= 0", "oracle.sigma")
        for name in ("m_x", "m_y"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError("must be an integer >= 1", f"oracle.{name}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("must be a non-negative integer", "oracle.seed")
        if self.noise_kind not in (ADDITIVE, EMPIRICAL):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}", "oracle.noise_kind")

    @property
    def deterministic(self):
        return self.noise_kind == ADDITIVE and self.sigma == 0.0


@dataclass(frozen=True)
class OracleSample:
    g_x: np.ndarray
    g_y: np.ndarray
    delta_x: np.ndarray
    delta_y: np.ndarray


class Oracle:
    """Gradient oracle bound to one instance.

    ``call`` distinguishes several oracle queries within one iteration (the EG
    midpoint uses call=1).
    """

    def __init__(self, instance, params: OracleParams = OracleParams()):
        if params.noise_kind == EMPIRICAL and getattr(instance, "kind", None) != "wgan":
            raise ConfigError("empirical sampling is only defined for the WGAN instance", "oracle.noise_kind")
        self.instance = instance
        self.params = params
        self.deterministic = params.deterministic
        self._sx = params.sigma / math.sqrt(params.m_x)
        self._sy = params.sigma / math.sqrt(params.m_y)

    def __call__(self, x, y, t, call=0):
        if self.deterministic:
            return self.instance.grad(x, y)
        p = self.params
        if p.noise_kind == ADDITIVE:
            gx, gy = self.instance.grad(x, y)
            nx = rng.normals(rng.bit_generator(p.seed, t, call, rng.SIDE_X), gx.size)
            ny = rng.normals(rng.bit_generator(p.seed, t, call, rng.SIDE_Y), gy.size)
            return gx + self._sx * nx, gy + self._sy * ny
        gx, _ = self._wgan_batch(x, y, t, call, rng.SIDE_X, p.m_x)
        _, gy = self._wgan_batch(x, y, t, call, rng.SIDE_Y, p.m_y)
        return gx, gy

    def _wgan_batch(self, x, y, t, call, side, m):
        wp = self.instance.params
        draws = rng.normals(rng.bit_generator(self.params.seed, t, call, side), 2 * m)
        real = wp.mu_data + wp.sigma_data * draws[:m]
        return self.instance.sample_grad(x, y, real, draws[m:])


def sample_gradients(instance, point, params: OracleParams, t, call=0):
    """One oracle query at ``point`` for iteration ``t``, with deviations for diagnostics."""
    x, y = point.x, point.y
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("non-finite point")
    oracle = Oracle(instance, params)
    gx, gy = oracle(x, y, t, call)
    tx, ty = instance.grad(x, y)
    return OracleSample(gx, gy, gx - tx, gy - ty)


def schedule_batches(regime, kappa, sigma, epsilon):
    """Minibatch sizes (M_x, M_y) for the stochastic schedules."""
    if not epsilon > 0:
        raise DomainError("epsilon must be > 0")
    if kappa < 1 or sigma < 0:
        raise DomainError("need kappa >= 1 and sigma >= 0")
    s2 = sigma * sigma / (epsilon * epsilon)
    if regime == "ncsc_ogda":
        return max(1, math.ceil(s2)), max(1, math.ceil(kappa * s2))
    if regime == "ncsc_eg":
        m = max(1, math.ceil(kappa * s2))
        return m, m
    if regime == "ncc":
        # the NC-C stochastic schedule handles noise through the step sizes
        return 1, 1
    raise ConfigError(f"unknown regime {regime!r}", "regime")


@dataclass(frozen=True)
class BiasVariance:
    mean_x: np.ndarray
    mean_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    n_draws: int


def estimate_bias_variance(instance, point, params: OracleParams, n_draws, t0=0):
    """Sample mean and variance of the deviations over ``n_draws`` iterations t0, t0+1, ..."""
    if n_draws < 100:
        raise DomainError("n_draws must be >= 100")
    oracle = Oracle(instance, params)
    x, y = point.x, point.y
    tx, ty = instance.grad(x, y)
    dx = np.empty((n_draws, tx.size))
    dy = np.empty((n_draws, ty.size))
    for i in range(n_draws):
        gx, gy = oracle(x, y, t0 + i)
        dx[i] = gx - tx
        dy[i] = gy - ty
    return BiasVariance(dx.mean(axis=0), dy.mean(axis=0), dx.var(axis=0, ddof=1), dy.var(axis=0, ddof=1), n_draws)
