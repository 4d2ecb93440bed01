"""Test problems: NC-SC quadratics, the NC-C instance h(x)*y, and a toy WGAN.

Every instance exposes the same small interface used by the optimizers and
metrics:

    value(x, y), grad(x, y) -> (gx, gy), project(y), best_response(x),
    primal(x) -> (phi, grad_phi)

Points are 1-D float64 arrays. ``grad`` is the hot path and does no input
validation; the module-level functions (``quad_grad``, ``ncc_grad``, ...)
validate their inputs.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, ConvergenceError, DomainError

STANDARD = "standard"
TIGHTNESS = "tightness"


def _as_vec(v, name="value"):
    a = np.atleast_1d(np.asarray(v, dtype=np.float64)).ravel()
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class PrimalDualPoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vec(self.x, "x"))
        object.__setattr__(self, "y", _as_vec(self.y, "y"))

    def stacked(self):
        return np.concatenate([self.x, self.y])


# ---------------------------------------------------------------------------
# NC-SC quadratic  f = c x^2 + b x y - mu/2 y^2


@dataclass(frozen=True)
class QuadNcscParams:
    """Scalar quadratic with primal function 0.5*mu_x*x^2.

    ``variant`` selects the x^2 coefficient: ``"standard"`` uses -ell/2 with
    b = sqrt(mu (ell + mu_x)); ``"tightness"`` uses -ell/4 with
    b = sqrt(mu (ell + 2 mu_x) / 2). Both give y*(x) = (b/mu) x.
    """

    ell: float
    mu: float
    mu_x: float
    variant: str = STANDARD

    def __post_init__(self):
        for name in ("ell", "mu", "mu_x"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigError("must be finite", name)
        if self.ell <= 0:
            raise ConfigError("must be > 0", "ell")
        if self.mu <= 0:
            raise ConfigError("must be > 0", "mu")
        if self.mu_x < 0:
            raise ConfigError("must be >= 0", "mu_x")
        if self.variant not in (STANDARD, TIGHTNESS):
            raise ConfigError(f"unknown variant {self.variant!r}", "variant")
        if self.ell / self.mu < 4.0 * (1 - 1e-12):
            raise ConfigError("kappa = ell/mu must be >= 4", "mu")
        if self.mu_x > self.ell / 2:
            raise ConfigError("must be <= ell/2", "mu_x")

    @property
    def kappa(self):
        return self.ell / self.mu

    @property
    def primal_coeff(self):
        """Coefficient of x^2 in f (not of x^2/2)."""
        return -0.5 * self.ell if self.variant == STANDARD else -0.25 * self.ell

    @property
    def b(self):
        if self.variant == STANDARD:
            return float(np.sqrt(self.mu * (self.ell + self.mu_x)))
        return float(np.sqrt(self.mu * (self.ell + 2.0 * self.mu_x) / 2.0))

    def hessian(self):
        return np.array([[2.0 * self.primal_coeff, self.b], [self.b, -self.mu]])

    @property
    def hessian_norm(self):
        """Largest singular value of the Hessian, the true smoothness constant."""
        return float(np.max(np.abs(np.linalg.eigvalsh(self.hessian()))))

    @property
    def is_ell_smooth(self):
        return self.hessian_norm <= self.ell * (1 + 1e-12)


class QuadNcsc:
    kind = "quad_ncsc"
    dim_x = 1
    dim_y = 1
    bounded_dual = False
    strongly_concave = True

    def __init__(self, params: QuadNcscParams):
        self.params = params
        self._c2 = 2.0 * params.primal_coeff
        self._b = params.b
        self._mu = params.mu
        self.ell = params.ell
        self.mu = params.mu
        self.kappa = params.kappa
        self.smoothness = params.hessian_norm
        self.primal_smoothness = params.mu_x
        self.primal_min = 0.0

    def value(self, x, y):
        p = self.params
        return float(p.primal_coeff * x[0] ** 2 + self._b * x[0] * y[0] - 0.5 * self._mu * y[0] ** 2)

    def grad(self, x, y):
        return self._c2 * x + self._b * y, self._b * x - self._mu * y

    def project(self, y):
        return y

    def best_response(self, x):
        return (self._b / self._mu) * x

    def primal(self, x):
        mx = self.params.mu_x
        return 0.5 * mx * float(x @ x), mx * x

    def moreau_closed_form(self, x, p=None):
        """(Phi_p(x), grad Phi_p(x)) for Phi = mu_x x^2 / 2: the prox point is x / (1 + p mu_x)."""
        if p is None:
            p = 1.0 / (2.0 * self.ell)
        x = float(np.atleast_1d(x)[0])
        k = self.params.mu_x / (1.0 + p * self.params.mu_x)
        return 0.5 * k * x * x, k * x


def quad_grad(point: PrimalDualPoint, params: QuadNcscParams):
    """(grad_x f, grad_y f) of the quadratic instance."""
    x = _as_vec(point.x, "x")
    y = _as_vec(point.y, "y")
    return 2.0 * params.primal_coeff * x + params.b * y, params.b * x - params.mu * y


def quad_primal(x, params: QuadNcscParams):
    """(Phi(x), Phi'(x)) = (0.5 mu_x x^2, mu_x x)."""
    x = float(_as_vec(x, "x")[0])
    return 0.5 * params.mu_x * x * x, params.mu_x * x


# ---------------------------------------------------------------------------
# NC-C instance  f = h(x) y  on y in [-D, D]


@dataclass(frozen=True)
class NccBilinearParams:
    """Parameters of f(x, y) = h(x) y on Y = [-D, D].

    ``ell`` and ``G`` are the targets the instance was built for; the curvature
    is L = min(ell/2, G) / D.
    """

    L: float
    D: float
    ell: float
    G: float

    def __post_init__(self):
        for name in ("L", "D", "ell", "G"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError("must be finite and > 0", name)

    @classmethod
    def from_targets(cls, ell, G, D):
        if ell <= 0 or G <= 0 or D <= 0:
            raise ConfigError("ell, G and D must be > 0")
        return cls(L=min(ell / 2.0, G) / D, D=float(D), ell=float(ell), G=float(G))


def h_eval(x, L):
    """Piecewise smooth h and its derivative.

    h = L/2 x^2 on |x| <= 1, L - L/2 (|x|-2)^2 on 1 <= |x| <= 2, L beyond.
    """
    a = abs(x)
    if a <= 1.0:
        return 0.5 * L * x * x, L * x
    if a <= 2.0:
        d = a - 2.0
        return L - 0.5 * L * d * d, -L * d * np.sign(x)
    return float(L), 0.0


class NccBilinear:
    kind = "ncc_bilinear"
    dim_x = 1
    dim_y = 1
    bounded_dual = True
    strongly_concave = False

    def __init__(self, params: NccBilinearParams):
        self.params = params
        self.L = params.L
        self.D = params.D
        self.ell = params.ell
        self.G = params.G
        self.primal_smoothness = params.L * params.D
        self.primal_min = 0.0
        # sup of the Hessian norm of h(x) y over |y| <= D, where |h''| <= L and |h'| <= L
        LD = params.L * params.D
        self.smoothness = 0.5 * LD + float(np.hypot(0.5 * LD, params.L))

    def value(self, x, y):
        return h_eval(x[0], self.L)[0] * float(y[0])

    def grad(self, x, y):
        h, dh = h_eval(x[0], self.L)
        return np.array([dh * y[0]]), np.array([h])

    def project(self, y):
        return np.clip(y, -self.D, self.D)

    def best_response(self, x):
        # h >= 0 so the box maximum sits at the upper end
        return np.array([self.D])

    def primal(self, x):
        h, dh = h_eval(x[0], self.L)
        return self.D * h, np.array([self.D * dh])

    def moreau_closed_form(self, x, p=None):
        """(Phi_p(x), grad Phi_p(x)) valid in the quadratic region |x| <= 1."""
        if p is None:
            p = 1.0 / (2.0 * self.ell)
        x = float(np.atleast_1d(x)[0])
        if abs(x) > 1.0:
            raise DomainError("closed form only holds for |x| <= 1")
        k = self.L * self.D
        return 0.5 * k / (1.0 + p * k) * x * x, k / (1.0 + p * k) * x


def ncc_grad(point: PrimalDualPoint, params: NccBilinearParams):
    """(h'(x) y, h(x)); y must already lie in [-D, D]."""
    x = _as_vec(point.x, "x")
    y = _as_vec(point.y, "y")
    if np.any(np.abs(y) > params.D):
        raise DomainError("y outside [-D, D]; project first")
    h, dh = h_eval(x[0], params.L)
    return np.array([dh * y[0]]), np.array([h])


def project_box(y, D):
    """Coordinate-wise clamp to [-D, D]."""
    if D <= 0:
        raise DomainError("D must be > 0")
    return np.clip(np.asarray(y, dtype=np.float64), -D, D)


# ---------------------------------------------------------------------------
# Toy WGAN


@dataclass(frozen=True)
class WganParams:
    """WGAN with discriminator D(x) = phi1 x + phi2 x^2 and a 1-hidden-layer ReLU generator.

    The deterministic objective averages over a fixed reference sample of
    ``n_ref`` real points and ``n_ref`` noise points drawn from ``ref_seed``.
    """

    mu_data: float = 0.0
    sigma_data: float = 0.1
    lambda_reg: float = 0.001
    gen_hidden: int = 5
    disc_dim: int = 2
    n_ref: int = 4096
    ref_seed: int = 20240101

    def __post_init__(self):
        if not self.lambda_reg > 0:
            raise ConfigError("must be > 0", "lambda_reg")
        if not self.sigma_data >= 0:
            raise ConfigError("must be >= 0", "sigma_data")
        if int(self.gen_hidden) != self.gen_hidden or self.gen_hidden < 1:
            raise ConfigError("must be a positive integer", "gen_hidden")
        if self.disc_dim != 2:
            raise ConfigError("the quadratic discriminator has exactly 2 parameters", "disc_dim")
        if int(self.n_ref) != self.n_ref or self.n_ref < 1:
            raise ConfigError("must be a positive integer", "n_ref")

    @property
    def n_gen(self):
        # w1, b1, w2 (hidden each) and the output bias
        return 3 * self.gen_hidden + 1


def generator_forward(w, z, hidden):
    w1, b1, w2, b2 = w[:hidden], w[hidden:2 * hidden], w[2 * hidden:3 * hidden], w[3 * hidden]
    pre = np.outer(z, w1) + b1
    act = np.maximum(pre, 0.0)
    return act @ w2 + b2, pre, act


def wgan_loss_grads(gen_weights, disc_weights, batch_real, batch_noise, params: WganParams):
    """Loss mean D(real) - mean D(G(z)) - lam |phi|^2 and its exact gradients.

    Reverse-mode by hand through the generator; the ReLU subgradient at 0 is 0.
    """
    w = np.asarray(gen_weights, dtype=np.float64)
    phi = np.asarray(disc_weights, dtype=np.float64)
    xr = np.asarray(batch_real, dtype=np.float64).ravel()
    z = np.asarray(batch_noise, dtype=np.float64).ravel()
    if xr.size == 0 or z.size == 0:
        raise DomainError("batches must be nonempty")
    if w.shape != (params.n_gen,):
        raise DomainError(f"generator weights must have shape ({params.n_gen},)")
    if phi.shape != (2,):
        raise DomainError("discriminator weights must have shape (2,)")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(phi))):
        raise DomainError("non-finite weights")
    return _wgan_core(w, phi, xr, z, params.gen_hidden, params.lambda_reg)


def _wgan_core(w, phi, xr, z, hidden, lam, real_moments=None):
    g, pre, act = generator_forward(w, z, hidden)
    if real_moments is None:
        m_r, s_r = xr.mean(), (xr * xr).mean()
    else:
        m_r, s_r = real_moments
    m_g, s_g = g.mean(), (g * g).mean()
    loss = phi[0] * (m_r - m_g) + phi[1] * (s_r - s_g) - lam * (phi @ phi)

    # d loss / d g_i
    dg = -(phi[0] + 2.0 * phi[1] * g) / z.size
    w2 = w[2 * hidden:3 * hidden]
    dpre = np.outer(dg, w2) * (pre > 0.0)
    grad_gen = np.empty_like(w)
    grad_gen[:hidden] = z @ dpre
    grad_gen[hidden:2 * hidden] = dpre.sum(axis=0)
    grad_gen[2 * hidden:3 * hidden] = act.T @ dg
    grad_gen[3 * hidden] = dg.sum()
    grad_disc = np.array([m_r - m_g - 2.0 * lam * phi[0], s_r - s_g - 2.0 * lam * phi[1]])
    return float(loss), grad_gen, grad_disc


class Wgan:
    kind = "wgan"
    bounded_dual = False
    strongly_concave = True
    primal_min = None

    def __init__(self, params: WganParams = WganParams()):
        self.params = params
        self.dim_x = params.n_gen
        self.dim_y = 2
        self.hidden = params.gen_hidden
        self.lam = params.lambda_reg
        self.ref_real = params.mu_data + params.sigma_data * rng.normals(rng.bit_generator(params.ref_seed, 0), params.n_ref)
        self.ref_noise = rng.normals(rng.bit_generator(params.ref_seed, 1), params.n_ref)
        self._ref_moments = (self.ref_real.mean(), (self.ref_real ** 2).mean())
        self.ell = None
        self.mu = 2.0 * params.lambda_reg

    def loss_grads(self, x, y):
        return _wgan_core(x, y, self.ref_real, self.ref_noise, self.hidden, self.lam, self._ref_moments)

    def value(self, x, y):
        return self.loss_grads(x, y)[0]

    def grad(self, x, y):
        _, gx, gy = self.loss_grads(x, y)
        return gx, gy

    def sample_grad(self, x, y, real, noise):
        _, gx, gy = _wgan_core(x, y, real, noise, self.hidden, self.lam)
        return gx, gy

    def project(self, y):
        return y

    def best_response(self, x, tol=1e-8, max_iter=100_000):
        """Dual gradient ascent with step 1/(2 lam), the inverse dual smoothness."""
        y = np.zeros(2)
        step = 1.0 / (2.0 * self.lam)
        for _ in range(max_iter):
            _, gy = self.grad(x, y)
            res = float(np.linalg.norm(gy))
            if res <= tol:
                return y
            y = y + step * gy
        raise ConvergenceError("WGAN best response did not converge", res)

    def primal(self, x):
        y = self.best_response(x)
        v, gx, _ = self.loss_grads(x, y)
        return v, gx

    def init_point(self, seed, low=-0.1, high=0.1):
        """Generator weights uniform in [low, high] from ``seed``; discriminator zeros."""
        u = rng.uniforms(rng.bit_generator(seed, 7), self.dim_x)
        return PrimalDualPoint(low + (high - low) * u, np.zeros(2))


def gradient_check(instance, x, y, h=1e-6):
    """Relative error between ``instance.grad`` and central differences of ``value``."""
    x = _as_vec(x, "x")
    y = _as_vec(y, "y")
    gx, gy = instance.grad(x, y)
    g = np.concatenate([gx, gy])
    v = np.concatenate([x, y])
    m = x.size
    fd = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        hi, lo = v + e, v - e
        fd[i] = (instance.value(hi[:m], hi[m:]) - instance.value(lo[:m], lo[m:])) / (2.0 * h)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))


def best_response(instance, x):
    return instance.best_response(_as_vec(x, "x"))


# ---------------------------------------------------------------------------


_QUAD_KEYS = {"kind", "ell", "mu", "mu_x", "variant"}
_NCC_KEYS = {"kind", "ell", "G", "D", "L"}
_WGAN_KEYS = {"kind", "mu_data", "sigma_data", "lambda_reg", "gen_hidden", "disc_dim", "n_ref", "ref_seed"}


def _check_keys(cfg, allowed, prefix):
    for k in cfg:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r}", f"{prefix}.{k}" if prefix else k)


def _require(cfg, key, prefix):
    if key not in cfg:
        raise ConfigError("missing required field", f"{prefix}.{key}" if prefix else key)
    return cfg[key]


def from_config(cfg, prefix="problem"):
    """Build an instance from a plain dict such as {"kind": "quad_ncsc", "ell": 1, ...}."""
    if not isinstance(cfg, dict):
        raise ConfigError("must be an object", prefix)
    kind = _require(cfg, "kind", prefix)
    try:
        if kind == "quad_ncsc":
            _check_keys(cfg, _QUAD_KEYS, prefix)
            return QuadNcsc(QuadNcscParams(
                ell=float(_require(cfg, "ell", prefix)),
                mu=float(_require(cfg, "mu", prefix)),
                mu_x=float(_require(cfg, "mu_x", prefix)),
                variant=cfg.get("variant", STANDARD),
            ))
        if kind == "ncc_bilinear":
            _check_keys(cfg, _NCC_KEYS, prefix)
            D = float(_require(cfg, "D", prefix))
            ell = float(_require(cfg, "ell", prefix))
            G = float(_require(cfg, "G", prefix))
            params = NccBilinearParams.from_targets(ell, G, D)
            if "L" in cfg and not np.isclose(float(cfg["L"]), params.L, rtol=1e-12, atol=0):
                raise ConfigError("must equal min(ell/2, G)/D", f"{prefix}.L")
            return NccBilinear(params)
        if kind == "wgan":
            _check_keys(cfg, _WGAN_KEYS, prefix)
            kw = {k: v for k, v in cfg.items() if k != "kind"}
            return Wgan(WganParams(**kw))
    except ConfigError as e:
        if e.path and not e.path.startswith(prefix):
            raise ConfigError(str(e).split(": ", 1)[-1], f"{prefix}.{e.path}") from None
        raise
    raise ConfigError(f"unknown problem kind {kind!r}", f"{prefix}.kind")
