"""GDA, OGDA, EG and generalized OGDA, with step-size schedules and a run loop.

All methods update both players simultaneously from the same pre-update point.
Bounded dual domains are handled by projecting every dual update (including
the EG midpoint).

OGDA and generalized OGDA share one update formula,

    x' = x - eta_x1 g - eta_x2 (g - g_prev)
    y' = P(y + eta_y1 g + eta_y2 (g - g_prev)),

with eta_x1 = eta_x2 = eta_x for plain OGDA. Using the same floating-point
expression in both places is what makes the reduction identities bit-exact.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .errors import ConfigError, DomainError
from .oracles import Oracle, OracleParams
from .problems import PrimalDualPoint

METHODS = ("gda", "ogda", "eg", "gen_ogda")
REGIMES = ("ncsc", "ncc", "ncc_stochastic")
MEASURES = ("grad_phi", "moreau", "grad_f_sq")
GUARD = 1e12

# (c1, c2) with eta_x = c1 / (kappa^2 ell), eta_y = c2 / ell
NCSC_CONSTANTS = {
    "ogda": (1.0 / 50.0, 1.0 / 6.0),
    "eg": (1.0 / 75.0, 1.0 / 4.0),
    # GDA only has Theta(.) rates; reuse the OGDA constants
    "gda": (1.0 / 50.0, 1.0 / 6.0),
}


@dataclass(frozen=True)
class StepSizes:
    eta_x: Optional[float] = None
    eta_y: Optional[float] = None
    eta_x1: Optional[float] = None
    eta_x2: Optional[float] = None
    eta_y1: Optional[float] = None
    eta_y2: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None

    @property
    def alpha(self):
        """eta_x2 / eta_x1."""
        if self.eta_x1 is None or self.eta_x2 is None:
            return None
        return self.eta_x2 / self.eta_x1

    @property
    def beta(self):
        """eta_y1 / eta_y2."""
        if self.eta_y1 is None or self.eta_y2 is None or self.eta_y2 == 0:
            return None
        return self.eta_y1 / self.eta_y2

    @classmethod
    def gen_ogda(cls, eta_x1, eta_x2, eta_y1, eta_y2):
        return cls(eta_x1=eta_x1, eta_x2=eta_x2, eta_y1=eta_y1, eta_y2=eta_y2)

    @classmethod
    def from_correction_ratios(cls, eta_x, eta_y, ratio_x, ratio_y):
        """Generalized OGDA from base rates and correction ratios eta_x2/eta_x1, eta_y2/eta_y1."""
        return cls(eta_x1=eta_x, eta_x2=ratio_x * eta_x, eta_y1=eta_y, eta_y2=ratio_y * eta_y)

    def rates(self, method):
        """(eta_x1, eta_x2, eta_y1, eta_y2) used by ``method``; validates positivity."""
        if method == "gen_ogda":
            names = ("eta_x1", "eta_x2", "eta_y1", "eta_y2")
            vals = tuple(getattr(self, n) for n in names)
            for n, v in zip(names, vals):
                if v is None:
                    raise ConfigError("missing rate for gen_ogda", f"steps.{n}")
                if not (np.isfinite(v) and v >= 0):
                    raise ConfigError("must be >= 0", f"steps.{n}")
            if vals[0] <= 0:
                raise ConfigError("must be > 0", "steps.eta_x1")
            if vals[2] <= 0 and vals[3] <= 0:
                raise ConfigError("eta_y1 and eta_y2 cannot both be 0", "steps.eta_y1")
            return vals
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}", "method")
        for n in ("eta_x", "eta_y"):
            v = getattr(self, n)
            if v is None:
                raise ConfigError("missing rate", f"steps.{n}")
            if not (np.isfinite(v) and v > 0):
                raise ConfigError("must be > 0", f"steps.{n}")
        if method == "ogda":
            return self.eta_x, self.eta_x, self.eta_y, self.eta_y
        return self.eta_x, 0.0, self.eta_y, 0.0

    def check_gen_ogda_range(self, kappa):
        """Warn when generalized OGDA rates sit outside beta <= 1, alpha <= 2 kappa^2 sqrt(beta)."""
        a, b = self.alpha, self.beta
        if a is None or b is None:
            return True
        ok = b <= 1.0 and a <= 2.0 * kappa ** 2 * math.sqrt(b)
        if not ok:
            warnings.warn(
                f"generalized OGDA rates outside the analysed range (alpha={a:.4g}, beta={b:.4g}, kappa={kappa:.4g})",
                stacklevel=2,
            )
        return ok


def schedule_stepsizes(method, regime, constants, epsilon=None, multiplier=1.0, alpha=1.0, beta=1.0):
    """Step sizes from the convergence theorems.

    constants: {"ell", "mu"} for ncsc, {"ell", "G", "D"} for ncc and
    additionally "sigma" for ncc_stochastic. NC-C schedules use unit leading
    constants on each term of the min, scaled by ``multiplier``.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}", "method")
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}", "regime")
    try:
        ell = float(constants["ell"])
    except KeyError:
        raise ConfigError("schedule needs ell", "problem.ell") from None
    if ell <= 0:
        raise ConfigError("must be > 0", "problem.ell")

    if regime == "ncsc":
        mu = float(constants["mu"])
        kappa = ell / mu
        if method == "gen_ogda":
            ex1 = multiplier / (50.0 * kappa ** 2 * ell)
            ey2 = 1.0 / (6.0 * ell)
            return StepSizes(eta_x1=ex1, eta_x2=alpha * ex1, eta_y1=beta * ey2, eta_y2=ey2,
                             c1=1.0 / 50.0, c2=1.0 / 6.0)
        c1, c2 = NCSC_CONSTANTS[method]
        return StepSizes(eta_x=multiplier * c1 / (kappa ** 2 * ell), eta_y=c2 / ell, c1=c1, c2=c2)

    if method == "gen_ogda":
        raise ConfigError("no NC-C schedule for generalized OGDA", "method")
    if epsilon is None or not epsilon > 0:
        raise ConfigError("NC-C schedules need epsilon > 0", "stop.epsilon")
    G = float(constants["G"])
    D = float(constants["D"])
    e = float(epsilon)
    if regime == "ncc":
        eta_x = min(e / (ell * G), e ** 2 / (ell * G ** 2), e ** 4 / (D ** 2 * G ** 2 * ell ** 3))
        return StepSizes(eta_x=multiplier * eta_x, eta_y=1.0 / (2.0 * ell))
    sigma = float(constants.get("sigma", 0.0))
    root = G * math.sqrt(G ** 2 + sigma ** 2)
    terms = [e ** 2 / (ell * (G ** 2 + sigma ** 2)), e ** 4 / (D ** 2 * ell ** 3 * root)]
    if sigma > 0:
        terms.append(e ** 6 / (D ** 2 * ell ** 3 * sigma ** 2 * root))
    eta_y = 1.0 / (4.0 * ell) if sigma == 0 else min(1.0 / (4.0 * ell), e ** 2 / (ell * sigma ** 2))
    return StepSizes(eta_x=multiplier * min(terms), eta_y=eta_y)


# ---------------------------------------------------------------------------
# state and single steps


@dataclass(slots=True)
class OptimizerState:
    t: int
    x: np.ndarray
    y: np.ndarray
    x_prev: np.ndarray
    y_prev: np.ndarray
    gx_prev: Optional[np.ndarray] = None
    gy_prev: Optional[np.ndarray] = None
    # gradient sample used by the step that produced this state (at x_prev, y_prev)
    gx_used: Optional[np.ndarray] = None
    gy_used: Optional[np.ndarray] = None
    x_mid: Optional[np.ndarray] = None
    y_mid: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    g_combined: Optional[np.ndarray] = None

    @property
    def cur(self):
        return PrimalDualPoint(self.x, self.y)

    @property
    def prev(self):
        return PrimalDualPoint(self.x_prev, self.y_prev)

    @property
    def g_prev(self):
        return self.gx_prev, self.gy_prev

    @property
    def mid(self):
        if self.x_mid is None:
            return None
        return PrimalDualPoint(self.x_mid, self.y_mid)


def init_state(instance, point, oracle, method="gda", steps=None):
    """State at t=0 with the convention x_{-1} = x_0, y_{-1} = y_0, g_{-1} = g_0."""
    x = np.array(point.x, dtype=np.float64)
    y = np.array(point.y, dtype=np.float64)
    if x.shape != (instance.dim_x,) or y.shape != (instance.dim_y,):
        raise DomainError(f"init must have dims ({instance.dim_x}, {instance.dim_y})")
    if instance.bounded_dual and not np.array_equal(instance.project(y), y):
        raise DomainError("initial y outside the dual domain")
    gx, gy = oracle(x, y, 0, 0)
    z = None
    if method in ("ogda", "gen_ogda") and steps is not None:
        _, _, _, ey2 = steps.rates(method)
        # so that y_0 = z_0 + eta_y2 g_{-1}
        z = y - ey2 * gy
    return OptimizerState(t=0, x=x, y=y, x_prev=x, y_prev=y, gx_prev=gx, gy_prev=gy, z=z)


def gda_step(state, instance, oracle, steps, g=None):
    x, y, t = state.x, state.y, state.t
    gx, gy = oracle(x, y, t, 0) if g is None else g
    x_new = x - steps.eta_x * gx
    y_new = instance.project(y + steps.eta_y * gy)
    return OptimizerState(t=t + 1, x=x_new, y=y_new, x_prev=x, y_prev=y,
                          gx_prev=gx, gy_prev=gy, gx_used=gx, gy_used=gy)


def _optimistic(state, instance, oracle, rates, g):
    ex1, ex2, ey1, ey2 = rates
    x, y, t = state.x, state.y, state.t
    gx, gy = oracle(x, y, t, 0) if g is None else g
    gpx, gpy = state.gx_prev, state.gy_prev
    x_new = x - ex1 * gx - ex2 * (gx - gpx)
    y_new = instance.project(y + ey1 * gy + ey2 * (gy - gpy))
    z_new = y + ey1 * gy - ey2 * gpy
    return OptimizerState(t=t + 1, x=x_new, y=y_new, x_prev=x, y_prev=y,
                          gx_prev=gx, gy_prev=gy, gx_used=gx, gy_used=gy,
                          z=z_new, g_combined=2.0 * gx - gpx)


def ogda_step(state, instance, oracle, steps, g=None):
    return _optimistic(state, instance, oracle, steps.rates("ogda"), g)


def gen_ogda_step(state, instance, oracle, steps, g=None):
    return _optimistic(state, instance, oracle, steps.rates("gen_ogda"), g)


def eg_step(state, instance, oracle, steps, g=None):
    x, y, t = state.x, state.y, state.t
    gx, gy = oracle(x, y, t, 0) if g is None else g
    xm = x - steps.eta_x * gx
    ym = instance.project(y + steps.eta_y * gy)
    mx, my = oracle(xm, ym, t, 1)
    x_new = x - steps.eta_x * mx
    y_new = instance.project(y + steps.eta_y * my)
    return OptimizerState(t=t + 1, x=x_new, y=y_new, x_prev=x, y_prev=y,
                          gx_prev=gx, gy_prev=gy, gx_used=gx, gy_used=gy, x_mid=xm, y_mid=ym)


STEP_FUNCTIONS = {"gda": gda_step, "ogda": ogda_step, "eg": eg_step, "gen_ogda": gen_ogda_step}


# ---------------------------------------------------------------------------
# run loop


@dataclass(frozen=True)
class Stop:
    t_max: int
    epsilon: Optional[float] = None
    measure: str = "grad_phi"

    def __post_init__(self):
        if int(self.t_max) != self.t_max or self.t_max < 0:
            raise ConfigError("must be a non-negative integer", "stop.t_max")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("must be > 0", "stop.epsilon")
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown measure {self.measure!r}", "stop.measure")


class _Buffer:
    """Row-appendable float array that grows geometrically."""

    def __init__(self, width, capacity=1024):
        self.data = np.empty((capacity, width))
        self.n = 0

    def append(self, row):
        if self.n == self.data.shape[0]:
            grown = np.empty((2 * self.data.shape[0], self.data.shape[1]))
            grown[:self.n] = self.data[:self.n]
            self.data = grown
        self.data[self.n] = row
        self.n += 1

    def array(self):
        return self.data[:self.n].copy()


@dataclass
class Trajectory:
    method: str
    steps: StepSizes
    x: np.ndarray
    y: np.ndarray
    gx: np.ndarray                 # oracle sample used at step t, rows t = 0..T-1
    gy: np.ndarray
    grad_x_norm: np.ndarray         # exact gradient norms at each recorded point
    grad_y_norm: np.ndarray
    grad_f_sq: np.ndarray
    grad_phi: Optional[np.ndarray]
    moreau_grad: Optional[np.ndarray]
    z: Optional[np.ndarray]        # ghost iterate z_t, rows t = 0..T
    potentials: Optional[np.ndarray]
    x_mid: Optional[np.ndarray]
    y_mid: Optional[np.ndarray]
    stop_reason: str
    returned_point: np.ndarray
    deterministic: bool

    @property
    def t_final(self):
        return self.x.shape[0] - 1

    @property
    def last_point(self):
        """(x_T, y_T) as arrays; may be non-finite after divergence."""
        return self.x[-1], self.y[-1]

    @property
    def points(self):
        return [PrimalDualPoint(a, b) for a, b in zip(self.x, self.y)]

    def measure(self, name):
        if name == "grad_phi":
            return self.grad_phi
        if name == "moreau":
            return self.moreau_grad
        if name == "grad_f_sq":
            return self.grad_f_sq
        raise ConfigError(f"unknown measure {name!r}", "stop.measure")


def _has_primal(instance):
    # closed-form primal gradients only; the WGAN primal needs an inner solve
    return getattr(instance, "kind", "") in ("quad_ncsc", "ncc_bilinear")


_GUARD_SQ = GUARD * GUARD


def _diverged(x, y):
    # Euclidean norms against the guard; written so that NaN also counts
    return not (x @ x <= _GUARD_SQ and y @ y <= _GUARD_SQ)


def run(instance, method, steps, oracle=None, init=None, stop=None, record_potentials=False,
        moreau_every=0, seed=0):
    """Iterate ``method`` from ``init`` and record the trajectory.

    Stops at ``stop.t_max``, when the chosen measure falls to ``stop.epsilon``,
    or when the divergence guard trips. The returned point is drawn uniformly
    from x_1..x_T using ``seed`` (x_0 when no step was taken).
    """
    from . import metrics  # deferred: metrics imports this module

    if method not in STEP_FUNCTIONS:
        raise ConfigError(f"unknown method {method!r}", "method")
    if oracle is None:
        oracle = Oracle(instance, OracleParams())
    if stop is None:
        stop = Stop(t_max=1000)
    rates = steps.rates(method)
    if method == "gen_ogda" and getattr(instance, "kind", "") == "quad_ncsc":
        steps.check_gen_ogda_range(instance.kappa)
    optimistic = method in ("ogda", "gen_ogda")
    if optimistic:
        def step(state, instance, oracle, steps, g, _rates=rates):
            return _optimistic(state, instance, oracle, _rates, g)
    else:
        step = STEP_FUNCTIONS[method]
    want_phi = _has_primal(instance)
    want_moreau = moreau_every > 0 or stop.measure == "moreau"
    if stop.epsilon is not None and stop.measure == "grad_phi" and not want_phi:
        raise ConfigError("grad_phi is unavailable for this instance", "stop.measure")
    p_moreau = 1.0 / (2.0 * instance.ell) if want_moreau and instance.ell else None
    det = oracle.deterministic

    state = init_state(instance, init, oracle, method, steps)
    m, n = instance.dim_x, instance.dim_y
    bx, by = _Buffer(m), _Buffer(n)
    bgx, bgy = _Buffer(m), _Buffer(n)
    bnorm = _Buffer(3)
    bphi = _Buffer(1) if want_phi else None
    bmor = _Buffer(1) if want_moreau else None
    bz = _Buffer(n) if optimistic else None
    bxm = _Buffer(m) if method == "eg" else None
    bym = _Buffer(n) if method == "eg" else None
    if optimistic:
        bz.append(state.z)

    eps = stop.epsilon
    reason = "max_iters"
    nan_x, nan_y = np.full(m, np.nan), np.full(n, np.nan)
    primal = instance.primal if want_phi else None
    grad = instance.grad
    with np.errstate(all="ignore"):
        while True:
            t = state.t
            x, y = state.x, state.y
            bx.append(x)
            by.append(y)
            diverged = t > 0 and _diverged(x, y)
            g = grad(x, y) if not diverged else (nan_x, nan_y)
            nx2, ny2 = float(g[0] @ g[0]), float(g[1] @ g[1])
            bnorm.append((math.sqrt(nx2), math.sqrt(ny2), nx2 + ny2))
            if want_phi:
                if diverged:
                    gphi = math.nan
                else:
                    dphi = primal(x)[1]
                    gphi = math.sqrt(float(dphi @ dphi))
                bphi.append(gphi)
            if want_moreau:
                if not diverged and (stop.measure == "moreau" or t % moreau_every == 0):
                    val = metrics.moreau_grad_norm(instance, x, p_moreau)
                else:
                    val = math.nan
                bmor.append(val)
            if diverged:
                reason = "diverged"
                break
            if eps is not None:
                if stop.measure == "grad_phi":
                    cur = gphi
                elif stop.measure == "moreau":
                    cur = val
                else:
                    cur = nx2 + ny2
                if cur <= eps:
                    reason = "hit_epsilon"
                    break
            if t >= stop.t_max:
                break
            state = step(state, instance, oracle, steps, g if det else None)
            bgx.append(state.gx_used)
            bgy.append(state.gy_used)
            if optimistic:
                bz.append(state.z)
            if bxm is not None:
                bxm.append(state.x_mid)
                bym.append(state.y_mid)

    X, Y = bx.array(), by.array()
    T = X.shape[0] - 1
    if T == 0:
        ret = X[0].copy()
    else:
        u = rng.uniforms(rng.bit_generator(seed, 2 ** 32 + 1), 1)[0]
        ret = X[1 + min(int(u * T), T - 1)].copy()
    norms = bnorm.array()
    traj = Trajectory(
        method=method, steps=steps, x=X, y=Y, gx=bgx.array(), gy=bgy.array(),
        grad_x_norm=norms[:, 0], grad_y_norm=norms[:, 1], grad_f_sq=norms[:, 2],
        grad_phi=bphi.array()[:, 0] if want_phi else None,
        moreau_grad=bmor.array()[:, 0] if want_moreau else None,
        z=bz.array() if optimistic else None, potentials=None,
        x_mid=bxm.array() if bxm is not None else None,
        y_mid=bym.array() if bym is not None else None,
        stop_reason=reason, returned_point=ret, deterministic=det,
    )
    if record_potentials and optimistic:
        traj.potentials = metrics.potentials(traj, instance)
    return traj
