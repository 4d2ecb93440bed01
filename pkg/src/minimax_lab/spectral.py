"""Exact linear dynamics of GDA, EG and OGDA on the scalar quadratic games.

On f = c x^2 + b x y - mu/2 y^2 with y unconstrained, one simultaneous step
with rates (eta_x, eta_y = r eta_x) advances w = (x, y) by w' = (I + eta_x M) w
where

    M = [[-2c, -b], [r b, -mu r]].

Everything here is 2x2 or 4x4, so the spectra are computed in closed form
with numerically stable root formulas instead of calling a general solver.
"""

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .problems import QuadNcscParams

DELTA_MARGIN = 1e-9
ANGLE_TOL = 1e-10
METHODS = ("gda", "eg", "ogda")
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class GameMatrix:
    a: float
    b: float
    c: float
    d: float
    r: float
    det: float
    det_expected: float = math.nan

    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def trace(self):
        return self.a + self.d

    @classmethod
    def from_array(cls, m, r=math.nan):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (2, 2) or not np.all(np.isfinite(m)):
            raise DomainError("need a finite 2x2 matrix")
        a, b, c, d = (float(v) for v in m.ravel())
        return cls(a, b, c, d, float(r), exact_det(a, b, c, d))


def exact_det(a, b, c, d):
    """Determinant of the float entries, correctly rounded."""
    return float(Fraction(a) * Fraction(d) - Fraction(b) * Fraction(c))


def det_tolerance(gm: GameMatrix):
    """Bound on |det - r mu mu_x| caused by rounding b = sqrt(...) and r b.

    The identity is exact in real arithmetic; with float entries the residual
    is a few ulps of |a d| and |b c| and can dwarf tiny determinants.
    """
    return 1e-14 * abs(gm.det) + 8 * _EPS * (abs(gm.a * gm.d) + abs(gm.b * gm.c)) + 1e-300


def build_M(params: QuadNcscParams, r):
    """Transition generator for the step-size ratio r = eta_y / eta_x."""
    if not (math.isfinite(r) and r > 0):
        raise DomainError("r must be finite and > 0")
    b = params.b
    a, bb, c, d = -2.0 * params.primal_coeff, -b, r * b, -params.mu * r
    det = exact_det(a, bb, c, d)
    expected = r * params.mu * params.mu_x
    gm = GameMatrix(a, bb, c, d, float(r), det, expected)
    if abs(det - expected) > det_tolerance(gm):
        raise DomainError(f"determinant identity violated: {det!r} vs {expected!r}")
    return gm


def _as_game(M):
    return M if isinstance(M, GameMatrix) else GameMatrix.from_array(M)


def eigen2(M):
    """Both eigenvalues as complex numbers, real part descending then imaginary.

    The larger-magnitude root comes from the quadratic formula and the other
    from det / root, which keeps small eigenvalues accurate.
    """
    gm = _as_game(M)
    tr = gm.trace
    det = gm.det
    half = 0.5 * tr
    # discriminant of s^2 - tr s + det, in exact arithmetic then rounded
    disc = float(Fraction(half) * Fraction(half) - Fraction(det))
    if disc >= 0:
        root = math.sqrt(disc)
        big = half + math.copysign(root, half) if half != 0 else root
        small = det / big if big != 0 else 0.0
        if half == 0:
            small = -root
        pair = [complex(big), complex(small)]
    else:
        im = math.sqrt(-disc)
        pair = [complex(half, im), complex(half, -im)]
    pair.sort(key=lambda z: (-z.real, -z.imag))
    return pair[0], pair[1]


def eigenvector(M, lam):
    """Unit eigenvector for ``lam`` built from the row with the larger pivot."""
    gm = _as_game(M)
    lam = complex(lam)
    r1 = (gm.b, lam - gm.a)  # from row 1: (a - lam) v1 + b v2 = 0
    r2 = (lam - gm.d, gm.c)  # from row 2: c v1 + (d - lam) v2 = 0
    n1 = abs(r1[0]) ** 2 + abs(r1[1]) ** 2
    n2 = abs(r2[0]) ** 2 + abs(r2[1]) ** 2
    v = r1 if n1 >= n2 else r2
    if max(n1, n2) == 0:
        # lam * I: every vector is an eigenvector
        v = (1.0, 0.0)
    v = np.array(v, dtype=np.complex128)
    v /= np.linalg.norm(v)
    if np.all(np.abs(v.imag) == 0):
        v = v.real.copy()
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
    return v


def ogda_roots(eta_lam):
    """Roots (alpha, beta) of s^2 - (1 + 2 z) s + z with z = eta_x * lambda."""
    z = complex(eta_lam)
    alpha = 0.5 * (1 + 2 * z + cmath.sqrt(1 + 4 * z * z))
    beta = z / alpha if alpha != 0 else 1 + 2 * z - alpha
    return alpha, beta


def ogda_coefficients(alpha, beta):
    """(a, b) with z_k = a alpha^k + b beta^k under z_{-1} = z_0 = 1."""
    if alpha == beta:
        raise DomainError("repeated OGDA root")
    a = alpha * (1 - beta) / (alpha - beta)
    b = -beta * (1 - alpha) / (alpha - beta)
    return a, b


def _clean(z):
    z = complex(z)
    return z.real if z.imag == 0 else z


@dataclass(frozen=True)
class SpectralReport:
    method: str
    eta_x: float
    eigenvalues: tuple
    transition_eigs: tuple
    rho: float
    regime: str
    predictor: tuple = ()

    def to_dict(self):
        def enc(z):
            z = complex(z)
            return [z.real, z.imag]

        return {
            "method": self.method,
            "eta_x": self.eta_x,
            "eigenvalues": [enc(z) for z in self.eigenvalues],
            "transition_eigs": [enc(z) for z in self.transition_eigs],
            "rho": self.rho,
            "regime": self.regime,
            "predictor": [[enc(a), enc(b)] for a, b in self.predictor],
        }


def classify(rho, margin=DELTA_MARGIN):
    if rho < 1 - margin:
        return "contracting"
    if rho > 1 + margin:
        return "diverging"
    return "marginal"


def transition(method, M, eta_x):
    """Spectrum of the method's iteration map.

    GDA: s = 1 + eta lam. EG: s = 1 + eta lam + (eta lam)^2. OGDA: for each
    lam the two roots of s^2 - (1 + 2 eta lam) s + eta lam, listed mode by
    mode as (alpha_1, beta_1, alpha_2, beta_2); ``predictor`` holds the
    matching (a, b) per mode.
    """
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}")
    if not (math.isfinite(eta_x) and eta_x >= 0):
        raise DomainError("eta_x must be finite and >= 0")
    lams = eigen2(M)
    pred = ()
    if method == "gda":
        eigs = tuple(1 + eta_x * lam for lam in lams)
    elif method == "eg":
        eigs = tuple(1 + eta_x * lam + (eta_x * lam) ** 2 for lam in lams)
    else:
        eigs = []
        pred = []
        for lam in lams:
            al, be = ogda_roots(eta_x * lam)
            eigs += [al, be]
            pred.append(tuple(_clean(v) for v in ogda_coefficients(al, be)))
        eigs = tuple(eigs)
        pred = tuple(pred)
    rho = max(abs(s) for s in eigs)
    return SpectralReport(
        method,
        float(eta_x),
        tuple(_clean(v) for v in lams),
        tuple(_clean(v) for v in eigs),
        float(rho),
        classify(rho),
        pred,
    )


def iteration_matrix(method, M, eta_x):
    """Explicit one-step map: 2x2 for GDA/EG, 4x4 companion on (w_k, w_{k-1}) for OGDA."""
    m = _as_game(M).matrix
    eye = np.eye(2)
    if method == "gda":
        return eye + eta_x * m
    if method == "eg":
        hm = eta_x * m
        return eye + hm + hm @ hm
    if method == "ogda":
        top = np.hstack([eye + 2 * eta_x * m, -eta_x * m])
        return np.vstack([top, np.hstack([eye, np.zeros((2, 2))])])
    raise DomainError(f"unknown method {method!r}")


def _alignment_error(v, w):
    """sin of the angle between a real vector w and the span of v."""
    nw = np.linalg.norm(w)
    if nw == 0:
        return 0.0
    u = w / nw
    proj = np.vdot(v, u) * v
    return float(np.linalg.norm(u - proj))


def mode_of(M, init, which=None, tol=ANGLE_TOL):
    """Index of the eigenvalue whose eigenvector is parallel to ``init``."""
    w = np.asarray(init, dtype=np.float64).ravel()
    if w.shape != (2,):
        raise DomainError("init must be a 2-vector (x0, y0)")
    lams = eigen2(M)
    idx = range(2) if which is None else [which]
    best = None
    for i in idx:
        err = _alignment_error(eigenvector(M, lams[i]), w)
        if best is None or err < best[1]:
            best = (i, err)
    if best[1] > tol:
        raise DomainError(f"init is not aligned with an eigenvector (sin angle {best[1]:.3e})")
    return best[0]


def predict_iterates(method, M, eta_x, init, T, which=None):
    """Closed-form (x_T, y_T) from an eigenvector-aligned start.

    ``T`` may be an int or an array of ints; the result then has shape
    (len(T), 2). OGDA follows the convention w_{-1} = w_0.
    """
    w0 = np.asarray(init, dtype=np.float64).ravel()
    i = mode_of(M, w0, which)
    rep = transition(method, M, eta_x)
    Ts = np.atleast_1d(np.asarray(T))
    if np.any(Ts < 0) or not np.all(Ts == np.floor(Ts)):
        raise DomainError("T must be non-negative integers")
    Ts = Ts.astype(np.int64)
    if method == "ogda":
        al, be = rep.transition_eigs[2 * i], rep.transition_eigs[2 * i + 1]
        a, b = rep.predictor[i]
        coef = a * np.power(complex(al), Ts) + b * np.power(complex(be), Ts)
    else:
        coef = np.power(complex(rep.transition_eigs[i]), Ts)
    coef = np.where(Ts == 0, 1.0, coef)
    if np.any(np.abs(np.imag(coef)) > 1e-12 * np.maximum(1.0, np.abs(coef))):
        raise DomainError("complex mode cannot be excited by a real init")
    out = np.real(coef)[:, None] * w0[None, :]
    return out[0] if np.ndim(T) == 0 else out


def simulate_linear(method, M, eta_x, init, T, guard=None):
    """Iterate the explicit linear map; returns the (T+1, 2) path of w_k.

    Stops early once the max-abs entry exceeds ``guard``.
    """
    A = iteration_matrix(method, M, eta_x)
    w = np.asarray(init, dtype=np.float64).ravel()
    state = np.concatenate([w, w]) if method == "ogda" else w.copy()
    path = [w.copy()]
    for _ in range(int(T)):
        state = A @ state
        path.append(state[:2].copy())
        if guard is not None and np.max(np.abs(state[:2])) > guard:
            break
    return np.array(path)


def trace_condition(params: QuadNcscParams, r):
    """Sufficient condition mu_x <= (g)^2 / (2 r mu) with g = -2c - mu r.

    Holding it makes the trace of the squared OGDA companion exceed its value
    at eta = 0 for all small eta when g >= 0; it is informational only.
    """
    g = -2.0 * params.primal_coeff - params.mu * r
    bound = g * g / (2.0 * r * params.mu)
    return {"gap": g, "mu_x_bound": bound, "holds": bool(g >= 0 and params.mu_x <= bound)}


def certify_divergence(method, params: QuadNcscParams, eta_x, eta_y):
    """Decide divergence from the spectral radius of the exact iteration map.

    The witness start is (1, 0); its norm grows at rate rho whenever the
    expanding mode is excited, which is the case unless (1, 0) happens to be
    a contracting eigenvector.
    """
    if not (eta_x >= 0 and eta_y > 0):
        raise DomainError("need eta_x >= 0 and eta_y > 0")
    witness = {"init": [1.0, 0.0]}
    if eta_x == 0:
        # identity on x; y contracts toward (b/mu) x but every start is a fixed x
        witness.update(growth_rate=1.0)
        return {"diverges": False, "rho": 1.0, "regime": "marginal", "witness": witness}
    r = eta_y / eta_x
    M = build_M(params, r)
    rep = transition(method, M, eta_x)
    witness.update(growth_rate=rep.rho, trace=M.trace, trace_condition=trace_condition(params, r))
    return {"diverges": rep.regime == "diverging", "rho": rep.rho, "regime": rep.regime, "witness": witness}


def ncc_factor(method, eta_x, L, D):
    """Per-step contraction of x on the NC-C instance with y pinned at D."""
    k = eta_x * L * D
    if method == "gda":
        return 1 - k
    if method == "eg":
        return 1 - k + k * k
    raise DomainError("OGDA has a two-term recursion; use predict_ncc_iterates")


def predict_ncc_iterates(method, eta_x, L, D, x0, T):
    """x_0..x_T from the scalar recursions valid while |x| <= 1 and y = D.

    GDA: x' = (1 - k) x. EG: x' = (1 - k + k^2) x. OGDA:
    x_{t+1} = (1 - 2k) x_t + k x_{t-1} with x_{-1} = x_0. Here k = eta_x L D.
    """
    k = eta_x * L * D
    T = int(T)
    out = np.empty(T + 1)
    out[0] = x0
    if method in ("gda", "eg"):
        f = ncc_factor(method, eta_x, L, D)
        x = float(x0)
        for t in range(1, T + 1):
            x = f * x
            out[t] = x
        return out
    if method != "ogda":
        raise DomainError(f"unknown method {method!r}")
    prev, cur = float(x0), float(x0)
    for t in range(1, T + 1):
        prev, cur = cur, (1 - 2 * k) * cur + k * prev
        out[t] = cur
    return out
