"""Stationarity measures, Moreau envelope, potentials and descent-lemma checks."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError, NotApplicableError

TAU_PROX = 1e-10
PROX_MAX_ITER = 100_000
NOT_REACHED = None


def primal_value(instance, x):
    """(Phi(x), grad Phi(x)); closed form where available, otherwise via the best response."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite x")
    if getattr(instance, "kind", "") == "ncc_bilinear" or getattr(instance, "strongly_concave", False):
        return instance.primal(x)
    raise ConfigError("primal function unavailable for a merely concave instance; use moreau_grad")


@dataclass
class StationarityReport:
    grad_phi_norm: Optional[float]
    moreau_grad_norm: float
    moreau_value: float
    prox_point: np.ndarray
    p: float
    residual: float
    iterations: int
    grad_f_sq: Optional[float] = None
    epsilon_target: Optional[float] = None


def _default_p(instance, p):
    if p is not None:
        return float(p)
    if not getattr(instance, "ell", None):
        raise ConfigError("instance has no smoothness constant; pass p explicitly")
    return 1.0 / (2.0 * instance.ell)


def moreau_grad(instance, x, p=None, tol=TAU_PROX, max_iter=PROX_MAX_ITER, y=None):
    """Solve the prox subproblem min Phi(u) + |u - x|^2/(2p) by damped gradient descent.

    The step 1/(L_phi + 1/p) is safe because Phi has an L_phi-Lipschitz
    gradient; the subproblem is strongly convex whenever p < 1/L_phi.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite x")
    p = _default_p(instance, p)
    lphi = getattr(instance, "primal_smoothness", None)
    if lphi is None:
        raise ConfigError("the Moreau solve needs a primal smoothness constant for this instance")
    lphi = float(lphi)
    step = 1.0 / (lphi + 1.0 / p)
    u = x.copy()
    res = np.inf
    for k in range(max_iter + 1):
        phi_u, g_u = instance.primal(u)
        r = g_u + (u - x) / p
        res = float(np.linalg.norm(r))
        if res <= tol:
            break
        if k == max_iter:
            raise ConvergenceError("prox solve did not converge", res)
        u = u - step * r
    gm = (x - u) / p
    phi_x, gphi_x = instance.primal(x)
    report = StationarityReport(
        grad_phi_norm=float(np.linalg.norm(gphi_x)),
        moreau_grad_norm=float(np.linalg.norm(gm)),
        moreau_value=float(phi_u + float((u - x) @ (u - x)) / (2.0 * p)),
        prox_point=u, p=p, residual=res, iterations=k,
    )
    if y is not None:
        gx, gy = instance.grad(x, np.atleast_1d(np.asarray(y, dtype=np.float64)))
        report.grad_f_sq = float(gx @ gx + gy @ gy)
    return report


def moreau_grad_norm(instance, x, p=None):
    """|grad Phi_p(x)|, using the closed form when the instance has one valid at x."""
    p = _default_p(instance, p)
    closed = getattr(instance, "moreau_closed_form", None)
    if closed is not None:
        try:
            return abs(float(closed(x, p)[1]))
        except DomainError:
            pass
    return moreau_grad(instance, x, p).moreau_grad_norm


def prox_slacks(instance, x, report):
    """Slacks of |x_hat - x| <= p |grad Phi_p| and |grad Phi(x_hat)| <= |grad Phi_p|, solver tolerance included."""
    dist = float(np.linalg.norm(report.prox_point - np.atleast_1d(x)))
    _, g_hat = instance.primal(report.prox_point)
    a = report.p * report.moreau_grad_norm + TAU_PROX - dist
    b = report.moreau_grad_norm + report.residual + TAU_PROX - float(np.linalg.norm(g_hat))
    return a, b


# ---------------------------------------------------------------------------


@dataclass
class GapConstants:
    delta_phi: float
    delta_phi_x0: float
    delta_phi_hat: Optional[float]
    delta0_hat: float
    d0: float


def gap_constants(instance, x0, y0, x1, y1, p=None):
    """Initial gap quantities; minima of Phi and Phi_p are the closed-form ones (0 for the hard instances)."""
    phi_min = instance.primal_min
    if phi_min is None:
        raise ConfigError("instance has no closed-form minimum of Phi")
    x0, y0, x1, y1 = (np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in (x0, y0, x1, y1))
    phi0 = instance.primal(x0)[0]
    phi1 = instance.primal(x1)[0]
    hat = None
    if getattr(instance, "ell", None):
        # Phi >= min Phi everywhere implies min Phi_p = min Phi
        hat = moreau_grad(instance, x0, p).moreau_value - phi_min
    ys0 = instance.best_response(x0)
    ys1 = instance.best_response(x1)
    d0 = max(float((x1 - x0) @ (x1 - x0)), float((y1 - y0) @ (y1 - y0)),
             float((y1 - ys1) @ (y1 - ys1)), float((y0 - ys0) @ (y0 - ys0)))
    return GapConstants(
        delta_phi=max(phi0, phi1) - phi_min,
        delta_phi_x0=phi0 - phi_min,
        delta_phi_hat=hat,
        delta0_hat=phi0 - phi_min,
        d0=d0,
    )


# ---------------------------------------------------------------------------
# potentials


@dataclass
class PotentialRecord:
    r: float
    g_norm_sq: float
    lemma_slacks: dict = field(default_factory=dict)


def _potential_weight(steps, method):
    if method == "gen_ogda":
        return steps.beta / 4.0
    return 0.25


def potential_r(state, instance, steps, method="ogda"):
    """r_t = |z_{t+1} - y*(x_t)|^2 + w |y_t - y_{t-1}|^2 at the state's current point.

    z_{t+1} = y_t + eta_y1 g_t - eta_y2 g_{t-1} uses the exact gradient at x_t, so
    this is meant for deterministic runs; w is 1/4 (beta/4 for generalized OGDA).
    """
    if method not in ("ogda", "gen_ogda"):
        raise NotApplicableError("potential needs the optimistic ghost iterate (ogda or gen_ogda)")
    _, _, ey1, ey2 = steps.rates(method)
    gx, gy = instance.grad(state.x, state.y)
    z_next = state.y + ey1 * gy - ey2 * state.gy_prev
    ys = instance.best_response(state.x)
    dy = state.y - state.y_prev
    g_comb = 2.0 * gx - state.gx_prev
    r = float((z_next - ys) @ (z_next - ys)) + _potential_weight(steps, method) * float(dy @ dy)
    return PotentialRecord(r=r, g_norm_sq=float(g_comb @ g_comb))


def combined_directions(traj):
    """g_t = 2 g_{x,t} - g_{x,t-1} for t = 0..T-1 with g_{x,-1} = g_{x,0}."""
    gx = traj.gx
    prev = np.vstack([gx[:1], gx[:-1]]) if len(gx) else gx
    return 2.0 * gx - prev


def potentials(traj, instance):
    """r_t for t = 0..T-1 from the recorded ghost iterates."""
    if traj.z is None:
        raise NotApplicableError("potential needs the optimistic ghost iterate (ogda or gen_ogda)")
    T = traj.t_final
    if T == 0:
        return np.empty(0)
    w = _potential_weight(traj.steps, traj.method)
    ys = np.array([instance.best_response(x) for x in traj.x[:T]])
    dz = traj.z[1:T + 1] - ys
    y = traj.y[:T]
    y_prev = np.vstack([traj.y[:1], traj.y[:T - 1]])
    dy = y - y_prev
    return np.sum(dz * dz, axis=1) + w * np.sum(dy * dy, axis=1)


# ---------------------------------------------------------------------------
# descent lemmas


@dataclass
class LemmaSlack:
    name: str
    slacks: np.ndarray
    t_index: np.ndarray

    @property
    def min_slack(self):
        return float(self.slacks.min()) if self.slacks.size else np.inf

    def first_violation(self, tol=1e-10):
        bad = np.nonzero(self.slacks < -tol)[0]
        return int(self.t_index[bad[0]]) if bad.size else None

    def passed(self, tol=1e-10):
        return self.first_violation(tol) is None


@dataclass
class SlackReport:
    lemmas: dict

    def passed(self, tol=1e-10):
        return all(l.passed(tol) for l in self.lemmas.values())

    def summary(self, tol=1e-10):
        return {k: {"min_slack": v.min_slack, "first_violation": v.first_violation(tol), "n": int(v.slacks.size)}
                for k, v in self.lemmas.items()}


LEMMAS = ("primal_descent", "dual_potential", "dual_potential_sum", "moreau_descent")


def _close(a, b, rtol=1e-12):
    return abs(a - b) <= rtol * abs(b)


def _require_ncsc(traj, instance, need_eta_y):
    if traj.method != "ogda":
        raise NotApplicableError("hypothesis: iterates produced by OGDA")
    if not traj.deterministic:
        raise NotApplicableError("hypothesis: deterministic oracle (sigma = 0)")
    if getattr(instance, "kind", "") != "quad_ncsc":
        raise NotApplicableError("hypothesis: strongly concave instance with closed-form best response")
    if not instance.params.is_ell_smooth:
        raise NotApplicableError("hypothesis: f is ell-smooth (Hessian norm exceeds ell for this instance)")
    if need_eta_y and not _close(traj.steps.eta_y, 1.0 / (6.0 * instance.ell)):
        raise NotApplicableError("hypothesis: eta_y = 1/(6 ell)")


def _primal_descent(traj, instance):
    ell, kappa, eta = instance.ell, instance.kappa, traj.steps.eta_x
    g = combined_directions(traj)
    X, Y = traj.x, traj.y
    T = traj.t_final
    ts = np.arange(2, T + 1)
    out = np.empty(ts.size)
    for k, t in enumerate(ts):
        phi_t = instance.primal(X[t])[0]
        phi_p, gphi_p = instance.primal(X[t - 1])
        ys = instance.best_response(X[t - 1])
        rhs = (phi_p - 0.5 * eta * float(gphi_p @ gphi_p)
               - 0.5 * eta * (1.0 - 2.0 * kappa * ell * eta) * float(g[t - 1] @ g[t - 1])
               + 1.5 * eta ** 3 * ell ** 2 * float(g[t - 2] @ g[t - 2])
               + 1.5 * eta * ell ** 2 * float((ys - Y[t - 1]) @ (ys - Y[t - 1]))
               + 1.5 * eta * ell ** 2 * float((Y[t - 1] - Y[t - 2]) @ (Y[t - 1] - Y[t - 2])))
        out[k] = rhs - phi_t
    return LemmaSlack("primal_descent", out, ts)


def _dual_potential(traj, instance, r):
    kappa, eta = instance.kappa, traj.steps.eta_x
    g = combined_directions(traj)
    gn = np.sum(g * g, axis=1)
    ts = np.arange(2, r.size)
    rhs = (1.0 - 1.0 / (12.0 * kappa)) * r[ts - 1] + 12.0 * eta ** 2 * kappa ** 3 * gn[ts - 1] + eta ** 2 / 18.0 * gn[ts - 2]
    return LemmaSlack("dual_potential", rhs - r[ts], ts)


def _dual_potential_sum(traj, instance, r):
    kappa, eta = instance.kappa, traj.steps.eta_x
    g = combined_directions(traj)
    gn = np.sum(g * g, axis=1)
    if r.size < 2:
        return LemmaSlack("dual_potential_sum", np.empty(0), np.empty(0, dtype=int))
    ts = np.arange(1, r.size)
    lhs = np.cumsum(r[1:])
    dx = traj.x[1] - traj.x[0]
    # sum_{i=1}^{t-1} |g_i|^2 for t = 1, 2, ...
    gsum = np.concatenate([[0.0], np.cumsum(gn[1:r.size - 1])])
    rhs = 12.0 * kappa * r[1] + (2.0 / 3.0) * kappa * float(dx @ dx) + 145.0 * eta ** 2 * kappa ** 4 * gsum
    return LemmaSlack("dual_potential_sum", rhs - lhs, ts)


def _moreau_descent(traj, instance):
    if traj.method != "ogda":
        raise NotApplicableError("hypothesis: iterates produced by OGDA")
    if not traj.deterministic:
        raise NotApplicableError("hypothesis: deterministic oracle (sigma = 0)")
    if getattr(instance, "kind", "") != "ncc_bilinear":
        raise NotApplicableError("hypothesis: concave instance with bounded dual domain and G-Lipschitz primal")
    ell, G, eta = instance.ell, instance.G, traj.steps.eta_x
    if not _close(traj.steps.eta_y, 1.0 / (2.0 * ell)):
        raise NotApplicableError("hypothesis: eta_y = 1/(2 ell)")
    p = 1.0 / (2.0 * ell)
    X, Y = traj.x, traj.y
    T = traj.t_final
    env = []
    genv = []
    for x in X:
        rep = moreau_grad(instance, x, p)
        env.append(rep.moreau_value)
        genv.append(rep.moreau_grad_norm)
    gradx = [instance.grad(X[t], Y[t])[0] for t in range(T + 1)]
    ts = np.arange(1, T + 1)
    out = np.empty(ts.size)
    for k, t in enumerate(ts):
        gap = instance.primal(X[t - 1])[0] - instance.value(X[t - 1], Y[t - 1])
        dg = gradx[t - 1] - gradx[max(t - 2, 0)]
        rhs = (env[t - 1] + 2.0 * eta * ell * gap - eta / 8.0 * genv[t - 1] ** 2
               + 3.0 * ell * eta ** 2 * G ** 2 + 0.5 * eta * float(dg @ dg))
        out[k] = rhs - env[t]
    return LemmaSlack("moreau_descent", out, ts)


def verify_descent_lemmas(traj, instance, lemmas=None):
    """Per-step slacks (RHS - LHS) of the requested lemmas on a recorded trajectory.

    Hypotheses are checked first; a mismatch raises NotApplicableError naming it.
    """
    if lemmas is None:
        lemmas = ("moreau_descent",) if getattr(instance, "kind", "") == "ncc_bilinear" else LEMMAS[:3]
    out = {}
    r = None
    for name in lemmas:
        if name == "primal_descent":
            _require_ncsc(traj, instance, need_eta_y=False)
            out[name] = _primal_descent(traj, instance)
        elif name in ("dual_potential", "dual_potential_sum"):
            _require_ncsc(traj, instance, need_eta_y=True)
            if r is None:
                r = potentials(traj, instance)
            fn = _dual_potential if name == "dual_potential" else _dual_potential_sum
            out[name] = fn(traj, instance, r)
        elif name == "moreau_descent":
            out[name] = _moreau_descent(traj, instance)
        else:
            raise ConfigError(f"unknown lemma {name!r}")
    return SlackReport(out)


# ---------------------------------------------------------------------------


def first_hit(values, epsilon, measure="grad_phi"):
    """Smallest t with values[t] <= epsilon, or None ("not reached").

    ``values`` is a recorded measure sequence, a Trajectory (its ``measure``
    column), or a ``(callable, t_max)`` tuple with callable t -> value.
    """
    if isinstance(values, tuple):
        fn, t_max = values
        for t in range(int(t_max) + 1):
            if fn(t) <= epsilon:
                return t
        return NOT_REACHED
    if hasattr(values, "measure"):
        if values.stop_reason == "diverged":
            return NOT_REACHED
        values = values.measure(measure)
        if values is None:
            raise ConfigError(f"measure {measure!r} was not recorded", "stop.measure")
    v = np.asarray(values, dtype=np.float64)
    hit = np.nonzero(v <= epsilon)[0]
    return int(hit[0]) if hit.size else NOT_REACHED


def first_hit_geometric(initial, rate, epsilon):
    """First t with initial * rate^t <= epsilon for 0 < rate < 1, in closed form."""
    if initial <= epsilon:
        return 0
    if not 0 < rate < 1:
        return NOT_REACHED
    t = int(np.ceil(np.log(initial / epsilon) / np.log(1.0 / rate)))
    # guard the ceil against roundoff on either side
    while t > 0 and initial * rate ** (t - 1) <= epsilon:
        t -= 1
    while initial * rate ** t > epsilon:
        t += 1
    return t
