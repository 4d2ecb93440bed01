"""Single runs, Cartesian sweeps and log-log rate fits."""

import copy
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import optimizers
from ..errors import ConfigError, DomainError
from ..oracles import Oracle
from ..rng import derive_seed
from . import config as C
from .emit import Table


@dataclass
class RunResult:
    config: C.RunConfig
    trajectory: optimizers.Trajectory
    summary: dict


def execute(cfg: C.RunConfig):
    """Run the optimizer described by a resolved config."""
    oracle = Oracle(cfg.instance, cfg.oracle)
    traj = optimizers.run(
        cfg.instance, cfg.method, cfg.steps, oracle=oracle, init=cfg.init, stop=cfg.stop,
        record_potentials=cfg.record["potentials"], moreau_every=cfg.record["moreau_every"],
        seed=cfg.seed,
    )
    return RunResult(cfg, traj, summarize(cfg, traj))


def run_raw(raw, use_env=True):
    return execute(C.resolve(raw, use_env=use_env))


def _final(values):
    if values is None or len(values) == 0:
        return None
    v = float(values[-1])
    return v if math.isfinite(v) else None


def summarize(cfg, traj):
    measure = cfg.stop.measure
    vals = traj.measure(measure)
    hit = traj.t_final if traj.stop_reason == "hit_epsilon" else None
    return {
        "stop_reason": traj.stop_reason,
        "t_final": traj.t_final,
        "first_hit": hit,
        "measure": measure,
        "final_measure": _final(vals),
        "final_grad_f_sq": _final(traj.grad_f_sq),
        "final_x": traj.x[-1].tolist(),
        "final_y": traj.y[-1].tolist(),
        "returned_point": traj.returned_point.tolist(),
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
    }


def trajectory_table(traj, every=1):
    """Rows t, x..., y..., grad norms, and the optional measure columns."""
    m, n = traj.x.shape[1], traj.y.shape[1]
    cols = ["t"] + [f"x{i}" for i in range(m)] + [f"y{j}" for j in range(n)]
    cols += ["grad_x_norm", "grad_y_norm", "grad_f_sq"]
    extra = []
    if traj.grad_phi is not None:
        cols.append("grad_phi_norm")
        extra.append(traj.grad_phi)
    if traj.moreau_grad is not None:
        cols.append("moreau_grad_norm")
        extra.append(traj.moreau_grad)
    T = traj.t_final
    if traj.potentials is not None:
        cols.append("r_t")
        r = np.full(T + 1, np.nan)
        r[:len(traj.potentials)] = traj.potentials[:T + 1]
        extra.append(r)
    idx = list(range(0, T + 1, every))
    if T >= 0 and (not idx or idx[-1] != T):
        idx.append(T)
    rows = []
    for t in idx:
        row = [t] + [float(v) for v in traj.x[t]] + [float(v) for v in traj.y[t]]
        row += [float(traj.grad_x_norm[t]), float(traj.grad_y_norm[t]), float(traj.grad_f_sq[t])]
        row += [float(e[t]) for e in extra]
        rows.append(row)
    return Table(cols, rows)


# ---------------------------------------------------------------------------
# sweeps


def grid_points(grid):
    """Cartesian product of the grid axes in file order, first axis slowest."""
    if not isinstance(grid, dict):
        raise ConfigError("grid must be an object of path -> list")
    axes = list(grid.keys())
    for a in axes:
        C.check_path(a)
        if not isinstance(grid[a], list) or not grid[a]:
            raise ConfigError("must be a non-empty list", a)
    combos = list(itertools.product(*(grid[a] for a in axes))) if axes else [()]
    return axes, combos


def _sweep_one(args):
    base, axes, values, index, base_seed = args
    raw = copy.deepcopy(base)
    for a, v in zip(axes, values):
        C.set_path(raw, a, v)
    seed = derive_seed(base_seed, index)
    raw["seed"] = seed
    row = {"index": index, "seed": seed}
    row.update({a: v for a, v in zip(axes, values)})
    try:
        res = execute(C.resolve(raw, use_env=False))
        s = res.summary
        row.update(first_hit=s["first_hit"], t_final=s["t_final"], stop_reason=s["stop_reason"],
                   final_measure=s["final_measure"], final_grad_f_sq=s["final_grad_f_sq"], error=None)
    except (ConfigError, DomainError, ValueError, ArithmeticError) as e:
        row.update(first_hit=None, t_final=None, stop_reason="error", final_measure=None,
                   final_grad_f_sq=None, error=f"{type(e).__name__}: {e}")
    return row


def sweep(base, grid, jobs=1, use_env=True):
    """Run every grid point; returns rows sorted by grid index.

    Run i is seeded with derive_seed(base seed, i). A failing run produces a
    row with ``stop_reason = "error"`` and never aborts the sweep.
    """
    base = copy.deepcopy(base)
    base_seed = C._seed(base, use_env)
    axes, combos = grid_points(grid)
    tasks = [(base, axes, vals, i, base_seed) for i, vals in enumerate(combos)]
    if jobs and jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    rows.sort(key=lambda r: r["index"])
    return axes, rows


SWEEP_COLUMNS = ["index", "seed", "first_hit", "t_final", "stop_reason", "final_measure",
                 "final_grad_f_sq", "error"]


def sweep_table(axes, rows):
    cols = ["index"] + list(axes) + SWEEP_COLUMNS[1:]
    return Table(cols, [[r.get(c) for c in cols] for r in rows])


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    pairs: list
    slope: float
    intercept: float
    r_squared: float
    dropped: list
    kappa_slope: Optional[float] = None
    kappa_pairs: Optional[list] = None

    def to_dict(self):
        return {"pairs": self.pairs, "slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "dropped": self.dropped,
                "kappa_slope": self.kappa_slope, "kappa_pairs": self.kappa_pairs}


def loglog_fit(xs, ts):
    """OLS of log t on log x: (slope, intercept, r^2)."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    lt = np.log(np.asarray(ts, dtype=np.float64))
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, lt, rcond=None)
    resid = lt - (slope * lx + intercept)
    ss_tot = float(np.sum((lt - lt.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), min(1.0, max(0.0, r2))


def fit_rate(pairs, t_max=None, kappa_pairs=None):
    """Fit log T against log(1/eps) over (eps, T) pairs.

    Pairs whose T is None (not reached) or exceeds ``t_max`` are right-censored
    and dropped. ``kappa_pairs`` of (kappa, T) add a fit of log T on log kappa.
    """
    kept, dropped = [], []
    for eps, T in pairs:
        if T is None or (t_max is not None and T > t_max) or not eps > 0 or T <= 0:
            dropped.append((eps, T))
        else:
            kept.append((float(eps), int(T)))
    if len({e for e, _ in kept}) < 3:
        raise DomainError("need at least 3 distinct epsilon values with a first hit")
    slope, intercept, r2 = loglog_fit([1.0 / e for e, _ in kept], [t for _, t in kept])
    kslope = None
    if kappa_pairs:
        kp = [(float(k), int(t)) for k, t in kappa_pairs if t is not None and t > 0]
        if len({k for k, _ in kp}) < 2:
            raise DomainError("need at least 2 distinct kappa values with a first hit")
        kslope = loglog_fit([k for k, _ in kp], [t for _, t in kp])[0]
        kappa_pairs = kp
    return RateFit(kept, slope, intercept, r2, dropped, kslope, kappa_pairs)
