"""Run configuration: strict parsing, default resolution and object building.

A config is a JSON (or TOML) object with the sections below. Every section is
optional except ``problem`` and ``method``; after resolution all defaults and
schedule-derived step sizes are filled in, so the resolved dict alone fully
determines a run.

    seed     int
    method   gda | ogda | eg | gen_ogda
    regime   ncsc | ncc | ncc_stochastic | none   (inferred from the problem)
    problem  {"kind": ..., instance parameters}
    steps    explicit rates and/or schedule selectors
    oracle   {"sigma", "m_x", "m_y", "noise_kind"}
    init     {"kind": point | eigenvector | random, ...}
    stop     {"t_max", "epsilon", "measure"}
    record   {"potentials", "moreau_every", "every"}
"""

import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .. import __version__
from .. import problems, spectral
from ..errors import ConfigError
from ..optimizers import METHODS, MEASURES, REGIMES, StepSizes, Stop, schedule_stepsizes
from ..oracles import ADDITIVE, EMPIRICAL, OracleParams, schedule_batches

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "MINIMAX_SEED"

TOP_KEYS = {"seed", "method", "regime", "problem", "steps", "oracle", "init", "stop", "record"}
SECTION_KEYS = {
    "problem": problems._QUAD_KEYS | problems._NCC_KEYS | problems._WGAN_KEYS,
    "steps": {"schedule", "eta_x", "eta_y", "eta_x1", "eta_x2", "eta_y1", "eta_y2",
              "ratio_x", "ratio_y", "multiplier", "alpha", "beta", "epsilon"},
    "oracle": {"sigma", "m_x", "m_y", "noise_kind"},
    "init": {"kind", "x", "y", "x0", "mode", "low", "high"},
    "stop": {"t_max", "epsilon", "measure"},
    "record": {"potentials", "moreau_every", "every"},
}
_RATE_KEYS = ("eta_x", "eta_y", "eta_x1", "eta_x2", "eta_y1", "eta_y2")

DEFAULT_MEASURE = {"quad_ncsc": "grad_phi", "ncc_bilinear": "moreau", "wgan": "grad_f_sq"}


@dataclass
class RunConfig:
    resolved: dict
    instance: object
    method: str
    regime: str
    steps: StepSizes
    oracle: OracleParams
    init: problems.PrimalDualPoint
    stop: Stop
    record: dict
    seed: int

    @property
    def config_hash(self):
        return config_hash(self.resolved)


def config_hash(resolved):
    text = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_file(path):
    """Raw dict from a .json or .toml file."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"no such file: {path}")
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from None


def parse_config(path, use_env=True):
    """Load, validate and resolve the config at ``path``."""
    return resolve(load_file(path), use_env=use_env)


def _check_section(cfg, name):
    sec = cfg.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError("must be an object", name)
    for k in sec:
        if k not in SECTION_KEYS[name]:
            raise ConfigError(f"unknown key {k!r}", f"{name}.{k}")
    return dict(sec)


def _number(sec, key, section, positive=False, nonneg=False, default=None):
    v = sec.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("must be a number", f"{section}.{key}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError("must be finite", f"{section}.{key}")
    if positive and v <= 0:
        raise ConfigError("must be > 0", f"{section}.{key}")
    if nonneg and v < 0:
        raise ConfigError("must be >= 0", f"{section}.{key}")
    return v


def _integer(v, path, minimum=0):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < minimum:
        raise ConfigError(f"must be an integer >= {minimum}", path)
    return int(v)


def _seed(cfg, use_env):
    env = os.environ.get(SEED_ENV) if use_env else None
    if env is not None and env.strip() != "":
        try:
            return _integer(int(env), SEED_ENV)
        except ValueError:
            raise ConfigError("must be a non-negative integer", SEED_ENV) from None
    return _integer(cfg.get("seed", 0), "seed")


def resolve(raw, use_env=True):
    """Validate a raw config dict and return a RunConfig with everything filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be an object")
    for k in raw:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key {k!r}", k)
    cfg = copy.deepcopy(raw)
    seed = _seed(cfg, use_env)

    if "problem" not in cfg:
        raise ConfigError("missing required field", "problem")
    prob = _check_section(cfg, "problem")
    instance = problems.from_config(prob, "problem")
    kind = instance.kind

    method = cfg.get("method")
    if method is None:
        raise ConfigError("missing required field", "method")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}", "method")

    oracle_sec = _check_section(cfg, "oracle")
    stop_sec = _check_section(cfg, "stop")
    steps_sec = _check_section(cfg, "steps")
    init_sec = _check_section(cfg, "init")
    rec_sec = _check_section(cfg, "record")

    sigma = _number(oracle_sec, "sigma", "oracle", nonneg=True, default=0.0)
    noise_kind = oracle_sec.get("noise_kind", ADDITIVE)
    if noise_kind not in (ADDITIVE, EMPIRICAL):
        raise ConfigError(f"unknown noise kind {noise_kind!r}", "oracle.noise_kind")

    regime = cfg.get("regime")
    if regime is None:
        if kind == "quad_ncsc":
            regime = "ncsc"
        elif kind == "ncc_bilinear":
            regime = "ncc_stochastic" if sigma > 0 else "ncc"
        else:
            regime = "none"
    if regime not in REGIMES + ("none",):
        raise ConfigError(f"unknown regime {regime!r}", "regime")

    # stop
    t_max = _integer(stop_sec.get("t_max", 1000), "stop.t_max")
    epsilon = _number(stop_sec, "epsilon", "stop", positive=True)
    measure = stop_sec.get("measure", DEFAULT_MEASURE[kind])
    if measure not in MEASURES:
        raise ConfigError(f"unknown measure {measure!r}", "stop.measure")
    if measure == "grad_phi" and kind == "wgan" and epsilon is not None:
        raise ConfigError("grad_phi stopping is not available for the WGAN instance", "stop.measure")
    stop = Stop(t_max=t_max, epsilon=epsilon, measure=measure)

    steps, steps_out = _resolve_steps(steps_sec, method, regime, instance, sigma, epsilon)

    # oracle batches
    sched_eps = steps_out.get("epsilon", epsilon)
    m = {}
    for side in ("m_x", "m_y"):
        v = oracle_sec.get(side, 1)
        if v == "schedule":
            if kind != "quad_ncsc" and regime != "ncc_stochastic":
                raise ConfigError("batch schedules exist for the synthetic instances only", f"oracle.{side}")
            if sched_eps is None:
                raise ConfigError("batch schedule needs stop.epsilon", f"oracle.{side}")
            which = "ncc" if regime.startswith("ncc") else ("ncsc_eg" if method == "eg" else "ncsc_ogda")
            kappa = getattr(instance, "kappa", 1.0)
            v = schedule_batches(which, kappa, sigma, sched_eps)[0 if side == "m_x" else 1]
        m[side] = _integer(v, f"oracle.{side}", minimum=1)
    oracle = OracleParams(sigma=sigma, m_x=m["m_x"], m_y=m["m_y"], seed=seed, noise_kind=noise_kind)
    if noise_kind == EMPIRICAL and kind != "wgan":
        raise ConfigError("empirical sampling is only defined for the WGAN instance", "oracle.noise_kind")

    init, init_out = _resolve_init(init_sec, instance, method, steps, seed)

    record = {
        "potentials": bool(rec_sec.get("potentials", False)),
        "moreau_every": _integer(rec_sec.get("moreau_every", 0), "record.moreau_every"),
        "every": _integer(rec_sec.get("every", 1), "record.every", minimum=1),
    }

    resolved = {
        "seed": seed,
        "method": method,
        "regime": regime,
        "problem": _problem_out(instance),
        "steps": steps_out,
        "oracle": {"sigma": sigma, "m_x": m["m_x"], "m_y": m["m_y"], "noise_kind": noise_kind},
        "init": init_out,
        "stop": {"t_max": t_max, "epsilon": epsilon, "measure": measure},
        "record": record,
        "version": __version__,
    }
    return RunConfig(resolved, instance, method, regime, steps, oracle, init, stop, record, seed)


def _problem_out(instance):
    p = instance.params
    if instance.kind == "quad_ncsc":
        return {"kind": "quad_ncsc", "ell": p.ell, "mu": p.mu, "mu_x": p.mu_x, "variant": p.variant}
    if instance.kind == "ncc_bilinear":
        return {"kind": "ncc_bilinear", "ell": p.ell, "G": p.G, "D": p.D, "L": p.L}
    return {"kind": "wgan", "mu_data": p.mu_data, "sigma_data": p.sigma_data, "lambda_reg": p.lambda_reg,
            "gen_hidden": p.gen_hidden, "disc_dim": p.disc_dim, "n_ref": p.n_ref, "ref_seed": p.ref_seed}


def _resolve_steps(sec, method, regime, instance, sigma, stop_epsilon):
    explicit = {k: _number(sec, k, "steps") for k in _RATE_KEYS if k in sec}
    for k, v in explicit.items():
        if k in ("eta_x", "eta_y", "eta_x1") and v <= 0:
            raise ConfigError("must be > 0", f"steps.{k}")
        if v < 0:
            raise ConfigError("must be >= 0", f"steps.{k}")
    schedule = sec.get("schedule", "explicit" if explicit else "theorem")
    if schedule not in ("theorem", "explicit"):
        raise ConfigError("must be 'theorem' or 'explicit'", "steps.schedule")
    multiplier = _number(sec, "multiplier", "steps", positive=True, default=1.0)
    alpha = _number(sec, "alpha", "steps", nonneg=True, default=1.0)
    beta = _number(sec, "beta", "steps", nonneg=True, default=1.0)
    out = {"schedule": schedule}

    if schedule == "theorem":
        if explicit:
            raise ConfigError("explicit rates conflict with schedule 'theorem'", f"steps.{next(iter(explicit))}")
        if regime == "none":
            raise ConfigError("no step-size schedule for this problem; give explicit rates", "steps.schedule")
        eps = _number(sec, "epsilon", "steps", positive=True, default=stop_epsilon)
        if regime == "ncsc":
            consts = {"ell": instance.ell, "mu": instance.mu}
        else:
            consts = {"ell": instance.ell, "G": instance.G, "D": instance.D, "sigma": sigma}
        steps = schedule_stepsizes(method, regime, consts, epsilon=eps, multiplier=multiplier,
                                   alpha=alpha, beta=beta)
        out.update(multiplier=multiplier)
        if method == "gen_ogda":
            out.update(alpha=alpha, beta=beta)
        if eps is not None and regime != "ncsc":
            out["epsilon"] = eps
    else:
        for k in ("multiplier", "alpha", "beta", "epsilon"):
            if k in sec:
                raise ConfigError("only used with schedule 'theorem'", f"steps.{k}")
        if method == "gen_ogda":
            if "ratio_x" in sec or "ratio_y" in sec:
                base_x = explicit.get("eta_x1", explicit.get("eta_x"))
                base_y = explicit.get("eta_y1", explicit.get("eta_y"))
                if base_x is None or base_y is None:
                    raise ConfigError("correction ratios need eta_x and eta_y", "steps.eta_x")
                steps = StepSizes.from_correction_ratios(
                    base_x, base_y,
                    _number(sec, "ratio_x", "steps", nonneg=True, default=1.0),
                    _number(sec, "ratio_y", "steps", nonneg=True, default=1.0))
            else:
                for k in ("eta_x1", "eta_x2", "eta_y1", "eta_y2"):
                    if k not in explicit:
                        raise ConfigError("missing rate for gen_ogda", f"steps.{k}")
                steps = StepSizes.gen_ogda(explicit["eta_x1"], explicit["eta_x2"],
                                           explicit["eta_y1"], explicit["eta_y2"])
        else:
            for k in ("eta_x", "eta_y"):
                if k not in explicit:
                    raise ConfigError("missing required field", f"steps.{k}")
            extra = [k for k in explicit if k not in ("eta_x", "eta_y")]
            if extra or "ratio_x" in sec or "ratio_y" in sec:
                bad = extra[0] if extra else ("ratio_x" if "ratio_x" in sec else "ratio_y")
                raise ConfigError("only used by gen_ogda", f"steps.{bad}")
            steps = StepSizes(eta_x=explicit["eta_x"], eta_y=explicit["eta_y"])
    steps.rates(method)
    if method == "gen_ogda":
        out.update(eta_x1=steps.eta_x1, eta_x2=steps.eta_x2, eta_y1=steps.eta_y1, eta_y2=steps.eta_y2)
    else:
        out.update(eta_x=steps.eta_x, eta_y=steps.eta_y)
    return steps, out


def _vector(v, path, n):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or len(v) != n:
        raise ConfigError(f"must be a list of {n} numbers", path)
    try:
        a = np.array(v, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError("must contain numbers", path) from None
    if not np.all(np.isfinite(a)):
        raise ConfigError("must be finite", path)
    return a


def _resolve_init(sec, instance, method, steps, seed):
    kind = instance.kind
    default_kind = "random" if kind == "wgan" else "point"
    ik = sec.get("kind", default_kind)
    allowed = {"point": {"kind", "x", "y"}, "eigenvector": {"kind", "x0", "mode"},
               "random": {"kind", "low", "high"}}
    if ik not in allowed:
        raise ConfigError(f"unknown init kind {ik!r}", "init.kind")
    for k in sec:
        if k not in allowed[ik]:
            raise ConfigError(f"not used by init kind {ik!r}", f"init.{k}")

    if ik == "point":
        if kind == "quad_ncsc":
            dx, dy = [1.0], [0.0]
        elif kind == "ncc_bilinear":
            dx, dy = [0.5], [instance.D]
        else:
            dx, dy = None, None
        if ("x" not in sec and dx is None) or ("y" not in sec and dy is None):
            raise ConfigError("missing required field", "init.x" if "x" not in sec else "init.y")
        x = _vector(sec.get("x", dx), "init.x", instance.dim_x)
        y = _vector(sec.get("y", dy), "init.y", instance.dim_y)
        if instance.bounded_dual and not np.array_equal(instance.project(y), y):
            raise ConfigError("outside the dual domain", "init.y")
        return problems.PrimalDualPoint(x, y), {"kind": "point", "x": x.tolist(), "y": y.tolist()}

    if ik == "eigenvector":
        if kind != "quad_ncsc":
            raise ConfigError("eigenvector init needs the quadratic instance", "init.kind")
        if method not in spectral.METHODS:
            raise ConfigError("eigenvector init is defined for gda, ogda and eg", "init.kind")
        x0 = _number(sec, "x0", "init", default=1.0)
        if x0 == 0:
            raise ConfigError("must be nonzero", "init.x0")
        mode = _integer(sec.get("mode", 0), "init.mode")
        if mode > 1:
            raise ConfigError("must be 0 or 1", "init.mode")
        x, y = eigenvector_init(instance.params, steps, x0, mode)
        return (problems.PrimalDualPoint([x], [y]),
                {"kind": "eigenvector", "x0": x0, "mode": mode, "x": [x], "y": [y]})

    low = _number(sec, "low", "init", default=-0.1)
    high = _number(sec, "high", "init", default=0.1)
    if not high > low:
        raise ConfigError("must exceed init.low", "init.high")
    if kind == "wgan":
        pt = instance.init_point(seed, low, high)
    else:
        from .. import rng
        u = rng.uniforms(rng.bit_generator(seed, 7), instance.dim_x + instance.dim_y)
        v = low + (high - low) * u
        pt = problems.PrimalDualPoint(v[:instance.dim_x], instance.project(v[instance.dim_x:]))
    return pt, {"kind": "random", "low": low, "high": high, "x": pt.x.tolist(), "y": pt.y.tolist()}


def eigenvector_init(params, steps, x0=1.0, mode=0):
    """(x, y) on the eigenvector of the GDA generator, scaled so that x = x0."""
    M = spectral.build_M(params, steps.eta_y / steps.eta_x)
    lam = spectral.eigen2(M)[mode]
    if lam.imag != 0:
        raise ConfigError("complex eigenvalue: no real eigenvector init", "init.mode")
    v = spectral.eigenvector(M, lam.real)
    if v[0] == 0:
        raise ConfigError("eigenvector has zero x component", "init.mode")
    return float(x0), float(x0 * v[1] / v[0])


def set_path(cfg, dotted, value):
    """Set ``a.b`` in a nested dict, creating sections as needed."""
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError("not a section", dotted)
    node[parts[-1]] = value


def check_path(dotted):
    """Raise unless ``dotted`` names a known config field."""
    parts = dotted.split(".")
    if len(parts) == 1 and parts[0] in TOP_KEYS - set(SECTION_KEYS):
        return
    if len(parts) == 2 and parts[0] in SECTION_KEYS and parts[1] in SECTION_KEYS[parts[0]]:
        return
    raise ConfigError("not a config field", dotted)
