"""Command-line entry point ``minimax-lab``.

Exit codes: 0 success, 1 configuration error, 2 failed acceptance check
(recipe thresholds or a violated descent lemma).
"""

import argparse
import json
import os
import sys

from .. import metrics, spectral
from ..errors import ConfigError, NotApplicableError
from . import config as C
from .emit import emit, json_text
from .recipes import RECIPES, run_recipe
from .runner import execute, sweep, sweep_table, trajectory_table

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not acceptance failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser():
    ap = _Parser(prog="minimax-lab", description="Minimax optimization experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run a Cartesian grid over config fields")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("spectral", help="print the spectral report of a quadratic config")
    p.add_argument("--config", required=True)

    p = sub.add_parser("verify-lemmas", help="run a config and check the descent lemmas")
    p.add_argument("--config", required=True)

    p = sub.add_parser("recipe", help="reproduce a hard-instance construction")
    p.add_argument("name", choices=RECIPES)
    p.add_argument("--param", action="append", default=[], metavar="K=V",
                   help="override a recipe parameter; V is parsed as JSON when possible")
    p.add_argument("--out", required=True)
    return ap


def parse_params(items):
    out = {}
    for item in items:
        k, sep, v = item.partition("=")
        if not sep or not k:
            raise ConfigError(f"expected K=V, got {item!r}", "--param")
        try:
            out[k] = json.loads(v)
        except ValueError:
            out[k] = v
    return out


def _meta(cfg):
    return {"config_hash": cfg.config_hash, "seed": cfg.seed}


def cmd_run(args):
    cfg = C.parse_config(args.config)
    res = execute(cfg)
    meta = _meta(cfg)
    emit(trajectory_table(res.trajectory, cfg.record["every"]), "csv",
         os.path.join(args.out, "trajectory.csv"), meta)
    emit({"config": cfg.resolved, "summary": res.summary}, "json", os.path.join(args.out, "summary.json"), meta)
    print(f"{res.summary['stop_reason']} after {res.summary['t_final']} steps")
    return EXIT_OK


def cmd_sweep(args):
    base = C.load_file(args.config)
    grid = C.load_file(args.grid)
    C.resolve(base)  # the base config must be valid on its own
    axes, rows = sweep(base, grid, jobs=args.jobs)
    seed = C._seed(base, True)
    meta = {"config_hash": C.config_hash({"base": base, "grid": grid, "seed": seed}), "seed": seed}
    emit(sweep_table(axes, rows), "csv", os.path.join(args.out, "sweep.csv"), meta)
    emit({"axes": axes, "rows": rows}, "json", os.path.join(args.out, "sweep.json"), meta)
    failed = sum(r["stop_reason"] == "error" for r in rows)
    print(f"{len(rows)} runs, {failed} failed")
    return EXIT_OK


def cmd_spectral(args):
    cfg = C.parse_config(args.config)
    if cfg.instance.kind != "quad_ncsc":
        raise ConfigError("spectral analysis covers the quadratic instance only", "problem.kind")
    if cfg.method not in spectral.METHODS:
        raise ConfigError("spectral analysis covers gda, ogda and eg", "method")
    r = cfg.steps.eta_y / cfg.steps.eta_x
    M = spectral.build_M(cfg.instance.params, r)
    rep = spectral.transition(cfg.method, M, cfg.steps.eta_x)
    cert = spectral.certify_divergence(cfg.method, cfg.instance.params, cfg.steps.eta_x, cfg.steps.eta_y)
    doc = {"M": M.matrix.tolist(), "r": r, "det": M.det, "report": rep.to_dict(), "certificate": cert}
    sys.stdout.write(json_text(doc, _meta(cfg)))
    return EXIT_OK


def cmd_verify(args):
    cfg = C.parse_config(args.config)
    res = execute(cfg)
    try:
        report = metrics.verify_descent_lemmas(res.trajectory, cfg.instance)
    except NotApplicableError as e:
        raise ConfigError(str(e), "method") from None
    doc = {"passed": report.passed(), "lemmas": report.summary()}
    sys.stdout.write(json_text(doc, _meta(cfg)))
    return EXIT_OK if report.passed() else EXIT_FAILED


def cmd_recipe(args):
    params = parse_params(args.param)
    seed_env = os.environ.get(C.SEED_ENV)
    if args.name == "wgan_fig1" and seed_env and "seed" not in params:
        params["seed"] = int(seed_env)
    res = run_recipe(args.name, params)
    meta = {"config_hash": C.config_hash({"recipe": args.name, "params": res.params}),
            "seed": res.params.get("seed", 0)}
    for fname, table in sorted(res.tables.items()):
        emit(table, "csv", os.path.join(args.out, fname), meta)
    emit(res.to_dict(), "json", os.path.join(args.out, "summary.json"), meta)
    for k, c in res.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {k}: {c['value']} ({c['threshold']})")
    return EXIT_OK if res.passed else EXIT_FAILED


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "spectral": cmd_spectral, "verify-lemmas": cmd_verify,
            "recipe": cmd_recipe}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
