"""Acceptance criteria 1-10.

Every test prints exactly one ``PASS`` or ``FAIL`` line with the measured
values next to the stated tolerance, then asserts the same condition.
"""

import math
import time

import numpy as np
import pytest

from minimax_lab import metrics, optimizers, problems, spectral
from minimax_lab.harness import recipes
from minimax_lab.harness.runner import fit_rate, loglog_fit
from minimax_lab.oracles import EMPIRICAL, Oracle, OracleParams, estimate_bias_variance
from minimax_lab.problems import PrimalDualPoint


@pytest.fixture
def report(capsys):
    def _report(n, passed, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} criterion {n}: {detail}")
        assert passed, detail

    return _report


# ---------------------------------------------------------------------------


def test_criterion_01_spectral_simulation_equivalence(report):
    start = time.perf_counter()
    worst, T = 0.0, 10_000
    for kappa in (4.0, 16.0, 64.0):
        ell, mu = 1.0, 1.0 / kappa
        params = problems.QuadNcscParams(ell, mu, 0.01 * ell, problems.TIGHTNESS)
        inst = problems.QuadNcsc(params)
        for method in ("gda", "ogda", "eg"):
            steps = optimizers.schedule_stepsizes(method, "ncsc", {"ell": ell, "mu": mu})
            M = spectral.build_M(params, steps.eta_y / steps.eta_x)
            v = spectral.eigenvector(M, spectral.eigen2(M)[0])
            w0 = 1e3 * v / v[0]
            traj = optimizers.run(inst, method, steps, init=PrimalDualPoint(w0[:1], w0[1:]),
                                  stop=optimizers.Stop(T))
            pred = spectral.predict_iterates(method, M, steps.eta_x, w0, np.arange(T + 1))
            worst = max(worst, recipes._rel_err(traj.x[:, 0], pred[:, 0]))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    report(1, ok, f"max relative error {worst:.3e} (<= 1e-9) over 9 runs of {T} steps; {elapsed:.1f} s (< 10 s)")


def _tightness(method, delta_phi, epsilons=(0.2, 0.1, 0.05, 0.025), kappas=(4.0, 16.0)):
    eps_runs = [recipes.quad_tightness_run(method, kappas[0], e, delta_phi, check_steps=0) for e in epsilons]
    fit = fit_rate([(r["epsilon"], r["t_sim"]) for r in eps_runs])
    k_runs = [recipes.quad_tightness_run(method, k, epsilons[0], delta_phi, check_steps=0) for k in kappas]
    kslope = loglog_fit([r["kappa"] for r in k_runs], [r["t_sim"] for r in k_runs])[0]
    return fit, kslope, eps_runs, k_runs


def test_criterion_02_gda_tightness_slopes(report):
    start = time.perf_counter()
    fit, kslope, eps_runs, k_runs = _tightness("gda", 0.1)
    elapsed = time.perf_counter() - start
    ok = 1.85 <= fit.slope <= 2.15 and 1.8 <= kslope <= 2.2 and elapsed < 60
    report(2, ok, f"eps slope {fit.slope:.4f} in [1.85, 2.15] (T = {[r['t_sim'] for r in eps_runs]}); "
                  f"kappa slope {kslope:.4f} in [1.8, 2.2] (T = {[r['t_sim'] for r in k_runs]}); "
                  f"{elapsed:.1f} s (< 60 s)")


def test_criterion_03_ogda_eg_tightness(report):
    start = time.perf_counter()
    parts, ok = [], True
    # OGDA's mu_x = 50 eps^2 / delta_phi must stay <= ell/2, so delta_phi > 100 * 0.2^2 = 4
    for method, delta_phi in (("ogda", 5.0), ("eg", 0.1)):
        fit, kslope, _, _ = _tightness(method, delta_phi)
        ok &= 1.85 <= fit.slope <= 2.15 and 1.8 <= kslope <= 2.2
        parts.append(f"{method} eps slope {fit.slope:.4f}, kappa slope {kslope:.4f}")
    run = recipes.quad_tightness_run("ogda", 4.0, 0.1, 5.0, check_steps=10_000)
    z_err = run["max_rel_err"]
    ok &= z_err <= 1e-9 and run["checked_steps"] == 10_000
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    report(3, ok, "; ".join(parts) + " (eps in [1.85, 2.15], kappa in [1.8, 2.2]); "
                  f"OGDA a alpha^k + b beta^k vs simulation max relative error {z_err:.3e} (<= 1e-9) "
                  f"for k <= 1e4; {elapsed:.1f} s (< 60 s)")


def test_criterion_04_stepsize_independent_lower_bound(report):
    start = time.perf_counter()
    rs = np.random.default_rng(2024)
    n_cert, growth_min, guard_steps = 0, np.inf, []
    for _ in range(100):
        ell = rs.uniform(0.5, 2.0)
        kappa = rs.uniform(4.0, 20.0)
        mu = ell / kappa
        params = problems.QuadNcscParams(ell, mu, rs.uniform(0.001, 0.5) * ell)
        eta_y = rs.uniform(0.5, 1.0) / ell
        r = rs.uniform(0.1, 0.9) * kappa
        eta_x = eta_y / r
        cert = spectral.certify_divergence("gda", params, eta_x, eta_y)
        n_cert += cert["diverges"]
        traj = optimizers.run(problems.QuadNcsc(params), "gda", optimizers.StepSizes(eta_x=eta_x, eta_y=eta_y),
                              init=PrimalDualPoint([1.0], [0.0]), stop=optimizers.Stop(200_000))
        guard_steps.append(traj.t_final if traj.stop_reason == "diverged" else None)
        path = np.column_stack([traj.x[:, 0], traj.y[:, 0]])
        path = path[np.all(np.isfinite(path), axis=1)]
        growth_min = min(growth_min, recipes.growth_check(path, cert["rho"]))
    tripped = all(t is not None for t in guard_steps)
    res = recipes.recipe_ncsc_lowerbound({"c": 2.0})
    slope = res.summary["epsilon_fit"]["slope"]
    elapsed = time.perf_counter() - start
    ok = n_cert == 100 and tripped and growth_min >= 0.5 and slope >= 1.8 and res.checks["contracting"]["passed"]
    ok &= elapsed < 60
    report(4, ok, f"certified divergent {n_cert}/100 (r <= kappa); guard tripped in every run "
                  f"({tripped}, max {max(t or 0 for t in guard_steps)} steps); min |w_t| / rho^t = {growth_min:.3f} "
                  f"(>= 0.5); r = 2 kappa eps slope {slope:.4f} (>= 1.8); {elapsed:.1f} s (< 60 s)")


def test_criterion_05_ncc_exact_recursions_and_slope(report):
    # The slope part genuinely fails: with x0 = Theta(eps) the envelope gap shrinks like
    # eps^2, so T scales like Delta_hat / eps^6 = eps^-4. See the normalized slope in the line.
    start = time.perf_counter()
    inst = problems.NccBilinear(problems.NccBilinearParams.from_targets(4.0, 2.0, 0.1))
    rec_err, pinned = {}, True
    for method in ("gda", "eg", "ogda"):
        _, _, err, pin = recipes.ncc_recursion_check(method, inst, 0.01, 10_000)
        rec_err[method] = err
        pinned &= pin
    rec_ok = max(rec_err.values()) <= 1e-12 and pinned
    slopes, norm_slopes, hits = {}, {}, {}
    for method in ("gda", "eg", "ogda"):
        runs = [recipes.ncc_first_hit(method, inst, e, 10_000_000) for e in (0.2, 0.1, 0.05)]
        hits[method] = [r["t_sim"] for r in runs]
        slopes[method] = fit_rate([(r["epsilon"], r["t_sim"]) for r in runs]).slope
        norm_slopes[method] = fit_rate([(r["epsilon"], r["t_sim"] / r["delta_hat"]) for r in runs]).slope
    slope_ok = all(abs(s - 6.0) <= 0.3 for s in slopes.values())
    elapsed = time.perf_counter() - start
    ok = rec_ok and slope_ok and elapsed < 60
    report(5, ok, "recursion max relative error "
                  + ", ".join(f"{m} {e:.2e}" for m, e in rec_err.items())
                  + f" (<= 1e-12), y pinned at D: {pinned}; first-hit slope "
                  + ", ".join(f"{m} {s:.4f}" for m, s in slopes.items())
                  + " (6 +/- 0.3); slope of T / Delta_hat "
                  + ", ".join(f"{m} {s:.4f}" for m, s in norm_slopes.items())
                  + f"; T = {hits}; {elapsed:.1f} s (< 60 s)")


def test_criterion_06_moreau_envelope(report):
    inst = problems.NccBilinear(problems.NccBilinearParams.from_targets(4.0, 2.0, 0.1))
    L, D, ell = inst.L, inst.D, inst.ell
    rs = np.random.default_rng(6)
    worst, lemma_ok = 0.0, True
    for x in rs.uniform(-1.0, 1.0, 100):
        rep = metrics.moreau_grad(inst, x)
        closed = 2 * L * D * ell / (L * D + 2 * ell) * x
        worst = max(worst, abs(rep.moreau_grad_norm - abs(closed)))
        a, b = metrics.prox_slacks(inst, x, rep)
        lemma_ok &= a >= 0 and b >= 0
    ok = worst <= 1e-6 and lemma_ok
    report(6, ok, f"max |numeric - closed form| {worst:.3e} (<= 1e-6) on 100 points; "
                  f"prox inequalities hold at every point: {lemma_ok}")


def test_criterion_07_descent_lemmas(report):
    parts, ok = [], True
    for kappa in (4.0, 16.0):
        ell = 1.0
        inst = problems.QuadNcsc(problems.QuadNcscParams(ell, ell / kappa, 0.05, problems.TIGHTNESS))
        steps = optimizers.schedule_stepsizes("ogda", "ncsc", {"ell": ell, "mu": ell / kappa})
        traj = optimizers.run(inst, "ogda", steps, init=PrimalDualPoint([1.0], [0.0]), stop=optimizers.Stop(1000))
        rep = metrics.verify_descent_lemmas(traj, inst)
        mins = {k: v.min_slack for k, v in rep.lemmas.items()}
        ok &= all(v >= -1e-10 for v in mins.values())
        ok &= rep.lemmas["dual_potential_sum"].slacks.size == traj.t_final - 1
        parts.append(f"kappa {kappa:g}: " + ", ".join(f"{k} {v:.3e}" for k, v in mins.items()))
    report(7, ok, "min slacks " + "; ".join(parts) + " (>= -1e-10, cumulative form at every prefix)")


def test_criterion_08_oracle_statistics(report):
    inst = problems.QuadNcsc(problems.QuadNcscParams(1.0, 0.25, 0.05))
    pt = PrimalDualPoint([0.7], [-0.3])
    n = 100_000
    parts, ok = [], True
    for seed, (sigma, m) in enumerate(((1.0, 1), (1.0, 16), (2.0, 4))):
        bv = estimate_bias_variance(inst, pt, OracleParams(sigma=sigma, m_x=m, m_y=m, seed=seed), n)
        bound = 4 * sigma / math.sqrt(m * n)
        means = np.abs(np.concatenate([bv.mean_x, bv.mean_y]))
        ratios = np.concatenate([bv.var_x, bv.var_y]) / (sigma ** 2 / m)
        ok &= bool(np.all(means <= bound) and np.all((ratios >= 0.95) & (ratios <= 1.05)))
        parts.append(f"(sigma {sigma:g}, M {m}): |mean| {means.max():.2e} <= {bound:.2e}, "
                     f"var ratio [{ratios.min():.4f}, {ratios.max():.4f}]")
    report(8, ok, "; ".join(parts) + " (var ratio in [0.95, 1.05])")


def _same(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("x", "y", "gx", "gy"))


def test_criterion_09_reduction_identities(report):
    quad = problems.QuadNcsc(problems.QuadNcscParams(1.0, 0.25, 0.05))
    ncc = problems.NccBilinear(problems.NccBilinearParams.from_targets(4.0, 2.0, 0.5))
    wgan = problems.Wgan()
    cases = {
        "quad_ncsc": (quad, PrimalDualPoint([1.0], [0.5]), 0.01, 0.2, lambda: Oracle(quad)),
        "ncc_bilinear": (ncc, PrimalDualPoint([1.5], [0.2]), 0.05, 0.125, lambda: Oracle(ncc)),
        "wgan": (wgan, wgan.init_point(0, -1.0, 1.0), 0.05, 0.05,
                 lambda: Oracle(wgan, OracleParams(m_x=100, m_y=100, seed=0, noise_kind=EMPIRICAL))),
    }
    stop = optimizers.Stop(1000, measure="grad_f_sq")
    parts, ok = [], True
    for name, (inst, init, ex, ey, oracle) in cases.items():
        def run(method, steps):
            return optimizers.run(inst, method, steps, oracle=oracle(), init=init, stop=stop)

        ogda = run("ogda", optimizers.StepSizes(eta_x=ex, eta_y=ey))
        gen = run("gen_ogda", optimizers.StepSizes.from_correction_ratios(ex, ey, 1.0, 1.0))
        gda = run("gda", optimizers.StepSizes(eta_x=ex, eta_y=ey))
        gen0 = run("gen_ogda", optimizers.StepSizes.gen_ogda(ex, 0.0, ey, 0.0))
        a, b = _same(ogda, gen), _same(gda, gen0)
        ok &= a and b and ogda.t_final == 1000 and gda.t_final == 1000
        parts.append(f"{name}: ogda {a}, gda {b}")
    report(9, ok, "bit-exact over 1000 steps: " + "; ".join(parts))


def test_criterion_10_wgan(report):
    start = time.perf_counter()
    res = recipes.recipe_wgan_fig1()
    elapsed = time.perf_counter() - start
    c = res.checks
    ok = res.passed and elapsed < 120
    report(10, ok, f"|grad f_10|^2 / min |grad f|^2 = {c['grad_f_sq_drop_10x']['value']:.1f} (>= 10, first at "
                   f"t = {res.summary['first_10x_drop_t']}); finite-difference relative error "
                   f"{c['finite_difference']['value']:.2e} (<= 1e-5); bit-reproducible "
                   f"{c['bit_reproducible']['value']}; {elapsed:.1f} s (< 120 s)")
