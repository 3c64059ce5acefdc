"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed as they are produced (visible with ``pytest -s``) and
collected into an "acceptance criteria" section of the terminal summary.
Monte Carlo sizes follow the criteria; the whole module runs in a few minutes
on one core.
"""

import json
import time

import numpy as np
import pytest

from crrmisc.cli import main
from crrmisc.estimator import FitConfig, fit
from crrmisc.inference import bootstrap_variance, nonparametric_bootstrap
from crrmisc.likelihood import Objective, log_pseudo_likelihood
from crrmisc.model import GammaEstimate, MisclassModel, Theta
from crrmisc.predict import ParametricBaseline, cif, cif_all, survival
from crrmisc.simulate import (Scenario, analysis_gamma, analysis_model, generate_dataset,
                              marginal_rates, run_study)
from crrmisc.splines import make_knots

from test_likelihood import classical_loglik


def verdict(log, number, ok, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    log.append(line)
    assert ok, line


def _random_theta(rng, data, n_interior=2):
    kv = make_knots(data.event_times, n_interior, 4, data.tau)
    raw = [rng.normal(-0.5, 0.7, kv.dim) for _ in range(2)]
    for r in raw:
        r[0] = rng.normal(-1.5, 0.5)
    return Theta(rng.normal(0, 0.4, (2, 1)), raw, [kv, kv])


def test_1_gradient_matches_finite_differences(acceptance_log):
    rng = np.random.default_rng(101)
    model = analysis_model()
    h = 1e-6
    worst = 0.0
    start = time.perf_counter()
    for _ in range(50):
        data, _ = generate_dataset(Scenario.preset(1), 50, rng=rng)
        theta = _random_theta(rng, data)
        gamma = rng.normal([-2.0, -0.7, 0.8], 0.3)
        obj = Objective(data, theta.knots, model, gamma)
        x = theta.pack()
        g = obj.value_and_grad(x)[1]
        for u in range(x.size):
            e = np.zeros_like(x)
            e[u] = h
            fd = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
            # relative error with a unit floor on the scale
            worst = max(worst, abs(g[u] - fd) / max(1.0, abs(fd)))
    elapsed = time.perf_counter() - start
    verdict(acceptance_log, 1, worst <= 1e-5 and elapsed < 60,
            f"max relative error {worst:.2e} (limit 1e-5) over 50 points, {elapsed:.1f}s")


def test_2_reduction_to_classical_model(acceptance_log):
    rng = np.random.default_rng(202)
    worst_ll = 0.0
    for _ in range(20):
        data, _ = generate_dataset(Scenario.preset(1), 100, rng=rng)
        theta = _random_theta(rng, data)
        got = log_pseudo_likelihood(data, theta, MisclassModel.identity(2))
        worst_ll = max(worst_ll, abs(got - classical_loglik(data, theta)))
    data, _ = generate_dataset(Scenario.preset(1), 400, seed=7)
    a = fit(data, FitConfig(), MisclassModel.identity(2))
    b = fit(data, FitConfig(), None)
    worst_beta = float(np.max(np.abs(a.betas - b.betas)))
    verdict(acceptance_log, 2, worst_ll <= 1e-10 and worst_beta <= 1e-6,
            f"loglik gap {worst_ll:.1e} (limit 1e-10), beta gap {worst_beta:.1e} (limit 1e-6)")


@pytest.mark.slow
def test_3_table1_desk_scale(acceptance_log):
    start = time.perf_counter()
    s = run_study(Scenario.preset(1, -2.0), 400, 200, seed=303)
    elapsed = time.perf_counter() - start
    b1, b2 = s.coefficients
    ok = (abs(b1.mean - 0.6) <= 0.025 and 0.10 <= b1.mcsd <= 0.17 and 0.08 <= b2.mcsd <= 0.14
          and elapsed < 20 * 60)
    verdict(acceptance_log, 3, ok,
            f"mean b1 {b1.mean:.4f} (bias {b1.bias_pct:+.2f}%), MCSD b1 {b1.mcsd:.3f}, "
            f"MCSD b2 {b2.mcsd:.3f}, {s.converged}/200 converged, {elapsed:.0f}s")


@pytest.mark.slow
def test_4_bootstrap_coverage(acceptance_log):
    start = time.perf_counter()
    s = run_study(Scenario.preset(1, -2.0), 400, 200, B_boot=50, seed=404)
    elapsed = time.perf_counter() - start
    b1, b2 = s.coefficients
    ok = 0.90 <= b1.cp <= 0.99 and 0.90 <= b2.cp <= 0.99
    verdict(acceptance_log, 4, ok,
            f"CP b1 {b1.cp:.3f}, CP b2 {b2.cp:.3f} (band [0.90, 0.99]); ASE {b1.ase:.3f}/"
            f"{b2.ase:.3f} vs MCSD {b1.mcsd:.3f}/{b2.mcsd:.3f}; n=400, 200 reps, B=50, {elapsed:.0f}s")


@pytest.mark.slow
def test_5_misspecification_robustness(acceptance_log):
    sc = Scenario.preset(3, -1.5)
    s = run_study(sc, 400, 200, seed=505)
    b1 = s.coefficients[0]
    verdict(acceptance_log, 5, abs(b1.mean - 0.6) <= 0.03,
            f"scenario 3, gamma0=-1.5: mean b1 {b1.mean:.4f} (bias {b1.bias_pct:+.2f}%), "
            f"{s.converged}/200 converged")


def test_6_generator_calibration(acceptance_log):
    targets = {-2.0: 0.191, -1.8: 0.246, -1.5: 0.284}
    parts = []
    ok = True
    rates = None
    for g0, target in targets.items():
        rates = marginal_rates(Scenario.preset(1, g0), 100_000, seed=606)
        m = rates["misclassified_among_true_cause2"]
        good = abs(m - target) <= 0.01
        ok &= good
        parts.append(f"miscl({g0}) {m:.3f} vs {target} {'ok' if good else 'off'}")
    cens = rates["censored"]
    c1 = rates["cause1_true"]
    ok &= 0.19 <= cens <= 0.23
    ok &= 0.45 <= c1 <= 0.49
    verdict(acceptance_log, 6, ok,
            f"censored {cens:.3f} [0.19, 0.23]; cause-1 failures {c1:.3f} [0.45, 0.49]; "
            + "; ".join(parts))


def test_7_cif_oracle(acceptance_log):
    m = ParametricBaseline.constant([0.5, 0.5])
    grid = np.linspace(0, 1, 201)
    F = cif_all(m, [0.0], grid)
    f1 = cif(m, 1, [0.0], [0.0, 1.0]).values[-1]
    gap = np.max(np.abs(F[0].values + F[1].values + survival(m, grid, [0.0]) - 1))
    data, _ = generate_dataset(Scenario.preset(1), 400, seed=707)
    res = fit(data, FitConfig(), analysis_model(), analysis_gamma(Scenario.preset(1))[0])
    fgrid = np.linspace(0, res.tau, 201)
    for z in ([0.0], [1.0], [2.0]):
        Ff = cif_all(res, z, fgrid)
        gap = max(gap, np.max(np.abs(Ff[0].values + Ff[1].values + survival(res, fgrid, z) - 1)))
    ok = abs(f1 - 0.3160603) <= 1e-4 and gap <= 1e-6
    verdict(acceptance_log, 7, ok, f"F1(1;0) = {f1:.7f} (0.3160603 +/- 1e-4); max |sum F + S - 1| {gap:.1e}")


@pytest.fixture(scope="module")
def sc1_problem():
    sc = Scenario.preset(1, -2.0)
    data, _ = generate_dataset(sc, 400, seed=808)
    # a modest external validation study supplies gamma_hat and omega_hat
    gamma, omega = analysis_gamma(sc, n_validation=4000, seed=809, exact=False)
    model = analysis_model()
    return data, model, gamma, omega, fit(data, FitConfig(), model, gamma)


def test_8_algorithm1_reduction_and_monotone_variance(acceptance_log, sc1_problem):
    data, model, gamma, omega, point = sc1_problem
    var = {}
    results = {}
    for c in (0.0, 1.0, 4.0):
        g = GammaEstimate(gamma, c * omega, model)
        results[c] = bootstrap_variance(data, FitConfig(), model, g, B=200, seed=88, point=point)
        var[c] = results[c].sigma_hat[0, 0]
    plain = nonparametric_bootstrap(data, FitConfig(), model, gamma, B=200, seed=88, point=point)
    same = np.array_equal(plain.replicate_betas, results[0.0].replicate_betas, equal_nan=True)
    mono = var[1.0] >= 0.95 * var[0.0] and var[4.0] >= 0.95 * var[1.0]
    verdict(acceptance_log, 8, same and mono,
            f"omega=0 identical to plain bootstrap: {same}; Var(b1) at c=0/1/4: "
            f"{var[0.0]:.5f}/{var[1.0]:.5f}/{var[4.0]:.5f}")


def test_9_sensitivity(acceptance_log, sc1_problem):
    data, model, gamma, _, point = sc1_problem
    again = fit(data, FitConfig(eta=0.0), model, gamma)
    identical = (np.array_equal(again.theta.pack(), point.theta.pack())
                 and again.loglik == point.loglik)
    se = nonparametric_bootstrap(data, FitConfig(), model, gamma, B=50, seed=99, point=point).se
    grid = [-0.5, -0.25, 0.0, 0.25, 0.5]
    fits = [fit(data, FitConfig(eta=e), model, gamma) for e in grid]
    conv = all(f.converged for f in fits)
    betas = np.array([f.betas.ravel() for f in fits])
    jumps = np.max(np.abs(np.diff(betas, axis=0)) / se)
    ok = identical and conv and jumps <= 5
    verdict(acceptance_log, 9, ok,
            f"eta=0 bit-identical: {identical}; all converged: {conv}; "
            f"b1 over grid {np.round(betas[:, 0], 4).tolist()}; largest step {jumps:.2f} SE (limit 5)")


def test_10_determinism(acceptance_log, tmp_path):
    def run(*argv):
        out = tmp_path / "out"
        code = main([*map(str, argv), "-o", str(out)])
        assert code == 0
        return out.read_bytes()

    data = tmp_path / "d.csv"
    data.write_bytes(run("simulate", "--emit-data", "--n", 300, "--seed", 10))
    gamma = tmp_path / "g.json"
    gamma.write_text(json.dumps({"gamma": [-2.0, -0.7, 0.8], "omega": np.diag([0.02, 0.01, 0.01]).tolist(),
                                 "design": ["intercept", "t", {"covariate": "z"}]}))
    report = tmp_path / "fit.json"
    report.write_bytes(run("fit", data, gamma, "--seed", 3))
    commands = {
        "simulate --emit-data": ("simulate", "--emit-data", "--n", 300, "--seed", 10),
        "simulate": ("simulate", "--n", 150, "--reps", 3, "--B", 3, "--seed", 5),
        "fit": ("fit", data, gamma, "--seed", 3),
        "bootstrap": ("bootstrap", data, gamma, "--B", 10, "--seed", 3),
        "sensitivity": ("sensitivity", data, gamma, "--B", 3, "--seed", 3),
        "predict": ("predict", report, "--z", "z=1"),
    }
    differing = [name for name, argv in commands.items() if run(*argv) != run(*argv)]
    verdict(acceptance_log, 10, not differing,
            f"{len(commands)} commands repeated with equal seeds; differing outputs: {differing or 'none'}")
