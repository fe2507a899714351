"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The Monte Carlo
criteria (5-9) use frozen seeds and the tolerances stated with each check;
the algebraic criteria (1-4, 10) must hold exactly up to floating slack.
"""

import json
import os
import time

import numpy as np
import pytest

import convdensity as cd
from convdensity.cli import main as cli_main

SCENARIOS = os.path.join(os.path.dirname(__file__), "..", "scenarios")
THREADS = str(os.cpu_count() or 1)


def verdict(num, desc, ok, detail=""):
    print(f"\n[criterion {num:>2}] {'PASS' if ok else 'FAIL'}  {desc}  {detail}")
    assert ok, f"criterion {num} failed: {desc} ({detail})"


def certified(model):
    cd.certify_noise(model)
    return model


def test_criterion_01_fourier_operator_residual():
    """Synthesized tables satisfy the operator equation in the Fourier domain."""
    cases = [
        (cd.NoiseModel.laplace(0.5, 1.0), 0.0),
        (cd.NoiseModel.laplace(0.5, 1.0), -2.0),
        (cd.NoiseModel.laplace(1.0, 1.0), -1.0),
        (cd.NoiseModel.gaussian(0.75, 0.6), -1.0),
    ]
    worst = 0.0
    slowest = 0.0
    for model, kk in cases:
        certified(model)
        t0 = time.time()
        table = cd.build_deconv_kernel("smooth", model, [np.exp(kk)])
        slowest = max(slowest, time.time() - t0)
        worst = max(worst, table.fourier_residual)
    verdict(1, "Fourier operator-equation residual <= 1e-8", worst <= 1e-8,
            f"max residual {worst:.2e}, slowest build {slowest:.2f}s")


def test_criterion_02_laplace_symbolic_oracle():
    """FFT synthesis matches the exact two-term form for Laplace(1) noise."""
    model = certified(cd.NoiseModel.laplace(1.0, 1.0))
    k = cd.get_kernel("smooth")
    worst = 0.0
    for kk in [0.0, -1.0, -2.0]:
        h = np.exp(kk)
        table = cd.build_deconv_kernel(k, model, [h], tail_tol=3e-7)
        nodes = table.axis_nodes(0)
        oracle = k(nodes / h) / h - k.second_derivative(nodes / h) / h ** 3
        worst = max(worst, float(np.max(np.abs(table.values - oracle))))
    verdict(2, "closed-form deconvolution oracle within 1e-6", worst <= 1e-6,
            f"max abs deviation {worst:.2e}")


def test_criterion_03_direct_case_reduction():
    """The alpha=0 pipeline is exactly a kernel density estimator."""
    model = certified(cd.NoiseModel.none())
    target = cd.TargetSpec.gaussian()
    sample = cd.sample_model(target, model, 500, seed=314)
    z = sample.points[:, 0]
    rng = np.random.default_rng(2718)
    worst = 0.0
    for kern_name in ["uniform", "smooth"]:
        kern = cd.get_kernel(kern_name)
        for _ in range(500):
            x = rng.uniform(-3.0, 3.0)
            h = float(np.exp(rng.uniform(-5.0, 0.5)))
            table = cd.build_deconv_kernel(kern, model, [h])
            pipeline = cd.estimate_at(sample, table, np.array([x]))
            hand = float(np.mean(kern((z - x) / h)) / h)
            worst = max(worst, abs(pipeline - hand))
    verdict(3, "alpha=0 reduction to a hand-rolled KDE within 1e-12",
            worst <= 1e-12, f"max abs deviation over 1000 queries {worst:.2e}")


def test_criterion_04_deterministic_selection_inequality():
    """Argmin algebra: |est_chosen - est_h| <= 2 proxy + 16 bound envelope."""
    target = cd.TargetSpec.gaussian()
    worst = -np.inf
    scenarios = [
        (cd.NoiseModel.none(), "isotropic", 1),
        (cd.NoiseModel.laplace(0.5, 1.0), "isotropic", 1),
        (cd.NoiseModel.laplace(1.0, 1.0), "isotropic", 1),
        (cd.NoiseModel.none(d=2), "full", 2),
    ]
    for model, mode, d in scenarios:
        certified(model)
        tgt = cd.TargetSpec.gaussian(d=d)
        consts = cd.kernel_constants("smooth", model, p=2.0)
        grid = cd.build_grid(400, d, model.gamma, mode=mode,
                             k_min=-2 if d == 2 else None)
        tables = [cd.build_deconv_kernel("smooth", model, h)
                  for h in grid.members]
        for seed in (5, 6, 7):
            sample = cd.sample_model(tgt, model, 400, seed=seed)
            pts = np.zeros((15, d))
            pts[:, 0] = np.linspace(-2.5, 2.5, 15)
            surf = cd.build_surface(sample, grid, tables, pts, consts, 2.0)
            res = cd.select(surf)
            worst = max(worst, cd.selection_inequality_gap(surf, res))
    verdict(4, "deterministic selection inequality (zero violations)",
            worst <= 1e-12, f"max gap {worst:.2e}")


def test_criterion_05_unbiasedness():
    """Monte Carlo mean of each estimate matches the smoothing quadrature."""
    target = cd.TargetSpec.gaussian()
    probes = np.array([-1.0, 0.0, 0.7])
    hs = [1.0, np.exp(-1.0), np.exp(-2.0)]
    replicates, n = 200, 500
    worst_ratio = 0.0
    for label, model in [("alpha=0", cd.NoiseModel.none()),
                         ("alpha=0.5", cd.NoiseModel.laplace(0.5, 1.0)),
                         ("alpha=1", cd.NoiseModel.laplace(1.0, 1.0))]:
        certified(model)
        tables = [cd.build_deconv_kernel("smooth", model, [h]) for h in hs]
        estimates = np.zeros((replicates, len(hs), probes.size))
        for rep in range(replicates):
            sample = cd.sample_model(target, model, n, seed=40_000 + rep)
            for a, table in enumerate(tables):
                offsets = sample.points - probes[None, :]
                vals = table(offsets.reshape(-1, 1)).reshape(n, probes.size)
                estimates[rep, a] = vals.mean(axis=0)
        for a, h in enumerate(hs):
            for b, x in enumerate(probes):
                oracle = cd.smoothed_truth(target, "smooth", [h], [x])
                mean = estimates[:, a, b].mean()
                se = estimates[:, a, b].std(ddof=1) / np.sqrt(replicates)
                worst_ratio = max(worst_ratio, abs(mean - oracle) / (3 * se))
    verdict(5, "unbiasedness: MC mean within 3 standard errors of quadrature",
            worst_ratio <= 1.0, f"worst |mean-oracle|/(3 se) = {worst_ratio:.3f}")


def test_criterion_06_concentration_audit():
    """Exceedance frequencies of the error bounds stay at or below 1%."""
    target = cd.TargetSpec.gaussian()
    model = certified(cd.NoiseModel.laplace(0.5, 1.0))
    n, replicates, p = 2000, 500, 2.0
    grid = cd.build_grid(n, 1, model.gamma, mode="isotropic")
    probes = cd.observation_quantiles(target, model, [0.25, 0.5, 0.75])[:, None]
    rows = cd.concentration_audit(target, model, "smooth", grid, probes,
                                  n=n, replicates=replicates, p=p, seed=60601)
    worst_xi = max(r["freq_xi"] for r in rows)
    worst_emp = max(r["freq_emp_high"] for r in rows)
    worst_true = max(r["freq_true_high"] for r in rows)
    ok = worst_xi <= 0.01 and worst_emp <= 0.01
    verdict(6, "concentration audit: exceedance frequencies <= 1%", ok,
            f"|xi|>bound: {worst_xi:.3f}, emp>3*true: {worst_emp:.3f}, "
            f"true>4*emp: {worst_true:.3f} over {replicates} replicates")


def _benchmark(config_name, out_dir, tag):
    out = os.path.join(str(out_dir), tag)
    code = cli_main(["benchmark", "--config",
                     os.path.join(SCENARIOS, config_name),
                     "--threads", THREADS, "--out", out])
    assert code == 0, f"benchmark on {config_name} failed"
    with open(out + ".json") as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def rate_reports(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("rates")
    direct = _benchmark("rate_direct.ini", out_dir, "direct")
    laplace = _benchmark("rate_laplace.ini", out_dir, "laplace")
    return direct, laplace


def test_criterion_07_direct_rate_trend(rate_reports):
    """Dense-regime oracle risk slope in the direct case."""
    direct, _ = rate_reports
    spec = cd.RateSpec(beta=(2.0,), alpha=0.0, mu=(0.0,), p=4.0)
    exponent, _ = cd.convergence_rate(spec)
    slope = direct["slope"]
    ok = abs(slope - (-exponent)) <= 0.12
    assert direct["max_selection_gap"] <= 1e-12
    verdict(7, "direct-case rate trend within +-0.12 of the dense exponent",
            ok, f"oracle slope {slope:.3f} vs {-exponent:.3f} "
                f"(+-{direct['slope_halfwidth']:.3f}); "
                f"selected slope {direct['slope_selected']:.3f}")


def test_criterion_08_deconvolution_degradation(rate_reports):
    """Matched seeds: the pure-deconvolution slope is shallower by >= 0.05."""
    direct, laplace = rate_reports
    diff = laplace["slope"] - direct["slope"]
    assert laplace["max_selection_gap"] <= 1e-12
    verdict(8, "deconvolution slope shallower than direct slope by >= 0.05",
            diff >= 0.05,
            f"direct {direct['slope']:.3f}, laplace {laplace['slope']:.3f}, "
            f"difference {diff:.3f}")


def test_criterion_09_oracle_ratio(tmp_path):
    """Selected-estimator risk within 5x of the best fixed bandwidth."""
    worst = 0.0
    details = []
    for cfg in ["reference_direct.ini", "reference_mixed.ini"]:
        report = _benchmark(cfg, tmp_path, cfg.split(".")[0])
        ratio = report["oracle_ratio"]["4096"]
        worst = max(worst, ratio)
        details.append(f"{cfg.split('.')[0]}: {ratio:.2f}")
        assert report["max_selection_gap"] <= 1e-12
    verdict(9, "empirical oracle ratio <= 5 at n=4096", worst <= 5.0,
            "; ".join(details))


def test_criterion_10_determinism(tmp_path):
    """Identical config and seed produce byte-identical numeric outputs."""
    sim = ["simulate", "--target", "gaussian", "--alpha", "0.5",
           "--noise", "laplace:1", "--n", "300", "--seed", "12"]
    est_src = str(tmp_path / "data")
    assert cli_main(sim + ["--out", est_src]) == 0

    pairs = []
    for tag in ("a", "b"):
        s_out = str(tmp_path / f"sim_{tag}")
        assert cli_main(sim + ["--out", s_out]) == 0
        e_out = str(tmp_path / f"est_{tag}")
        assert cli_main(["estimate", est_src + ".csv", "--alpha", "0.5",
                         "--noise", "laplace:1", "--eval-grid=-3:3:25",
                         "--out", e_out]) == 0
        b_out = str(tmp_path / f"bench_{tag}")
        assert cli_main(["benchmark", "--alpha", "0", "--noise", "none",
                         "--n-list", "256,512", "--replicates", "2",
                         "--seed", "5", "--p", "2", "--quad-nodes", "81",
                         "--threads", "2", "--out", b_out]) == 0
        pairs.append((s_out, e_out, b_out))

    same = True
    for ext, idx in [(".csv", 0), (".csv", 1), (".json", 1), (".csv", 2),
                     (".json", 2)]:
        a = open(pairs[0][idx] + ext, "rb").read()
        b = open(pairs[1][idx] + ext, "rb").read()
        same = same and a == b
    verdict(10, "byte-identical replay across simulate/estimate/benchmark",
            same, "all output files compared")
