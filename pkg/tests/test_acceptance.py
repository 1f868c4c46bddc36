"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; the whole suite is sized for desk-scale hardware (the slowest entries
are the paired estimator study and the bound-vs-PF grid, a few minutes each).
"""

import math
import time

import numpy as np
import pytest
import scipy.special as sps
import scipy.stats as st
from scipy.integrate import quad
from scipy.stats import binomtest

import skewtvb as sk
from skewtvb.seeding import stream

PRINT = "ACCEPTANCE {num:>2} PASS: {msg}"


def report(num, msg):
    print(PRINT.format(num=num, msg=msg))


# ---------------------------------------------------------------------------
# 1. Truncation exactness and speed
# ---------------------------------------------------------------------------

def test_criterion_01_truncation_exactness_and_speed():
    rng = np.random.default_rng(101)
    # diagonal problems match the closed-form 1-D truncated-normal moments
    worst = 0.0
    for _ in range(300):
        dim = int(rng.integers(1, 5))
        var = rng.uniform(0.2, 4.0, dim)
        mu = rng.uniform(-3.0, 3.0, dim) * np.sqrt(var)
        out = sk.rec_trunc(sk.TruncationProblem(mu, np.diag(var), tuple(range(dim))))
        for j in range(dim):
            s = math.sqrt(var[j])
            xi = mu[j] / s
            eps = float(st.norm.pdf(xi) / st.norm.cdf(xi))
            m_ref = mu[j] + s * eps
            v_ref = var[j] * (1.0 - xi * eps - eps * eps)
            worst = max(worst, abs(out.mu[j] - m_ref), abs(out.sigma[j, j] - v_ref))
    assert worst < 1e-10
    half = sk.rec_trunc(sk.TruncationProblem([0.0], [[1.0]], (0,)))
    assert half.mu[0] == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-12)

    # runtime: 1e5 problems under one second
    problems = [sk.TruncationProblem([float(m)], [[float(v)]], (0,))
                for m, v in zip(rng.uniform(-3, 3, 100_000),
                                rng.uniform(0.3, 2.0, 100_000))]
    t0 = time.perf_counter()
    for p in problems:
        sk.rec_trunc(p)
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    report(1, f"diagonal moments exact to {worst:.1e} (<1e-10); "
              f"1e5 problems in {elapsed:.2f}s (<1s)")


# ---------------------------------------------------------------------------
# 2. Greedy ordering optimality and the outlier-injection study
# ---------------------------------------------------------------------------

def test_criterion_02a_greedy_equals_argmin():
    rng = np.random.default_rng(202)
    checked = 0
    for _ in range(10_000):
        dim = int(rng.integers(2, 5))
        a = rng.standard_normal((dim, dim))
        sigma = a @ a.T + dim * np.eye(dim)
        mu = rng.uniform(-2.0, 2.0, dim) * np.sqrt(np.diag(sigma))
        out = sk.rec_trunc(sk.TruncationProblem(mu, sigma, tuple(range(dim))))
        m, S = mu.copy(), sigma.copy()
        remaining = set(range(dim))
        for k in out.order:
            best = min(remaining, key=lambda i: (m[i] / math.sqrt(S[i, i]), i))
            assert k == best
            s = math.sqrt(S[k, k])
            xi = m[k] / s
            eps = math.sqrt(2.0 / math.pi) / float(sps.erfcx(-xi / math.sqrt(2.0)))
            col = S[:, k].copy()
            m = m + (eps / s) * col
            S = S - ((xi * eps + eps * eps) / S[k, k]) * np.outer(col, col)
            remaining.remove(k)
            checked += 1
    report(2, f"greedy selection equals argmin mu_i/sqrt(Sigma_ii) at all "
              f"{checked} steps of 1e4 random problems (exact)")


@pytest.mark.slow
def test_criterion_02b_outlier_study_topt_beats_trand():
    n_cases = 500
    for c in (5.0, 10.0, 25.0):
        study = sk.outlier_ordering_study(c, n_cases, seed=2024, n_is=20_000)
        diff = study["trand"] - study["topt"]
        wins = int(np.sum(diff > 0))
        ties = int(np.sum(diff == 0))
        pval = binomtest(wins, n_cases - ties, 0.5, alternative="greater").pvalue
        assert np.median(study["topt"]) <= np.median(study["trand"])
        assert pval < 0.01
        report(2, f"c={c}: TOPT median {np.median(study['topt']):.2f} <= "
                  f"TRAND median {np.median(study['trand']):.2f}; sign test "
                  f"p={pval:.2e} (<0.01) over {n_cases} cases")


# ---------------------------------------------------------------------------
# 3. Gaussian reduction
# ---------------------------------------------------------------------------

def test_criterion_03_gaussian_reduction():
    rng = np.random.default_rng(303)
    worst_f = worst_s = 0.0
    for _ in range(100):
        n_x = int(rng.integers(1, 5))
        n_y = int(rng.integers(1, 4))
        K = int(rng.integers(2, 12))
        A = rng.standard_normal((n_x, n_x)) * 0.5
        Q = np.eye(n_x) * rng.uniform(0.2, 1.0)
        C = rng.standard_normal((n_y, n_x))
        r = rng.uniform(0.5, 2.0, n_y)
        noise = sk.SkewTNoise.independent(r, np.zeros(n_y),
                                          np.full(n_y, sk.GAUSSIAN_NU))
        model = sk.StateSpaceModel(A, Q, C, noise, rng.standard_normal(n_x),
                                   np.eye(n_x) * rng.uniform(1.0, 3.0))
        ys = rng.standard_normal((K, n_y)) * 2
        stf = sk.stf_run(model, ys, sk.VBConfig())
        sts = sk.sts_run(model, ys, sk.VBConfig())
        kf = sk.kf_filter(model, ys, r, gate_quantile=1.0)
        sm, sc, _ = sk.rtss_backward(kf.means, kf.covs, A, Q)
        worst_f = max(worst_f, float(np.max(np.abs(stf.means - kf.means))),
                      float(np.max(np.abs(stf.covs - kf.covs))))
        worst_s = max(worst_s, float(np.max(np.abs(sts.means - sm))),
                      float(np.max(np.abs(sts.covs - sc))))
    assert worst_f < 1e-8
    assert worst_s < 1e-8
    report(3, f"Delta=0, nu->inf: STF==KF to {worst_f:.1e} and STS==RTSS to "
              f"{worst_s:.1e} over 100 random models (<1e-8)")


# ---------------------------------------------------------------------------
# 4. Grid-oracle agreement for the scalar one-step filter
# ---------------------------------------------------------------------------

def test_criterion_04_grid_oracle_agreement():
    prior_var = 100.0
    prior_sd = 10.0
    worst_mean = worst_var = 0.0
    n_points = 0
    for delta in (0.0, 1.0, 2.0, 5.0, 10.0):
        noise = sk.SkewTNoise.independent([1.0], [delta], [4.0])
        d = sk.UnivariateSkewT(0.0, 1.0, delta, 4.0)
        for y in (-3.0, -1.5, 0.0, 1.5, 3.0):
            post, _ = sk.stf_step(sk.GaussianBelief([0.0], [[prior_var]]),
                                  [[1.0]], noise, [y], sk.VBConfig())

            def unnorm(x):
                return math.exp(-0.5 * x * x / prior_var) * sk.st_pdf(d, y - x)

            z0 = quad(unnorm, -90, 90, limit=400)[0]
            m1 = quad(lambda x: x * unnorm(x), -90, 90, limit=400)[0] / z0
            m2 = quad(lambda x: x * x * unnorm(x), -90, 90, limit=400)[0] / z0
            var = m2 - m1 * m1
            worst_mean = max(worst_mean, abs(post.mean[0] - m1) / prior_sd)
            worst_var = max(worst_var, abs(post.cov[0, 0] - var) / prior_var)
            n_points += 1
    assert n_points >= 25
    assert worst_mean < 0.05
    assert worst_var < 0.10
    report(4, f"scalar 1-step STF vs quadrature posterior over {n_points} "
              f"(delta, y) points: worst mean err {worst_mean:.2%} of prior sd "
              f"(<5%), worst variance err {worst_var:.2%} of prior var (<10%)")


# ---------------------------------------------------------------------------
# 5. NEES calibration on the single-epoch study
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_05_nees_calibration():
    for delta in (0.0, 5.0, 10.0, 20.0):
        sc = sk.single_epoch_scenario(delta)  # skew-normal epoch
        rep = sk.run_mc_study(sc, [sk.EstimatorSpec("stf")], n_runs=1000,
                              seed=505)["stf"]
        assert rep.n_failed == 0
        assert 2.4 <= rep.nees_mean <= 3.6
        report(5, f"delta={delta:>4}: STF(TOPT) position NEES mean "
                  f"{rep.nees_mean:.3f} in [2.4, 3.6] over 1000 runs")


# ---------------------------------------------------------------------------
# 6. VB convergence within five iterations
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_vb_iteration_convergence():
    for q in (0.5, 5.0):
        sc = sk.tracking_scenario(q=q, delta=5.0, nu=4.0, K=100)
        specs = [
            sk.EstimatorSpec("stf5", kind="stf", max_iters=5),
            sk.EstimatorSpec("stf15", kind="stf", max_iters=15),
        ]
        reports = sk.run_mc_study(sc, specs, n_runs=200, seed=606)
        r5 = reports["stf5"].rmse_position
        r15 = reports["stf15"].rmse_position
        rel = abs(r5 - r15) / r15
        assert rel < 0.01
        report(6, f"q={q}: RMSE at 5 iterations {r5:.4f} vs 15 iterations "
                  f"{r15:.4f} ({rel:.3%} apart, <1%) over 200 runs")


# ---------------------------------------------------------------------------
# 7. Estimator ordering
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_estimator_ordering():
    sc = sk.tracking_scenario(q=0.5, delta=5.0, nu=4.0, K=100)
    specs = [
        sk.EstimatorSpec("stf"),
        sk.EstimatorSpec("sts", kind="sts"),
        sk.EstimatorSpec("kf_gated"),
        sk.EstimatorSpec("pf", n_particles=10_000),
    ]
    n_runs = 200
    reports = sk.run_mc_study(sc, specs, n_runs=n_runs, seed=707)
    stf = reports["stf"].per_run_rmse
    sts = reports["sts"].per_run_rmse
    kf = reports["kf_gated"].per_run_rmse
    pf = reports["pf"].per_run_rmse

    wins = int(np.sum(stf < kf))
    p_kf = binomtest(wins, n_runs, 0.5, alternative="greater").pvalue
    assert reports["stf"].rmse_position < reports["kf_gated"].rmse_position
    assert p_kf < 0.01

    wins_s = int(np.sum(sts < stf))
    ties = int(np.sum(sts == stf))
    p_sts = binomtest(wins_s, n_runs - ties, 0.5, alternative="greater").pvalue
    assert reports["sts"].rmse_position <= reports["stf"].rmse_position
    assert p_sts < 0.01

    diff = stf - pf
    se = float(np.std(diff, ddof=1) / math.sqrt(n_runs))
    assert reports["stf"].rmse_position >= reports["pf"].rmse_position - 3 * se
    report(7, f"RMSE: STF {reports['stf'].rmse_position:.3f} < KF "
              f"{reports['kf_gated'].rmse_position:.3f} (p={p_kf:.1e}); STS "
              f"{reports['sts'].rmse_position:.3f} <= STF (p={p_sts:.1e}); "
              f"STF >= PF(10k) {reports['pf'].rmse_position:.3f} - 3SE")


# ---------------------------------------------------------------------------
# 8. Bound constants and the bound-vs-PF grid
# ---------------------------------------------------------------------------

def test_criterion_08a_bound_constants():
    e0 = sk.fisher_univariate_E(0.0, 4.0)
    assert e0 == pytest.approx(5.0 / 7.0, abs=1e-8)
    model = sk.crlb_study_model(0.0, sk.GAUSSIAN_NU)
    E = sk.noise_E_matrix(model.noise)
    b50 = sk.crlb_filter_recursion(model, E, 50).B_filt[-1][0, 0]
    assert b50 == pytest.approx(11.8, abs=0.3)
    report(8, f"fisher_univariate_E(0,4) = {e0:.10f} (5/7 +- 1e-8); Gaussian "
              f"corner B50 = {b50:.3f} (11.8 +- 0.3)")


@pytest.mark.slow
def test_criterion_08b_bound_below_pf_mse_on_grid():
    runs = 500
    K = 50
    for delta_c in (0.0, 2.0, 5.0):
        for nu in (4.0, 10.0, sk.GAUSSIAN_NU):
            model = sk.crlb_study_model(delta_c, nu)
            E = sk.noise_E_matrix(model.noise)
            bound = sk.crlb_filter_recursion(model, E, K).B_filt[-1][0, 0]
            scenario = sk.LinearScenario(model, K=K)
            sq = np.zeros(runs)
            for r in range(runs):
                rng = stream(808, "cell", repr(delta_c), repr(nu), "run", r, "data")
                truth, ys = scenario.simulate(rng)
                pf = sk.pf_run(model, ys, 2000,
                               stream(808, "cell", repr(delta_c), repr(nu),
                                      "run", r, "pf"), h=scenario.h)
                sq[r] = (pf.means[-1, 0] - truth[-1, 0]) ** 2
            mse = float(np.mean(sq))
            se = float(np.std(sq, ddof=1) / math.sqrt(runs))
            assert bound <= mse + 3 * se
            report(8, f"(delta_c={delta_c}, nu={nu:g}): CRLB {bound:.2f} <= "
                      f"PF(2000) MSE {mse:.2f} + 3*{se:.2f}")


# ---------------------------------------------------------------------------
# 9. MVST consistency
# ---------------------------------------------------------------------------

def test_criterion_09_mvst_consistency():
    theta, nu = 0.7, 4.0
    ref = sk.fisher_univariate_E(theta, nu)
    res = sk.fisher_mvst_E(np.array([[theta]]), nu, n_mc=40_000, seed=909)
    gap = abs(res.E[0, 0] - ref)
    assert gap < 3 * res.stderr[0, 0]

    rng = np.random.default_rng(909)
    r, d = 1.3, 2.2
    indep = sk.SkewTNoise.independent([r], [d], [nu])
    mv = sk.SkewTNoise.multivariate([[r]], [[d]], nu)
    A = np.array([[0.9]])
    Q = np.array([[0.2]])
    C = np.array([[1.0]])
    m_i = sk.StateSpaceModel(A, Q, C, indep, np.zeros(1), np.eye(1))
    m_m = sk.StateSpaceModel(A, Q, C, mv, np.zeros(1), np.eye(1))
    ys = rng.standard_normal((40, 1)) * 3
    t_i = sk.stf_run(m_i, ys, sk.VBConfig())
    t_m = sk.stf_run(m_m, ys, sk.VBConfig())
    worst = max(float(np.max(np.abs(t_i.means - t_m.means))),
                float(np.max(np.abs(t_i.covs - t_m.covs))))
    assert worst < 1e-8
    s_i = sk.sts_run(m_i, ys, sk.VBConfig())
    s_m = sk.sts_run(m_m, ys, sk.VBConfig())
    worst_s = float(np.max(np.abs(s_i.means - s_m.means)))
    assert worst_s < 1e-8
    report(9, f"fisher_mvst_E(n=1) within {gap:.1e} of quadrature "
              f"(3SE={3 * res.stderr[0, 0]:.1e}); MVST filter/smoother at "
              f"n_y=1 match independent mode to {max(worst, worst_s):.1e}")


# ---------------------------------------------------------------------------
# 10. Reproducibility of the CLI and serialization
# ---------------------------------------------------------------------------

def test_criterion_10_reproducibility(tmp_path):
    from skewtvb.cli import main
    from skewtvb.tracks import read_track_jsonl, read_vector_track_jsonl

    cfg_text = """
[run]
seed = 31
runs = 3
out = "{out}"

[scenario]
kind = "tracking"
K = 10
q = 0.5
delta = 5.0

[estimators.stf]
max_iters = 5

[estimators.pf]
n_particles = 400

[trunc_bench]
cases = 10
c = [5.0]
oracle_samples = 50000
random_cases = 5
random_dim = 2

[crlb]
delta_c = [0.0, 2.0]
nu = [4.0]
K = 25
runs_per_cell = 2
pf_particles = 200
"""
    paths = {}
    for tag in ("a", "b"):
        out = tmp_path / tag
        cfg = tmp_path / f"cfg_{tag}.toml"
        cfg.write_text(cfg_text.format(out=out))
        for cmd in ("simulate", "estimate", "trunc-bench", "crlb"):
            assert main([cmd, "--config", str(cfg)]) == 0
        paths[tag] = out
    files = ["truth.jsonl", "measurements.jsonl", "metrics.csv",
             "stf_track.jsonl", "pf_track.jsonl", "trunc_bench.csv",
             "crlb_grid.csv"]
    for name in files:
        assert ((paths["a"] / name).read_bytes()
                == (paths["b"] / name).read_bytes()), name
    # lossless round trips
    ys, _ = read_vector_track_jsonl(paths["a"] / "measurements.jsonl")
    track, header = read_track_jsonl(paths["a"] / "stf_track.jsonl")
    assert ys.shape == (10, 8)
    assert track.K == 10
    assert len(header["config_sha256"]) == 64
    sc = sk.tracking_scenario(0.5, 5.0, nu=4.0, K=10)
    truth_ref, ys_ref = sc.simulate(stream(31, "run", 0, "data"))
    np.testing.assert_array_equal(ys, ys_ref)
    report(10, f"all {len(files)} CLI outputs byte-identical across reruns; "
               f"serialization round-trips are exact")
