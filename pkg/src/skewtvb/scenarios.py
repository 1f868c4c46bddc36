"""Simulation studies: pseudorange positioning, outlier injection, and the
performance-bound model, plus the Monte-Carlo harness that runs estimator
ensembles under common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .particle import ParticleDepletionError, pf_run
from .seeding import stream
from .skewt import SkewTNoise, sample_noise, zero_mean_reparam
from .special import GAUSSIAN_NU
from .statespace import (
    GaussianBelief,
    StateSpaceModel,
    kf_filter,
    linearize_pseudorange,
    pseudorange_measurements,
    rtss_backward,
)
from .vb import EstimateTrack, NumericFailureError, VBConfig, stf_run, sts_run

SAT_RADIUS_M = 2.0e7
MIN_ELEVATION_DEG = 10.0

# Preset: 8 azimuth-spread directions with elevations between 15 and 85 deg.
_PRESET_AZ_EL_DEG = (
    (0.0, 15.0), (45.0, 35.0), (90.0, 55.0), (135.0, 25.0),
    (180.0, 70.0), (225.0, 45.0), (270.0, 85.0), (315.0, 20.0),
)


def gen_constellation(seed: Optional[int] = None, n_sats: int = 8) -> np.ndarray:
    """Satellite positions on a 2e7 m shell, elevation above 10 degrees.

    `seed=None` returns the fixed preset geometry; an integer seed draws a
    random constellation deterministically.
    """
    if seed is None:
        az_el = np.deg2rad(np.array(_PRESET_AZ_EL_DEG[:n_sats]))
        if n_sats > len(_PRESET_AZ_EL_DEG):
            raise ValueError("preset geometry provides at most 8 satellites")
        az, el = az_el[:, 0], az_el[:, 1]
    else:
        rng = stream(seed, "constellation")
        az = rng.uniform(0.0, 2.0 * math.pi, n_sats)
        el = np.deg2rad(rng.uniform(MIN_ELEVATION_DEG + 1.0, 89.0, n_sats))
    cos_el = np.cos(el)
    dirs = np.stack([cos_el * np.cos(az), cos_el * np.sin(az), np.sin(el)], axis=1)
    return SAT_RADIUS_M * dirs


def inject_negative_outlier(e: np.ndarray, c: float, rng, delta: float = 20.0) -> np.ndarray:
    """Replace one random component with min(min(e), 0) - c sqrt(1 + delta^2)."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    e = np.array(e, dtype=float, copy=True)
    j = int(rng.integers(e.shape[0]))
    e[j] = min(float(np.min(e)), 0.0) - c * math.sqrt(1.0 + delta * delta)
    return e


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

@dataclass
class PseudorangeScenario:
    """K-step satellite positioning with independent skew-t range noise.

    State is (pos_x, pos_y, pos_z, clock); the truth starts from the prior and
    follows a random walk with Q = diag(q^2, q^2, 0.2^2, 0).
    """

    sat_positions: np.ndarray
    prior: GaussianBelief
    q: float
    delta: float
    nu: float = 4.0
    r: float = 1.0
    K: int = 1
    clock_index: int = 3
    outlier_c: Optional[float] = None

    def __post_init__(self):
        self.sat_positions = np.atleast_2d(np.asarray(self.sat_positions, dtype=float))
        if self.sat_positions.shape[0] < 4:
            raise ValueError("need at least 4 satellites")
        if self.q < 0:
            raise ValueError("q must be nonnegative")

    @property
    def n_y(self) -> int:
        return self.sat_positions.shape[0]

    def noise(self) -> SkewTNoise:
        n = self.n_y
        return SkewTNoise.independent(np.full(n, self.r), np.full(n, self.delta),
                                      np.full(n, self.nu))

    def model(self) -> StateSpaceModel:
        n_x = self.prior.dim
        Q = np.diag([self.q ** 2, self.q ** 2, 0.2 ** 2, 0.0])
        lin0 = linearize_pseudorange(self.sat_positions, self.clock_index,
                                     self.prior.mean)
        return StateSpaceModel(np.eye(n_x), Q, lin0.jacobian, self.noise(),
                               self.prior.mean, self.prior.cov)

    def measure(self, k: int, x_lin: np.ndarray):
        return linearize_pseudorange(self.sat_positions, self.clock_index, x_lin)

    def h(self, states: np.ndarray) -> np.ndarray:
        return pseudorange_measurements(self.sat_positions, self.clock_index, states)

    def simulate(self, rng: np.random.Generator):
        """Draw (truth, measurements); truth starts from the prior."""
        model = self.model()
        n_x = self.prior.dim
        truth = np.zeros((self.K, n_x))
        if self.K == 0:
            return truth, np.zeros((0, self.n_y))
        chol0 = np.linalg.cholesky(self.prior.cov + 1e-12 * np.eye(n_x))
        truth[0] = self.prior.mean + chol0 @ rng.standard_normal(n_x)
        q_sqrt = np.sqrt(np.diag(model.Q))
        for k in range(1, self.K):
            truth[k] = truth[k - 1] + q_sqrt * rng.standard_normal(n_x)
        noise = sample_noise(self.noise(), self.K, seed=rng)
        if self.outlier_c is not None:
            for k in range(self.K):
                noise[k] = inject_negative_outlier(noise[k], self.outlier_c, rng,
                                                   delta=self.delta)
        ys = self.h(truth) + noise
        return truth, ys


def single_epoch_scenario(delta: float, nu: float = GAUSSIAN_NU,
                          sat_positions: Optional[np.ndarray] = None,
                          outlier_c: Optional[float] = None,
                          r: float = 1.0) -> PseudorangeScenario:
    """One-shot positioning epoch: loose horizontal prior, tight vertical and
    clock priors (ordering pos-x, pos-y, pos-z, clock)."""
    sats = gen_constellation() if sat_positions is None else sat_positions
    prior = GaussianBelief(np.zeros(4), np.diag([20.0 ** 2, 20.0 ** 2,
                                                 0.22 ** 2, 0.1 ** 2]))
    return PseudorangeScenario(sats, prior, q=0.0, delta=delta, nu=nu, r=r, K=1,
                               outlier_c=outlier_c)


def tracking_scenario(q: float, delta: float, nu: float = 4.0, K: int = 100,
                      sat_positions: Optional[np.ndarray] = None,
                      r: float = 1.0) -> PseudorangeScenario:
    """Random-walk tracking study; clock-bias prior N(0, 0.75^2)."""
    sats = gen_constellation() if sat_positions is None else sat_positions
    prior = GaussianBelief(np.zeros(4), np.diag([20.0 ** 2, 20.0 ** 2,
                                                 0.22 ** 2, 0.75 ** 2]))
    return PseudorangeScenario(sats, prior, q=q, delta=delta, nu=nu, r=r, K=K)


@dataclass
class LinearScenario:
    """Plain linear scenario around an explicit StateSpaceModel."""

    base_model: StateSpaceModel
    K: int

    def model(self) -> StateSpaceModel:
        return self.base_model

    measure = None

    def h(self, states: np.ndarray) -> np.ndarray:
        return states @ self.base_model.C.T + self.base_model.y_bias

    def simulate(self, rng: np.random.Generator):
        m = self.base_model
        n_x = m.n_x
        truth = np.zeros((self.K, n_x))
        if self.K == 0:
            return truth, np.zeros((0, m.n_y))
        chol0 = np.linalg.cholesky(m.P0 + 1e-12 * np.eye(n_x))
        truth[0] = m.x0 + chol0 @ rng.standard_normal(n_x)
        w, v = np.linalg.eigh(0.5 * (m.Q + m.Q.T))
        q_fac = v * np.sqrt(np.clip(w, 0.0, None))
        for k in range(1, self.K):
            truth[k] = m.A @ truth[k - 1] + q_fac @ rng.standard_normal(n_x)
        noise = sample_noise(m.noise, self.K, seed=rng)
        ys = self.h(truth) + noise
        return truth, ys


def crlb_study_model(delta_c: float, nu: float, omega2: float = 25.0,
                     P0: Optional[np.ndarray] = None) -> StateSpaceModel:
    """Two-state constant-velocity model with zero-mean skew-t measurement
    noise of variance omega2; the noise location enters as a measurement bias.
    """
    if nu <= 2.0:
        raise ValueError("nu must exceed 2 for a finite-variance noise model")
    d = zero_mean_reparam(delta_c, nu, omega2)
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    Q = np.array([[1.0 / 3.0, 1.0 / 2.0], [1.0 / 2.0, 1.0]])
    C = np.array([[1.0, 0.0]])
    noise = SkewTNoise.independent([d.sigma2], [d.delta], [d.nu])
    if P0 is None:
        P0 = np.diag([100.0, 100.0])
    return StateSpaceModel(A, Q, C, noise, np.zeros(2), P0, y_bias=np.array([d.mu]))


def gnss_clock_cv_model(n_steps: int, dt: float = 1.0, q: float = 0.5,
                        s_b: float = 70.0, s_f: float = 0.6,
                        noise: Optional[SkewTNoise] = None,
                        sat_positions: Optional[np.ndarray] = None) -> StateSpaceModel:
    """Almost-constant-velocity model with a two-state receiver clock.

    State: (pos 3, vel 3, clock bias, clock drift).  Exercised synthetically;
    real receiver data is out of scope.
    """
    A = np.eye(8)
    A[:3, 3:6] = dt * np.eye(3)
    A[6, 7] = dt
    Q = np.zeros((8, 8))
    Q[:3, :3] = q * q * dt ** 3 / 3.0 * np.eye(3)
    Q[:3, 3:6] = q * q * dt ** 2 / 2.0 * np.eye(3)
    Q[3:6, :3] = Q[:3, 3:6]
    Q[3:6, 3:6] = q * q * dt * np.eye(3)
    Q[6, 6] = s_b * dt + s_f * dt ** 3 / 3.0
    Q[6, 7] = s_f * dt ** 2 / 2.0
    Q[7, 6] = Q[6, 7]
    Q[7, 7] = s_f * dt
    sats = gen_constellation() if sat_positions is None else sat_positions
    if noise is None:
        n = sats.shape[0]
        noise = SkewTNoise.independent(np.full(n, 0.8 ** 2), np.full(n, 16.8),
                                       np.full(n, 4.0))
    x0 = np.zeros(8)
    P0 = np.diag([100.0 ** 2] * 3 + [10.0 ** 2] * 3 + [100.0 ** 2, 10.0 ** 2])
    lin0 = linearize_pseudorange(sats, 6, x0)
    return StateSpaceModel(A, Q, lin0.jacobian, noise, x0, P0)


# ---------------------------------------------------------------------------
# Estimator registry and the Monte-Carlo harness
# ---------------------------------------------------------------------------

KNOWN_ESTIMATORS = ("stf", "sts", "kf_gated", "rtss_gated", "pf")


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator selection with options (VB config, particle count, gate)."""

    name: str
    kind: Optional[str] = None
    max_iters: int = 5
    convergence_tol: float = 1e-6
    ordering: str = "optimal"
    ordering_seed: Optional[int] = None
    n_particles: int = 2000
    gate_quantile: float = 0.99

    def resolved_kind(self) -> str:
        kind = self.kind or self.name
        if kind not in KNOWN_ESTIMATORS:
            raise ValueError(f"unknown estimator kind {kind!r}; "
                             f"choose from {KNOWN_ESTIMATORS}")
        return kind

    def vb_config(self) -> VBConfig:
        return VBConfig(self.max_iters, self.convergence_tol, self.ordering,
                        self.ordering_seed)


def run_estimator(spec: EstimatorSpec, scenario, model: StateSpaceModel,
                  ys: np.ndarray, pf_rng=None) -> EstimateTrack:
    """Run one estimator on a simulated track."""
    kind = spec.resolved_kind()
    measure = scenario.measure
    if kind == "stf":
        return stf_run(model, ys, spec.vb_config(), measure=measure)
    if kind == "sts":
        return sts_run(model, ys, spec.vb_config(), measure=measure)
    if kind in ("kf_gated", "rtss_gated"):
        comps = model.noise.components()
        r_diag = np.array([c.var() for c in comps])
        bias = np.array([c.mean() for c in comps])
        track = kf_filter(model, ys, r_diag, gate_quantile=spec.gate_quantile,
                          measure=measure, y_extra_bias=bias)
        if kind == "kf_gated":
            return EstimateTrack(track.means, track.covs, {})
        sm, sc, used_pinv = rtss_backward(track.means, track.covs, model.A, model.Q)
        return EstimateTrack(sm, sc, {"used_pinv": used_pinv})
    if kind == "pf":
        if pf_rng is None:
            raise ValueError("pf estimator needs an explicit rng")
        return pf_run(model, ys, spec.n_particles, pf_rng, h=scenario.h)
    raise AssertionError(kind)


@dataclass
class MetricReport:
    """Aggregate and per-run metrics for one estimator over an MC study."""

    estimator: str
    n_runs: int
    rmse_position: float
    nees_mean: float
    nees_quantiles: dict
    per_run_rmse: np.ndarray
    per_run_nees_mean: np.ndarray
    per_run_seeds: list
    n_failed: int = 0
    extra: dict = field(default_factory=dict)


def position_errors(track: EstimateTrack, truth: np.ndarray,
                    idx: Sequence[int]) -> np.ndarray:
    return track.means[:, idx] - truth[:, idx]


def nees_values(track: EstimateTrack, truth: np.ndarray, idx: Sequence[int]) -> np.ndarray:
    """Normalized estimation error squared over the chosen state block."""
    idx = np.asarray(idx, dtype=int)
    e = track.means[:, idx] - truth[:, idx]
    out = np.empty(e.shape[0])
    for k in range(e.shape[0]):
        P = track.covs[k][np.ix_(idx, idx)]
        out[k] = float(e[k] @ np.linalg.solve(P, e[k]))
    return out


def mc_study_runs(scenario, estimators: Sequence[EstimatorSpec],
                  run_indices: Sequence[int], seed: int,
                  error_indices: Sequence[int] = (0, 1, 2)) -> list:
    """Per-run records for a common-random-numbers study.

    Every run draws one (truth, measurements) pair from a run-specific stream,
    shared by all estimators; PF streams are keyed by estimator name, so each
    estimator's record is bit-identical however the list is ordered or the
    run indices are partitioned across workers.
    """
    error_indices = tuple(error_indices)
    records = []
    for r in run_indices:
        data_rng = stream(seed, "run", int(r), "data")
        truth, ys = scenario.simulate(data_rng)
        model = scenario.model()
        rec = {"run": int(r), "results": {}}
        for spec in estimators:
            pf_rng = stream(seed, "run", int(r), "est", spec.name)
            try:
                track = run_estimator(spec, scenario, model, ys, pf_rng=pf_rng)
            except (NumericFailureError, ParticleDepletionError,
                    np.linalg.LinAlgError) as exc:
                rec["results"][spec.name] = {"failed": True, "error": str(exc)}
                continue
            e = position_errors(track, truth, error_indices)
            nv = nees_values(track, truth, error_indices)
            rec["results"][spec.name] = {
                "failed": False,
                "rmse": float(np.sqrt(np.mean(np.sum(e * e, axis=1)))),
                "nees": nv.tolist(),
            }
        records.append(rec)
    return records


def aggregate_reports(records: list, estimators: Sequence[EstimatorSpec]) -> dict:
    """Fold per-run records into one MetricReport per estimator."""
    reports = {}
    for spec in estimators:
        rmse, nees_mean_arr, nees_pool, seeds = [], [], [], []
        failed = 0
        for rec in records:
            res = rec["results"].get(spec.name)
            if res is None:
                continue
            if res["failed"]:
                failed += 1
                continue
            rmse.append(res["rmse"])
            nees_mean_arr.append(float(np.mean(res["nees"])))
            nees_pool.extend(res["nees"])
            seeds.append(rec["run"])
        rmse = np.asarray(rmse)
        nees_pool = np.asarray(nees_pool)
        qs = {q: float(np.percentile(nees_pool, q)) for q in (5, 25, 50, 75, 95)} \
            if nees_pool.size else {}
        reports[spec.name] = MetricReport(
            estimator=spec.name,
            n_runs=len(rmse),
            rmse_position=float(np.sqrt(np.mean(rmse ** 2))) if rmse.size else math.nan,
            nees_mean=float(np.mean(nees_pool)) if nees_pool.size else math.nan,
            nees_quantiles=qs,
            per_run_rmse=rmse,
            per_run_nees_mean=np.asarray(nees_mean_arr),
            per_run_seeds=seeds,
            n_failed=failed,
        )
    return reports


def run_mc_study(scenario, estimators: Sequence[EstimatorSpec], n_runs: int,
                 seed: int, error_indices: Sequence[int] = (0, 1, 2)) -> dict:
    """Serial common-random-numbers Monte-Carlo study; see mc_study_runs."""
    names = [s.name for s in estimators]
    if len(set(names)) != len(names):
        raise ValueError("estimator names must be unique")
    records = mc_study_runs(scenario, estimators, range(int(n_runs)), seed,
                            error_indices)
    return aggregate_reports(records, estimators)


def outlier_ordering_study(c: float, n_cases: int, seed: int, delta: float = 20.0,
                           n_is: int = 20_000, max_iters: int = 5) -> dict:
    """Optimal vs random truncation ordering on outlier-injected epochs.

    Each case is a single skew-normal pseudorange epoch with one injected
    negative outlier of size c.  The filter posterior mean is computed with
    both orderings and compared against a prior-proposal importance-sampling
    posterior (a one-step bootstrap PF, the reference the truncation error is
    measured against).  Returns position-error arrays and mean wall times.
    """
    import time

    from .seeding import philox_key

    topt = np.zeros(n_cases)
    trand = np.zeros(n_cases)
    t_opt = 0.0
    t_rand = 0.0
    label = f"c={c!r}"
    for i in range(n_cases):
        scenario = single_epoch_scenario(delta, nu=GAUSSIAN_NU, outlier_c=c)
        rng = stream(seed, "outlier-study", label, "case", i, "data")
        truth, ys = scenario.simulate(rng)
        model = scenario.model()
        oracle = pf_run(model, ys, n_is,
                        stream(seed, "outlier-study", label, "case", i, "oracle"),
                        h=scenario.h)
        ref = oracle.means[0, :3]
        spec_opt = EstimatorSpec("topt", kind="stf", max_iters=max_iters)
        spec_rand = EstimatorSpec(
            "trand", kind="stf", max_iters=max_iters, ordering="random",
            ordering_seed=philox_key(seed, "outlier-study", label, "case", i) % 2 ** 63)
        t0 = time.perf_counter()
        track_opt = run_estimator(spec_opt, scenario, model, ys)
        t1 = time.perf_counter()
        track_rand = run_estimator(spec_rand, scenario, model, ys)
        t2 = time.perf_counter()
        t_opt += t1 - t0
        t_rand += t2 - t1
        topt[i] = float(np.linalg.norm(track_opt.means[0, :3] - ref))
        trand[i] = float(np.linalg.norm(track_rand.means[0, :3] - ref))
    return {"topt": topt, "trand": trand,
            "topt_time": t_opt / max(n_cases, 1),
            "trand_time": t_rand / max(n_cases, 1)}
