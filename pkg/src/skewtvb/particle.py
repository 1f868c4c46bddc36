"""Bootstrap particle filter used as the near-optimal reference estimator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .skewt import INDEPENDENT, SkewTNoise, mvst_logpdf, st_logpdf
from .statespace import StateSpaceModel
from .vb import EstimateTrack


class ParticleDepletionError(RuntimeError):
    """All particle weights collapsed to -inf."""

    def __init__(self, message, step=None, max_logpdf=None):
        super().__init__(message)
        self.step = step
        self.max_logpdf = max_logpdf


@dataclass
class ParticleCloud:
    """Weighted particle representation of a filtering posterior."""

    states: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.log_weights = np.atleast_1d(np.asarray(self.log_weights, dtype=float))
        if self.states.shape[0] != self.log_weights.shape[0]:
            raise ValueError("states and log_weights must have matching length")

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights
        m = np.max(lw)
        w = np.exp(lw - m)
        return w / np.sum(w)

    def ess(self) -> float:
        w = self.normalized_weights()
        return 1.0 / float(np.sum(w * w))

    def mean(self) -> np.ndarray:
        return self.normalized_weights() @ self.states

    def cov(self) -> np.ndarray:
        w = self.normalized_weights()
        d = self.states - w @ self.states
        return (d * w[:, None]).T @ d


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling indices for normalized weights."""
    n = weights.shape[0]
    positions = (np.arange(n) + rng.random()) / n
    return np.searchsorted(np.cumsum(weights), positions, side="left").clip(0, n - 1)


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (Q + Q.T))
    return v * np.sqrt(np.clip(w, 0.0, None))


def _noise_loglik(noise: SkewTNoise, residuals: np.ndarray) -> np.ndarray:
    if noise.mode == INDEPENDENT:
        comps = noise.components()
        if all(c == comps[0] for c in comps[1:]):
            # identical components: one flattened density call
            return np.sum(st_logpdf(comps[0], residuals), axis=-1)
        total = np.zeros(residuals.shape[0])
        for i, comp in enumerate(comps):
            total += st_logpdf(comp, residuals[:, i])
        return total
    return mvst_logpdf(noise.mvst(), residuals)


def pf_step(cloud: ParticleCloud, A: np.ndarray, Q: np.ndarray, y: np.ndarray,
            noise: SkewTNoise, rng: np.random.Generator,
            measure: Optional[Callable[[np.ndarray], np.ndarray]] = None,
            propagate: bool = True, resample_fraction: float = 0.5) -> ParticleCloud:
    """One bootstrap step: propagate, reweight by the exact skew-t likelihood,
    and systematically resample when ESS < resample_fraction * n_p.

    `measure(states) -> (n_p, n_y)` maps particles to predicted measurements;
    defaults to nothing, in which case states are measured directly.
    """
    states = cloud.states
    lw = cloud.log_weights.copy()
    n_p = states.shape[0]
    if propagate:
        A = np.atleast_2d(A)
        noise_draw = rng.standard_normal((n_p, A.shape[0])) @ _psd_sqrt(np.atleast_2d(Q)).T
        states = states @ A.T + noise_draw
    predicted = measure(states) if measure is not None else states
    lw = lw + _noise_loglik(noise, np.atleast_1d(y)[None, :] - predicted)
    finite = np.isfinite(lw)
    if not np.any(finite):
        raise ParticleDepletionError(
            "all particle weights are -inf; the measurement is irreconcilable "
            "with the predicted cloud", max_logpdf=float(np.max(cloud.log_weights)))
    out = ParticleCloud(states, lw)
    if out.ess() < resample_fraction * n_p:
        idx = systematic_resample(out.normalized_weights(), rng)
        out = ParticleCloud(states[idx], np.zeros(n_p))
    return out


def pf_run(model: StateSpaceModel, ys: np.ndarray, n_particles: int,
           rng: np.random.Generator,
           h: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> EstimateTrack:
    """Run the bootstrap filter over a track and return weighted moments.

    `h(states) -> (n_p, n_y)` is the exact (possibly nonlinear) measurement
    function; the default is the model's linear map plus its y_bias.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    K = ys.shape[0]
    n_x = model.n_x
    if h is None:
        def h(states, _model=model):
            return states @ _model.C.T + _model.y_bias
    chol0 = _psd_sqrt(model.P0)
    states = model.x0 + rng.standard_normal((int(n_particles), n_x)) @ chol0.T
    cloud = ParticleCloud(states, np.zeros(int(n_particles)))
    means = np.zeros((K, n_x))
    covs = np.zeros((K, n_x, n_x))
    ess = np.zeros(K)
    n_p = int(n_particles)
    for k in range(K):
        try:
            # moments are taken from the weighted cloud, so resampling is done
            # here after the estimate rather than inside pf_step
            cloud = pf_step(cloud, model.A_at(k - 1) if k else None,
                            model.Q_at(k - 1) if k else None, ys[k], model.noise,
                            rng, measure=h, propagate=k > 0, resample_fraction=0.0)
        except ParticleDepletionError as exc:
            exc.step = k
            raise
        means[k] = cloud.mean()
        covs[k] = cloud.cov()
        ess[k] = cloud.ess()
        if ess[k] < 0.5 * n_p:
            idx = systematic_resample(cloud.normalized_weights(), rng)
            cloud = ParticleCloud(cloud.states[idx], np.zeros(n_p))
    return EstimateTrack(means, covs, {"ess": ess, "n_particles": n_p})
