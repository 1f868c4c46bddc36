"""Skew-t filter (STF) and smoother (STS).

Both estimators run variational coordinate ascent on a posterior factored as
q(x, u) q(Lambda): the state and the latent skewness variable u stay jointly
Gaussian (which is what removes most of the covariance underestimation of a
fully factored approximation), while Lambda collects the gamma mixing
variables that generate the heavy tails.

One coordinate step updates q(x, u) by a Kalman update on the augmented state
z = [x; u] followed by sequential truncation of the u block to the positive
orthant, then refreshes q(Lambda) from the residual statistics Psi.  The
filter iterates this per time step; the smoother wraps a forward pass plus an
RTS backward pass on the augmented beliefs inside a global iteration loop,
with Lambda persisting across global iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .skewt import INDEPENDENT, MULTIVARIATE, SkewTNoise
from .special import GAUSSIAN_NU
from .statespace import GaussianBelief, MeasureFn, StateSpaceModel, solve_psd
from .truncation import (
    DegenerateDimensionError,
    TruncationProblem,
    rec_trunc,
)


class NumericFailureError(RuntimeError):
    """A VB update produced a non-PSD or non-finite intermediate."""

    def __init__(self, message, iteration=None, step=None):
        super().__init__(message)
        self.iteration = iteration
        self.step = step


@dataclass
class VBConfig:
    """Iteration budget and convergence control for the VB loops."""

    max_iters: int = 5
    convergence_tol: float = 1e-6
    truncation_ordering: str = "optimal"
    ordering_seed: Optional[int] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class AugmentedBelief:
    """Joint Gaussian over the stacked state-and-skewness vector z = [x; u]."""

    z: np.ndarray
    Z: np.ndarray


@dataclass
class LambdaState:
    """Posterior mean of the mixing matrix Lambda (diagonal entries)."""

    mode: str
    values: np.ndarray

    def matrix(self) -> np.ndarray:
        return np.diag(self.values)


@dataclass
class EstimateTrack:
    """Per-step posterior moments plus whatever diagnostics a run produced."""

    means: np.ndarray
    covs: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.means.shape[0]


def psi_compute(y, z_post, Z_post, C, Delta, R):
    """Residual statistic Psi feeding the Lambda update.

    Psi = (y - C_z z)(y - C_z z)^T R^-1 + C_z Z C_z^T R^-1 + u u^T + U
    with C_z = [C  Delta] and (u, U) the u-block moments of (z, Z).
    """
    C = np.atleast_2d(C)
    Delta = np.atleast_2d(Delta)
    n_y = C.shape[0]
    n_x = C.shape[1]
    Cz = np.hstack([C, Delta])
    r = np.atleast_1d(y) - Cz @ z_post
    u = z_post[n_x:]
    U = Z_post[n_x:, n_x:]
    R = np.atleast_2d(R)
    r_diag = np.diag(R)
    if np.all(R == np.diag(r_diag)):
        if np.any(r_diag == 0.0):
            raise ValueError("R is singular")
        rinv_right = lambda M: M / r_diag[None, :]
    else:
        try:
            R_inv = np.linalg.inv(R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("R is singular") from exc
        rinv_right = lambda M: M @ R_inv
    psi = rinv_right(np.outer(r, r)) + rinv_right(Cz @ Z_post @ Cz.T)
    psi += np.outer(u, u) + U
    return psi


def lambda_update(psi: np.ndarray, noise: SkewTNoise) -> LambdaState:
    """Posterior-mean Lambda from Psi; nu >= 1e12 pins the entry to 1."""
    n_y = noise.n_y
    if noise.mode == INDEPENDENT:
        diag = np.diag(psi)
        values = np.empty(n_y)
        for i in range(n_y):
            nu_i = noise.nu[i]
            values[i] = 1.0 if nu_i >= GAUSSIAN_NU else (nu_i + 2.0) / (nu_i + diag[i])
        return LambdaState(INDEPENDENT, values)
    nu = noise.nu
    lam = 1.0 if nu >= GAUSSIAN_NU else (nu + 2.0 * n_y) / (nu + float(np.trace(psi)))
    return LambdaState(MULTIVARIATE, np.full(n_y, lam))


def _vb_measurement_update(x_pred, P_pred, lam_values, C, noise, y, cfg):
    """One q(x, u) coordinate step: augmented Kalman update plus truncation.

    Returns (z, Z, underflow_hits, used_pinv).
    """
    n_x = x_pred.shape[0]
    n_y = noise.n_y
    lam_inv = 1.0 / lam_values
    Delta = noise.Delta
    Cz = np.hstack([C, Delta])
    # innovation covariance C P C^T + Delta Lam^-1 Delta^T + Lam^-1 R
    S = C @ P_pred @ C.T + (Delta * lam_inv[None, :]) @ Delta.T + lam_inv[:, None] * noise.R
    S = 0.5 * (S + S.T)
    # Z_pred Cz^T = [P C^T; Lam^-1 Delta^T]
    cross = np.vstack([P_pred @ C.T, lam_inv[:, None] * Delta.T])
    Kt, used_pinv = solve_psd(S, cross.T)
    Kz = Kt.T
    innov = y - C @ x_pred
    z_tilde = np.concatenate([x_pred, np.zeros(n_y)]) + Kz @ innov
    IKC = np.eye(n_x + n_y) - Kz @ Cz
    Z_pred = np.zeros((n_x + n_y, n_x + n_y))
    Z_pred[:n_x, :n_x] = P_pred
    Z_pred[n_x:, n_x:] = np.diag(lam_inv)
    Z_tilde = IKC @ Z_pred
    Z_tilde = 0.5 * (Z_tilde + Z_tilde.T)
    res = rec_trunc(TruncationProblem(z_tilde, Z_tilde, tuple(range(n_x, n_x + n_y))),
                    ordering=cfg.truncation_ordering, seed=cfg.ordering_seed)
    return res.mu, res.sigma, res.underflow_hits, used_pinv


@dataclass
class STFStepDiagnostics:
    iterations: int = 0
    converged: bool = False
    mean_changes: list = field(default_factory=list)
    lambda_values: Optional[np.ndarray] = None
    psi: Optional[np.ndarray] = None
    augmented: Optional[AugmentedBelief] = None
    underflow_hits: int = 0
    used_pinv: bool = False


def stf_step(prior: GaussianBelief, C: np.ndarray, noise: SkewTNoise, y: np.ndarray,
             cfg: VBConfig = VBConfig()) -> tuple[GaussianBelief, STFStepDiagnostics]:
    """Single skew-t filter measurement update.

    Iterates the coupled q(x, u) / q(Lambda) coordinate steps from Lambda = I
    until the state mean moves less than `cfg.convergence_tol` (max-abs) or
    `cfg.max_iters` is reached; returns the x-marginal and diagnostics.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n_x = prior.dim
    n_y = noise.n_y
    lam = np.ones(n_y)
    diag = STFStepDiagnostics()
    x_prev = None
    z = Z = psi = None
    for it in range(1, cfg.max_iters + 1):
        try:
            z, Z, hits, used_pinv = _vb_measurement_update(
                prior.mean, prior.cov, lam, C, noise, y, cfg)
        except DegenerateDimensionError as exc:
            raise NumericFailureError(str(exc), iteration=it) from exc
        if not np.all(np.isfinite(z)):
            raise NumericFailureError("non-finite augmented mean", iteration=it)
        if np.any(np.diag(Z) < -1e-9 * max(float(np.max(np.diag(Z))), 1.0)):
            raise NumericFailureError("augmented covariance lost PSD-ness", iteration=it)
        diag.underflow_hits += hits
        diag.used_pinv |= used_pinv
        psi = psi_compute(y, z, Z, C, noise.Delta, noise.R)
        lam = lambda_update(psi, noise).values
        diag.iterations = it
        x_now = z[:n_x]
        if x_prev is not None:
            change = float(np.max(np.abs(x_now - x_prev)))
            diag.mean_changes.append(change)
            if change < cfg.convergence_tol:
                diag.converged = True
                break
        x_prev = x_now
    diag.lambda_values = lam
    diag.psi = psi
    diag.augmented = AugmentedBelief(z, Z)
    posterior = GaussianBelief(z[:n_x], 0.5 * (Z[:n_x, :n_x] + Z[:n_x, :n_x].T))
    return posterior, diag


def stf_run(model: StateSpaceModel, ys: np.ndarray, cfg: VBConfig = VBConfig(),
            measure: Optional[MeasureFn] = None) -> EstimateTrack:
    """Run the skew-t filter over a measurement track.

    `measure(k, x_pred)` supplies a per-step linearization (pseudoranges);
    without it the model's measurement matrix is used as-is.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    K = ys.shape[0]
    n_x = model.n_x
    means = np.zeros((K, n_x))
    covs = np.zeros((K, n_x, n_x))
    iters = np.zeros(K, dtype=int)
    lambdas = np.zeros((K, model.n_y))
    belief = model.prior()
    for k in range(K):
        if measure is not None:
            lin = measure(k, belief.mean)
            C_k, y_eff = lin.jacobian, lin.shifted(ys[k] - model.y_bias)
        else:
            C_k, y_eff = model.C_at(k), ys[k] - model.y_bias
        try:
            belief, d = stf_step(belief, C_k, model.noise, y_eff, cfg)
        except NumericFailureError as exc:
            exc.step = k
            raise
        means[k] = belief.mean
        covs[k] = belief.cov
        iters[k] = d.iterations
        lambdas[k] = d.lambda_values
        if k + 1 < K:
            A_k = model.A_at(k)
            pred_cov = A_k @ belief.cov @ A_k.T + model.Q_at(k)
            belief = GaussianBelief(A_k @ belief.mean, 0.5 * (pred_cov + pred_cov.T))
    return EstimateTrack(means, covs, {"vb_iterations": iters, "lambda": lambdas})


def sts_run(model: StateSpaceModel, ys: np.ndarray, cfg: VBConfig = VBConfig(),
            measure: Optional[MeasureFn] = None) -> EstimateTrack:
    """Run the skew-t smoother: global VB iterations over a forward filtering
    pass on the augmented state, an RTS backward pass, and the Lambda refresh.

    Lambda persists across global iterations.  Convergence is declared when
    no smoothed state mean moves more than `cfg.convergence_tol`.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    K = ys.shape[0]
    if K < 1:
        raise ValueError("need at least one measurement")
    n_x, n_y = model.n_x, model.n_y
    n_z = n_x + n_y
    lam = np.ones((K, n_y))
    x_smooth_prev = None
    iterations = 0
    converged = False
    underflow_hits = 0
    z_s = np.zeros((K, n_z))
    Z_s = np.zeros((K, n_z, n_z))
    for it in range(1, cfg.max_iters + 1):
        iterations = it
        # forward pass on the augmented state
        z_f = np.zeros((K, n_z))
        Z_f = np.zeros((K, n_z, n_z))
        pred_means = np.zeros((K, n_x))
        pred_covs = np.zeros((K, n_x, n_x))
        C_used = np.zeros((K, n_y, n_x))
        x_pred, P_pred = model.x0, model.P0
        for k in range(K):
            pred_means[k] = x_pred
            pred_covs[k] = P_pred
            if measure is not None:
                lin = measure(k, x_pred)
                C_k, y_eff = lin.jacobian, lin.shifted(ys[k] - model.y_bias)
            else:
                C_k, y_eff = model.C_at(k), ys[k] - model.y_bias
            C_used[k] = C_k
            try:
                z, Z, hits, _ = _vb_measurement_update(
                    x_pred, P_pred, lam[k], C_k, model.noise, y_eff, cfg)
            except DegenerateDimensionError as exc:
                raise NumericFailureError(str(exc), iteration=it, step=k) from exc
            underflow_hits += hits
            z_f[k] = z
            Z_f[k] = Z
            if k + 1 < K:
                A_k = model.A_at(k)
                x_pred = A_k @ z[:n_x]
                P_pred = A_k @ Z[:n_x, :n_x] @ A_k.T + model.Q_at(k)
                P_pred = 0.5 * (P_pred + P_pred.T)
        # backward pass (augmented transition [[A, 0], [0, 0]])
        z_s[K - 1] = z_f[K - 1]
        Z_s[K - 1] = Z_f[K - 1]
        for k in range(K - 2, -1, -1):
            A_z = np.zeros((n_z, n_z))
            A_z[:n_x, :n_x] = model.A_at(k)
            Z_next_pred = np.zeros((n_z, n_z))
            Z_next_pred[:n_x, :n_x] = pred_covs[k + 1]
            Z_next_pred[n_x:, n_x:] = np.diag(1.0 / lam[k + 1])
            Gt, _ = solve_psd(Z_next_pred, A_z @ Z_f[k])
            G = Gt.T
            z_s[k] = z_f[k] + G @ (z_s[k + 1] - A_z @ z_f[k])
            cov = Z_f[k] + G @ (Z_s[k + 1] - Z_next_pred) @ G.T
            Z_s[k] = 0.5 * (cov + cov.T)
        # q(Lambda) refresh from the smoothed moments
        for k in range(K):
            y_eff = ys[k] - model.y_bias
            if measure is not None:
                # same effective measurement the forward pass used
                lin = measure(k, pred_means[k])
                y_eff = lin.shifted(y_eff)
            psi = psi_compute(y_eff, z_s[k], Z_s[k], C_used[k], model.noise.Delta,
                              model.noise.R)
            lam[k] = lambda_update(psi, model.noise).values
        x_smooth = z_s[:, :n_x]
        if x_smooth_prev is not None:
            change = float(np.max(np.abs(x_smooth - x_smooth_prev)))
            if change < cfg.convergence_tol:
                converged = True
                break
        x_smooth_prev = x_smooth.copy()
    means = z_s[:, :n_x].copy()
    covs = np.array([0.5 * (Z[: n_x, : n_x] + Z[: n_x, : n_x].T) for Z in Z_s])
    return EstimateTrack(means, covs, {
        "global_iterations": iterations,
        "converged": converged,
        "lambda": lam,
        "underflow_hits": underflow_hits,
    })
