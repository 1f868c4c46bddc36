"""Linear-Gaussian state-space machinery.

Model and belief containers, the Kalman filter with per-component validation
gating, the Rauch-Tung-Striebel backward pass, and first-order linearization
of the pseudorange measurement function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .skewt import SkewTNoise
from .special import chi2_ppf


class DegenerateGeometryError(ValueError):
    """Receiver and satellite coincide; the range direction is undefined."""


@dataclass
class GaussianBelief:
    """Mean and covariance of a Gaussian state estimate."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"cov must be {n}x{n}, got {self.cov.shape}")
        scale = np.max(np.abs(self.cov)) or 1.0
        if np.max(np.abs(self.cov - self.cov.T)) > 1e-9 * scale:
            raise ValueError("cov is not symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def validate(self, tol: float = 1e-10):
        w = np.linalg.eigvalsh(0.5 * (self.cov + self.cov.T))
        if w.size and w[0] < -tol * max(w[-1], 1.0):
            raise ValueError(f"cov has eigenvalue {w[0]:.3e} below -tol")


@dataclass
class StateSpaceModel:
    """x_{k+1} = A x_k + w_k,  y_k = C x_k + y_bias + e_k.

    `noise` is the skew-t measurement noise; `x0`, `P0` the prior at k = 0.
    Per-step overrides (`A_seq`, `Q_seq`, `C_seq`, arrays indexed by k) make
    the model nonstationary where needed.
    """

    A: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    noise: SkewTNoise
    x0: np.ndarray
    P0: np.ndarray
    y_bias: Optional[np.ndarray] = None
    A_seq: Optional[np.ndarray] = None
    Q_seq: Optional[np.ndarray] = None
    C_seq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        self.P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))
        n_x = self.x0.shape[0]
        n_y = self.C.shape[0]
        if self.A.shape != (n_x, n_x) or self.Q.shape != (n_x, n_x):
            raise ValueError("A and Q must be n_x x n_x")
        if self.C.shape[1] != n_x or self.P0.shape != (n_x, n_x):
            raise ValueError("C columns and P0 must match the state dimension")
        if self.noise.n_y != n_y:
            raise ValueError("noise dimension must match the rows of C")
        if self.y_bias is None:
            self.y_bias = np.zeros(n_y)
        else:
            self.y_bias = np.atleast_1d(np.asarray(self.y_bias, dtype=float))
        for name, mat in (("Q", self.Q), ("P0", self.P0)):
            w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
            if w.size and w[0] < -1e-9 * max(w[-1], 1.0):
                raise ValueError(f"{name} is not positive semidefinite")

    @property
    def n_x(self) -> int:
        return self.x0.shape[0]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def A_at(self, k: int) -> np.ndarray:
        return self.A if self.A_seq is None else self.A_seq[k]

    def Q_at(self, k: int) -> np.ndarray:
        return self.Q if self.Q_seq is None else self.Q_seq[k]

    def C_at(self, k: int) -> np.ndarray:
        return self.C if self.C_seq is None else self.C_seq[k]

    def prior(self) -> GaussianBelief:
        return GaussianBelief(self.x0.copy(), self.P0.copy())


@dataclass
class LinearizedMeasurement:
    """First-order model y ~ jacobian @ x + offset + e around a lin. point."""

    jacobian: np.ndarray
    offset: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.jacobian @ x + self.offset

    def shifted(self, y: np.ndarray) -> np.ndarray:
        """y_eff = y - h(x_lin) + jacobian @ x_lin, to feed a linear filter."""
        return np.asarray(y, dtype=float) - self.offset


MeasureFn = Callable[[int, np.ndarray], LinearizedMeasurement]


def linearize_pseudorange(sat_positions: np.ndarray, clock_state_index: int,
                          x_lin: np.ndarray) -> LinearizedMeasurement:
    """Jacobian and offset of ||s_i - pos|| + clock at the point `x_lin`.

    Positions occupy state components 0:3; `clock_state_index` points at the
    additive clock-bias component.
    """
    sats = np.atleast_2d(np.asarray(sat_positions, dtype=float))
    x_lin = np.asarray(x_lin, dtype=float)
    pos = x_lin[:3]
    diff = pos - sats
    ranges = np.linalg.norm(diff, axis=1)
    if np.any(ranges < 1e-9):
        raise DegenerateGeometryError("satellite coincides with the receiver position")
    n_y = sats.shape[0]
    n_x = x_lin.shape[0]
    C = np.zeros((n_y, n_x))
    C[:, :3] = diff / ranges[:, None]
    C[:, clock_state_index] = 1.0
    predicted = ranges + x_lin[clock_state_index]
    offset = predicted - C @ x_lin
    return LinearizedMeasurement(C, offset)


def pseudorange_measurements(sat_positions: np.ndarray, clock_state_index: int,
                             states: np.ndarray) -> np.ndarray:
    """Exact nonlinear pseudoranges for a batch of states (rows)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    diff = states[:, None, :3] - np.atleast_2d(sat_positions)[None, :, :]
    return np.linalg.norm(diff, axis=2) + states[:, clock_state_index][:, None]


# ---------------------------------------------------------------------------
# Kalman filter / RTS smoother
# ---------------------------------------------------------------------------

def kf_predict(belief: GaussianBelief, A: np.ndarray, Q: np.ndarray) -> GaussianBelief:
    """Time update; the covariance is re-symmetrized."""
    mean = A @ belief.mean
    cov = A @ belief.cov @ A.T + Q
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def kf_update_gated(belief: GaussianBelief, C: np.ndarray, r_diag: np.ndarray,
                    y: np.ndarray, gate_quantile: float = 0.99) -> GaussianBelief:
    """Measurement update with per-component chi-square validation gating.

    Components are processed sequentially in measurement order (exact for the
    diagonal noise assumed here); any component whose normalized innovation
    squared exceeds the chi_1^2 quantile is discarded.  `gate_quantile >= 1`
    disables gating.  If every component is gated the belief is returned
    unchanged (same propagation as an empty update).
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    r_diag = np.atleast_1d(np.asarray(r_diag, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    threshold = np.inf if gate_quantile >= 1.0 else chi2_ppf(gate_quantile, 1.0)
    x = belief.mean.copy()
    P = belief.cov.copy()
    for i in range(C.shape[0]):
        c = C[i]
        Pc = P @ c
        s = float(c @ Pc + r_diag[i])
        innov = float(y[i] - c @ x)
        if innov * innov / s > threshold:
            continue
        gain = Pc / s
        x = x + gain * innov
        P = P - np.outer(gain, Pc)
        P = 0.5 * (P + P.T)
    return GaussianBelief(x, P)


@dataclass
class FilterTrack:
    """Filtered and one-step-predicted moments for k = 0..K-1."""

    means: np.ndarray
    covs: np.ndarray
    pred_means: np.ndarray
    pred_covs: np.ndarray
    extra: dict = field(default_factory=dict)


def kf_filter(model: StateSpaceModel, ys: np.ndarray, r_diag: np.ndarray,
              gate_quantile: float = 0.99, measure: Optional[MeasureFn] = None,
              y_extra_bias: Optional[np.ndarray] = None) -> FilterTrack:
    """Gated Kalman filter over a measurement track.

    `measure(k, x_pred)` supplies the per-step linearization; when omitted the
    model's C (and C_seq) is used directly.  `y_extra_bias` is subtracted from
    every measurement on top of the model's own y_bias (the moment-matched
    noise mean for the KF baseline).
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    K = ys.shape[0]
    n_x = model.n_x
    bias = model.y_bias if y_extra_bias is None else model.y_bias + y_extra_bias
    means = np.zeros((K, n_x))
    covs = np.zeros((K, n_x, n_x))
    pred_means = np.zeros((K, n_x))
    pred_covs = np.zeros((K, n_x, n_x))
    belief = model.prior()
    for k in range(K):
        pred_means[k] = belief.mean
        pred_covs[k] = belief.cov
        if measure is not None:
            lin = measure(k, belief.mean)
            C_k, y_eff = lin.jacobian, lin.shifted(ys[k] - bias)
        else:
            C_k, y_eff = model.C_at(k), ys[k] - bias
        belief = kf_update_gated(belief, C_k, r_diag, y_eff, gate_quantile)
        means[k] = belief.mean
        covs[k] = belief.cov
        if k + 1 < K:
            belief = kf_predict(belief, model.A_at(k), model.Q_at(k))
    return FilterTrack(means, covs, pred_means, pred_covs)


def solve_psd(mat: np.ndarray, rhs: np.ndarray):
    """Solve mat @ x = rhs for symmetric PSD mat; (solution, used_pinv)."""
    sym = 0.5 * (mat + mat.T)
    try:
        chol = np.linalg.cholesky(sym)
        z = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, z), False
    except np.linalg.LinAlgError:
        return np.linalg.pinv(sym, rcond=1e-12) @ rhs, True


def rtss_backward(filtered_means, filtered_covs, A, Q):
    """Rauch-Tung-Striebel backward pass.

    `A` and `Q` may be single matrices or per-step stacks (A[k] maps step k to
    k+1).  Returns (smoothed_means, smoothed_covs, used_pinv); a singular
    predicted covariance falls back to the pseudo-inverse and sets the flag.
    """
    means = np.array(filtered_means, dtype=float, copy=True)
    covs = np.array(filtered_covs, dtype=float, copy=True)
    K = means.shape[0]
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    a_of = (lambda k: A[k]) if A.ndim == 3 else (lambda k: A)
    q_of = (lambda k: Q[k]) if Q.ndim == 3 else (lambda k: Q)
    used_pinv = False
    for k in range(K - 2, -1, -1):
        A_k = a_of(k)
        P_pred = A_k @ covs[k] @ A_k.T + q_of(k)
        P_pred = 0.5 * (P_pred + P_pred.T)
        Gt, flag = solve_psd(P_pred, A_k @ covs[k])
        used_pinv |= flag
        G = Gt.T
        means[k] = means[k] + G @ (means[k + 1] - A_k @ means[k])
        covs[k] = covs[k] + G @ (covs[k + 1] - P_pred) @ G.T
        covs[k] = 0.5 * (covs[k] + covs[k].T)
    return means, covs, used_pinv
