"""Bayesian Cramer-Rao lower bounds under skew-t measurement noise.

The measurement contribution to the bound is C^T Omega^(-T/2) E Omega^(-1/2) C
with Omega = R + Delta Delta^T and E an information core that depends only on
the normalized shape Theta = Omega^(-1/2) Delta and the degrees of freedom.
E is computed by 1-D quadrature for independent univariate components and by
Monte Carlo for the multivariate skew-t (dimension <= 3; higher dimensions
would need multivariate-t CDF gradients beyond the accuracy this repo can
honestly deliver, so they raise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .seeding import stream
from .skewt import (
    INDEPENDENT,
    SkewTNoise,
    UnivariateSkewT,
    mvt_cdf_mc,
    sample_noise,
    st_pdf,
)
from .special import (
    AccuracyError,
    student_t_cdf_vec,
    student_t_pdf,
)
from .statespace import StateSpaceModel, solve_psd


class UnsupportedDimensionError(ValueError):
    """The MVST Fisher core is limited to measurement dimension <= 3."""


@dataclass
class FisherContext:
    """Shape quantities entering the measurement Fisher information."""

    Theta: np.ndarray
    Omega: np.ndarray
    L: np.ndarray
    nu: float
    E: Optional[np.ndarray] = None


@dataclass
class CRLBTrack:
    B_filt: np.ndarray
    B_smooth: Optional[np.ndarray] = None
    used_pinv: bool = False


def _tau(x: np.ndarray, df: float) -> np.ndarray:
    """t pdf over t CDF (standard scale)."""
    return student_t_pdf(x, df) / np.maximum(student_t_cdf_vec(np.asarray(x, float), df), 1e-300)


def fisher_univariate_E(theta: float, nu: float, domain: float = 200.0,
                        tol: float = 1e-8) -> float:
    """Information core E for one skew-t component, by adaptive quadrature.

    E = E_r[(nu+1) ((nu - r^2)/(nu + r^2)^2
          + theta^2/(1-theta^2) nu^2/(nu + r^2)^3 tau_{nu+1}(arg)^2)]
    with r ~ ST(0, 1 - theta^2, theta, nu) and
    arg = theta/sqrt(1-theta^2) r sqrt((nu+1)/(nu+r^2)).  theta = 0 recovers
    the Student-t location information (nu+1)/(nu+3).
    """
    if not -1.0 < theta < 1.0:
        raise ValueError(f"|theta| must be below 1, got {theta}")
    if nu <= 0.0:
        raise ValueError("nu must be positive")
    s2 = 1.0 - theta * theta
    d = UnivariateSkewT(0.0, s2, theta, nu)
    skew_coef = theta * theta / s2
    t_ratio = math.sqrt(s2)

    def integrand(r):
        r2 = r * r
        core = (nu - r2) / (nu + r2) ** 2
        if theta != 0.0:
            arg = theta / t_ratio * r * math.sqrt((nu + 1.0) / (nu + r2))
            tau = float(_tau(np.asarray(arg), nu + 1.0))
            core += skew_coef * nu * nu / (nu + r2) ** 3 * tau * tau
        return (nu + 1.0) * core * st_pdf(d, r)

    total = 0.0
    total_err = 0.0
    for a, b in ((-domain, -8.0), (-8.0, 8.0), (8.0, domain)):
        val, err = quad(integrand, a, b, epsabs=1e-12, epsrel=1e-11, limit=400)
        total += val
        total_err += err
    if total_err > tol:
        raise AccuracyError(
            f"quadrature error estimate {total_err:.2e} exceeds {tol:.1e}",
            estimate=total)
    return total


@dataclass
class FisherMvstResult:
    """Monte-Carlo estimate of the MVST information core with its stderr."""

    E: np.ndarray
    stderr: np.ndarray
    n_mc: int


def _t_conditional(L: np.ndarray, j: int, u_j: np.ndarray, df: float):
    """Location / scale-factor / fixed scale matrix of t_{-j} | t_j = u_j."""
    n = L.shape[0]
    rest = [i for i in range(n) if i != j]
    l_jj = L[j, j]
    l_rj = L[rest, j]
    loc = np.outer(u_j / l_jj, l_rj)
    scale_fac = (df + np.square(u_j) / l_jj) / (df + 1.0)
    M = L[np.ix_(rest, rest)] - np.outer(l_rj, l_rj) / l_jj
    return loc, scale_fac, M


def _mvt_cdf_gradient(points: np.ndarray, L: np.ndarray, df: float,
                      n_cdf: int, seed_key) -> np.ndarray:
    """d/du T(u; 0, L, df) at each row of `points`.

    Component j: marginal t pdf at u_j times the conditional CDF of the
    remaining components, which is exact for n <= 2 and uses the shared-sample
    MC evaluator for the bivariate conditionals at n = 3.
    """
    n = L.shape[0]
    m = points.shape[0]
    grad = np.empty((m, n))
    for j in range(n):
        s_j = math.sqrt(L[j, j])
        u_j = points[:, j]
        pdf_j = student_t_pdf(u_j / s_j, df) / s_j
        if n == 1:
            grad[:, 0] = pdf_j
            continue
        loc, fac, M = _t_conditional(L, j, u_j, df)
        rest = [i for i in range(n) if i != j]
        shifted = (points[:, rest] - loc) / np.sqrt(fac)[:, None]
        if n == 2:
            cond = student_t_cdf_vec(shifted[:, 0] / math.sqrt(M[0, 0]), df + 1.0)
        else:
            cond, _ = mvt_cdf_mc(shifted, M, df + 1.0, n_samples=n_cdf,
                                 seed=stream(seed_key, "mvt-grad", j))
        grad[:, j] = pdf_j * cond
    return grad


def fisher_mvst_E(Theta: np.ndarray, nu: float, n_mc: int = 20_000, seed: int = 0,
                  n_cdf: int = 20_000) -> FisherMvstResult:
    """Monte-Carlo information core for multivariate skew-t noise.

    Averages (nu+n)/(nu+r'r) (I - 2/(nu+r'r) r r' + R_r R_r') over draws
    r ~ MVST(0, I - Theta Theta', Theta, nu), where R_r involves the gradient
    of the multivariate-t CDF.  Dimensions above 3 raise
    :class:`UnsupportedDimensionError`.
    """
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    n = Theta.shape[0]
    if Theta.shape != (n, n):
        raise ValueError("Theta must be square")
    if n > 3:
        raise UnsupportedDimensionError(
            f"MVST Fisher core supports n_y <= 3, got {n}")
    R_r = np.eye(n) - Theta @ Theta.T
    noise = SkewTNoise.multivariate(R_r, Theta, nu)
    r = sample_noise(noise, n_mc, seed=stream(seed, "fisher-mvst", "r"))
    rr = np.sum(np.square(r), axis=1)
    fac = (nu + n) / (nu + rr)
    scale = np.sqrt((nu + n) / (nu + rr))
    u_pts = (r @ Theta) * scale[:, None]
    L = np.eye(n) - Theta.T @ Theta
    df = nu + n
    # T(u; 0, L, nu + n) at every sample (shared sample set keeps this fast)
    if n == 1:
        sL = math.sqrt(L[0, 0])
        T_at = student_t_cdf_vec(u_pts[:, 0] / sL, df)
    else:
        T_at, _ = mvt_cdf_mc(u_pts, L, df, n_samples=n_cdf,
                             seed=stream(seed, "fisher-mvst", "cdf"))
    T_at = np.maximum(T_at, 1e-300)
    grad = _mvt_cdf_gradient(u_pts, L, df, n_cdf, seed)
    v = grad @ Theta.T
    rv = np.sum(r * v, axis=1)
    R_tilde = (v - r * (rv / (nu + rr))[:, None]) / T_at[:, None]
    eye = np.eye(n)
    outer_r = r[:, :, None] * r[:, None, :]
    outer_R = R_tilde[:, :, None] * R_tilde[:, None, :]
    Ms = fac[:, None, None] * (eye[None, :, :]
                               - (2.0 / (nu + rr))[:, None, None] * outer_r
                               + outer_R)
    E = Ms.mean(axis=0)
    stderr = Ms.std(axis=0, ddof=1) / math.sqrt(n_mc)
    return FisherMvstResult(E, stderr, n_mc)


# ---------------------------------------------------------------------------
# Bound recursions
# ---------------------------------------------------------------------------

def omega_sqrt(noise: SkewTNoise) -> np.ndarray:
    """Lower Cholesky factor of Omega = R + Delta Delta^T."""
    omega = noise.R + noise.Delta @ noise.Delta.T
    return np.linalg.cholesky(0.5 * (omega + omega.T))


def fisher_context(noise: SkewTNoise, E: Optional[np.ndarray] = None) -> FisherContext:
    """Normalized shape quantities for a noise model (Theta, Omega, L)."""
    omega = noise.R + noise.Delta @ noise.Delta.T
    S = np.linalg.cholesky(0.5 * (omega + omega.T))
    Theta = np.linalg.solve(S, noise.Delta)
    L = np.eye(noise.n_y) - Theta.T @ Theta
    nu = float(noise.nu if np.isscalar(noise.nu) else np.asarray(noise.nu).ravel()[0])
    return FisherContext(Theta, omega, L, nu, E)


def fisher_information_matrix(C: np.ndarray, noise: SkewTNoise,
                              E: np.ndarray) -> np.ndarray:
    """Measurement information C^T Omega^(-T/2) E Omega^(-1/2) C."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    S = omega_sqrt(noise)
    X = np.linalg.solve(S, C)
    info = X.T @ E @ X
    return 0.5 * (info + info.T)


def noise_E_matrix(noise: SkewTNoise, n_mc: int = 20_000, seed: int = 0) -> np.ndarray:
    """Information core for a noise model; quadrature per component in
    independent mode, Monte Carlo in multivariate mode."""
    if noise.mode == INDEPENDENT:
        r = np.diag(noise.R)
        d = np.diag(noise.Delta)
        thetas = d / np.sqrt(r + d * d)
        return np.diag([fisher_univariate_E(float(thetas[i]), float(noise.nu[i]))
                        for i in range(noise.n_y)])
    ctx = fisher_context(noise)
    return fisher_mvst_E(ctx.Theta, ctx.nu, n_mc=n_mc, seed=seed).E


def crlb_filter_recursion(model: StateSpaceModel, E: np.ndarray, K: int,
                          form: str = "information") -> CRLBTrack:
    """Filtering CRLB over K steps.

    "information" runs B <- ((A B A^T + Q)^-1 + I_meas)^-1 directly;
    "kalman" runs the equivalent covariance recursion with effective
    measurement covariance Omega^(1/2) E^-1 Omega^(T/2) (Woodbury identity).
    Both start by applying the measurement update to B_{1|0} = P0.
    """
    info = fisher_information_matrix(model.C, model.noise, E)
    n = model.n_x
    used_pinv = False
    out = np.zeros((K, n, n))
    if form == "information":
        B = model.P0.copy()
        for k in range(K):
            if k > 0:
                B = model.A @ B @ model.A.T + model.Q
            B_inv, flag1 = solve_psd(B, np.eye(n))
            used_pinv |= flag1
            B_post, flag2 = solve_psd(B_inv + info, np.eye(n))
            used_pinv |= flag2
            out[k] = 0.5 * (B_post + B_post.T)
            B = out[k]
    elif form == "kalman":
        S = omega_sqrt(model.noise)
        E_inv, flag = solve_psd(np.atleast_2d(E), np.eye(model.n_y))
        used_pinv |= flag
        R_eff = S @ E_inv @ S.T
        C = model.C
        P = model.P0.copy()
        for k in range(K):
            if k > 0:
                P = model.A @ P @ model.A.T + model.Q
            S_in = C @ P @ C.T + R_eff
            Kt, flag = solve_psd(0.5 * (S_in + S_in.T), C @ P)
            used_pinv |= flag
            P = P - Kt.T @ (C @ P)
            out[k] = 0.5 * (P + P.T)
            P = out[k]
    else:
        raise ValueError(f"unknown recursion form {form!r}")
    return CRLBTrack(out, used_pinv=used_pinv)


def crlb_smoother_recursion(B_filt: np.ndarray, A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Smoothing CRLB: the RTS covariance backward pass applied to B_filt."""
    B_filt = np.asarray(B_filt, dtype=float)
    B = B_filt.copy()
    K = B.shape[0]
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    for k in range(K - 2, -1, -1):
        B_pred = A @ B_filt[k] @ A.T + Q
        B_pred = 0.5 * (B_pred + B_pred.T)
        Gt, _ = solve_psd(B_pred, A @ B_filt[k])
        G = Gt.T
        B[k] = B_filt[k] + G @ (B[k + 1] - B_pred) @ G.T
        B[k] = 0.5 * (B[k] + B[k].T)
    return B
