"""Univariate and multivariate (CFUST) skew-t distributions.

Densities, hierarchical sampling, and the zero-mean reparameterization used
by the performance-bound study.  The univariate density is

    2 t(z; mu, sigma^2 + delta^2, nu) T(z_tilde; 0, 1, nu + 1),

and the multivariate version replaces the univariate t CDF with the CDF of a
multivariate t, which is evaluated by Monte Carlo (`mvt_cdf_mc`).  Degrees of
freedom at or above 1e12 select the Gaussian / skew-normal limit exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .special import (
    GAUSSIAN_NU,
    lgamma_half_diff,
    norm_logcdf_scalar,
    student_t_cdf,
    student_t_logcdf,
    student_t_logcdf_vec,
)


class InvalidParameterError(ValueError):
    """Distribution parameters violate a positivity / definiteness constraint."""


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class UnivariateSkewT:
    """Location / spread^2 / shape / degrees-of-freedom parameterization."""

    mu: float
    sigma2: float
    delta: float
    nu: float

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise InvalidParameterError(f"sigma2 must be positive, got {self.sigma2}")
        if self.nu <= 0.0:
            raise InvalidParameterError(f"nu must be positive, got {self.nu}")

    def gamma_factor(self) -> float:
        return _gamma_factor(self.nu)

    def mean(self) -> float:
        """E[z] = mu + gamma * delta (requires nu > 1)."""
        if self.nu <= 1.0:
            raise InvalidParameterError("mean requires nu > 1")
        return self.mu + self.gamma_factor() * self.delta

    def var(self) -> float:
        """Var[z] = nu/(nu-2) (sigma^2 + delta^2) - gamma^2 delta^2 (nu > 2)."""
        if self.nu <= 2.0:
            raise InvalidParameterError("variance requires nu > 2")
        tail = 1.0 if self.nu >= GAUSSIAN_NU else self.nu / (self.nu - 2.0)
        return tail * (self.sigma2 + self.delta ** 2) - (self.gamma_factor() * self.delta) ** 2


def _gamma_factor(nu: float) -> float:
    # sqrt(nu/pi) Gamma((nu-1)/2) / Gamma(nu/2); -> sqrt(2/pi) as nu -> inf
    if nu <= 1.0:
        raise InvalidParameterError("gamma factor requires nu > 1")
    if nu >= GAUSSIAN_NU:
        return math.sqrt(2.0 / math.pi)
    return math.sqrt(nu / math.pi) * math.exp(-lgamma_half_diff(0.5 * (nu - 1.0)))


@dataclass(frozen=True)
class MultivariateSkewT:
    """CFUST skew-t with arbitrary square shape matrix Delta."""

    mu: np.ndarray
    R: np.ndarray
    Delta: np.ndarray
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "R", np.atleast_2d(np.asarray(self.R, dtype=float)))
        object.__setattr__(self, "Delta", np.atleast_2d(np.asarray(self.Delta, dtype=float)))
        n = self.mu.shape[0]
        if self.R.shape != (n, n) or self.Delta.shape != (n, n):
            raise InvalidParameterError("R and Delta must be square and match dim(mu)")
        if self.nu <= 0.0:
            raise InvalidParameterError(f"nu must be positive, got {self.nu}")
        _chol_or_raise(self.R, "R")
        _chol_or_raise(self.omega(), "Omega = R + Delta Delta^T")
        _chol_or_raise(self.L(), "L = I - Delta^T Omega^-1 Delta")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def omega(self) -> np.ndarray:
        return self.R + self.Delta @ self.Delta.T

    def L(self) -> np.ndarray:
        omega = self.omega()
        sol = np.linalg.solve(omega, self.Delta)
        return np.eye(self.dim) - self.Delta.T @ sol


def _chol_or_raise(mat: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(0.5 * (mat + mat.T))
    except np.linalg.LinAlgError as exc:
        raise InvalidParameterError(f"{name} is not positive definite") from exc


INDEPENDENT = "independent_univariate"
MULTIVARIATE = "multivariate"


@dataclass(frozen=True)
class SkewTNoise:
    """Measurement-noise model: independent univariate components or CFUST.

    In independent mode `R` and `Delta` are diagonal and `nu` is a vector of
    per-component degrees of freedom; in multivariate mode `R` is positive
    definite, `Delta` arbitrary square, and `nu` a scalar.
    """

    mode: str
    R: np.ndarray
    Delta: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.atleast_2d(np.asarray(self.R, dtype=float)))
        object.__setattr__(self, "Delta", np.atleast_2d(np.asarray(self.Delta, dtype=float)))
        n = self.R.shape[0]
        if self.mode == INDEPENDENT:
            object.__setattr__(self, "nu", np.broadcast_to(
                np.asarray(self.nu, dtype=float), (n,)).copy())
            for name, m in (("R", self.R), ("Delta", self.Delta)):
                if np.any(m != np.diag(np.diag(m))):
                    raise InvalidParameterError(f"independent mode requires diagonal {name}")
            if np.any(np.diag(self.R) <= 0.0) or np.any(self.nu <= 0.0):
                raise InvalidParameterError("R diagonal and nu must be positive")
        elif self.mode == MULTIVARIATE:
            nu = float(np.asarray(self.nu))
            if nu <= 0.0:
                raise InvalidParameterError("nu must be positive")
            object.__setattr__(self, "nu", nu)
            _chol_or_raise(self.R, "R")
        else:
            raise InvalidParameterError(f"unknown noise mode {self.mode!r}")
        if self.Delta.shape != (n, n):
            raise InvalidParameterError("Delta must match R in shape")

    @classmethod
    def independent(cls, r_diag, delta_diag, nu) -> "SkewTNoise":
        r_diag = np.atleast_1d(np.asarray(r_diag, dtype=float))
        delta_diag = np.atleast_1d(np.asarray(delta_diag, dtype=float))
        return cls(INDEPENDENT, np.diag(r_diag), np.diag(delta_diag), nu)

    @classmethod
    def multivariate(cls, R, Delta, nu) -> "SkewTNoise":
        return cls(MULTIVARIATE, R, Delta, float(nu))

    @property
    def n_y(self) -> int:
        return self.R.shape[0]

    def components(self):
        """Per-component univariate laws (independent mode only)."""
        if self.mode != INDEPENDENT:
            raise InvalidParameterError("components() is defined for independent mode")
        r = np.diag(self.R)
        d = np.diag(self.Delta)
        return [UnivariateSkewT(0.0, r[i], d[i], self.nu[i]) for i in range(self.n_y)]

    def mvst(self) -> MultivariateSkewT:
        if self.mode != MULTIVARIATE:
            raise InvalidParameterError("mvst() is defined for multivariate mode")
        return MultivariateSkewT(np.zeros(self.n_y), self.R, self.Delta, self.nu)

    def mean(self) -> np.ndarray:
        if self.mode == INDEPENDENT:
            return np.array([c.mean() for c in self.components()])
        gam = _gamma_factor(self.nu)
        return gam * self.Delta @ np.ones(self.n_y)

    def logpdf(self, e: np.ndarray):
        """Log density of a noise vector (or batch of rows)."""
        e = np.asarray(e, dtype=float)
        if self.mode == INDEPENDENT:
            comps = self.components()
            vals = [st_logpdf(comps[i], e[..., i]) for i in range(self.n_y)]
            return sum(vals)
        return mvst_logpdf(self.mvst(), e)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def st_logpdf(d: UnivariateSkewT, z):
    """Log of the univariate skew-t pdf; finite for every finite z."""
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 0
    r = z - d.mu
    omega = d.sigma2 + d.delta ** 2
    sig = math.sqrt(d.sigma2)
    if d.nu >= GAUSSIAN_NU:
        log_t = -0.5 * np.square(r) / omega - 0.5 * math.log(2.0 * math.pi * omega)
        z_tilde = r * d.delta / (sig * math.sqrt(omega))
        if scalar:
            log_T = norm_logcdf_scalar(float(z_tilde))
        else:
            log_T = student_t_logcdf_vec(z_tilde, GAUSSIAN_NU)
    else:
        nu = d.nu
        lognorm = lgamma_half_diff(0.5 * nu) - 0.5 * math.log(nu * math.pi * omega)
        log_t = lognorm - 0.5 * (nu + 1.0) * np.log1p(np.square(r) / (nu * omega))
        z_tilde = r * d.delta / sig * np.sqrt((nu + 1.0) / (nu * omega + np.square(r)))
        if scalar:
            log_T = student_t_logcdf(float(z_tilde), nu + 1.0)
        else:
            log_T = student_t_logcdf_vec(z_tilde, nu + 1.0)
    out = math.log(2.0) + log_t + log_T
    return float(out) if scalar else out


def st_pdf(d: UnivariateSkewT, z):
    return np.exp(st_logpdf(d, z))


def _mvt_logpdf(diff: np.ndarray, omega: np.ndarray, nu: float) -> np.ndarray:
    """Multivariate-t log pdf for rows of `diff`; Gaussian limit included."""
    n = omega.shape[0]
    chol = _chol_or_raise(omega, "scale matrix")
    sol = np.linalg.solve(chol, diff.T)
    maha = np.sum(np.square(sol), axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    if nu >= GAUSSIAN_NU:
        return -0.5 * maha - 0.5 * (n * math.log(2.0 * math.pi) + logdet)
    lognorm = (math.lgamma(0.5 * (nu + n)) - math.lgamma(0.5 * nu)
               - 0.5 * n * math.log(nu * math.pi) - 0.5 * logdet)
    return lognorm - 0.5 * (nu + n) * np.log1p(maha / nu)


def mvst_logpdf(d: MultivariateSkewT, z, n_samples: int = 100_000, seed: int = 0):
    """Log of the CFUST pdf at `z` (a vector or a batch of row vectors).

    The embedded multivariate-t CDF is evaluated exactly for dimension 1 and
    by `mvt_cdf_mc` (deterministic per seed) for higher dimensions, which
    bounds the achievable accuracy there.
    """
    z = np.asarray(z, dtype=float)
    scalar = z.ndim == 1
    pts = np.atleast_2d(z)
    n = d.dim
    if pts.shape[1] != n:
        raise InvalidParameterError(f"z must have {n} columns, got {pts.shape}")
    omega = d.omega()
    diff = pts - d.mu
    log_t = _mvt_logpdf(diff, omega, d.nu)
    if not np.any(d.Delta):
        # Delta = 0: L = I and the orthant CDF at 0 is exactly 2^-n by the
        # sign-flip symmetry of the central t, cancelling the 2^n prefactor.
        out = log_t
        return float(out[0]) if scalar else out
    sol = np.linalg.solve(omega, diff.T).T
    maha = np.sum(diff * sol, axis=1)
    nu_t = np.inf if d.nu >= GAUSSIAN_NU else d.nu
    if np.isinf(nu_t):
        factor = np.ones_like(maha)
        df_cdf = GAUSSIAN_NU
    else:
        factor = np.sqrt((nu_t + n) / (nu_t + maha))
        df_cdf = nu_t + n
    zbar = (sol @ d.Delta) * factor[:, None]
    L = d.L()
    if n == 1:
        sL = math.sqrt(L[0, 0])
        log_T = np.array([student_t_logcdf(float(v) / sL, df_cdf) for v in zbar[:, 0]])
    else:
        val, _ = mvt_cdf_mc(zbar, L, df_cdf, n_samples=n_samples, seed=seed)
        log_T = np.log(np.maximum(val, 1e-300))
    out = n * math.log(2.0) + log_t + log_T
    return float(out[0]) if scalar else out


def mvt_cdf_mc(upper, L, nu: float, n_samples: int = 100_000, seed: int = 0):
    """Central multivariate-t CDF P(X <= upper), X ~ t_nu(0, L), by Monte Carlo.

    `upper` may be a single point of dimension n or a batch (..., n); the same
    sample set is shared across the batch, so results are deterministic per
    seed.  Conditioning the last coordinate analytically (a normal CDF given
    the mixing variable and the other coordinates) cuts the variance well
    below naive indicator sampling.  Returns (value, stderr); dimension 1 is
    evaluated exactly with stderr 0.
    """
    upper = np.asarray(upper, dtype=float)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n = L.shape[0]
    scalar = upper.ndim == 1
    pts = np.atleast_2d(upper)
    if pts.shape[-1] != n:
        raise InvalidParameterError(f"upper must have {n} columns")
    chol = _chol_or_raise(L, "L")
    if n == 1:
        s = math.sqrt(L[0, 0])
        val = np.array([student_t_cdf(float(u) / s, nu) for u in pts[:, 0]])
        err = np.zeros_like(val)
        return (float(val[0]), 0.0) if scalar else (val, err)

    rng = _as_rng(seed)
    m = int(n_samples)
    if nu >= GAUSSIAN_NU:
        scale = np.ones(m)
    else:
        scale = np.sqrt(rng.chisquare(nu, size=m) / nu)  # X = N(0, L) / scale
    z = rng.standard_normal((m, n - 1))
    y_head = z @ chol[: n - 1, : n - 1].T
    proj_last = z @ chol[n - 1, : n - 1]
    c_nn = chol[n - 1, n - 1]

    n_pts = pts.shape[0]
    val = np.empty(n_pts)
    err = np.empty(n_pts)
    # chunk the batch so the (points x samples) temporaries stay bounded
    chunk = max(1, int(4_000_000 // m))
    for start in range(0, n_pts, chunk):
        u = pts[start:start + chunk]
        lim = u[:, None, : n - 1] * scale[None, :, None]
        ok = np.all(y_head[None, :, :] <= lim, axis=2)
        p_last = ndtr((u[:, None, n - 1] * scale[None, :] - proj_last[None, :]) / c_nn)
        vals = ok * p_last
        val[start:start + chunk] = vals.mean(axis=1)
        err[start:start + chunk] = vals.std(axis=1, ddof=1) / math.sqrt(m)
    return (float(val[0]), float(err[0])) if scalar else (val, err)


# ---------------------------------------------------------------------------
# Sampling and reparameterization
# ---------------------------------------------------------------------------

def sample_noise(noise: SkewTNoise, k_steps: int, seed=0) -> np.ndarray:
    """Draw `k_steps` noise vectors through the hierarchical representation.

    e = Delta u + Lambda^(-1/2) eps with u the positive-orthant normal and
    Lambda the gamma mixing matrix; nu >= 1e12 pins Lambda = I (Gaussian /
    skew-normal limit).
    """
    rng = _as_rng(seed)
    n = noise.n_y
    k = int(k_steps)
    if noise.mode == INDEPENDENT:
        lam = np.ones((k, n))
        for i in range(n):
            if noise.nu[i] < GAUSSIAN_NU:
                lam[:, i] = rng.gamma(0.5 * noise.nu[i], 2.0 / noise.nu[i], size=k)
        u = np.abs(rng.standard_normal((k, n))) / np.sqrt(lam)
        eps = rng.standard_normal((k, n)) * np.sqrt(np.diag(noise.R) / lam)
        return u * np.diag(noise.Delta) + eps
    if noise.nu >= GAUSSIAN_NU:
        lam = np.ones(k)
    else:
        lam = rng.gamma(0.5 * noise.nu, 2.0 / noise.nu, size=k)
    root_lam = np.sqrt(lam)[:, None]
    u = np.abs(rng.standard_normal((k, n))) / root_lam
    chol_r = _chol_or_raise(noise.R, "R")
    eps = (rng.standard_normal((k, n)) @ chol_r.T) / root_lam
    return u @ noise.Delta.T + eps


def zero_mean_reparam(delta_c: float, nu: float, omega2: float) -> UnivariateSkewT:
    """Skew-t with mean 0 and variance omega2 from shape ratio delta_c.

    gamma = sqrt(nu/pi) Gamma((nu-1)/2) / Gamma(nu/2); then
    sigma^2 = omega2 / (nu/(nu-2) (1+delta_c^2) - gamma^2 delta_c^2),
    delta = delta_c sigma and mu = -gamma delta_c sigma.
    """
    if nu <= 2.0:
        raise InvalidParameterError(
            f"zero-mean reparameterization needs finite variance (nu > 2), got nu={nu}")
    if omega2 <= 0.0:
        raise InvalidParameterError("omega2 must be positive")
    gam = _gamma_factor(nu)
    tail = 1.0 if nu >= GAUSSIAN_NU else nu / (nu - 2.0)
    denom = tail * (1.0 + delta_c ** 2) - (gam * delta_c) ** 2
    if denom <= 0.0:
        raise InvalidParameterError("delta_c too extreme for a finite-variance skew-t")
    sigma2 = omega2 / denom
    sigma = math.sqrt(sigma2)
    return UnivariateSkewT(-gam * delta_c * sigma, sigma2, delta_c * sigma, nu)
