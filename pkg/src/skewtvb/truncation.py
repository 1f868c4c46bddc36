"""Sequential truncation of a multivariate normal to the positive orthant.

A normal N(mu, sigma) restricted to {z_i >= 0 for i in T} is approximated by
applying one constraint at a time: the once-truncated distribution's first two
moments are computed in closed form and moment-matched back to a normal.  The
greedy ordering that always truncates the most probability mass next (the
component minimizing mu_i / sqrt(sigma_ii)) is optimal in KL divergence among
single-constraint choices, so it is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .special import SQRT_2, SQRT_2_OVER_PI, erfcx_scalar

# Phi(xi) underflows to zero below roughly -38; the limit branch activates a
# little earlier where phi/Phi is already within 1e-3 of its asymptote.
UNDERFLOW_XI = -37.0

# Diagonal entries at or below this are treated as degenerate directions.
DEGENERATE_SIGMA = 1e-300


class DegenerateDimensionError(ValueError):
    """A constraint hit a component with (numerically) zero variance."""


class OracleInfeasibleError(RuntimeError):
    """Rejection sampling cannot resolve the requested orthant probability."""


def phi_over_Phi(xi: float) -> float:
    """Ratio N(0,1) pdf / cdf at xi, via sqrt(2/pi) / erfcx(-xi / sqrt(2)).

    Monotone decreasing; behaves like -xi for very negative xi and underflows
    gracefully to 0 for very positive xi.  Safe for |xi| up to 1e8 and beyond.
    """
    return SQRT_2_OVER_PI / erfcx_scalar(-xi / SQRT_2)


@dataclass
class TruncationProblem:
    """A normal with components `truncated` restricted to be nonnegative.

    Indices are 0-based.  `sigma` must be symmetric positive semidefinite;
    symmetry is checked on construction, PSD-ness via :meth:`validate`.
    """

    mu: np.ndarray
    sigma: np.ndarray
    truncated: tuple = ()

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        n = self.mu.shape[0]
        if self.sigma.shape != (n, n):
            raise ValueError(f"sigma must be {n}x{n}, got {self.sigma.shape}")
        idx = tuple(int(i) for i in self.truncated)
        if len(set(idx)) != len(idx) or any(i < 0 or i >= n for i in idx):
            raise ValueError(f"truncated indices must be distinct and in [0, {n}), got {idx}")
        self.truncated = idx
        scale = np.max(np.abs(self.sigma)) or 1.0
        if np.max(np.abs(self.sigma - self.sigma.T)) > 1e-8 * scale:
            raise ValueError("sigma is not symmetric")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def validate(self, tol: float = 1e-10):
        """Raise if sigma fails the PSD check to tolerance."""
        w = np.linalg.eigvalsh(0.5 * (self.sigma + self.sigma.T))
        if w.size and w[0] < -tol * max(w[-1], 1.0):
            raise ValueError(f"sigma has eigenvalue {w[0]:.3e} below -tol")


@dataclass
class TruncationResult:
    """Moment-matched approximation plus the constraint order actually used."""

    mu: np.ndarray
    sigma: np.ndarray
    order: tuple
    underflow_hits: int = 0


def _apply_constraint(mu, sigma, k, symmetrize=True):
    """In-place single-constraint update of (mu, sigma); returns underflow flag."""
    skk = sigma[k, k]
    if skk <= DEGENERATE_SIGMA:
        raise DegenerateDimensionError(
            f"component {k} has variance {skk:.3e}; cannot truncate a degenerate direction")
    s = math.sqrt(skk)
    xi = mu[k] / s
    col = sigma[:, k].copy()
    if xi < UNDERFLOW_XI:
        # Phi(xi) underflows: eps -> -xi and xi*eps + eps^2 -> 1
        mu += (-xi / s) * col
        sigma -= np.outer(col, col) / skk
        hit = True
    else:
        eps = phi_over_Phi(xi)
        mu += (eps / s) * col
        sigma -= ((xi * eps + eps * eps) / skk) * np.outer(col, col)
        hit = False
    if symmetrize:
        sigma += sigma.T
        sigma *= 0.5
    return hit


def truncate_once(problem: TruncationProblem, k: int) -> TruncationProblem:
    """Apply the single constraint z_k >= 0 and drop k from the truncated set."""
    if k not in problem.truncated:
        raise ValueError(f"index {k} is not in the truncated set {problem.truncated}")
    mu = problem.mu.copy()
    sigma = problem.sigma.copy()
    _apply_constraint(mu, sigma, k)
    rest = tuple(i for i in problem.truncated if i != k)
    return TruncationProblem(mu, sigma, rest)


def _rec_trunc_1d(mu0: float, s0: float, want_order: bool):
    # scalar fast path: pure float arithmetic, no array temporaries
    if s0 <= DEGENERATE_SIGMA:
        raise DegenerateDimensionError(
            f"component 0 has variance {s0:.3e}; cannot truncate a degenerate direction")
    s = math.sqrt(s0)
    xi = mu0 / s
    if xi < UNDERFLOW_XI:
        return TruncationResult(np.array([mu0 - xi * s]), np.array([[0.0]]), (0,), 1)
    eps = SQRT_2_OVER_PI / erfcx_scalar(-xi / SQRT_2)
    mu1 = mu0 + eps * s
    sig1 = s0 * (1.0 - xi * eps - eps * eps)
    return TruncationResult(np.array([mu1]), np.array([[sig1]]), (0,), 0)


def rec_trunc(problem: TruncationProblem, ordering="optimal", seed=None) -> TruncationResult:
    """Sequentially truncate all components in `problem.truncated`.

    Parameters
    ----------
    problem : TruncationProblem
    ordering : "optimal", "random", or an explicit index sequence.
        "optimal" greedily picks argmin mu_i / sqrt(sigma_ii) (ties go to the
        lowest index); "random" permutes uniformly using `seed`; an explicit
        sequence must be a permutation of the truncated set.
    seed : int, np.random.Generator, or None; only used for "random".
    """
    if (type(ordering) is str and ordering == "optimal"
            and problem.truncated == (0,) and problem.mu.shape[0] == 1):
        return _rec_trunc_1d(float(problem.mu[0]), float(problem.sigma[0, 0]), True)
    remaining = list(problem.truncated)
    if not remaining:
        return TruncationResult(problem.mu.copy(), problem.sigma.copy(), (), 0)

    mu = problem.mu.copy()
    sigma = problem.sigma.copy()
    order = []
    hits = 0

    if isinstance(ordering, str):
        if ordering == "optimal":
            fixed = None
        elif ordering == "random":
            rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
            fixed = list(rng.permutation(remaining))
        else:
            raise ValueError(f"unknown ordering {ordering!r}")
    else:
        fixed = [int(i) for i in ordering]
        if sorted(fixed) != sorted(remaining):
            raise ValueError("explicit ordering must be a permutation of the truncated set")

    while remaining:
        if fixed is None:
            k = min(remaining, key=lambda i: (mu[i] / math.sqrt(sigma[i, i]), i))
        else:
            k = fixed[len(order)]
        hits += _apply_constraint(mu, sigma, k)
        order.append(k)
        remaining.remove(k)
    return TruncationResult(mu, sigma, tuple(order), hits)


@dataclass
class OracleMoments:
    """Rejection-sampling estimate of exact truncated-normal moments."""

    mean: np.ndarray
    cov: np.ndarray
    mean_stderr: np.ndarray
    n_accepted: int
    acceptance: float
    extra: dict = field(default_factory=dict)


def tmnd_moments_oracle(problem: TruncationProblem, n_samples: int = 1_000_000,
                        seed=0) -> OracleMoments:
    """Estimate the truncated normal's mean and covariance by rejection.

    `n_samples` counts proposal draws from the untruncated normal.  Raises
    :class:`OracleInfeasibleError` once the running acceptance estimate drops
    below 1e-6, since the caller is then asking for an infeasible oracle.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = problem.dim
    idx = np.array(problem.truncated, dtype=int)
    chol = _psd_factor(problem.sigma)
    kept = []
    total = 0
    accepted = 0
    chunk = int(min(max(n_samples // 8, 10_000), 2_000_000))
    while total < n_samples:
        m = int(min(chunk, n_samples - total))
        z = rng.standard_normal((m, n))
        x = problem.mu + z @ chol.T
        total += m
        if idx.size:
            ok = np.all(x[:, idx] >= 0.0, axis=1)
            x = x[ok]
        accepted += x.shape[0]
        if x.shape[0]:
            kept.append(x)
        if total >= 1_000_000 and (accepted + 1) / total < 1e-6:
            raise OracleInfeasibleError(
                f"orthant acceptance ~{accepted / total:.2e} after {total} draws; "
                "shrink the test case")
    if accepted < 2:
        raise OracleInfeasibleError(
            f"only {accepted} of {total} draws accepted; shrink the test case")
    samples = np.concatenate(kept, axis=0)
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1).reshape(n, n)
    stderr = np.sqrt(np.diag(cov) / accepted)
    return OracleMoments(mean, cov, stderr, accepted, accepted / total)


def _psd_factor(sigma: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix; eigenvalue based so singular inputs work."""
    w, v = np.linalg.eigh(0.5 * (sigma + sigma.T))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)
