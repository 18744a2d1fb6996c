"""Natural-gradient search distribution over gradient-blend coefficients.

A Gaussian N(mu, Sigma) over the k+1 coefficients that weight the objective
and measure gradients when branching offspring. Sigma is carried as a factor
A with Sigma = A A^T, adapted multiplicatively through a matrix exponential,
which keeps it symmetric positive definite by construction. Sampled
coefficient vectors have their first entry folded to be nonnegative (a
negative weight on the objective gradient is never useful), but the update
consumes the raw pre-fold draws so the search distribution stays unbiased.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EIG_FLOOR = 1e-8


@dataclass
class CoeffDistribution:
    mu: np.ndarray
    factor: np.ndarray  # A with Sigma = A A^T

    @classmethod
    def isotropic(cls, dim: int, sigma_g: float) -> "CoeffDistribution":
        return cls(mu=np.zeros(dim), factor=sigma_g * np.eye(dim))

    @classmethod
    def from_sigma(cls, mu: np.ndarray, sigma: np.ndarray) -> "CoeffDistribution":
        """Factor a covariance, flooring eigenvalues at EIG_FLOOR to repair
        degenerate or slightly indefinite inputs."""
        mu = np.asarray(mu, dtype=np.float64)
        sym = 0.5 * (np.asarray(sigma, dtype=np.float64) + np.asarray(sigma, dtype=np.float64).T)
        evals, evecs = np.linalg.eigh(sym)
        evals = np.maximum(evals, EIG_FLOOR)
        return cls(mu=mu, factor=evecs * np.sqrt(evals))

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return self.factor @ self.factor.T


def sample_coefficients(
    dist: CoeffDistribution, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw coefficient vectors. Returns (folded, raw).

    folded has entry 0 replaced by its absolute value and is what offspring
    are built from; raw is the untouched Gaussian draw and is what the
    distribution update must standardize. Feeding folded vectors back into
    adapt would bias every update along entry 0 and inflate that direction
    without bound.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    s = rng.standard_normal((count, dist.dim))
    raw = dist.mu + s @ dist.factor.T
    folded = raw.copy()
    folded[:, 0] = np.abs(folded[:, 0])
    return folded, raw


def _utilities(count: int) -> np.ndarray:
    base = np.maximum(0.0, np.log(count / 2.0 + 1.0) - np.log(np.arange(1, count + 1)))
    return base / base.sum() - 1.0 / count


def learning_rates(dim: int) -> tuple[float, float]:
    eta_mu = 1.0
    eta_sigma = (9.0 + 3.0 * np.log(dim)) / (5.0 * dim * np.sqrt(dim))
    return eta_mu, eta_sigma


def adapt(dist: CoeffDistribution, coeffs: np.ndarray, improvements: np.ndarray) -> CoeffDistribution:
    """One natural-gradient update from ranked improvements.

    Rank-based utilities, best first, ties ordered by offspring index but
    sharing the mean utility of their tied ranks (so uniform improvements
    produce exactly no update).
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    imp = np.asarray(improvements, dtype=np.float64).reshape(-1)
    n, d = coeffs.shape
    if d != dist.dim or imp.size != n:
        raise ValueError("coeffs/improvements shapes do not match the distribution")
    if imp.min() == imp.max():
        # fully tied ranking carries no information; skip the update exactly
        return CoeffDistribution(mu=dist.mu.copy(), factor=dist.factor.copy())

    order = np.lexsort((np.arange(n), -imp))
    u = np.empty(n)
    u[order] = _utilities(n)
    for val in np.unique(imp):
        tied = imp == val
        if tied.sum() > 1:
            u[tied] = u[tied].mean()

    try:
        s = np.linalg.solve(dist.factor, (coeffs - dist.mu).T).T
        if not np.isfinite(s).all():
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        # a float-underflowed direction leaves the factor singular; refloor it
        dist = CoeffDistribution.from_sigma(dist.mu, dist.sigma)
        s = np.linalg.solve(dist.factor, (coeffs - dist.mu).T).T
    eta_mu, eta_sigma = learning_rates(d)
    grad_mu = u @ s
    grad_m = np.einsum("i,ij,ik->jk", u, s, s) - u.sum() * np.eye(d)
    grad_m = 0.5 * (grad_m + grad_m.T)

    evals, evecs = np.linalg.eigh(grad_m)
    # exponent clamp: one pathological ranking must not overflow the factor
    expm = (evecs * np.exp(np.clip(0.5 * eta_sigma * evals, -50.0, 50.0))) @ evecs.T
    return CoeffDistribution(
        mu=dist.mu + eta_mu * dist.factor @ grad_mu,
        factor=dist.factor @ expm,
    )
