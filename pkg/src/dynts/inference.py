"""Recursive Laplace-approximate posterior for the dynamic logistic model.

One time step is propagate-then-condition:

    prior:      u_{t|t-1} = u_{t-1},   Sigma_{t|t-1} = Sigma_{t-1} + Q_t
    condition:  theta_hat = g(x' u_{t|t-1})
                u_t       = u_{t|t-1} + Sigma_{t|t-1} (y - theta_hat) x
                Sigma_t   = Sigma_{t|t-1} - w / (1 + w s^2) (Sigma_{t|t-1} x)(Sigma_{t|t-1} x)'

with ``w = theta_hat (1 - theta_hat)`` and ``s^2 = x' Sigma_{t|t-1} x``.  The
covariance line is the Sherman-Morrison inverse of the rank-one Hessian update
``H_t = H_{t|t-1} - w x x'``, which is kept only as a test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core_model import (
    LOGISTIC,
    DimensionError,
    GaussianBelief,
    LinkFunction,
    as_context,
    check_observation,
    check_pd,
    check_psd,
    symmetrize,
)
from .decay import DriftSchedule, q_at

THETA_CLAMP = 1e-12


@dataclass(frozen=True)
class PriorSnapshot:
    """Predictive prior ``N(mean, cov)`` for beta_t given data up to t-1."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def from_belief(cls, belief: GaussianBelief) -> "PriorSnapshot":
        return cls(belief.mean, belief.cov)


def propagate_prior(belief: GaussianBelief, Q) -> PriorSnapshot:
    """Push the posterior through the random walk ``beta_t = beta_{t-1} + eps_t``."""
    Q = np.asarray(Q, dtype=float)
    if Q.shape != belief.cov.shape:
        raise DimensionError(f"Q has shape {Q.shape}, expected {belief.cov.shape}")
    check_psd(Q, "Q")
    return PriorSnapshot(belief.mean.copy(), symmetrize(belief.cov + Q))


def clamp_theta(theta: float) -> float:
    return min(max(theta, THETA_CLAMP), 1.0 - THETA_CLAMP)


def laplace_update(
    prior: PriorSnapshot, x, y, link: LinkFunction = LOGISTIC, n_iter: int = 1
) -> GaussianBelief:
    """Condition the prior on one observation ``(x, y)``.

    ``n_iter > 1`` re-evaluates theta_hat at the refreshed mean and repeats the
    mean step from the prior mean; the covariance keeps the linearisation at
    the prior mean.
    """
    x = as_context(x)
    y = check_observation(y)
    if x.size != prior.mean.size:
        raise DimensionError(f"context has size {x.size}, belief has dimension {prior.mean.size}")
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    check_pd(prior.cov, "prior covariance")

    u0, S = prior.mean, prior.cov
    Sx = S @ x
    s2 = float(x @ Sx)
    theta = clamp_theta(float(link(x @ u0)))
    w = theta * (1.0 - theta)
    cov = symmetrize(S - (w / (1.0 + w * s2)) * np.outer(Sx, Sx))

    mean = u0 + Sx * (y - theta)
    for _ in range(n_iter - 1):
        mean = u0 + Sx * (y - clamp_theta(float(link(x @ mean))))
    return GaussianBelief(mean, cov)


def hessian_covariance(prior: PriorSnapshot, x, theta_hat: float) -> np.ndarray:
    """Covariance as the explicit inverse of ``Sigma^-1 + w x x'`` (oracle path)."""
    x = as_context(x)
    w = theta_hat * (1.0 - theta_hat)
    precision = np.linalg.inv(prior.cov) + w * np.outer(x, x)
    return np.linalg.inv(precision)


def log_posterior_unnormalized(prior: PriorSnapshot, x, y, beta) -> float:
    """Gaussian prior log-density (up to a constant) plus the Bernoulli log-likelihood."""
    x = as_context(x)
    y = check_observation(y)
    beta = np.asarray(beta, dtype=float)
    if not (beta.shape == x.shape == prior.mean.shape):
        raise DimensionError("beta, context and prior mean must share one dimension")
    check_pd(prior.cov, "prior covariance")
    diff = beta - prior.mean
    quad = -0.5 * float(diff @ np.linalg.solve(prior.cov, diff))
    a = float(x @ beta)
    # log g(a) = -log(1+e^-a), log(1-g(a)) = -log(1+e^a)
    loglik = -np.logaddexp(0.0, -a) if y == 1 else -np.logaddexp(0.0, a)
    return quad + float(loglik)


def log_posterior_gradient(prior: PriorSnapshot, x, y, beta) -> np.ndarray:
    x = as_context(x)
    beta = np.asarray(beta, dtype=float)
    theta = float(LOGISTIC(x @ beta))
    return -np.linalg.solve(prior.cov, beta - prior.mean) + (check_observation(y) - theta) * x


@dataclass(frozen=True)
class ArmModel:
    """One arm's posterior plus the assumptions used to move it forward.

    ``step_index`` counts completed update cycles.  Unless the caller passes
    the time of the observation explicitly, the next cycle draws ``Q_t`` from
    the drift schedule at ``t = step_index + 1``.
    """

    belief: GaussianBelief
    drift: DriftSchedule = field(default_factory=DriftSchedule.static)
    link: LinkFunction = LOGISTIC
    step_index: int = 0
    n_iter: int = 1

    @classmethod
    def fresh(cls, dim: int, drift: DriftSchedule, prior_scale: float = 1.0, prior_mean=None, n_iter: int = 1):
        return cls(GaussianBelief.isotropic(dim, prior_scale, prior_mean), drift, n_iter=n_iter)

    def predict(self, x) -> float:
        return float(self.link(as_context(x) @ self.belief.mean))

    def prior(self, t: Optional[int] = None) -> PriorSnapshot:
        # q_t * Sigma is PSD by construction, so skip the checks in propagate_prior
        q = q_at(self.drift, self.step_index + 1 if t is None else t)
        return PriorSnapshot(self.belief.mean, self.belief.cov * (1.0 + q))


def step(model: ArmModel, x, y, t: Optional[int] = None) -> ArmModel:
    """Propagate, then condition on ``(x, y)``; returns a new model.

    ``t`` is the time step the observation arrives at; it defaults to the
    model's own update count plus one.
    """
    posterior = laplace_update(model.prior(t), x, y, model.link, model.n_iter)
    return replace(model, belief=posterior, step_index=model.step_index + 1)
