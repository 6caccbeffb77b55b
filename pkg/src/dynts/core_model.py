"""Shared value types and the logistic link.

Vectors are plain 1-d ``numpy`` arrays; a context is just the feature vector
``x`` and an observation is an integer in ``{0, 1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

# smallest eigenvalue must exceed this fraction of the largest one
PD_RTOL = 1e-12


class DimensionError(ValueError):
    pass


class NotPositiveDefiniteError(ValueError):
    pass


def as_context(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"context must be a 1-d vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("context has non-finite entries")
    return x


def check_observation(y) -> int:
    if y not in (0, 1):
        raise ValueError(f"observation must be 0 or 1, got {y!r}")
    return int(y)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def check_pd(cov: np.ndarray, name: str = "covariance") -> None:
    """Raise unless ``cov`` is symmetric positive definite (relative test)."""
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
    if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(cov)
    if eig[-1] <= 0 or eig[0] <= PD_RTOL * eig[-1]:
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (eigenvalues {eig[0]:.3e}..{eig[-1]:.3e})"
        )


def check_psd(cov: np.ndarray, name: str = "covariance") -> None:
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {cov.shape}")
    scale = max(np.max(np.abs(cov)), 1.0)
    if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(symmetrize(cov))
    if eig[0] < -PD_RTOL * max(abs(eig[-1]), 1.0):
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {eig[0]:.3e})")


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian posterior ``N(mean, cov)`` over one arm's regression parameter."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1:
            raise DimensionError(f"mean must be 1-d, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        check_pd(cov)
        cov = symmetrize(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.cov)

    @cached_property
    def sqrt_cov(self) -> np.ndarray:
        """Symmetric square root ``S`` with ``S @ S == cov``."""
        w, V = np.linalg.eigh(self.cov)
        if w[0] <= PD_RTOL * w[-1]:
            raise NotPositiveDefiniteError("cannot take the square root of a non-PD covariance")
        return (V * np.sqrt(w)) @ V.T

    @classmethod
    def isotropic(cls, dim: int, scale: float = 1.0, mean=None) -> "GaussianBelief":
        mean = np.zeros(dim) if mean is None else mean
        return cls(mean, scale * np.eye(dim))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianBelief":
        return cls(np.array(data["mean"], dtype=float), np.array(data["cov"], dtype=float))


@dataclass(frozen=True)
class LinkFunction:
    """Maps the activation ``x . beta`` to an expected reward in (0, 1)."""

    tag: str = "logistic"

    def __post_init__(self):
        if self.tag != "logistic":
            raise ValueError(f"unsupported link {self.tag!r}; only 'logistic' is implemented")

    def __call__(self, activation):
        # expit is overflow-safe for large |activation|
        return expit(activation)


LOGISTIC = LinkFunction()


def expected_reward(belief_mean, x, link: LinkFunction = LOGISTIC) -> float:
    """Plug-in expected reward ``g(x . u)``."""
    u = np.asarray(belief_mean, dtype=float)
    x = as_context(x)
    if u.shape != x.shape:
        raise DimensionError(f"mean has shape {u.shape} but context has shape {x.shape}")
    return float(link(x @ u))


def activation_variance(x, cov) -> float:
    """Variance ``x' Sigma x`` of the activation under a Gaussian belief."""
    x = as_context(x)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (x.size, x.size):
        raise DimensionError(f"covariance shape {cov.shape} does not match context of size {x.size}")
    return float(x @ cov @ x)
