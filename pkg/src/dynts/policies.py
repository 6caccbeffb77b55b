"""Arm-selection policies over per-arm Gaussian beliefs.

All policies score arms and take the argmax with ties going to the lowest
index (``np.argmax`` semantics).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core_model import LOGISTIC, DimensionError, as_context
from .inference import ArmModel

POLICY_KINDS = ("thompson", "epsilon_greedy", "ucb1", "oracle")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "thompson"
    epsilon: float = 0.1
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if not self.c > 0:
            raise ValueError(f"UCB weight c must be > 0, got {self.c}")

    @property
    def name(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "epsilon": self.epsilon, "c": self.c}

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyConfig":
        data = dict(data)
        unknown = set(data) - {"kind", "epsilon", "c"}
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Decision:
    chosen_arm: int
    per_arm_scores: np.ndarray
    sampled_parameters: Optional[np.ndarray] = None


@dataclass
class ArmStats:
    """Pull counts and running mean rewards, used by UCB1."""

    counts: np.ndarray
    mean_reward: np.ndarray

    @classmethod
    def zeros(cls, n_arms: int) -> "ArmStats":
        return cls(np.zeros(n_arms, dtype=np.int64), np.zeros(n_arms))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def record(self, arm: int, reward: float) -> None:
        self.counts[arm] += 1
        self.mean_reward[arm] += (reward - self.mean_reward[arm]) / self.counts[arm]


def _means(models: Sequence[ArmModel], x: np.ndarray) -> np.ndarray:
    if not models:
        raise ValueError("need at least one arm")
    means = np.stack([m.belief.mean for m in models])
    if means.shape[1] != x.size:
        raise DimensionError(f"context has size {x.size}, beliefs have dimension {means.shape[1]}")
    return means


def plug_in_scores(models: Sequence[ArmModel], x) -> np.ndarray:
    x = as_context(x)
    return LOGISTIC(_means(models, x) @ x)


def sample_parameters(models: Sequence[ArmModel], rng: np.random.Generator, n_samples: Optional[int] = None):
    """Draws ``beta ~ N(u_a, Sigma_a)``; shape (A, d) or (n, A, d)."""
    means = np.stack([m.belief.mean for m in models])
    # beliefs are immutable, so each square root is computed once per posterior
    roots = np.stack([m.belief.sqrt_cov for m in models])
    if n_samples is None:
        z = rng.standard_normal(means.shape)
        return means + np.einsum("aij,aj->ai", roots, z)
    z = rng.standard_normal((n_samples,) + means.shape)
    return means + np.einsum("aij,naj->nai", roots, z)


def thompson_select(models: Sequence[ArmModel], x, rng: np.random.Generator) -> Decision:
    x = as_context(x)
    _means(models, x)
    beta = sample_parameters(models, rng)
    scores = LOGISTIC(beta @ x)
    return Decision(int(np.argmax(scores)), scores, beta)


def probability_optimal(models: Sequence[ArmModel], x, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo estimate of each arm's probability of having the highest expected reward."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = as_context(x)
    _means(models, x)
    beta = sample_parameters(models, rng, n_samples)
    # the link is monotone, so ranking activations ranks rewards
    winners = np.argmax(beta @ x, axis=1)
    return np.bincount(winners, minlength=len(models)) / n_samples


def epsilon_greedy_select(models: Sequence[ArmModel], x, epsilon: float, rng: np.random.Generator) -> Decision:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    scores = plug_in_scores(models, x)
    explore = rng.random() < epsilon
    arm = int(rng.integers(len(models))) if explore else int(np.argmax(scores))
    return Decision(arm, scores)


def ucb1_index(scores: np.ndarray, counts: np.ndarray, c: float, t: int) -> tuple[int, np.ndarray]:
    """Choice and index values for given plug-in scores and pull counts."""
    if t < 1:
        raise ValueError("t must be >= 1")
    unpulled = np.flatnonzero(counts == 0)
    if unpulled.size:
        return int(unpulled[0]), np.where(counts == 0, np.inf, scores)
    ucb = scores + c * np.sqrt(2.0 * np.log(t) / counts)
    return int(np.argmax(ucb)), ucb


def ucb1_select(models: Sequence[ArmModel], x, stats: ArmStats, c: float, t: int) -> Decision:
    """Plug-in reward plus ``c * sqrt(2 ln t / n_a)``; unpulled arms go first."""
    arm, ucb = ucb1_index(plug_in_scores(models, x), stats.counts, c, t)
    return Decision(arm, ucb)


def select(
    policy: PolicyConfig,
    models: Sequence[ArmModel],
    x,
    rng: np.random.Generator,
    stats: Optional[ArmStats] = None,
    t: int = 1,
) -> Decision:
    if policy.kind == "thompson":
        return thompson_select(models, x, rng)
    if policy.kind == "epsilon_greedy":
        return epsilon_greedy_select(models, x, policy.epsilon, rng)
    if policy.kind == "ucb1":
        if stats is None:
            raise ValueError("UCB1 needs arm statistics")
        return ucb1_select(models, x, stats, policy.c, t)
    raise ValueError("the oracle policy needs the true rewards; it is handled by the simulator")
