"""Simulated dynamic contextual bandit: data generation, closed-loop runs, metrics.

Ground truth per arm follows ``beta_t = beta_{t-1} + eps_t`` with
``eps_t ~ N(0, delta_t Sigma_{t-1})`` and ``Sigma_t = (1 + delta_t) Sigma_{t-1}``,
so the generating covariance is always ``Sigma_0`` times a running product.

Metrics use expected rewards rather than sampled clicks:

    Reward(T) = sum_t theta_hat_{t,a_t} / sum_t theta*_t
    Regret(T) = sum_t (theta*_t - theta_hat_{t,a_t}) / T

where ``theta_hat`` is the chosen arm's plug-in estimate at decision time.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core_model import LOGISTIC, DimensionError
from .decay import DriftSchedule
from .inference import ArmModel, step
from .policies import ArmStats, PolicyConfig, select


def derive_seed(master: int, *keys: int) -> int:
    """Counter-based split of a master seed into an independent 64-bit seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class EnvironmentSpec:
    n_arms: int = 10
    dim: int = 10
    horizon: int = 5000
    drift: DriftSchedule = field(default_factory=lambda: DriftSchedule.power(0.1, 2.0))
    sigma0_scale: float = 0.001
    arm_mean_scale: float = 1.0
    feature_low: float = -1.0
    feature_high: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_arms < 1 or self.dim < 1 or self.horizon < 1:
            raise ValueError("n_arms, dim and horizon must all be >= 1")
        if not self.feature_low < self.feature_high:
            raise ValueError("feature_low must be < feature_high")
        if not self.sigma0_scale > 0:
            raise ValueError("sigma0_scale must be > 0")
        if not self.arm_mean_scale >= 0:
            raise ValueError("arm_mean_scale must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @classmethod
    def stationary(cls, **kw) -> "EnvironmentSpec":
        return cls(drift=DriftSchedule.power(0.1, 2.0), **kw)

    @classmethod
    def nonstationary(cls, **kw) -> "EnvironmentSpec":
        return cls(drift=DriftSchedule.power(0.1, 1.0), **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["drift"] = self.drift.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EnvironmentSpec":
        data = dict(data)
        if "drift" in data:
            data["drift"] = DriftSchedule.from_dict(data["drift"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown environment keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class GeneratedDataset:
    spec: EnvironmentSpec
    contexts: np.ndarray  # (T, d)
    beta0: np.ndarray  # (A, d)
    noise: np.ndarray  # (T, A, d)
    beta: np.ndarray  # (T, A, d)
    theta: np.ndarray  # (T, A)
    y: np.ndarray  # (T, A)
    cov_scale: np.ndarray  # (T+1,), Sigma^gen_t = cov_scale[t] * Sigma_0

    @property
    def horizon(self) -> int:
        return self.contexts.shape[0]

    @property
    def n_arms(self) -> int:
        return self.theta.shape[1]

    @property
    def dim(self) -> int:
        return self.contexts.shape[1]

    def covariance(self, t: int) -> np.ndarray:
        return self.cov_scale[t] * self.spec.sigma0_scale * np.eye(self.dim)


def generate(spec: EnvironmentSpec) -> GeneratedDataset:
    T, A, d = spec.horizon, spec.n_arms, spec.dim
    beta_ss, x_ss, y_ss, mean_ss = np.random.SeedSequence(int(spec.seed)).spawn(4)
    rng_beta = np.random.default_rng(beta_ss)
    rng_x = np.random.default_rng(x_ss)
    rng_y = np.random.default_rng(y_ss)

    steps = np.arange(1, T + 1)
    delta = spec.drift.q(steps)
    cov_scale = np.concatenate([[1.0], np.exp(np.cumsum(spec.drift.log1p_q(steps)))])

    base = np.sqrt(spec.sigma0_scale)
    arm_means = spec.arm_mean_scale * np.random.default_rng(mean_ss).standard_normal((A, d))
    beta0 = arm_means + base * rng_beta.standard_normal((A, d))
    noise_sd = base * np.sqrt(delta * cov_scale[:-1])
    noise = noise_sd[:, None, None] * rng_beta.standard_normal((T, A, d))
    beta = beta0[None] + np.cumsum(noise, axis=0)

    contexts = rng_x.uniform(spec.feature_low, spec.feature_high, size=(T, d))
    theta = LOGISTIC(np.einsum("td,tad->ta", contexts, beta))
    # pre-drawn for every arm so the policy's choices never touch this stream
    y = (rng_y.random((T, A)) < theta).astype(np.int8)
    return GeneratedDataset(spec, contexts, beta0, noise, beta, theta, y, cov_scale)


@dataclass
class ExperimentRecord:
    policy: str
    inference_drift: str
    seed: int
    arms: np.ndarray
    theta_hat: np.ndarray
    theta_star: np.ndarray
    theta_chosen: np.ndarray
    sampled_reward: Optional[np.ndarray] = None
    sampled_oracle: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.arms.size

    @property
    def reward_ratio(self) -> np.ndarray:
        return np.cumsum(self.theta_hat) / np.cumsum(self.theta_star)

    @property
    def avg_regret(self) -> np.ndarray:
        steps = np.arange(1, self.horizon + 1)
        return np.cumsum(self.theta_star - self.theta_hat) / steps

    @property
    def final_reward(self) -> float:
        return float(self.theta_hat.sum() / self.theta_star.sum())

    @property
    def final_regret(self) -> float:
        return float((self.theta_star.sum() - self.theta_hat.sum()) / self.horizon)

    @property
    def true_reward_ratio(self) -> float:
        """Diagnostic: the chosen arms' true expected rewards over the oracle's."""
        return float(self.theta_chosen.sum() / self.theta_star.sum())

    @property
    def sampled_reward_ratio(self) -> Optional[float]:
        if self.sampled_reward is None:
            return None
        return float(self.sampled_reward.sum() / max(self.sampled_oracle.sum(), 1))

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "inference_drift": self.inference_drift,
            "seed": self.seed,
            "final_reward_ratio": self.final_reward,
            "final_avg_regret": self.final_regret,
            "true_reward_ratio": self.true_reward_ratio,
            "sampled_reward_ratio": self.sampled_reward_ratio,
        }


def run_experiment(
    dataset: GeneratedDataset,
    policy: PolicyConfig,
    inference_drift: DriftSchedule,
    seed: int = 0,
    prior_scale: float = 1.0,
    n_iter: int = 1,
    dim: Optional[int] = None,
    sample_rewards: bool = False,
) -> ExperimentRecord:
    """Closed-loop bandit run; only the chosen arm's reward is revealed."""
    d = dataset.dim if dim is None else dim
    if d != dataset.dim:
        raise DimensionError(f"inference dimension {d} does not match dataset dimension {dataset.dim}")
    T, A = dataset.horizon, dataset.n_arms
    policy_ss, sample_ss = np.random.SeedSequence(int(seed)).spawn(2)
    rng = np.random.default_rng(policy_ss)

    models = [ArmModel.fresh(d, inference_drift, prior_scale, n_iter=n_iter) for _ in range(A)]
    stats = ArmStats.zeros(A)
    arms = np.empty(T, dtype=np.int64)
    theta_hat = np.empty(T)
    for i in range(T):
        x = dataset.contexts[i]
        truth = dataset.theta[i]
        if policy.kind == "oracle":
            arm = int(np.argmax(truth))
            theta_hat[i] = truth[arm]
        else:
            arm = select(policy, models, x, rng, stats, i + 1).chosen_arm
            theta_hat[i] = models[arm].predict(x)
        arms[i] = arm
        y = int(dataset.y[i, arm])
        models[arm] = step(models[arm], x, y, t=i + 1)
        stats.record(arm, y)

    theta_star = dataset.theta.max(axis=1)
    theta_chosen = dataset.theta[np.arange(T), arms]
    record = ExperimentRecord(
        policy.kind, inference_drift.label(), int(seed), arms, theta_hat, theta_star, theta_chosen
    )
    if sample_rewards:
        rng_s = np.random.default_rng(sample_ss)
        record.sampled_reward = (rng_s.random(T) < theta_hat).astype(np.int8)
        record.sampled_oracle = (rng_s.random(T) < theta_star).astype(np.int8)
    return record


@dataclass(frozen=True)
class Summary:
    n: int
    mean_reward: np.ndarray
    se_reward: np.ndarray
    mean_regret: np.ndarray
    se_regret: np.ndarray

    @property
    def final(self) -> dict:
        return {
            "n_records": self.n,
            "reward_ratio_mean": float(self.mean_reward[-1]),
            "reward_ratio_se": float(self.se_reward[-1]),
            "avg_regret_mean": float(self.mean_regret[-1]),
            "avg_regret_se": float(self.se_regret[-1]),
        }


def _mean_se(rows: np.ndarray):
    mean = rows.mean(axis=0)
    if rows.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, rows.std(axis=0, ddof=1) / np.sqrt(rows.shape[0])


def aggregate(records: Sequence[ExperimentRecord]) -> Summary:
    if not records:
        raise ValueError("cannot aggregate an empty list of records")
    horizons = {r.horizon for r in records}
    if len(horizons) != 1:
        raise ValueError(f"records have different horizons: {sorted(horizons)}")
    mr, sr = _mean_se(np.stack([r.reward_ratio for r in records]))
    mg, sg = _mean_se(np.stack([r.avg_regret for r in records]))
    return Summary(len(records), mr, sr, mg, sg)


SELECTION_METRICS = ("estimated", "true")


def default_grid(etas=(0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0), powers=(1.0, 2.0)) -> list[DriftSchedule]:
    return [DriftSchedule.power(eta, p) for p in powers for eta in etas]


@dataclass(frozen=True)
class ModelSelectionPlan:
    n_datasets: int = 6
    n_train: int = 5
    grid: tuple = field(default_factory=lambda: tuple(default_grid()))

    def __post_init__(self):
        if not 0 < self.n_train < self.n_datasets:
            raise ValueError("need 0 < n_train < n_datasets")
        if not self.grid:
            raise ValueError("the parameter grid is empty")
        object.__setattr__(self, "grid", tuple(self.grid))


@dataclass
class ModelSelectionResult:
    grid: list
    train_rewards: np.ndarray  # (G, n_train)
    heldout_rewards: np.ndarray  # (G, n_datasets - n_train)
    dataset_seeds: list

    @property
    def mean_train(self) -> np.ndarray:
        return self.train_rewards.mean(axis=1)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.mean_train))

    @property
    def best(self) -> DriftSchedule:
        return self.grid[self.best_index]


def model_select(
    plan: ModelSelectionPlan,
    spec: EnvironmentSpec,
    policy: PolicyConfig,
    policy_seed: int = 0,
    metric: str = "estimated",
    **run_kw,
) -> ModelSelectionResult:
    """Pick the inference schedule with the best mean reward on the training datasets.

    Dataset ``i`` uses seed ``derive_seed(spec.seed, i)``; the first ``n_train``
    are for selection, the rest are held out and scored for every grid point.
    ``metric="true"`` scores runs by the chosen arms' true expected reward
    instead of the plug-in estimate.
    """
    if metric not in SELECTION_METRICS:
        raise ValueError(f"metric must be one of {SELECTION_METRICS}, got {metric!r}")
    seeds = [derive_seed(spec.seed, i) for i in range(plan.n_datasets)]
    G = len(plan.grid)
    rewards = np.empty((G, plan.n_datasets))
    for j, s in enumerate(seeds):
        data = generate(replace(spec, seed=s))
        for g, sched in enumerate(plan.grid):
            rec = run_experiment(data, policy, sched, derive_seed(policy_seed, j), **run_kw)
            rewards[g, j] = rec.final_reward if metric == "estimated" else rec.true_reward_ratio
    return ModelSelectionResult(
        list(plan.grid), rewards[:, : plan.n_train], rewards[:, plan.n_train :], seeds
    )
