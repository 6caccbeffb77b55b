"""Multi-seed experiment drivers shared by the CLI, scripts and acceptance tests.

Replicate ``k`` under master seed ``m`` draws its dataset from
``derive_seed(m, 0, k)`` and its policy randomness from ``derive_seed(m, 1, k)``.
Every arm of a comparison sees the same datasets, so policy differences are
not confounded with environment draws.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence, TypeVar

from .decay import DriftSchedule
from .policies import PolicyConfig
from .simulator import (
    EnvironmentSpec,
    ExperimentRecord,
    ModelSelectionPlan,
    ModelSelectionResult,
    derive_seed,
    generate,
    model_select,
    run_experiment,
)

T = TypeVar("T")

DATA_STREAM, POLICY_STREAM, SELECT_DATA_STREAM, SELECT_POLICY_STREAM = range(4)


def replicate_seeds(master: int, k: int) -> tuple[int, int]:
    return derive_seed(master, DATA_STREAM, k), derive_seed(master, POLICY_STREAM, k)


def parallel_map(fn: Callable[[int], T], n: int, threads: int = 1) -> list[T]:
    """``[fn(0), ..., fn(n-1)]``, optionally across worker threads, in index order."""
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


@dataclass(frozen=True)
class Arm:
    """One curve in a comparison: a policy paired with an inference schedule."""

    label: str
    policy: PolicyConfig
    drift: DriftSchedule


def compare(
    env: EnvironmentSpec,
    arms: Sequence[Arm],
    master_seed: int,
    n_seeds: int,
    threads: int = 1,
    **run_kw,
) -> dict[str, list[ExperimentRecord]]:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    labels = [a.label for a in arms]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate curve labels: {labels}")

    def one(k: int) -> list[ExperimentRecord]:
        data_seed, policy_seed = replicate_seeds(master_seed, k)
        data = generate(replace(env, seed=data_seed))
        return [run_experiment(data, a.policy, a.drift, policy_seed, **run_kw) for a in arms]

    per_seed = parallel_map(one, n_seeds, threads)
    return {a.label: [recs[i] for recs in per_seed] for i, a in enumerate(arms)}


def select_schedule(
    env: EnvironmentSpec, plan: ModelSelectionPlan, policy: PolicyConfig, master_seed: int, **kw
) -> ModelSelectionResult:
    spec = replace(env, seed=derive_seed(master_seed, SELECT_DATA_STREAM))
    return model_select(plan, spec, policy, derive_seed(master_seed, SELECT_POLICY_STREAM), **kw)


def standard_arms(drift: DriftSchedule, epsilon: float = 0.1, c: float = 1.0, static: bool = True) -> list[Arm]:
    """Thompson, epsilon-greedy and UCB1 on ``drift``, plus Thompson on a static model."""
    arms = [
        Arm("thompson", PolicyConfig("thompson"), drift),
        Arm("epsilon_greedy", PolicyConfig("epsilon_greedy", epsilon=epsilon), drift),
        Arm("ucb1", PolicyConfig("ucb1", c=c), drift),
    ]
    if static:
        arms.append(Arm("thompson_static", PolicyConfig("thompson"), DriftSchedule.static()))
    return arms
