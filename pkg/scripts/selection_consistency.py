"""Does the model-selected schedule hold up on the held-out dataset?

    python3 scripts/selection_consistency.py [--seeds 10] [--horizon 5000]

For each master seed, runs the default grid on the stationary environment and
compares the selected point's held-out reward with the best held-out reward
over the grid.  Reports the worst ratio across seeds (target: >= 0.95).
"""
import argparse

from dynts.experiments import select_schedule
from dynts.policies import PolicyConfig
from dynts.simulator import EnvironmentSpec, ModelSelectionPlan


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--horizon", type=int, default=5000)
    parser.add_argument("--env", choices=("stationary", "nonstationary"), default="stationary")
    args = parser.parse_args()

    env = getattr(EnvironmentSpec, args.env)(horizon=args.horizon)
    ratios = []
    for seed in range(args.seeds):
        res = select_schedule(env, ModelSelectionPlan(), PolicyConfig("thompson"), seed)
        held = res.heldout_rewards.mean(axis=1)
        ratios.append(held[res.best_index] / held.max())
        print(f"seed {seed}: selected {res.best.label():>10}  held-out ratio to best {ratios[-1]:.4f}", flush=True)
    print(f"worst ratio {min(ratios):.4f} ({'ok' if min(ratios) >= 0.95 else 'below 0.95'})")


if __name__ == "__main__":
    main()
