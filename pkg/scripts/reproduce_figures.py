"""Write plot-ready data for every canned figure into one directory tree.

    python3 scripts/reproduce_figures.py --out figures [--seeds 20] [--threads 1]

Equivalent to running ``dynts reproduce <figure>`` for each figure id.
"""
import argparse
import sys
from pathlib import Path

from dynts import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default="figures")
    parser.add_argument("--config")
    parser.add_argument("--seeds")
    parser.add_argument("--threads")
    parser.add_argument("figures", nargs="*", default=list(cli.FIGURES))
    args = parser.parse_args()
    status = 0
    for fig in args.figures:
        argv = ["reproduce", fig, "--out", str(Path(args.out) / fig)]
        for flag in ("config", "seeds", "threads"):
            if getattr(args, flag):
                argv += [f"--{flag}", getattr(args, flag)]
        print(f"== {fig}", flush=True)
        status |= cli.main(argv)
    return status


if __name__ == "__main__":
    sys.exit(main())
