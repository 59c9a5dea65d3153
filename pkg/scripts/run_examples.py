"""Solve every registered example and print one summary line each.

Usage: python scripts/run_examples.py [--on-indefinite abort|continue] [--out DIR]
"""
import argparse
from pathlib import Path

from switchocp.cli import RunConfig, run
from switchocp.problems import REGISTRY


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--on-indefinite", default="continue", choices=("abort", "continue"))
    p.add_argument("--out", default="runs")
    args = p.parse_args()
    for name in REGISTRY:
        run(RunConfig(problem=name, on_indefinite=args.on_indefinite, emit_trajectory=True,
                      out=str(Path(args.out) / name)))


if __name__ == "__main__":
    main()
