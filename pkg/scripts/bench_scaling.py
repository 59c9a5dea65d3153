"""Time the backward+forward pass over a range of horizon lengths.

Usage: python scripts/bench_scaling.py [--problem example2] [--N 200,400,800,1600] [--reps 50]
"""
import argparse

from switchocp.cli import bench_scaling, write_scaling


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--problem", default="example2")
    p.add_argument("--N", default="200,400,800,1600")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--csv", default="scaling.csv")
    args = p.parse_args()
    table, slope = bench_scaling(args.problem, [int(n) for n in args.N.split(",")], args.reps)
    for r in table:
        dense = f"  dense {r['dense_ns'] / 1e6:8.2f} ms" if r["dense_ns"] != "" else ""
        print(f"N={r['N']:5d}  riccati {r['median_pass_ns'] / 1e6:8.3f} ms{dense}")
    print(f"log-log slope {slope:.3f}")
    write_scaling(args.csv, table, slope)


if __name__ == "__main__":
    main()
