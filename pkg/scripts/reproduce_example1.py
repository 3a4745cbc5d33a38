"""Temporal convergence study for the 1D problem on graded meshes (Ms = N)."""

import argparse

from l21sigma.harness import StudyConfig, run_study


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alphas", default="0.4,0.6,0.8")
    parser.add_argument("--Ns", default="64,128,256,512,1024")
    parser.add_argument("--format", choices=["csv", "md"], default="md")
    parser.add_argument("--out")
    args = parser.parse_args()

    config = StudyConfig(
        problem="ex1",
        alphas=[float(a) for a in args.alphas.split(",")],
        Ns=[int(n) for n in args.Ns.split(",")],
        fmt=args.format,
        out=args.out,
    )
    report = run_study(config)
    if not args.out:
        print(report.render())


if __name__ == "__main__":
    main()
