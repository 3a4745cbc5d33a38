"""Weight and coefficient checks over a grid of (alpha, r, N)."""

import argparse

from l21sigma.harness import diagnose, format_diagnostics


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alphas", default="0.4,0.5,0.6,0.8")
    parser.add_argument("--Ns", default="32,128")
    parser.add_argument("--uniform", action="store_true", help="also check r = 1")
    args = parser.parse_args()

    failures = 0
    for alpha in (float(a) for a in args.alphas.split(",")):
        grades = [2 / alpha] + ([1.0] if args.uniform else [])
        for r in grades:
            for N in (int(n) for n in args.Ns.split(",")):
                report = diagnose(alpha, N, r)
                print(format_diagnostics(report), end="\n\n")
                failures += sum(not c["pass"] for c in report["checks"].values())
    print(f"{failures} failed check(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
