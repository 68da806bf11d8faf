"""Run the three accuracy experiments and write their reports.

Writes ``experimentN.csv`` and ``experimentN.txt`` per experiment into the
output directory and prints the headline checks. Exit status is 1 if any
check fails.
"""

import argparse
import sys
import time
from pathlib import Path

from textile_resonance.experiments import RUNNERS, headline_checks, write_report


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", type=int, choices=sorted(RUNNERS), action="append",
                    help="run just this experiment (repeatable)")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    failed = False
    for n in args.only or sorted(RUNNERS):
        t0 = time.perf_counter()
        report = RUNNERS[n](reps=args.reps, seed=args.seed, threads=args.threads)
        csv_path, summary = write_report(report, args.out / f"experiment{n}.csv")
        print(f"experiment {n}: {time.perf_counter() - t0:.1f} s -> {csv_path}, {summary}")
        for check in headline_checks(report):
            print("  " + check.line())
            failed |= not check.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
