#!/usr/bin/env python3
"""Timing sweep: random families of growing size, all approaches, CSV out.

    python3 scripts/compare_approaches.py [--seeds 30] [--out results.csv]

Cross-checks every approach against the exact member-by-member oracle while
collecting wall-clock times and iteration counts, so the CSV doubles as an
agreement report.
"""

import argparse
import csv
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from famsynth import (
    SizeCapError,
    all_in_one_check,
    enumerate_consistent,
    one_by_one,
    random_family,
    random_spec,
    threshold_synthesis,
)


def measure(fn):
    t0 = time.perf_counter()
    outcome = fn()
    return time.perf_counter() - t0, outcome


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=30)
    parser.add_argument("--states", type=int, default=10)
    parser.add_argument("--params", type=int, default=4)
    parser.add_argument("--domain", type=int, default=4)
    parser.add_argument("--out", default="-")
    args = parser.parse_args()

    handle = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    writer = csv.writer(handle)
    writer.writerow(["seed", "states", "members", "approach", "seconds",
                     "iterations", "agrees"])
    for seed in range(args.seeds):
        family = random_family(seed, max_states=args.states,
                               max_params=args.params,
                               max_domain=args.domain,
                               rewards=seed % 2 == 0)
        spec = random_spec(seed, family)
        baseline_wall, baseline = measure(lambda: one_by_one(family, spec))
        reference = baseline.bucket_members(baseline.accepted)
        runs = [("one-by-one", baseline_wall, baseline, True)]
        for name, fn in (
                ("all-in-one",
                 lambda: all_in_one_check(family, spec).outcome(spec)),
                ("consistent-enum",
                 lambda: enumerate_consistent(family, spec)),
                ("refinement",
                 lambda: threshold_synthesis(family, spec))):
            try:
                wall, outcome = measure(fn)
            except SizeCapError:
                runs.append((name, None, None, None))
                continue
            agrees = outcome.bucket_members(outcome.accepted) == reference
            runs.append((name, wall, outcome, agrees))
        for name, wall, outcome, agrees in runs:
            writer.writerow([
                seed, family.n_states, family.n_realisations, name,
                f"{wall:.6f}" if wall is not None else "cap",
                outcome.stats.iterations if outcome else "",
                agrees,
            ])
    if handle is not sys.stdout:
        handle.close()


if __name__ == "__main__":
    main()
