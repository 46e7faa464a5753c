#!/usr/bin/env python3
"""
Directional trend checks on the desk generator.

Usage:
    python scripts/check_trends.py [--seeds 1,2,3] [--steps 5000] [--only diversity|n-ablation]

Checks:
    diversity   unbiased mean recall beats biased on every seed, by >= 5 points
                on average; biased micro recall >= unbiased on a majority of seeds
    n-ablation  micro recall with N=20 beats N=1 on a majority of seeds

Exit codes:
    0 -> All checks passed
    1 -> A trend check failed
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from dpl.services.experiments import run_trial  # noqa: E402

MIN_MEAN_RECALL_GAIN = 0.05


def _majority(count: int, total: int) -> bool:
    return count * 2 > total


def check_diversity(seeds: List[int], steps: int) -> bool:
    print("[TREND] biased vs unbiased inference (alpha=10, N=20, R=1.0)")
    gains, mr_wins, r_holds = [], 0, 0
    for seed in seeds:
        trial = run_trial(seed, steps=steps)
        b, u = trial.biased, trial.unbiased
        gains.append(u.mean_recall - b.mean_recall)
        mr_wins += u.mean_recall > b.mean_recall
        r_holds += b.micro_recall >= u.micro_recall
        print(f"  - seed {seed}: mR {b.mean_recall:.4f} -> {u.mean_recall:.4f}, "
              f"R {b.micro_recall:.4f} -> {u.micro_recall:.4f}")
    mean_gain = sum(gains) / len(gains)
    ok = (mr_wins == len(seeds) and mean_gain >= MIN_MEAN_RECALL_GAIN
          and _majority(r_holds, len(seeds)))
    print(f"{'[OK]' if ok else '[FAIL]'} mean mR gain {100 * mean_gain:.2f} points, "
          f"mR wins {mr_wins}/{len(seeds)}, R trade-off {r_holds}/{len(seeds)}")
    return ok


def check_n_ablation(seeds: List[int], steps: int) -> bool:
    print("[TREND] N=1 vs N=20 (unbiased inference)")
    wins = 0
    for seed in seeds:
        one = run_trial(seed, {"N": 1}, steps).unbiased.micro_recall
        twenty = run_trial(seed, {"N": 20}, steps).unbiased.micro_recall
        wins += twenty > one
        print(f"  - seed {seed}: R(N=1)={one:.4f} R(N=20)={twenty:.4f}")
    ok = _majority(wins, len(seeds))
    print(f"{'[OK]' if ok else '[FAIL]'} N=20 ahead on {wins}/{len(seeds)} seeds")
    return ok


def main() -> None:
    parser = argparse.ArgumentParser(description="Desk-scale trend checks")
    parser.add_argument("--seeds", default="1,2,3")
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--only", choices=["diversity", "n-ablation"])
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    results = []
    if args.only in (None, "diversity"):
        results.append(check_diversity(seeds, args.steps))
    if args.only in (None, "n-ablation"):
        results.append(check_n_ablation(seeds, args.steps))

    if not all(results):
        raise SystemExit(1)


if __name__ == "__main__":
    main()
