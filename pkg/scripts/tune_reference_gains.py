"""Sweep reference-controller gains against the closed-loop simulator.

Scores each (kp, kd) pair over many lead-profile seeds and reports band
occupancy, clearance margin, emergency usage, and pass rate. The winning
pair gets committed as the module constants in reference_controller.py and
mirrored in the C++ fixtures. Run from the repo root:

    python3 scripts/tune_reference_gains.py [--fine]
"""

from __future__ import annotations

import argparse
import sys

from safegen.integration_sim import SimConfig, evaluate_data, run_episode
from safegen.spec_model import BehaviorSpec


def score(kp: float, kd: float, seeds: range) -> dict:
    behavior = BehaviorSpec()
    sim = SimConfig()
    cmd = [sys.executable, "-m", "safegen.reference_controller", str(kp), str(kd)]
    worst = {
        "band": 1.0,
        "clearance": float("inf"),
        "max_a": 0.0,
        "collisions": 0,
        "passes": 0,
        "post_settle_emergency": 0,
    }
    for seed in seeds:
        telemetry = run_episode(cmd, behavior, sim, seed=seed)
        report = evaluate_data(telemetry, behavior)
        worst["band"] = min(worst["band"], report.band_occupancy)
        worst["clearance"] = min(worst["clearance"], report.worst_clearance_margin)
        worst["max_a"] = max(worst["max_a"], report.max_abs_accel)
        worst["collisions"] += 0 if report.collision_free else 1
        worst["passes"] += 1 if report.overall else 0
        worst["post_settle_emergency"] += sum(
            1 for s in telemetry.samples
            if s.emergency and s.t > behavior.settle_time
        )
    return worst


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--fine", action="store_true",
                        help="narrow sweep around the current winner")
    parser.add_argument("--seeds", type=int, default=12,
                        help="number of seeds starting at 7")
    args = parser.parse_args()

    if args.fine:
        grid = [(kp, kd) for kp in (0.35, 0.4, 0.45, 0.5, 0.55)
                for kd in (0.8, 0.9, 1.0, 1.1, 1.2)]
    else:
        grid = [(kp, kd) for kp in (0.2, 0.45, 0.7, 1.0)
                for kd in (0.6, 0.9, 1.2, 1.6)]
    seeds = range(7, 7 + args.seeds)

    print(f"{'kp':>5} {'kd':>5} {'pass':>5} {'band_min':>9} "
          f"{'clr_margin':>11} {'max|a|':>7} {'coll':>5} {'em_post':>8}")
    for kp, kd in grid:
        s = score(kp, kd, seeds)
        print(f"{kp:5.2f} {kd:5.2f} {s['passes']:3d}/{len(seeds):<2d} "
              f"{s['band']:9.3f} {s['clearance']:11.3f} {s['max_a']:7.3f} "
              f"{s['collisions']:5d} {s['post_settle_emergency']:8d}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
