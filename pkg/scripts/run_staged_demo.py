#!/usr/bin/env python3
"""Run the packaged staged-replay demonstration end to end.

The replay script drives one candidate into each static check failure in
turn, then a clean candidate through integration to Safe. Prints the run
report and the per-candidate ledger afterwards.
"""

import argparse
import json
import shutil
import sys
from pathlib import Path

from safegen.config import BackendConfig, RunConfig, data_path
from safegen.orchestrator import run_full_pipeline
from safegen.state_ledger import Ledger


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--workdir",
        default="runs/staged_demo",
        help="run directory (recreated on every invocation)",
    )
    args = parser.parse_args()

    workdir = Path(args.workdir)
    if workdir.exists():
        shutil.rmtree(workdir)

    config = RunConfig(
        backend=BackendConfig(
            kind="replay", replay_dir=str(data_path("replay_staged"))
        ),
        workdir=str(workdir),
    ).resolved()

    report = run_full_pipeline(config)
    print(json.dumps(report.to_dict(), indent=2))
    print()
    for record in Ledger.open(report.ledger_path).records:
        outcome = ", ".join(
            f"{kind}={'ok' if ok else 'FAIL'}" for kind, ok in record.check_outcomes
        )
        print(f"candidate {record.candidate_id}: {record.state.phase.value:18s} {outcome}")
    return 0 if report.final_state.phase.value == "Safe" else 1


if __name__ == "__main__":
    sys.exit(main())
