"""Command-line interface: run, validate, simulate, report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import (
    BudgetExhausted,
    ConfigError,
    ControllerCrashed,
    DeadlineExceeded,
    PipelineError,
    ProtocolViolation,
    ToolError,
)
from .integration_sim import (
    ScriptedLead,
    SimConfig,
    evaluate_data,
    feedback_for_reports,
    run_episode,
    run_integration_monitoring,
    write_telemetry_csv,
)
from .llm_handler import make_artifact
from .orchestrator import run_full_pipeline
from .spec_model import parse_behavior_spec, parse_design_spec
from .state_ledger import Ledger, Phase, replay
from .static_validation import CheckStatus, TestSuite, run_static_pipeline

USAGE_EXIT = 64

# Lead schedule for the scripted emergency scenario: hard braking to a
# stop, then holding position for the rest of the episode.
HARD_BRAKE_LEAD = ScriptedLead(segments=((5.0, -6.0),))


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="safegen", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run_p = sub.add_parser("run", help="full generate-validate-simulate loop")
    run_p.add_argument("--config", help="JSON pipeline config")
    run_p.add_argument("--backend", choices=["replay", "http"])
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--keep-workspaces", action="store_true")
    run_p.add_argument("--max-static-iters", type=int)
    run_p.add_argument("--max-integration-iters", type=int)
    run_p.add_argument("--json", action="store_true", dest="as_json")

    val_p = sub.add_parser("validate", help="static pipeline on one source file")
    val_p.add_argument("source", help="candidate C++ file")
    val_p.add_argument("--config", help="JSON pipeline config")
    val_p.add_argument("--keep-workspaces", action="store_true")
    val_p.add_argument("--json", action="store_true", dest="as_json")

    sim_p = sub.add_parser("simulate", help="integration monitoring on a controller")
    sim_p.add_argument("controller", nargs=argparse.REMAINDER,
                       help="controller command (prefix with --)")
    sim_p.add_argument("--config", help="JSON pipeline config")
    sim_p.add_argument("--seed", type=int)
    sim_p.add_argument("--out", default="telemetry", help="telemetry directory")
    sim_p.add_argument("--scenario", choices=["random", "hard_brake"],
                       default="random")
    sim_p.add_argument("--json", action="store_true", dest="as_json")

    rep_p = sub.add_parser("report", help="per-check statistics from a ledger")
    rep_p.add_argument("ledger", help="ledger JSON-lines file")
    rep_p.add_argument("--config", help="JSON pipeline config")
    rep_p.add_argument("--json", action="store_true", dest="as_json")
    return parser


def _config_from_args(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "backend", None):
        config.backend.kind = args.backend
    if getattr(args, "seed", None) is not None:
        config.seed_override = args.seed
    if getattr(args, "keep_workspaces", False):
        config.keep_workspaces = True
    if getattr(args, "max_static_iters", None):
        config.max_static_iterations = args.max_static_iters
    if getattr(args, "max_integration_iters", None):
        config.max_integration_iterations = args.max_integration_iters
    return config.resolved()


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    try:
        report = run_full_pipeline(config)
    except BudgetExhausted as exc:
        if args.as_json and exc.report is not None:
            payload = exc.report.to_dict()
            payload["error"] = str(exc)
            payload["best_prior"] = exc.best_prior_summary
            print(json.dumps(payload, indent=2))
        else:
            print(f"budget exhausted: {exc}", file=sys.stderr)
            if exc.best_prior_summary:
                print(f"best prior: {exc.best_prior_summary}", file=sys.stderr)
        return 2
    if args.as_json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        state = report.final_state
        print(f"final state: {state.phase.value}"
              + (f" (candidate {report.safe_candidate_id})"
                 if report.safe_candidate_id else ""))
        failures = " ".join(
            f"{kind}={count}" for kind, count in report.per_check_failures.items()
        )
        print(f"static failures: {failures}")
        print(f"candidates: {report.total_candidates}, "
              f"integration runs: {report.integration_runs}, "
              f"wall clock: {report.wall_clock_s:.1f}s")
        print(f"ledger: {report.ledger_path}")
        if report.telemetry_dir:
            print(f"telemetry: {report.telemetry_dir}")
    return 0 if report.final_state.phase == Phase.SAFE else 2


def _cmd_validate(args) -> int:
    config = _config_from_args(args)
    source = Path(args.source)
    if not source.exists():
        raise ConfigError(f"source file not found: {source}")
    design = parse_design_spec(Path(config.design_path).read_text(encoding="utf-8"))
    design.validate()
    suite = TestSuite.load(config.suite_manifest)
    artifact = make_artifact(source.read_text(encoding="utf-8"), "cpp")
    results, ok, _ = run_static_pipeline(
        artifact, design, config.toolchain, suite,
        keep_on_failure=config.keep_workspaces,
    )
    if args.as_json:
        print(json.dumps(
            {
                "checks": [
                    {
                        "kind": r.kind.value,
                        "status": r.status.value,
                        "feedback": r.sanitized_feedback,
                    }
                    for r in results
                ],
                "overall": "Pass" if ok else "Fail",
            },
            indent=2,
        ))
    else:
        for r in results:
            print(f"{r.kind.value}: {r.status.value}")
            if r.sanitized_feedback:
                for line in r.sanitized_feedback.splitlines():
                    print(f"  {line}")
        print(f"overall: {'Pass' if ok else 'Fail'}")
    return 0 if ok else 2


def _controller_cmd(raw: list[str]) -> list[str]:
    cmd = raw[1:] if raw and raw[0] == "--" else list(raw)
    if not cmd:
        raise ConfigError("simulate needs a controller command after --")
    return cmd


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    cmd = _controller_cmd(args.controller)
    behavior = parse_behavior_spec(
        Path(config.behavior_path).read_text(encoding="utf-8")
    )
    if config.seed_override is not None:
        behavior = dataclasses.replace(behavior, seed=config.seed_override)
    behavior.validate()
    sim = SimConfig(**config.sim_overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.scenario == "hard_brake":
        telemetry = run_episode(
            cmd, behavior, sim, seed=behavior.seed, lead=HARD_BRAKE_LEAD
        )
        report = evaluate_data(telemetry, behavior)
        write_telemetry_csv(telemetry, out / "hard_brake.csv")
        (out / "hard_brake.report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        reports = [(behavior.seed, report)]
        overall = report.overall
    else:
        overall, reports, _ = run_integration_monitoring(
            cmd, behavior, n_seeds=config.n_seeds, sim=sim, telemetry_dir=out
        )

    if args.as_json:
        print(json.dumps(
            {
                "overall": overall,
                "episodes": [
                    {"seed": seed, **report.to_dict()} for seed, report in reports
                ],
                "telemetry_dir": str(out),
            },
            indent=2,
        ))
    else:
        for seed, report in reports:
            verdict = "pass" if report.overall else "fail"
            print(
                f"seed {seed}: {verdict} "
                f"(band {report.band_occupancy:.1%}, "
                f"worst clearance margin {report.worst_clearance_margin:.2f} m, "
                f"max |a| {report.max_abs_accel:.2f} m/s^2)"
            )
        feedback = feedback_for_reports(reports, behavior)
        if feedback:
            print(feedback)
        print(f"overall: {'pass' if overall else 'fail'}")
        print(f"telemetry: {out}")
    return 0 if overall else 2


def _cmd_report(args) -> int:
    path = Path(args.ledger)
    if not path.exists():
        raise ConfigError(f"ledger not found: {path}")
    ledger = Ledger.open(path)
    records = ledger.records
    failures = {"Structure": 0, "Compile": 0, "StyleDesign": 0, "UnitTest": 0}
    integration_failures = 0
    for record in records:
        for kind, passed in record.check_outcomes:
            if not passed:
                failures[kind] += 1
                break
        if record.state.phase == Phase.INTEGRATION_FAILED:
            integration_failures += 1
    final_phase = records[-1].state.phase.value if records else "Draft"
    replayed = replay(records)
    consistent = bool(records) and replayed == records[-1].state
    if args.as_json:
        print(json.dumps(
            {
                "candidates": len(records),
                "final_phase": final_phase,
                "replay_consistent": consistent,
                "failures_by_check": failures,
                "integration_failures": integration_failures,
            },
            indent=2,
        ))
    else:
        print(f"candidates: {len(records)}")
        print(f"final phase: {final_phase}"
              + (" (replay consistent)" if consistent else " (REPLAY MISMATCH)"))
        print("failures by check: "
              + ", ".join(f"{k} {v}" for k, v in failures.items()))
        print(f"integration failures: {integration_failures}")
    return 0 if not records or consistent else 1


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits for usage errors and --help; keep main() returning
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    if args.command is None:
        parser.print_help(sys.stderr)
        return USAGE_EXIT
    handlers = {
        "run": _cmd_run,
        "validate": _cmd_validate,
        "simulate": _cmd_simulate,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ToolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ControllerCrashed, ProtocolViolation, DeadlineExceeded) as exc:
        print(f"controller failure: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
