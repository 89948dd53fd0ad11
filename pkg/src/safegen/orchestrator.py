"""End-to-end refinement loop: generate, validate, simulate, promote.

Each candidate runs the static pipeline; a fully clean candidate is built
into a controller process and must survive integration monitoring before
the line reaches Safe. Failure feedback (sanitized) seeds the next prompt,
with the prompting strategy escalating as partial progress accumulates.
"""

from __future__ import annotations

import dataclasses
import shutil
import subprocess
import time
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .errors import BudgetExhausted, ConfigError, ToolError
from .integration_sim import SimConfig, run_integration_monitoring
from .llm_handler import (
    PromptContext,
    SourceArtifact,
    Strategy,
    build_prompt,
    extract_code,
    generate,
    HttpBackend,
    ReplayBackend,
    schedule_strategy,
)
from .spec_model import (
    parse_behavior_spec,
    parse_design_spec,
    render_for_prompt,
)
from .state_ledger import Ledger, StateEvent, VersionState, transition
from .static_validation import CHECK_ORDER, CheckStatus, TestSuite, run_static_pipeline


@dataclass
class RunReport:
    """Honest outcome of one pipeline run."""

    final_state: VersionState
    per_check_failures: dict[str, int]
    total_candidates: int
    integration_runs: int
    wall_clock_s: float
    ledger_path: str
    telemetry_dir: str | None
    safe_candidate_id: int | None = None

    def to_dict(self) -> dict:
        return {
            "final_phase": self.final_state.phase.value,
            "i_static": self.final_state.i_static,
            "i_integration": self.final_state.i_integration,
            "per_check_failures": dict(self.per_check_failures),
            "total_candidates": self.total_candidates,
            "integration_runs": self.integration_runs,
            "wall_clock_s": round(self.wall_clock_s, 3),
            "ledger_path": self.ledger_path,
            "telemetry_dir": self.telemetry_dir,
            "safe_candidate_id": self.safe_candidate_id,
        }


def make_backend(config: RunConfig):
    if config.backend.kind == "replay":
        return ReplayBackend.from_dir(config.backend.replay_dir)
    if config.backend.kind != "http":
        raise ConfigError(f"unknown backend kind: {config.backend.kind!r}")
    return HttpBackend(
        url=config.backend.url,
        model=config.backend.model,
        temperature=config.backend.temperature,
        max_tokens=config.backend.max_tokens,
        timeout_s=config.backend.timeout_s,
        retries=config.backend.retries,
    )


def load_shots(shots_dir: str | Path) -> tuple[tuple[str, str], ...]:
    """Worked examples stored as paired NNN_task.txt / NNN_solution.txt files."""
    shots = []
    for task_file in sorted(Path(shots_dir).glob("*_task.txt")):
        solution_file = task_file.with_name(
            task_file.name.replace("_task.txt", "_solution.txt")
        )
        if solution_file.exists():
            shots.append(
                (
                    task_file.read_text(encoding="utf-8"),
                    solution_file.read_text(encoding="utf-8"),
                )
            )
    return tuple(shots)


def build_controller(
    artifact: SourceArtifact,
    wrapper_src: str | Path,
    toolchain,
    out_dir: str | Path,
) -> Path:
    """Compile the protocol wrapper around the candidate into an executable.

    The wrapper pulls the candidate in as a single translation unit, so the
    candidate's already-verified interface is the only contract between them.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "candidate.cpp").write_text(artifact.code, encoding="utf-8")
    wrapper_dest = out / "controller_main.cpp"
    shutil.copyfile(wrapper_src, wrapper_dest)
    binary = out / "controller"
    cmd = [
        toolchain.cxx,
        "-std=c++17",
        "-O2",
        str(wrapper_dest),
        "-o",
        str(binary),
    ]
    try:
        proc = subprocess.run(
            cmd, capture_output=True, text=True, timeout=toolchain.tool_timeout_s
        )
    except FileNotFoundError as exc:
        raise ToolError(f"compiler not found: {toolchain.cxx}") from exc
    except subprocess.TimeoutExpired as exc:
        raise ToolError("controller build timed out") from exc
    if proc.returncode != 0:
        raise ToolError(f"controller build failed:\n{proc.stderr[:2000]}")
    return binary


def _summarize_best(ledger: Ledger) -> str | None:
    best = ledger.best_prior()
    if best is None:
        return None
    return (
        f"candidate {best.candidate_id} ({best.state.phase.value}) passed "
        f"{best.passed_checks()}/4 static checks"
    )


def run_full_pipeline(config: RunConfig) -> RunReport:
    """Loop until Safe or a budget is gone; raises on static exhaustion."""
    started = time.monotonic()
    config.validate()
    design = parse_design_spec(Path(config.design_path).read_text(encoding="utf-8"))
    design.validate()
    behavior = parse_behavior_spec(
        Path(config.behavior_path).read_text(encoding="utf-8")
    )
    if config.seed_override is not None:
        behavior = dataclasses.replace(behavior, seed=config.seed_override)
    behavior.validate()
    suite = TestSuite.load(config.suite_manifest)
    backend = make_backend(config)
    sim = SimConfig(**config.sim_overrides)

    workdir = Path(config.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    ledger = Ledger.open(config.ledger_path)
    if ledger.records:
        raise ConfigError(
            f"ledger already holds a run: {config.ledger_path}; "
            f"each run starts a fresh lineage"
        )

    role_preamble = Path(config.role_preamble_path).read_text(encoding="utf-8")
    shots = load_shots(config.shots_dir)
    spec_block = render_for_prompt(design, behavior)

    state = VersionState()
    per_check_failures = {kind.value: 0 for kind in CHECK_ORDER}
    code_by_id: dict[int, str] = {}
    feedback: str | None = None
    parent_id: int | None = None
    telemetry_dir: str | None = None
    integration_runs = 0

    def report(safe_id: int | None = None) -> RunReport:
        return RunReport(
            final_state=state,
            per_check_failures=per_check_failures,
            total_candidates=len(ledger.records),
            integration_runs=integration_runs,
            wall_clock_s=time.monotonic() - started,
            ledger_path=config.ledger_path,
            telemetry_dir=telemetry_dir,
            safe_candidate_id=safe_id,
        )

    while True:
        candidate_id = ledger.next_candidate_id()
        has_partial = any(r.passed_checks() >= 1 for r in ledger.records)
        strategy = schedule_strategy(candidate_id, has_partial)
        best_code = None
        if strategy == Strategy.CHAIN_OF_THOUGHT:
            best = ledger.best_prior()
            best_code = code_by_id[best.candidate_id]
            parent_id = best.candidate_id
        ctx = PromptContext(
            role_preamble=role_preamble,
            spec_block=spec_block,
            strategy=strategy,
            shots=shots if strategy >= Strategy.FEW_SHOT else (),
            best_prior_solution=best_code,
            error_feedback=feedback,
        )
        prompt = build_prompt(ctx, config.prompt_char_budget)
        response = generate(backend, prompt)
        artifact = extract_code(response)
        code_by_id[candidate_id] = artifact.code

        results, statics_ok, error_analysis = run_static_pipeline(
            artifact,
            design,
            config.toolchain,
            suite,
            candidate_id=candidate_id,
            workdir=str(workdir / "workspaces"),
            keep_on_failure=config.keep_workspaces,
        )
        outcomes = tuple(
            (r.kind.value, r.status == CheckStatus.PASS) for r in results
        )

        if not statics_ok:
            state = transition(state, StateEvent.STATIC_CHECK_FAILED)
            per_check_failures[results[-1].kind.value] += 1
            ledger.record(
                artifact, state, outcomes,
                error_summary=error_analysis, parent_id=parent_id,
            )
            feedback = error_analysis
            parent_id = candidate_id
            if state.i_static >= config.max_static_iterations:
                raise BudgetExhausted(
                    f"static budget of {config.max_static_iterations} "
                    f"iterations exhausted before Verified",
                    best_prior_summary=_summarize_best(ledger),
                    report=report(),
                )
            continue

        state = transition(state, StateEvent.ALL_STATIC_CHECKS_PASSED)
        binary = build_controller(
            artifact,
            config.controller_wrapper,
            config.toolchain,
            workdir / "build" / f"cand{candidate_id:04d}",
        )
        episode_dir = workdir / "telemetry" / f"cand{candidate_id:04d}"
        integration_runs += 1
        overall, _reports, int_feedback = run_integration_monitoring(
            [str(binary)],
            behavior,
            n_seeds=config.n_seeds,
            sim=sim,
            telemetry_dir=episode_dir,
        )
        telemetry_dir = str(episode_dir)

        if overall:
            state = transition(state, StateEvent.INTEGRATION_PASSED)
            ledger.record(artifact, state, outcomes, parent_id=parent_id)
            return report(safe_id=candidate_id)

        state = transition(state, StateEvent.INTEGRATION_FAILED)
        ledger.record(
            artifact, state, outcomes,
            error_summary=int_feedback, parent_id=parent_id,
        )
        feedback = int_feedback
        parent_id = candidate_id
        if state.i_integration >= config.max_integration_iterations:
            return report()
