import json
from pathlib import Path

import pytest

from safegen.cli import main
from safegen.config import BackendConfig, RunConfig, ToolchainConfig, data_path
from safegen.errors import BudgetExhausted, ConfigError, ToolError
from safegen.llm_handler import make_artifact
from safegen.orchestrator import (
    build_controller,
    load_shots,
    make_backend,
    run_full_pipeline,
)
from safegen.state_ledger import Ledger, Phase, replay

STAGED_DIR = str(data_path("replay_staged"))


def staged_config(workdir, **overrides) -> RunConfig:
    config = RunConfig(
        backend=BackendConfig(kind="replay", replay_dir=STAGED_DIR),
        workdir=str(workdir),
        **overrides,
    )
    return config.resolved()


def single_response_dir(tmp_path, code, name="replay") -> str:
    d = tmp_path / name
    d.mkdir()
    (d / "000.txt").write_text(f"```cpp\n{code}```\n", encoding="utf-8")
    return str(d)


@pytest.fixture(scope="module")
def staged_report(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("staged")
    report = run_full_pipeline(staged_config(workdir))
    return report, workdir


class TestStagedRun:
    def test_reaches_safe_in_five(self, staged_report):
        report, _ = staged_report
        assert report.final_state.phase == Phase.SAFE
        assert report.total_candidates == 5
        assert report.safe_candidate_id == 5

    def test_one_failure_per_check(self, staged_report):
        report, _ = staged_report
        assert report.per_check_failures == {
            "Structure": 1,
            "Compile": 1,
            "StyleDesign": 1,
            "UnitTest": 1,
        }

    def test_failure_sum_accounts_for_every_static_run(self, staged_report):
        # every candidate ran statics once; all but the last failed
        report, _ = staged_report
        assert sum(report.per_check_failures.values()) + 1 == report.total_candidates

    def test_ledger_replay_matches_final_state(self, staged_report):
        report, _ = staged_report
        ledger = Ledger.open(report.ledger_path)
        assert len(ledger.records) == 5
        assert replay(ledger.records) == report.final_state

    def test_telemetry_written_for_safe_candidate(self, staged_report):
        report, _ = staged_report
        telemetry = Path(report.telemetry_dir)
        for seed in (7, 8, 9):
            assert (telemetry / f"episode_seed{seed}.csv").exists()

    def test_rerun_refuses_existing_lineage(self, staged_report):
        _, workdir = staged_report
        with pytest.raises(ConfigError):
            run_full_pipeline(staged_config(workdir))

    def test_repeat_run_identical(self, staged_report, tmp_path):
        report, _ = staged_report
        second = run_full_pipeline(staged_config(tmp_path / "again"))
        a, b = report.to_dict(), second.to_dict()
        for volatile in ("wall_clock_s", "ledger_path", "telemetry_dir"):
            a.pop(volatile), b.pop(volatile)
        assert a == b


class TestBudgets:
    def test_static_budget_raises(self, tmp_path):
        config = staged_config(tmp_path, max_static_iterations=2)
        with pytest.raises(BudgetExhausted) as exc:
            run_full_pipeline(config)
        report = exc.value.report
        assert report is not None
        assert report.total_candidates == 2
        assert report.final_state.phase == Phase.STATIC_FAILED
        # partial progress offered for triage
        assert exc.value.best_prior_summary

    def test_integration_budget_returns_report(self, tmp_path, clean_code):
        weak = clean_code.replace("kGainP = 0.45", "kGainP = 0.02").replace(
            "kGainD = 0.9", "kGainD = 0.05"
        )
        assert weak != clean_code
        config = RunConfig(
            backend=BackendConfig(
                kind="replay",
                replay_dir=single_response_dir(tmp_path, weak),
            ),
            workdir=str(tmp_path / "run"),
            max_integration_iterations=1,
        ).resolved()
        report = run_full_pipeline(config)
        assert report.final_state.phase == Phase.INTEGRATION_FAILED
        assert report.integration_runs == 1
        assert report.safe_candidate_id is None
        ledger = Ledger.open(report.ledger_path)
        assert replay(ledger.records) == report.final_state

    def test_seed_override_changes_episode(self, tmp_path, clean_code):
        config = RunConfig(
            backend=BackendConfig(
                kind="replay",
                replay_dir=single_response_dir(tmp_path, clean_code),
            ),
            workdir=str(tmp_path / "run"),
            seed_override=100,
            n_seeds=1,
        ).resolved()
        report = run_full_pipeline(config)
        assert report.final_state.phase == Phase.SAFE
        assert (Path(report.telemetry_dir) / "episode_seed100.csv").exists()


class TestHelpers:
    def test_load_shots_pairs_in_order(self, tmp_path):
        (tmp_path / "001_task.txt").write_text("t1", encoding="utf-8")
        (tmp_path / "001_solution.txt").write_text("s1", encoding="utf-8")
        (tmp_path / "000_task.txt").write_text("t0", encoding="utf-8")
        (tmp_path / "000_solution.txt").write_text("s0", encoding="utf-8")
        assert load_shots(tmp_path) == (("t0", "s0"), ("t1", "s1"))

    def test_packaged_shots_exist(self):
        shots = load_shots(data_path("shots"))
        assert len(shots) >= 1
        for task, solution in shots:
            assert task.strip() and solution.strip()

    def test_make_backend_rejects_unknown_kind(self):
        config = RunConfig(backend=BackendConfig(kind="carrier-pigeon")).resolved()
        with pytest.raises(ConfigError):
            make_backend(config)

    def test_build_controller_failure_is_tool_error(self, tmp_path):
        artifact = make_artifact("this is not C++\n", "cpp")
        with pytest.raises(ToolError):
            build_controller(
                artifact,
                str(data_path("acc_suite", "controller_main.cpp")),
                ToolchainConfig(),
                tmp_path / "build",
            )


def write_cli_config(tmp_path, **overrides) -> str:
    config = {
        "backend": {"kind": "replay", "replay_dir": STAGED_DIR},
        "workdir": str(tmp_path / "cli_run"),
        **overrides,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return str(path)


class TestCli:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 64

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 64

    def test_run_staged_to_safe(self, tmp_path, capsys):
        code = main(["run", "--config", write_cli_config(tmp_path), "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["final_phase"] == "Safe"
        assert payload["per_check_failures"] == {
            "Structure": 1, "Compile": 1, "StyleDesign": 1, "UnitTest": 1,
        }

    def test_run_budget_exhaustion_exit_2(self, tmp_path, capsys):
        code = main([
            "run", "--config", write_cli_config(tmp_path),
            "--max-static-iters", "1", "--json",
        ])
        assert code == 2
        payload = json.loads(capsys.readouterr().out)
        assert "error" in payload

    def test_validate_clean_exit_0(self, tmp_path, clean_code, capsys):
        source = tmp_path / "clean.cpp"
        source.write_text(clean_code, encoding="utf-8")
        assert main(["validate", str(source)]) == 0
        out = capsys.readouterr().out
        assert "UnitTest: Pass" in out

    def test_validate_buggy_exit_2_with_sanitized_feedback(
        self, tmp_path, staged_codes, capsys
    ):
        source = tmp_path / "buggy.cpp"
        source.write_text(staged_codes["unit_test"], encoding="utf-8")
        assert main(["validate", str(source)]) == 2
        out = capsys.readouterr().out
        assert "3/12 failed; categories: boundary×2, sign-convention×1" in out
        assert "EmergencyAppliesBrakeNotThrottle" not in out

    def test_validate_missing_file_exit_1(self, capsys):
        assert main(["validate", "/no/such/file.cpp"]) == 1

    def test_report_consistency(self, tmp_path, capsys):
        config = write_cli_config(tmp_path)
        assert main(["run", "--config", config]) == 0
        capsys.readouterr()
        ledger = str(tmp_path / "cli_run" / "ledger.jsonl")
        assert main(["report", ledger]) == 0
        out = capsys.readouterr().out
        assert "replay consistent" in out

    def test_simulate_reference_controller(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        import sys as _sys

        code = main([
            "simulate", "--seed", "7", "--out", "tel", "--",
            _sys.executable, "-m", "safegen.reference_controller",
        ])
        assert code == 0
        assert (tmp_path / "tel").is_dir()
        assert "pass" in capsys.readouterr().out
