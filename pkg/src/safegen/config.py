"""Run configuration for the refinement pipeline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError


def data_path(*parts: str) -> Path:
    """Path to a packaged data file (prompt text, fixture suite, specs)."""
    return Path(str(resources.files("safegen").joinpath("data", *parts)))


@dataclass
class ToolchainConfig:
    """External tool locations and flags for static validation."""

    cxx: str = "g++"
    cxx_flags: tuple[str, ...] = ("-std=c++17", "-Wall", "-Wextra", "-Werror")
    tidy: str = "clang-tidy"
    tidy_checks: str = (
        "-*,bugprone-narrowing-conversions,clang-analyzer-deadcode.DeadStores"
    )
    gtest_include: str = "/usr/include"
    gtest_libdir: str = "/usr/lib/x86_64-linux-gnu"
    tool_timeout_s: float = 120.0


@dataclass
class BackendConfig:
    """Where candidate code comes from: a replay directory or an HTTP endpoint."""

    kind: str = "replay"  # replay | http
    replay_dir: str | None = None
    url: str | None = None
    model: str = "default"
    temperature: float = 0.2
    max_tokens: int = 4096
    timeout_s: float = 60.0
    retries: int = 3

    def validate(self):
        if self.kind not in ("replay", "http"):
            raise ConfigError(f"unknown backend kind: {self.kind!r}")
        if self.kind == "replay":
            if not self.replay_dir:
                raise ConfigError("replay backend needs replay_dir")
            if not Path(self.replay_dir).is_dir():
                raise ConfigError(f"replay_dir not found: {self.replay_dir}")
        if self.kind == "http" and not self.url:
            raise ConfigError("http backend needs url")


@dataclass
class RunConfig:
    """One full pipeline run: budgets, seeds, tools, workspace, fixtures."""

    design_path: str = ""
    behavior_path: str = ""
    backend: BackendConfig = field(default_factory=BackendConfig)
    toolchain: ToolchainConfig = field(default_factory=ToolchainConfig)
    workdir: str = "runs"
    ledger_path: str = ""            # default: <workdir>/ledger.jsonl
    suite_manifest: str = ""         # default: packaged fixture suite
    controller_wrapper: str = ""     # default: packaged protocol wrapper
    role_preamble_path: str = ""     # default: packaged preamble
    shots_dir: str = ""              # default: packaged worked examples
    max_static_iterations: int = 25
    max_integration_iterations: int = 5
    n_seeds: int = 3
    prompt_char_budget: int = 60000
    keep_workspaces: bool = False
    seed_override: int | None = None
    sim_overrides: dict = field(default_factory=dict)

    def resolved(self) -> "RunConfig":
        """Fill defaults that depend on other fields or packaged data."""
        if not self.design_path:
            self.design_path = str(data_path("design_acc.json"))
        if not self.behavior_path:
            self.behavior_path = str(data_path("behavior_acc.yaml"))
        if not self.ledger_path:
            self.ledger_path = str(Path(self.workdir) / "ledger.jsonl")
        if not self.suite_manifest:
            self.suite_manifest = str(data_path("acc_suite", "manifest.json"))
        if not self.controller_wrapper:
            self.controller_wrapper = str(
                data_path("acc_suite", "controller_main.cpp")
            )
        if not self.role_preamble_path:
            self.role_preamble_path = str(data_path("role_preamble.txt"))
        if not self.shots_dir:
            self.shots_dir = str(data_path("shots"))
        return self

    def validate(self):
        self.resolved()
        if self.max_static_iterations < 1:
            raise ConfigError("max_static_iterations must be >= 1")
        if self.max_integration_iterations < 1:
            raise ConfigError("max_integration_iterations must be >= 1")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if self.prompt_char_budget < 1000:
            raise ConfigError("prompt_char_budget unreasonably small")
        for label, path in (
            ("design spec", self.design_path),
            ("behaviour spec", self.behavior_path),
            ("test-suite manifest", self.suite_manifest),
            ("controller wrapper", self.controller_wrapper),
            ("role preamble", self.role_preamble_path),
        ):
            if not Path(path).exists():
                raise ConfigError(f"{label} not found: {path}")
        self.backend.validate()


def load_config(path: str | Path) -> RunConfig:
    """Strict JSON config loader; unknown keys are errors, not typos."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    backend_raw = raw.pop("backend", {})
    toolchain_raw = raw.pop("toolchain", {})
    for section_name, section, cls in (
        ("backend", backend_raw, BackendConfig),
        ("toolchain", toolchain_raw, ToolchainConfig),
    ):
        if not isinstance(section, dict):
            raise ConfigError(f"{section_name} must be a JSON object")
        allowed = {f.name for f in fields(cls)}
        for key in section:
            if key not in allowed:
                raise ConfigError(f"unknown {section_name} key: {key!r}")
    if "cxx_flags" in toolchain_raw:
        toolchain_raw["cxx_flags"] = tuple(toolchain_raw["cxx_flags"])

    allowed = {f.name for f in fields(RunConfig)} - {"backend", "toolchain"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {key!r}")
    config = RunConfig(
        backend=BackendConfig(**backend_raw),
        toolchain=ToolchainConfig(**toolchain_raw),
        **raw,
    )
    return config
