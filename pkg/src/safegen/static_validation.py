"""Ordered static validation pipeline: structure, compile, style, unit tests.

Checks run in a fixed order and the pipeline stops at the first failure, so
feedback always targets the earliest broken layer. Unit-test feedback is
sanitized to counts and category labels only; exposing test names or
expected values would let refinement overfit to individual tests.
"""

from __future__ import annotations

import enum
import json
import re
import shutil
import subprocess
import tempfile
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .config import ToolchainConfig
from .errors import ToolError
from .llm_handler import SourceArtifact, verify_dependencies
from .spec_model import DesignSpec

# Headers candidates may include without declaring them as dependencies.
STANDARD_HEADERS = frozenset(
    {
        "algorithm",
        "array",
        "cassert",
        "cmath",
        "cstddef",
        "cstdint",
        "cstdio",
        "cstdlib",
        "cstring",
        "iostream",
        "limits",
        "numeric",
        "string",
        "utility",
        "vector",
    }
)


class CheckKind(str, enum.Enum):
    STRUCTURE = "Structure"
    COMPILE = "Compile"
    STYLE_DESIGN = "StyleDesign"
    UNIT_TEST = "UnitTest"


CHECK_ORDER = (
    CheckKind.STRUCTURE,
    CheckKind.COMPILE,
    CheckKind.STYLE_DESIGN,
    CheckKind.UNIT_TEST,
)


class CheckStatus(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    TOOL_ERROR = "ToolError"


@dataclass(frozen=True)
class CheckResult:
    kind: CheckKind
    status: CheckStatus
    raw_diagnostics: str
    sanitized_feedback: str
    duration_ms: float

    def __post_init__(self):
        if self.status == CheckStatus.PASS and self.sanitized_feedback:
            raise ValueError("passing check must carry empty feedback")


@dataclass(frozen=True)
class TestSuite:
    """User-supplied unit tests plus the sanitization vocabulary.

    Loaded from a manifest so feedback categories and forbidden substrings
    live next to the test sources they describe.
    """

    __test__ = False  # name collides with pytest's collection heuristic

    root: Path
    test_sources: tuple[str, ...]
    categories: dict[str, str]
    forbidden_substrings: tuple[str, ...]
    per_test_timeout_s: float = 5.0
    report_format: str = "gtest-json"

    @classmethod
    def load(cls, manifest_path: str | Path) -> "TestSuite":
        path = Path(manifest_path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        suite = cls(
            root=path.parent,
            test_sources=tuple(raw["test_sources"]),
            categories=dict(raw["categories"]),
            forbidden_substrings=tuple(raw.get("forbidden_substrings", ())),
            per_test_timeout_s=float(raw.get("per_test_timeout_s", 5.0)),
            report_format=str(raw.get("report_format", "gtest-json")),
        )
        if suite.report_format != "gtest-json":
            raise ToolError(
                f"unsupported test report format: {suite.report_format!r}"
            )
        return suite


@dataclass
class Workspace:
    """Throwaway build directory for exactly one candidate."""

    path: Path
    keep_on_failure: bool = False

    @classmethod
    def create(cls, candidate_id: int, base: str | Path | None = None,
               keep_on_failure: bool = False) -> "Workspace":
        base_dir = Path(base) if base else Path(tempfile.gettempdir())
        base_dir.mkdir(parents=True, exist_ok=True)
        path = Path(
            tempfile.mkdtemp(prefix=f"cand{candidate_id:04d}-", dir=base_dir)
        ).resolve()
        return cls(path=path, keep_on_failure=keep_on_failure)

    def cleanup(self, failed: bool = False):
        if failed and self.keep_on_failure:
            return
        shutil.rmtree(self.path, ignore_errors=True)


def _strip_paths(text: str, workspace: Path) -> str:
    text = text.replace(str(workspace) + "/", "")
    return text.replace(str(workspace), "")


def _first_lines(text: str, n: int = 40) -> str:
    lines = text.splitlines()
    if len(lines) <= n:
        return text.strip()
    return "\n".join(lines[:n]).strip() + f"\n... ({len(lines) - n} more lines)"


_DEF_TEMPLATE = r"\b{name}\s*\(([^)]*)\)\s*(?:const\s*)?(?:noexcept\s*)?\{{"


def _find_definition_arity(code: str, name: str) -> int | None:
    """Parameter count of the first file-scope definition of name, else None.

    Heuristic on purpose: the compile stage right after this one supplies
    full syntactic truth, so this only needs placement and arity.
    """
    stripped = re.sub(r"//[^\n]*", "", code)
    stripped = re.sub(r"/\*.*?\*/", "", stripped, flags=re.DOTALL)
    match = re.search(_DEF_TEMPLATE.format(name=re.escape(name)), stripped)
    if match is None:
        return None
    params = match.group(1).strip()
    if not params or params == "void":
        return 0
    depth = 0
    count = 1
    for ch in params:
        if ch in "(<[":
            depth += 1
        elif ch in ")>]":
            depth -= 1
        elif ch == "," and depth == 0:
            count += 1
    return count


def check_structure(artifact: SourceArtifact, design: DesignSpec) -> CheckResult:
    """Lightweight placement check: right function, right arity, legal deps."""
    started = time.monotonic()
    problems = []
    arity = _find_definition_arity(artifact.code, design.function_name)
    if arity is None:
        problems.append(
            f"no file-scope definition of required function "
            f"'{design.function_name}' found"
        )
    elif arity != len(design.inputs):
        problems.append(
            f"'{design.function_name}' takes {arity} parameters, "
            f"design requires {len(design.inputs)}"
        )
    for violation in verify_dependencies(artifact, design, STANDARD_HEADERS):
        problems.append(f"undeclared dependency: {violation}")
    feedback = "\n".join(problems)
    return CheckResult(
        kind=CheckKind.STRUCTURE,
        status=CheckStatus.PASS if not problems else CheckStatus.FAIL,
        raw_diagnostics=feedback,
        sanitized_feedback=feedback,
        duration_ms=(time.monotonic() - started) * 1000.0,
    )


def _run_tool(cmd: list[str], cwd: Path, timeout_s: float) -> subprocess.CompletedProcess:
    try:
        return subprocess.run(
            cmd,
            cwd=cwd,
            capture_output=True,
            text=True,
            timeout=timeout_s,
        )
    except FileNotFoundError as exc:
        raise ToolError(f"tool not found: {cmd[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise ToolError(f"tool timed out after {timeout_s:.0f}s: {cmd[0]}") from exc


_OUTPUT_CAP = 1 << 20


def _capped(text: str) -> str:
    return text if len(text) <= _OUTPUT_CAP else text[:_OUTPUT_CAP]


def check_compile(
    artifact: SourceArtifact, workspace: Workspace, toolchain: ToolchainConfig
) -> CheckResult:
    """Warnings-as-errors compile of the candidate as a lone translation unit."""
    started = time.monotonic()
    src = workspace.path / "candidate.cpp"
    src.write_text(artifact.code, encoding="utf-8")
    cmd = [
        toolchain.cxx,
        *toolchain.cxx_flags,
        "-c",
        str(src),
        "-o",
        str(workspace.path / "candidate.o"),
    ]
    try:
        proc = _run_tool(cmd, workspace.path, toolchain.tool_timeout_s)
    except ToolError as exc:
        return CheckResult(
            kind=CheckKind.COMPILE,
            status=CheckStatus.TOOL_ERROR,
            raw_diagnostics=str(exc),
            sanitized_feedback=str(exc),
            duration_ms=(time.monotonic() - started) * 1000.0,
        )
    diagnostics = _capped(proc.stderr + proc.stdout)
    ok = proc.returncode == 0
    feedback = "" if ok else _first_lines(_strip_paths(diagnostics, workspace.path))
    return CheckResult(
        kind=CheckKind.COMPILE,
        status=CheckStatus.PASS if ok else CheckStatus.FAIL,
        raw_diagnostics=diagnostics,
        sanitized_feedback=feedback,
        duration_ms=(time.monotonic() - started) * 1000.0,
    )


_SEVERITY_RANK = {"note": 0, "warning": 1, "error": 2}

_FINDING_RE = re.compile(
    r"^(?P<loc>[^\s:]+:\d+:\d+):\s+(?P<sev>warning|error):\s+(?P<msg>.*?)\s+\[(?P<rule>[\w.,-]+)\]\s*$"
)


def check_style(
    artifact: SourceArtifact,
    workspace: Workspace,
    toolchain: ToolchainConfig,
    severity_threshold: str = "warning",
) -> CheckResult:
    """Rule-list static analysis; findings at or above the threshold fail."""
    started = time.monotonic()
    src = workspace.path / "candidate.cpp"
    if not src.exists():
        src.write_text(artifact.code, encoding="utf-8")
    cmd = [
        toolchain.tidy,
        f"--checks={toolchain.tidy_checks}",
        "--quiet",
        str(src),
        "--",
        "-std=c++17",
    ]
    try:
        proc = _run_tool(cmd, workspace.path, toolchain.tool_timeout_s)
    except ToolError as exc:
        return CheckResult(
            kind=CheckKind.STYLE_DESIGN,
            status=CheckStatus.TOOL_ERROR,
            raw_diagnostics=str(exc),
            sanitized_feedback=str(exc),
            duration_ms=(time.monotonic() - started) * 1000.0,
        )
    output = _capped(proc.stdout + proc.stderr)
    if proc.returncode != 0 and "error:" not in output:
        # Analyzer died without producing diagnostics it understands.
        return CheckResult(
            kind=CheckKind.STYLE_DESIGN,
            status=CheckStatus.TOOL_ERROR,
            raw_diagnostics=output,
            sanitized_feedback="static analyzer crashed without a report",
            duration_ms=(time.monotonic() - started) * 1000.0,
        )
    threshold = _SEVERITY_RANK[severity_threshold]
    findings = []
    for line in _strip_paths(output, workspace.path).splitlines():
        match = _FINDING_RE.match(line.strip())
        if match and _SEVERITY_RANK[match.group("sev")] >= threshold:
            findings.append(
                f"[{match.group('rule')}] {match.group('msg')} at {match.group('loc')}"
            )
    feedback = "\n".join(findings[:40])
    return CheckResult(
        kind=CheckKind.STYLE_DESIGN,
        status=CheckStatus.PASS if not findings else CheckStatus.FAIL,
        raw_diagnostics=output,
        sanitized_feedback=feedback,
        duration_ms=(time.monotonic() - started) * 1000.0,
    )


def _parse_gtest_report(report_path: Path) -> tuple[int, list[str]]:
    """Total test count and the full names of failing tests."""
    raw = json.loads(report_path.read_text(encoding="utf-8"))
    total = 0
    failing = []
    for suite in raw.get("testsuites", []):
        for test in suite.get("testsuite", []):
            total += 1
            if test.get("failures"):
                failing.append(f"{test['classname']}.{test['name']}")
    return total, failing


def sanitize_test_feedback(
    total: int, failing: list[str], suite: TestSuite
) -> str:
    """Counts and category tags only; never test names or expected values."""
    if not failing:
        return ""
    tags = Counter(suite.categories.get(name, "uncategorized") for name in failing)
    parts = [f"{tag}×{n}" for tag, n in sorted(tags.items())]
    return f"{len(failing)}/{total} failed; categories: {', '.join(parts)}"


def check_unit_tests(
    artifact: SourceArtifact,
    workspace: Workspace,
    toolchain: ToolchainConfig,
    suite: TestSuite,
) -> CheckResult:
    """Build and run the supplied test harness against the candidate."""
    started = time.monotonic()

    def done(status, raw, feedback):
        return CheckResult(
            kind=CheckKind.UNIT_TEST,
            status=status,
            raw_diagnostics=_capped(raw),
            sanitized_feedback=feedback,
            duration_ms=(time.monotonic() - started) * 1000.0,
        )

    src = workspace.path / "candidate.cpp"
    if not src.exists():
        src.write_text(artifact.code, encoding="utf-8")
    test_paths = []
    for name in suite.test_sources:
        dest = workspace.path / Path(name).name
        shutil.copyfile(suite.root / name, dest)
        test_paths.append(str(dest))
    binary = workspace.path / "test_runner"
    build_cmd = [
        toolchain.cxx,
        "-std=c++17",
        f"-I{toolchain.gtest_include}",
        f"-L{toolchain.gtest_libdir}",
        *test_paths,
        "-lgtest",
        "-lgtest_main",
        "-pthread",
        "-o",
        str(binary),
    ]
    try:
        build = _run_tool(build_cmd, workspace.path, toolchain.tool_timeout_s)
    except ToolError as exc:
        return done(CheckStatus.TOOL_ERROR, str(exc), str(exc))
    if build.returncode != 0:
        raw = build.stderr + build.stdout
        # The harness is trusted and includes the candidate directly, so a
        # build failure is the candidate's fault unless the diagnostics show
        # the test framework itself is missing.
        framework_missing = (
            "gtest/gtest.h" in raw and "No such file" in raw
        ) or "cannot find -lgtest" in raw
        if framework_missing:
            return done(CheckStatus.TOOL_ERROR, raw, "test harness build failed")
        return done(
            CheckStatus.FAIL,
            raw,
            "test harness failed to build against the candidate "
            "(interface mismatch)",
        )

    report = workspace.path / "report.json"
    n_tests = max(len(suite.categories), 1)
    run_timeout = suite.per_test_timeout_s * n_tests + 10.0
    try:
        run = subprocess.run(
            [str(binary), f"--gtest_output=json:{report}"],
            cwd=workspace.path,
            capture_output=True,
            text=True,
            timeout=run_timeout,
        )
    except subprocess.TimeoutExpired:
        return done(
            CheckStatus.TOOL_ERROR,
            f"test run exceeded {run_timeout:.0f}s",
            "categories: timeout",
        )
    if not report.exists():
        return done(
            CheckStatus.TOOL_ERROR,
            run.stdout + run.stderr,
            "test runner crashed before writing a report",
        )
    total, failing = _parse_gtest_report(report)
    feedback = sanitize_test_feedback(total, failing, suite)
    for forbidden in suite.forbidden_substrings:
        if forbidden in feedback:
            raise ToolError(
                f"sanitization breach: feedback leaked {forbidden!r}"
            )
    return done(
        CheckStatus.PASS if not failing else CheckStatus.FAIL,
        run.stdout + run.stderr,
        feedback,
    )


def run_static_pipeline(
    artifact: SourceArtifact,
    design: DesignSpec,
    toolchain: ToolchainConfig,
    suite: TestSuite,
    candidate_id: int = 0,
    workdir: str | Path | None = None,
    keep_on_failure: bool = False,
) -> tuple[list[CheckResult], bool, str]:
    """Run all checks in order, stopping at the first failure.

    Returns (results, overall_pass, error_analysis). A ToolError status on
    any check raises ToolError with the partial results attached, so the
    caller can retry without charging a refinement iteration.
    """
    workspace = Workspace.create(candidate_id, workdir, keep_on_failure)
    results: list[CheckResult] = []
    failed = False
    try:
        for kind in CHECK_ORDER:
            if kind == CheckKind.STRUCTURE:
                result = check_structure(artifact, design)
            elif kind == CheckKind.COMPILE:
                result = check_compile(artifact, workspace, toolchain)
            elif kind == CheckKind.STYLE_DESIGN:
                result = check_style(artifact, workspace, toolchain)
            else:
                result = check_unit_tests(artifact, workspace, toolchain, suite)
            results.append(result)
            if result.status == CheckStatus.TOOL_ERROR:
                err = ToolError(
                    f"{kind.value} check hit a tool fault: "
                    f"{result.sanitized_feedback}"
                )
                err.results = results
                raise err
            if result.status == CheckStatus.FAIL:
                failed = True
                break
        error_analysis = results[-1].sanitized_feedback if failed else ""
        return results, not failed, error_analysis
    finally:
        workspace.cleanup(failed=failed)
