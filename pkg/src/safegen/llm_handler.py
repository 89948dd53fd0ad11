"""Prompt assembly, generation backends, and code extraction.

The prompting ladder escalates ZeroShot -> FewShot -> ChainOfThought as
refinement progresses; every prompt is a deterministic function of its
context so runs replay bit-identically. Backends are pluggable: a replay
backend for reproducible pipeline tests and an HTTP client for any
OpenAI-compatible chat-completion endpoint (local deployments included).
"""

from __future__ import annotations

import enum
import hashlib
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .errors import (
    BackendExhausted,
    ContextOverflow,
    DeadlineExceeded,
    InvariantError,
    NoCodeFound,
    TransportError,
)


class Strategy(enum.IntEnum):
    """Prompting strategies, ordered by escalation level."""

    ZERO_SHOT = 0
    FEW_SHOT = 1
    CHAIN_OF_THOUGHT = 2


@dataclass(frozen=True)
class PromptContext:
    role_preamble: str
    spec_block: str
    strategy: Strategy
    shots: tuple[tuple[str, str], ...] = ()
    best_prior_solution: str | None = None
    error_feedback: str | None = None

    def __post_init__(self):
        if self.strategy == Strategy.FEW_SHOT and not self.shots:
            raise InvariantError("FewShot strategy requires at least one shot")
        if self.strategy == Strategy.CHAIN_OF_THOUGHT and not self.best_prior_solution:
            raise InvariantError("ChainOfThought strategy requires a prior solution")


@dataclass(frozen=True)
class SourceArtifact:
    """One extracted candidate implementation."""

    code: str
    language_tag: str
    declared_dependencies: tuple[str, ...]
    content_hash: str

    def __post_init__(self):
        if not self.code:
            raise InvariantError("artifact code must be nonempty")


def hash_code(code: str) -> str:
    return hashlib.sha256(code.encode("utf-8")).hexdigest()


def make_artifact(code: str, language_tag: str) -> SourceArtifact:
    return SourceArtifact(
        code=code,
        language_tag=language_tag,
        declared_dependencies=scan_dependencies(code),
        content_hash=hash_code(code),
    )


def schedule_strategy(iteration: int, has_partial_pass: bool) -> Strategy:
    """Strategy for generation attempt ``iteration`` (1-based).

    Attempt 1 explores zero-shot; later attempts add curated shots; once any
    prior candidate has passed at least one static check, refinement pivots
    to chain-of-thought over the best prior solution. Monotone
    non-decreasing in ``iteration`` by construction.
    """
    if has_partial_pass:
        return Strategy.CHAIN_OF_THOUGHT
    if iteration <= 1:
        return Strategy.ZERO_SHOT
    return Strategy.FEW_SHOT


def build_prompt(ctx: PromptContext, char_budget: int | None = None) -> str:
    """Assemble the prompt; raises ContextOverflow past ``char_budget`` chars."""
    parts = [ctx.role_preamble.rstrip() + "\n", ctx.spec_block.rstrip() + "\n"]
    if ctx.strategy >= Strategy.FEW_SHOT:
        for i, (task, solution) in enumerate(ctx.shots, start=1):
            parts.append(
                f"## Worked example {i}\n"
                f"### Task\n{task.rstrip()}\n"
                f"### Solution\n{solution.rstrip()}\n"
            )
    if ctx.strategy == Strategy.CHAIN_OF_THOUGHT:
        parts.append(
            "## Best solution so far\n"
            "Reason step by step about what this version gets right before "
            "improving it.\n"
            f"```\n{ctx.best_prior_solution.rstrip()}\n```\n"
        )
    if ctx.error_feedback:
        parts.append(f"## Validation feedback to resolve\n{ctx.error_feedback.rstrip()}\n")
    prompt = "\n".join(parts)
    if char_budget is not None and len(prompt) > char_budget:
        raise ContextOverflow(
            f"assembled prompt is {len(prompt)} chars, budget is {char_budget}"
        )
    return prompt


class GenerationBackend(Protocol):
    def generate(self, prompt: str) -> str: ...


class ReplayBackend:
    """Returns scripted responses in sequence; deterministic by call index."""

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._index = 0

    @classmethod
    def from_dir(cls, path: str | Path) -> "ReplayBackend":
        """Load numbered UTF-8 text files (000.txt, 001.txt, ...) in order."""
        files = sorted(Path(path).glob("*.txt"))
        return cls([f.read_text(encoding="utf-8") for f in files])

    def generate(self, prompt: str) -> str:
        if self._index >= len(self._responses):
            raise BackendExhausted(
                f"replay script exhausted after {len(self._responses)} responses"
            )
        response = self._responses[self._index]
        self._index += 1
        return response


class HttpBackend:
    """Client for an OpenAI-compatible chat-completion endpoint."""

    def __init__(
        self,
        url: str,
        model: str,
        temperature: float = 0.2,
        max_tokens: int = 4096,
        timeout_s: float = 120.0,
        retries: int = 3,
        backoff_s: float = 1.0,
        api_key_env: str = "SAFEGEN_API_KEY",
    ):
        self.url = url
        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self.api_key_env = api_key_env

    def generate(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        last_exc: Exception | None = None
        timed_out = False
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * attempt)
            try:
                resp = requests.post(
                    self.url, json=body, headers=headers, timeout=self.timeout_s
                )
            except requests.Timeout as exc:
                last_exc, timed_out = exc, True
                continue
            except requests.RequestException as exc:
                last_exc, timed_out = exc, False
                continue
            if resp.status_code >= 500:
                last_exc = TransportError(f"server returned {resp.status_code}")
                timed_out = False
                continue
            if resp.status_code != 200:
                raise TransportError(
                    f"endpoint returned {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise TransportError(f"malformed completion response: {exc}") from exc
        if timed_out:
            raise DeadlineExceeded(
                f"no response within {self.timeout_s}s after "
                f"{self.retries + 1} attempts"
            ) from last_exc
        raise TransportError(
            f"transport failed after {self.retries + 1} attempts: {last_exc}"
        ) from last_exc


def generate(backend: GenerationBackend, prompt: str) -> str:
    if not prompt:
        raise InvariantError("prompt must be nonempty")
    return backend.generate(prompt)


_FENCE_RE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)
_CPP_TAGS = {"cpp", "c++", "cxx", "cc"}
_INCLUDE_RE = re.compile(r'^\s*#\s*include\s*[<"]([^>"]+)[>"]', re.MULTILINE)
_IMPORT_RE = re.compile(r"^\s*import\s+([\w.]+)", re.MULTILINE)


def _tag_matches(tag: str, language_target: str) -> bool:
    tag = tag.strip().lower()
    if language_target == "cpp":
        return tag in _CPP_TAGS
    return tag == language_target.lower()


def scan_dependencies(code: str) -> tuple[str, ...]:
    """Include/import lines declared by the candidate, in order, deduped."""
    seen: list[str] = []
    for match in _INCLUDE_RE.finditer(code):
        name = match.group(1)
        if name not in seen:
            seen.append(name)
    for match in _IMPORT_RE.finditer(code):
        name = match.group(1)
        if name not in seen:
            seen.append(name)
    return tuple(seen)


def extract_code(response: str, language_target: str = "cpp") -> SourceArtifact:
    """Pick the LAST fenced block matching the target language.

    Models often emit an exploratory fragment before a corrected full
    listing, so the final matching block is taken as the intended artifact.
    Untagged blocks are considered only when no tagged block matches.
    """
    tagged: list[str] = []
    untagged: list[str] = []
    for match in _FENCE_RE.finditer(response):
        tag, body = match.group(1), match.group(2)
        if _tag_matches(tag, language_target):
            tagged.append(body)
        elif not tag.strip():
            untagged.append(body)
    blocks = tagged if tagged else untagged
    if not blocks:
        raise NoCodeFound(f"no {language_target} code block in response")
    code = blocks[-1].strip("\n") + "\n"
    return make_artifact(code, language_target)


def verify_dependencies(
    artifact: SourceArtifact,
    design,
    standard_headers: Sequence[str] = (),
) -> list[str]:
    """Declared dependencies not allowed by the design spec or allowlist."""
    allowed = set(design.dependencies) | set(standard_headers)
    return [dep for dep in artifact.declared_dependencies if dep not in allowed]
