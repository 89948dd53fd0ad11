"""Safety-classified version state machine and candidate history.

A candidate line progresses Draft -> Verified (all static checks clean) ->
Safe (integration monitoring clean, terminal). Integration failure demotes
the line so the next candidate must re-earn Verified; integration can never
bypass static validation. History is an append-only JSON-lines file so the
full refinement trajectory is inspectable and replayable.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import IllegalTransition, StorageError


class Phase(str, enum.Enum):
    DRAFT = "Draft"
    STATIC_FAILED = "StaticFailed"
    VERIFIED = "Verified"
    INTEGRATION_FAILED = "IntegrationFailed"
    SAFE = "Safe"


class StateEvent(str, enum.Enum):
    STATIC_CHECK_FAILED = "StaticCheckFailed"
    ALL_STATIC_CHECKS_PASSED = "AllStaticChecksPassed"
    INTEGRATION_FAILED = "IntegrationFailed"
    INTEGRATION_PASSED = "IntegrationPassed"


@dataclass(frozen=True)
class VersionState:
    phase: Phase = Phase.DRAFT
    i_static: int = 0
    i_integration: int = 0

    def __post_init__(self):
        if self.i_static < 0 or self.i_integration < 0:
            raise IllegalTransition("iteration counters must be nonnegative")


# States in which a static validation outcome is a legal next event. After
# an integration failure the next candidate re-enters static validation, so
# IntegrationFailed accepts static events exactly like Draft does.
_STATIC_PHASE = {Phase.DRAFT, Phase.STATIC_FAILED, Phase.INTEGRATION_FAILED}


def transition(state: VersionState, event: StateEvent) -> VersionState:
    """Apply one event; raises IllegalTransition on any unlisted pair.

    Safe is terminal, and integration events are legal only from Verified:
    a candidate can never reach Safe without passing through Verified.
    """
    phase = state.phase
    if phase in _STATIC_PHASE and event == StateEvent.STATIC_CHECK_FAILED:
        return VersionState(Phase.STATIC_FAILED, state.i_static + 1, state.i_integration)
    if phase in _STATIC_PHASE and event == StateEvent.ALL_STATIC_CHECKS_PASSED:
        return VersionState(Phase.VERIFIED, state.i_static, state.i_integration)
    if phase == Phase.VERIFIED and event == StateEvent.INTEGRATION_FAILED:
        return VersionState(
            Phase.INTEGRATION_FAILED, state.i_static, state.i_integration + 1
        )
    if phase == Phase.VERIFIED and event == StateEvent.INTEGRATION_PASSED:
        return VersionState(Phase.SAFE, state.i_static, state.i_integration)
    raise IllegalTransition(f"no transition for ({phase.value}, {event.value})")


@dataclass(frozen=True)
class CandidateRecord:
    candidate_id: int
    content_hash: str
    state: VersionState
    check_outcomes: tuple[tuple[str, bool], ...]
    error_summary: str | None
    parent_id: int | None
    created_at: str

    def passed_checks(self) -> int:
        return sum(1 for _, ok in self.check_outcomes if ok)

    def to_json(self) -> str:
        return json.dumps(
            {
                "candidate_id": self.candidate_id,
                "content_hash": self.content_hash,
                "state": {
                    "phase": self.state.phase.value,
                    "i_static": self.state.i_static,
                    "i_integration": self.state.i_integration,
                },
                "check_outcomes": [[kind, ok] for kind, ok in self.check_outcomes],
                "error_summary": self.error_summary,
                "parent_id": self.parent_id,
                "created_at": self.created_at,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "CandidateRecord":
        raw = json.loads(line)
        return cls(
            candidate_id=raw["candidate_id"],
            content_hash=raw["content_hash"],
            state=VersionState(
                Phase(raw["state"]["phase"]),
                raw["state"]["i_static"],
                raw["state"]["i_integration"],
            ),
            check_outcomes=tuple((k, bool(v)) for k, v in raw["check_outcomes"]),
            error_summary=raw["error_summary"],
            parent_id=raw["parent_id"],
            created_at=raw["created_at"],
        )


def events_for_record(record: CandidateRecord) -> list[StateEvent]:
    """Events implied by one record, for ledger replay.

    Static outcome first (all four checks clean or not), then the
    integration outcome whenever the recorded phase shows one happened.
    """
    statics_clean = (
        len(record.check_outcomes) == 4
        and all(ok for _, ok in record.check_outcomes)
    )
    events = [
        StateEvent.ALL_STATIC_CHECKS_PASSED
        if statics_clean
        else StateEvent.STATIC_CHECK_FAILED
    ]
    if record.state.phase == Phase.INTEGRATION_FAILED:
        events.append(StateEvent.INTEGRATION_FAILED)
    elif record.state.phase == Phase.SAFE:
        events.append(StateEvent.INTEGRATION_PASSED)
    return events


def replay(records: list[CandidateRecord]) -> VersionState:
    """Fold the transition function over the persisted event sequence."""
    state = VersionState()
    for record in records:
        for event in events_for_record(record):
            state = transition(state, event)
    return state


class Ledger:
    """Single-writer append-only candidate history."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: list[CandidateRecord] = []

    @classmethod
    def open(cls, path: str | Path) -> "Ledger":
        ledger = cls(path)
        if ledger.path.exists():
            for line in ledger.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    ledger._records.append(CandidateRecord.from_json(line))
        else:
            ledger.path.parent.mkdir(parents=True, exist_ok=True)
            ledger.path.touch()
        return ledger

    @property
    def records(self) -> list[CandidateRecord]:
        return list(self._records)

    def next_candidate_id(self) -> int:
        return self._records[-1].candidate_id + 1 if self._records else 1

    def record(
        self,
        artifact,
        state: VersionState,
        check_outcomes: tuple[tuple[str, bool], ...],
        error_summary: str | None = None,
        parent_id: int | None = None,
    ) -> CandidateRecord:
        """Append one record; durable (flushed + fsynced) before return."""
        rec = CandidateRecord(
            candidate_id=self.next_candidate_id(),
            content_hash=artifact.content_hash,
            state=state,
            check_outcomes=check_outcomes,
            error_summary=error_summary,
            parent_id=parent_id,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        if not self.path.exists():
            raise StorageError(f"ledger file vanished: {self.path}")
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")
                fh.flush()
                import os

                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageError(f"ledger append failed: {exc}") from exc
        self._records.append(rec)
        return rec

    def best_prior(self) -> CandidateRecord | None:
        """Record with the most passed checks; earlier id wins ties."""
        if not self._records:
            return None
        return max(
            self._records,
            key=lambda r: (r.passed_checks(), -r.candidate_id),
        )
