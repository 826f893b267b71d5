"""Translation/re-translation state machine with quality scoring.

A language batch moves sourced -> translated -> auto_checking ->
(in_human_eval | auto_failed); human evaluation accepts at a score >= 90
and otherwise sends the batch back for re-translation by the original
provider, which re-enters automatic checking with the round counter
bumped.  Every round passes through both automatic checks and human
evaluation, so acceptance always rests on a passing check and a fresh
score; a retranslation triggered by a score below the re-eval threshold
(80) is additionally marked re_eval_required for auditing.

The quality score tallies error annotations weighted by severity (minor 1,
major 5, critical 25) and normalizes per word:
value = max(0, 100 * (1 - penalty/word_count)).

State is event-sourced: transitions append to a JSON-lines log and replay
rebuilds every item.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DomainError

CATEGORIES = (
    "grammar",
    "punctuation",
    "spelling",
    "capitalization",
    "addition_omission",
    "mistranslation",
    "unnatural_translation",
    "untranslated_text",
    "register",
)
SEVERITIES = ("minor", "major", "critical")
SEVERITY_WEIGHTS = {"minor": 1.0, "major": 5.0, "critical": 25.0}

STATES = (
    "sourced",
    "translated",
    "auto_checking",
    "auto_failed",
    "in_human_eval",
    "retranslating",
    "accepted",
)
EVENTS = ("translated", "auto_pass", "auto_fail", "eval_scored", "retranslation_done")

ACCEPTANCE_THRESHOLD = 90.0
RE_EVAL_THRESHOLD = 80.0


class EmptyBatch(DomainError):
    pass


class IllegalTransition(DomainError):
    pass


class MalformedEventLog(DomainError):
    pass


@dataclass(frozen=True)
class ErrorAnnotation:
    category: str
    severity: str
    sentence_id: int
    note: str = ""

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")


@dataclass(frozen=True)
class QualityScore:
    value: float
    penalty_points: float
    word_count: int


def quality_score(
    annotations: Sequence[ErrorAnnotation],
    word_count: int,
    weights: dict[str, float] | None = None,
) -> QualityScore:
    """Severity-weighted, per-word-normalized batch quality on 0..100."""
    if word_count <= 0:
        raise EmptyBatch(f"word_count must be positive, got {word_count}")
    weights = weights or SEVERITY_WEIGHTS
    penalty = sum(weights[a.severity] for a in annotations)
    value = max(0.0, 100.0 * (1.0 - penalty / word_count))
    return QualityScore(value=value, penalty_points=penalty, word_count=word_count)


@dataclass(frozen=True)
class Transition:
    event: str
    state_after: str
    timestamp: str
    score: float | None = None


@dataclass(frozen=True)
class WorkItem:
    language: str
    provider: str = ""
    state: str = "sourced"
    round: int = 0
    score_history: tuple[float, ...] = ()
    re_eval_required: bool = False
    history: tuple[Transition, ...] = ()

    def sourced_at(self) -> str | None:
        return self.history[0].timestamp if self.history else None

    def accepted_at(self) -> str | None:
        for transition in reversed(self.history):
            if transition.state_after == "accepted":
                return transition.timestamp
        return None


def new_item(
    language: str, provider: str = "", timestamp: str | None = None
) -> WorkItem:
    stamp = timestamp or _now()
    return WorkItem(
        language=language,
        provider=provider,
        history=(Transition("sourced", "sourced", stamp),),
    )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def advance(
    item: WorkItem,
    event: str,
    score: float | None = None,
    timestamp: str | None = None,
    acceptance_threshold: float = ACCEPTANCE_THRESHOLD,
    re_eval_threshold: float = RE_EVAL_THRESHOLD,
) -> WorkItem:
    """Apply one event, returning the next WorkItem (pure function).

    Transition table:
      sourced       + translated         -> translated
      translated    + auto_pass/fail     -> in_human_eval / auto_failed
      auto_checking + auto_pass/fail     -> in_human_eval / auto_failed
      auto_failed   + retranslation_done -> auto_checking, round + 1
      in_human_eval + eval_scored(s)     -> accepted if s >= 90 else
                                            retranslating (score appended)
      retranslating + retranslation_done -> auto_checking, round + 1

    Illegal (state, event) pairs raise IllegalTransition.  A freshly
    translated batch is treated as queued for checking, so check events
    are legal in both translated and auto_checking.
    """
    if event not in EVENTS:
        raise IllegalTransition(f"unknown event {event!r}")
    if event == "eval_scored" and score is None:
        raise IllegalTransition("eval_scored requires a score")
    stamp = timestamp or _now()

    def move(state: str, **changes) -> WorkItem:
        transition = Transition(event, state, stamp, score)
        return replace(
            item,
            state=state,
            history=item.history + (transition,),
            **changes,
        )

    state = item.state
    if state == "sourced" and event == "translated":
        return move("translated")
    if state in ("translated", "auto_checking"):
        if event == "auto_pass":
            return move("in_human_eval")
        if event == "auto_fail":
            return move("auto_failed")
    if state == "auto_failed" and event == "retranslation_done":
        return move("auto_checking", round=item.round + 1)
    if state == "in_human_eval" and event == "eval_scored":
        if score >= acceptance_threshold:
            return move("accepted", score_history=item.score_history + (score,))
        return move(
            "retranslating",
            score_history=item.score_history + (score,),
            re_eval_required=score < re_eval_threshold,
        )
    if state == "retranslating" and event == "retranslation_done":
        return move("auto_checking", round=item.round + 1)
    raise IllegalTransition(f"event {event!r} not legal in state {item.state!r}")


@dataclass(frozen=True)
class WorkflowStatsReport:
    n_items: int
    n_accepted: int
    n_in_flight: int
    n_requiring_retranslation: int
    avg_rounds_among_retranslated: float
    max_rounds: int
    avg_days_to_accept: float
    min_days_to_accept: float
    max_days_to_accept: float

    def as_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "n_accepted": self.n_accepted,
            "n_in_flight": self.n_in_flight,
            "n_requiring_retranslation": self.n_requiring_retranslation,
            "avg_rounds_among_retranslated": self.avg_rounds_among_retranslated,
            "max_rounds": self.max_rounds,
            "avg_days_to_accept": self.avg_days_to_accept,
            "min_days_to_accept": self.min_days_to_accept,
            "max_days_to_accept": self.max_days_to_accept,
        }


def _days_between(start: str, end: str) -> float:
    delta = datetime.fromisoformat(end) - datetime.fromisoformat(start)
    return delta.total_seconds() / 86400.0


def workflow_stats(items: Sequence[WorkItem]) -> WorkflowStatsReport:
    """Throughput summary: retranslation load and wall-clock durations."""
    retranslated = [i for i in items if i.round >= 1]
    accepted = [i for i in items if i.state == "accepted"]
    durations = []
    for item in accepted:
        start, end = item.sourced_at(), item.accepted_at()
        if start and end:
            durations.append(_days_between(start, end))
    return WorkflowStatsReport(
        n_items=len(items),
        n_accepted=len(accepted),
        n_in_flight=len(items) - len(accepted),
        n_requiring_retranslation=len(retranslated),
        avg_rounds_among_retranslated=(
            sum(i.round for i in retranslated) / len(retranslated)
            if retranslated
            else 0.0
        ),
        max_rounds=max((i.round for i in items), default=0),
        avg_days_to_accept=sum(durations) / len(durations) if durations else 0.0,
        min_days_to_accept=min(durations, default=0.0),
        max_days_to_accept=max(durations, default=0.0),
    )


def append_event(
    log_path: str | Path,
    item: str,
    event: str,
    payload: dict | None = None,
    timestamp: str | None = None,
) -> None:
    """Append one transition line to the JSON-lines event log."""
    line = json.dumps(
        {
            "item": item,
            "event": event,
            "payload": payload or {},
            "timestamp": timestamp or _now(),
        },
        ensure_ascii=False,
    )
    with open(log_path, "a", encoding="utf-8", newline="\n") as handle:
        handle.write(line + "\n")


def replay_log(source: str | Path | Iterable[str]) -> dict[str, WorkItem]:
    """Rebuild every item's state from an event log.

    A "sourced" line (or the first line naming an item) creates the item;
    later lines advance it through the transition table, so an illegal
    recorded sequence fails the replay loudly.
    """
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = source
    items: dict[str, WorkItem] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            name = record["item"]
            event = record["event"]
            payload = record.get("payload", {})
            timestamp = record.get("timestamp")
            if not isinstance(payload, dict):
                raise TypeError("payload must be an object")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise MalformedEventLog(f"log line {lineno}: {exc}") from exc
        score = payload.get("score")
        if score is not None and not isinstance(score, (int, float)):
            raise MalformedEventLog(f"log line {lineno}: score {score!r} not numeric")
        if name not in items:
            items[name] = new_item(
                payload.get("language", name),
                provider=payload.get("provider", ""),
                timestamp=timestamp,
            )
            if event == "sourced":
                continue
        elif event == "sourced":
            raise MalformedEventLog(
                f"log line {lineno}: item {name!r} sourced twice"
            )
        items[name] = advance(items[name], event, score=score, timestamp=timestamp)
    return items
