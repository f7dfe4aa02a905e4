"""Episode state, planner prompt assembly, and runaway-loop guards.

An :class:`Episode` is an immutable value: appending an entry returns a new
episode, so distinct episodes can be processed in parallel with no shared
state. The prompt layout produced by :func:`render_prompt` is frozen and
golden-tested; remote planners are prompted against this exact byte layout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .assets import default_system_prompt
from .dsl import (
    HistoryEntry,
    RawStep,
    Step,
    StepKind,
    StepResult,
    UnexpectedResultForFinish,
    render_entry,
)

RUNNING = "running"
FINISHED = "finished"
ABORTED = "aborted"

BUDGET_EXCEEDED = "budget_exceeded"
LIVELOCK = "livelock"


class EpisodeTerminated(RuntimeError):
    pass


class MissingResult(ValueError):
    pass


@dataclass(frozen=True)
class LoopGuardConfig:
    """Termination safeguards for the planning loop.

    Defaults are generous against an 8-step reference episode while still
    bounding runaway planners.
    """

    max_steps: int = 30
    repeat_window: int = 6
    max_identical_repeats: int = 3

    def __post_init__(self):
        if self.max_steps < 1 or self.repeat_window < 1:
            raise ValueError("max_steps and repeat_window must be positive")
        if self.max_identical_repeats < 2:
            raise ValueError("max_identical_repeats must be >= 2")


@dataclass(frozen=True)
class Episode:
    task: str
    system_prompt: str
    history: tuple[HistoryEntry, ...] = ()
    status: str = RUNNING
    abort_reason: str | None = None
    step_budget: int = 30


def new_episode(task: str, system_prompt: str | None = None, step_budget: int = 30) -> Episode:
    task = task.strip()
    if not task:
        raise ValueError("task must be non-empty")
    if "\n" in task:
        raise ValueError("task must be a single line")
    if step_budget < 1:
        raise ValueError("step_budget must be positive")
    if system_prompt is None:
        system_prompt = default_system_prompt()
    return Episode(task=task, system_prompt=system_prompt, step_budget=step_budget)


def render_prompt(episode: Episode) -> str:
    """Assemble the planner prompt: system prompt, task, then the history.

    Layout (deterministic, byte-for-byte):

        <system prompt>
        <blank line>
        Human: <task>
        Robot behavior plan:
        <one line per entry, FINISH line bare>
    """
    lines = [
        episode.system_prompt.rstrip("\n"),
        "",
        f"Human: {episode.task}",
        "Robot behavior plan:",
    ]
    lines.extend(render_entry(e) for e in episode.history)
    return "\n".join(lines) + "\n"


def render_episode_transcript(episode: Episode) -> str:
    """The history alone, one line per entry (the dataset rendering)."""
    return "".join(render_entry(e) + "\n" for e in episode.history)


def append(episode: Episode, step: Step | RawStep, result: StepResult | None = None) -> Episode:
    """Append one executed step; FINISH flips the episode to finished."""
    if episode.status != RUNNING:
        raise EpisodeTerminated(f"episode is {episode.status}")
    if len(episode.history) >= episode.step_budget:
        raise EpisodeTerminated("step budget exhausted")
    is_finish = isinstance(step, Step) and step.kind is StepKind.FINISH
    if is_finish and result is not None:
        raise UnexpectedResultForFinish("FINISH carries no result")
    if not is_finish and result is None:
        raise MissingResult("non-FINISH steps require a result")
    entry = HistoryEntry(step, result)
    return replace(
        episode,
        history=episode.history + (entry,),
        status=FINISHED if is_finish else RUNNING,
    )


def mark_aborted(episode: Episode, reason: str) -> Episode:
    if episode.status != RUNNING:
        raise EpisodeTerminated(f"episode is {episode.status}")
    return replace(episode, status=ABORTED, abort_reason=reason)


def check_guards(episode: Episode, config: LoopGuardConfig = LoopGuardConfig()) -> str | None:
    """Return an abort reason when a guard fires, else None.

    BUDGET_EXCEEDED fires once the history reaches ``max_steps``. LIVELOCK
    fires when the last ``max_identical_repeats`` entries (within the repeat
    window) are pairwise identical, step and result both.
    """
    if episode.status != RUNNING:
        raise EpisodeTerminated(f"episode is {episode.status}")
    if len(episode.history) >= config.max_steps:
        return BUDGET_EXCEEDED
    k = config.max_identical_repeats
    if k <= config.repeat_window and len(episode.history) >= k:
        tail = episode.history[-k:]
        if all(entry == tail[0] for entry in tail[1:]):
            return LIVELOCK
    return None
