"""The planning loop: ask the planner, route the step, feed back the result.

One episode is one sequential loop over an owned world copy. Each iteration
asks the planner for the next step, routes it (FINISH terminates, view steps
go to the vision backend, everything else to the physical executor), appends
the (step, result) pair to the episode, and checks the loop guards. Planner
output that fails to parse is recorded in-band as a failed raw entry so a
live model can self-correct; planner transport failure aborts the episode.
"""

from __future__ import annotations

import copy
import hashlib
import json
import time
from dataclasses import dataclass

from .backends import (
    ScriptExhausted,
    SimVision,
    TransportError,
    UnparseableStep,
    UnsupportedTask,
    dispatch_vision,
    sanitize_step_text,
)
from .camera import CameraRig
from .dsl import (
    DslError,
    Outcome,
    RawStep,
    Step,
    StepKind,
    parse_step,
    render_result,
    render_step,
)
from .episode import (
    FINISHED,
    Episode,
    EpisodeTerminated,
    LoopGuardConfig,
    append,
    check_guards,
    mark_aborted,
    new_episode,
    render_episode_transcript,
)
from .goals import GoalPredicate
from .world import SimConfig, WorldState, execute, world_to_json

ROUTE_FINISH = "finish"
ROUTE_VISION = "vision"
ROUTE_PHYSICAL = "physical"

_VISION = {StepKind.DESCRIBE_VIEW, StepKind.QUESTION_VIEW, StepKind.SEARCH_VIEW}

ABORT_BACKEND_UNAVAILABLE = "backend_unavailable"
ABORT_SCRIPT_EXHAUSTED = "script_exhausted"
ABORT_UNSUPPORTED_TASK = "unsupported_task"

UNPARSEABLE_NOTE = "unparseable planner output"


def route(step: Step) -> str:
    """Partition a step kind into finish / vision / physical."""
    if step.kind is StepKind.FINISH:
        return ROUTE_FINISH
    if step.kind in _VISION:
        return ROUTE_VISION
    return ROUTE_PHYSICAL


@dataclass
class EpisodeOutcome:
    episode: Episode
    success: bool
    abort_reason: str | None
    step_count: int
    wall_time: float
    final_world: WorldState


def run_episode(
    task: str,
    world: WorldState,
    rig: CameraRig,
    planner,
    vision=None,
    guards: LoopGuardConfig = LoopGuardConfig(),
    goal: GoalPredicate | None = None,
    sim_config: SimConfig = SimConfig(),
    system_prompt: str | None = None,
    on_step=None,
    on_result=None,
) -> EpisodeOutcome:
    """Run one task to FINISH, abort, or guard violation.

    The input world is copied, never mutated. ``success`` is the goal
    predicate evaluated on the final world regardless of how the episode
    ended (without a goal it falls back to "finished cleanly"). ``on_step``
    and ``on_result`` are optional callbacks for live transcript output.
    """
    vision = vision if vision is not None else SimVision()
    episode = new_episode(task, system_prompt=system_prompt, step_budget=guards.max_steps)
    w = copy.deepcopy(world)
    started = time.perf_counter()
    abort_reason: str | None = None

    while episode.status != FINISHED:
        try:
            text = planner.next_step(episode)
        except UnparseableStep as err:
            step = RawStep(sanitize_step_text(err.raw) or "(empty planner output)")
            result = Outcome.failure(UNPARSEABLE_NOTE)
        except ScriptExhausted:
            abort_reason = ABORT_SCRIPT_EXHAUSTED
            break
        except UnsupportedTask:
            abort_reason = ABORT_UNSUPPORTED_TASK
            break
        except TransportError:
            abort_reason = ABORT_BACKEND_UNAVAILABLE
            break
        else:
            try:
                step = parse_step(sanitize_step_text(text))
                result = None
            except DslError:
                step = RawStep(sanitize_step_text(text) or "(empty planner output)")
                result = Outcome.failure(UNPARSEABLE_NOTE)

        if on_step:
            on_step(step)
        if isinstance(step, RawStep):
            pass  # result already set to the in-band failure
        elif route(step) == ROUTE_FINISH:
            episode = append(episode, step)
            if on_result:
                on_result(None)
            break
        elif route(step) == ROUTE_VISION:
            result, w = dispatch_vision(step, vision, w, rig)
        else:
            result, w = execute(step, w, sim_config)
        try:
            episode = append(episode, step, result)
        except EpisodeTerminated:
            abort_reason = "budget_exceeded"
            break
        if on_result:
            on_result(result)
        abort_reason = check_guards(episode, guards)
        if abort_reason:
            break

    if abort_reason and episode.status != FINISHED:
        episode = mark_aborted(episode, abort_reason)
    success = goal.evaluate(w) if goal is not None else episode.status == FINISHED
    return EpisodeOutcome(
        episode=episode,
        success=success,
        abort_reason=abort_reason,
        step_count=len(episode.history),
        wall_time=time.perf_counter() - started,
        final_world=w,
    )


def world_digest(world: WorldState) -> str:
    payload = json.dumps(world_to_json(world), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


def config_digest(sim_config: SimConfig, guards: LoopGuardConfig) -> str:
    payload = json.dumps(
        {
            "interact_radius": sim_config.interact_radius,
            "arrive_radius": sim_config.arrive_radius,
            "max_steps": guards.max_steps,
            "repeat_window": guards.repeat_window,
            "max_identical_repeats": guards.max_identical_repeats,
        },
        sort_keys=True,
    )
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


def episode_to_json(
    outcome: EpisodeOutcome,
    sim_config: SimConfig = SimConfig(),
    guards: LoopGuardConfig = LoopGuardConfig(),
    seed: int | None = None,
) -> dict:
    """Serializable episode record: transcript, config, and world digest.

    Wall time is deliberately excluded so identical inputs produce identical
    artifacts.
    """
    episode = outcome.episode
    return {
        "schema_version": 1,
        "task": episode.task,
        "system_prompt": episode.system_prompt,
        "steps": [
            {
                "step": render_step(e.step),
                "result": render_result(e.result) if e.result is not None else None,
            }
            for e in episode.history
        ],
        "status": episode.status,
        "abort_reason": episode.abort_reason,
        "success": outcome.success,
        "step_count": outcome.step_count,
        "config": {
            "sim": {
                "interact_radius": sim_config.interact_radius,
                "arrive_radius": sim_config.arrive_radius,
            },
            "guards": {
                "max_steps": guards.max_steps,
                "repeat_window": guards.repeat_window,
                "max_identical_repeats": guards.max_identical_repeats,
            },
            "seed": seed,
        },
        "config_digest": config_digest(sim_config, guards),
        "world_digest": world_digest(outcome.final_world),
    }


def transcript_text(outcome: EpisodeOutcome) -> str:
    return render_episode_transcript(outcome.episode)
