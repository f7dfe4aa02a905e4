"""Dataset records: load/validate/replay transcripts, synthesize new ones.

The on-disk format is JSON lines, one record per line:

    {"system_prompt": "...", "task": "...",
     "steps": [{"step": "SEARCH_VIEW(apple)", "result": "RESULT(<p>apple [1]</p>)"},
               ...,
               {"step": "FINISH"}]}

Every step/result string must parse under the step grammar and each record
ends in FINISH. Replay conformance re-executes a record's steps in a world
and compares recorded results to simulated ones: outcomes by success flag
(notes are diagnostics), texts exactly, detections as multisets of names
since instance ids may renumber.
"""

from __future__ import annotations

import copy
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .backends import OraclePlanner, SimVision, dispatch_vision
from .camera import CameraRig, default_rig
from .dsl import (
    Detections,
    DslError,
    HistoryEntry,
    Outcome,
    RawStep,
    StepKind,
    Text,
    parse_result,
    parse_step,
    parse_transcript,
    render_result,
    render_step,
)
from .episode import FINISHED, LoopGuardConfig
from .goals import DeliveredToUser, GoalPredicate, ObjectNear, Selector
from .orchestrator import ROUTE_FINISH, ROUTE_VISION, route, run_episode
from .world import SimConfig, SimObject, WorldState, execute


class DatasetError(ValueError):
    pass


class GenerationExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    system_prompt: str
    task: str
    entries: tuple[HistoryEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise DatasetError("record has no steps")
        last = self.entries[-1]
        if isinstance(last.step, RawStep) or last.step.kind is not StepKind.FINISH:
            raise DatasetError("record must end in FINISH")
        for i, entry in enumerate(self.entries[:-1]):
            if not isinstance(entry.step, RawStep) and entry.step.kind is StepKind.FINISH:
                raise DatasetError(f"FINISH at position {i + 1} is not last")


def record_to_json(record: DatasetRecord) -> dict:
    steps = []
    for entry in record.entries:
        item = {"step": render_step(entry.step)}
        if entry.result is not None:
            item["result"] = render_result(entry.result)
        steps.append(item)
    return {"system_prompt": record.system_prompt, "task": record.task, "steps": steps}


def record_from_json(data: dict) -> DatasetRecord:
    if not isinstance(data, dict):
        raise DatasetError("record must be a JSON object")
    for key in ("system_prompt", "task", "steps"):
        if key not in data:
            raise DatasetError(f"record missing field {key!r}")
    if not isinstance(data["steps"], list) or not data["steps"]:
        raise DatasetError("record steps must be a non-empty list")
    entries = []
    for i, item in enumerate(data["steps"]):
        if not isinstance(item, dict) or "step" not in item:
            raise DatasetError(f"steps[{i}] must be an object with a 'step' string")
        step = parse_step(str(item["step"]))
        raw_result = item.get("result")
        result = parse_result(str(raw_result)) if raw_result is not None else None
        entries.append(HistoryEntry(step, result))
    return DatasetRecord(
        system_prompt=str(data["system_prompt"]), task=str(data["task"]), entries=tuple(entries)
    )


@dataclass(frozen=True)
class RecordError:
    line: int
    error_class: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.error_class}: {self.message}"


def load_dataset(
    path: str | Path, strict: bool = False
) -> tuple[list[DatasetRecord], list[RecordError]]:
    """Load a JSONL dataset; bad records are collected, not fatal.

    With ``strict`` the first bad record raises a DatasetError naming its
    line and error class.
    """
    records: list[DatasetRecord] = []
    errors: list[RecordError] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise DatasetError(f"cannot read dataset {path}: {err}") from err
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(record_from_json(json.loads(line)))
        except (json.JSONDecodeError, DslError, DatasetError) as err:
            record_error = RecordError(lineno, type(err).__name__, str(err))
            if strict:
                raise DatasetError(str(record_error)) from err
            errors.append(record_error)
    return records, errors


def write_dataset(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), sort_keys=True) + "\n")


def adapt_external_record(data: dict) -> DatasetRecord:
    """Map a foreign record export onto the canonical form.

    Published transcript datasets spell fields differently; this adapter is
    the one place to extend per release so the core format stays frozen. It
    accepts system/system_prompt and task/instruction aliases, and three step
    encodings: canonical {"step", "result"} objects, plain
    "STEP, RESULT(...)" strings, or a single "text" transcript blob.
    """
    if not isinstance(data, dict):
        raise DatasetError("external record must be a JSON object")
    system_prompt = str(data.get("system_prompt", data.get("system", "")))
    task = data.get("task", data.get("instruction"))
    if task is None:
        raise DatasetError("external record has no task/instruction field")
    steps = data.get("steps")
    if steps is not None and steps and all(isinstance(s, str) for s in steps):
        entries = parse_transcript("\n".join(steps))
    elif steps is not None:
        return record_from_json(
            {"system_prompt": system_prompt, "task": str(task), "steps": steps}
        )
    elif isinstance(data.get("text"), str):
        entries = parse_transcript(data["text"])
    else:
        raise DatasetError("external record has no steps/text field")
    return DatasetRecord(system_prompt=system_prompt, task=str(task), entries=tuple(entries))


# ---------------------------------------------------------------------------
# Replay conformance


@dataclass(frozen=True)
class Mismatch:
    index: int
    step: str
    expected: str
    actual: str


@dataclass
class ConformanceReport:
    task: str
    total: int
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def matched(self) -> int:
        return self.total - len(self.mismatches)

    @property
    def conformant(self) -> bool:
        return not self.mismatches


def _results_agree(expected, actual) -> bool:
    if isinstance(expected, Outcome) and isinstance(actual, Outcome):
        return expected.ok == actual.ok  # notes are diagnostics, not data
    if isinstance(expected, Text) and isinstance(actual, Text):
        return expected.text == actual.text
    if isinstance(expected, Detections) and isinstance(actual, Detections):
        return Counter(r.name for r in expected.refs) == Counter(r.name for r in actual.refs)
    return False


def replay_conformance(
    record: DatasetRecord,
    world: WorldState,
    rig: CameraRig | None = None,
    sim_config: SimConfig = SimConfig(),
) -> ConformanceReport:
    """Re-execute a record's steps in a world, comparing results step by step.

    Mismatches are data, not errors; replay continues with the simulated
    state so later steps are judged against what the simulator actually did.
    """
    rig = rig or default_rig()
    w = copy.deepcopy(world)
    report = ConformanceReport(task=record.task, total=len(record.entries))
    for i, entry in enumerate(record.entries):
        where = route(entry.step)
        if where == ROUTE_FINISH:
            continue  # no result on either side by construction
        if where == ROUTE_VISION:
            actual, w = dispatch_vision(entry.step, SimVision(), w, rig)
        else:
            actual, w = execute(entry.step, w, sim_config)
        if not _results_agree(entry.result, actual):
            report.mismatches.append(
                Mismatch(
                    index=i,
                    step=render_step(entry.step),
                    expected=render_result(entry.result),
                    actual=render_result(actual),
                )
            )
    return report


# ---------------------------------------------------------------------------
# Synthesis


@dataclass(frozen=True)
class GeneratorConfig:
    templates: tuple[str, ...] = ("fetch", "relocate")
    object_pool: tuple[str, ...] = (
        "apple",
        "banana",
        "coke can",
        "hat",
        "slipper",
        "water bottle",
    )
    surface_pool: tuple[str, ...] = ("napkin", "box", "mat")
    graspable_targets: bool = True
    max_distractors: int = 3
    range_m: tuple[float, float] = (1.2, 5.5)
    azimuth_limit_deg: float = 110.0  # keep placements inside camera coverage
    min_separation_m: float = 0.5
    max_attempts_per_record: int = 20

    def __post_init__(self):
        if not self.templates:
            raise ValueError("at least one template required")
        for t in self.templates:
            if t not in ("fetch", "relocate"):
                raise ValueError(f"unknown template {t!r}")


@dataclass
class SynthesizedScenario:
    record: DatasetRecord
    world: WorldState
    rig: CameraRig
    task: str
    template: str
    goal: GoalPredicate
    categories: tuple[str, ...]


_CATEGORY_CYCLE = (
    "unseen_objects",
    "unseen_backgrounds",
    "unseen_environments",
    "symbol_understanding",
    "reasoning",
    "human_recognition",
)


def _sample_position(rng: random.Random, config: GeneratorConfig) -> tuple[float, float, float]:
    az = math.radians(rng.uniform(-config.azimuth_limit_deg, config.azimuth_limit_deg))
    dist = rng.uniform(*config.range_m)
    # clockwise azimuth in a y-left frame: positive azimuth means y < 0
    return (dist * math.cos(az), -dist * math.sin(az), round(rng.uniform(0.02, 0.12), 3))


def _separated(pos, placed, min_sep) -> bool:
    return all(math.hypot(pos[0] - p[0], pos[1] - p[1]) >= min_sep for p in placed)


def _sample_world(
    rng: random.Random, config: GeneratorConfig, template: str
) -> tuple[WorldState, str, GoalPredicate]:
    target = rng.choice(config.object_pool)
    names = [target]
    destination = None
    if template == "relocate":
        destination = rng.choice(config.surface_pool)
        names.append(destination)
    pool = [n for n in config.object_pool if n != target]
    rng.shuffle(pool)
    names.extend(pool[: rng.randint(0, config.max_distractors)])

    placed: list[tuple[float, float, float]] = []
    objects: list[SimObject] = []
    for i, name in enumerate(names, start=1):
        for _ in range(50):
            pos = _sample_position(rng, config)
            if _separated(pos, placed, config.min_separation_m):
                break
        else:
            pos = _sample_position(rng, config)
        placed.append(pos)
        is_destination = destination is not None and name == destination and i == 2
        objects.append(
            SimObject(
                uid=i,
                name=name,
                position=pos if not is_destination else (pos[0], pos[1], 0.0),
                graspable=config.graspable_targets and not is_destination,
                is_surface=is_destination,
            )
        )
    world = WorldState(objects=objects, user_position=(-1.5, 0.0), rng_seed=rng.randrange(2**31))
    if template == "fetch":
        task = f"bring me the {target}"
        goal: GoalPredicate = DeliveredToUser(Selector(name=target), radius=0.5)
    else:
        task = f"move the {target} to the {destination}"
        goal = ObjectNear(Selector(name=target), Selector(name=destination), radius=0.6)
    return world, task, goal


def synthesize_records(
    config: GeneratorConfig = GeneratorConfig(),
    n: int = 10,
    seed: int = 0,
    system_prompt: str | None = None,
) -> list[SynthesizedScenario]:
    """Generate worlds and tasks, run the oracle, keep goal-satisfying episodes.

    Deterministic under a fixed seed. Raises GenerationExhausted when the
    acceptance rate stays too low to reach ``n`` records within
    ``n * max_attempts_per_record`` attempts.
    """
    rng = random.Random(seed)
    rig = default_rig()
    accepted: list[SynthesizedScenario] = []
    attempts = 0
    max_attempts = max(1, n * config.max_attempts_per_record)
    while len(accepted) < n:
        if attempts >= max_attempts:
            raise GenerationExhausted(
                f"accepted {len(accepted)}/{n} records after {attempts} attempts"
            )
        attempts += 1
        template = config.templates[attempts % len(config.templates)]
        world, task, goal = _sample_world(rng, config, template)
        outcome = run_episode(
            task,
            world,
            rig,
            planner=OraclePlanner(),
            vision=SimVision(),
            guards=LoopGuardConfig(),
            goal=goal,
            system_prompt=system_prompt,
        )
        if not (outcome.success and outcome.episode.status == FINISHED):
            continue
        record = DatasetRecord(
            system_prompt=outcome.episode.system_prompt,
            task=task,
            entries=outcome.episode.history,
        )
        index = len(accepted)
        base = _CATEGORY_CYCLE[index % len(_CATEGORY_CYCLE)]
        difficulty = "hard" if len(world.objects) >= 3 else "easy"
        accepted.append(
            SynthesizedScenario(
                record=record,
                world=world,
                rig=rig,
                task=task,
                template=template,
                goal=goal,
                categories=(f"{base}:{difficulty}",),
            )
        )
    return accepted
