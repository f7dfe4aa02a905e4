"""Category-split evaluation: run scenario suites, aggregate success rates.

Scenarios tag themselves with ``<category>:<difficulty>`` labels drawn from
six base categories (three unseen splits and three capability splits) times
easy/hard. A report carries per-tag and per-base-category rates plus two
averages: the unweighted mean over base categories, and a mean weighted by
each category's total scenario weight (instruction-count style). By default
("strict") an aborted episode counts as a failure even if its goal predicate
happens to hold on the final world.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .camera import CameraRig
from .episode import FINISHED, LoopGuardConfig
from .goals import GoalPredicate, goal_from_json, goal_to_json
from .orchestrator import run_episode
from .world import SimConfig, WorldState, load_world

BASE_CATEGORIES = (
    "unseen_objects",
    "unseen_backgrounds",
    "unseen_environments",
    "symbol_understanding",
    "reasoning",
    "human_recognition",
)
DIFFICULTIES = ("easy", "hard")


class SuiteError(ValueError):
    pass


def validate_tag(tag: str) -> str:
    base, sep, difficulty = tag.partition(":")
    if not sep or base not in BASE_CATEGORIES or difficulty not in DIFFICULTIES:
        raise SuiteError(
            f"bad category tag {tag!r}; expected <category>:<difficulty> with "
            f"category in {BASE_CATEGORIES} and difficulty in {DIFFICULTIES}"
        )
    return tag


@dataclass
class ScenarioSpec:
    id: str
    task: str
    goal: GoalPredicate
    categories: tuple[str, ...]
    world_ref: str | None = None
    weight: float = 1.0
    # preloaded world, used instead of world_ref when set
    world: WorldState | None = None
    rig: CameraRig | None = None

    def __post_init__(self):
        if not self.categories:
            raise SuiteError(f"scenario {self.id!r} needs at least one category tag")
        for tag in self.categories:
            validate_tag(tag)
        if self.weight <= 0:
            raise SuiteError(f"scenario {self.id!r} weight must be positive")
        if self.world is None and self.world_ref is None:
            raise SuiteError(f"scenario {self.id!r} needs a world_ref or preloaded world")


def scenario_from_json(data: dict) -> ScenarioSpec:
    try:
        return ScenarioSpec(
            id=str(data["id"]),
            task=str(data["task"]),
            goal=goal_from_json(data["goal"]),
            categories=tuple(str(t) for t in data["categories"]),
            world_ref=str(data["world_ref"]),
            weight=float(data.get("weight", 1.0)),
        )
    except KeyError as err:
        raise SuiteError(f"scenario missing field {err}") from err


def scenario_to_json(scenario: ScenarioSpec) -> dict:
    return {
        "id": scenario.id,
        "task": scenario.task,
        "world_ref": scenario.world_ref,
        "goal": goal_to_json(scenario.goal),
        "categories": list(scenario.categories),
        "weight": scenario.weight,
    }


def load_suite(path: str | Path) -> list[ScenarioSpec]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise SuiteError(f"cannot load suite {path}: {err}") from err
    if not isinstance(data, list):
        raise SuiteError("suite file must be a JSON array of scenarios")
    scenarios = [scenario_from_json(item) for item in data]
    seen = set()
    for s in scenarios:
        if s.id in seen:
            raise SuiteError(f"duplicate scenario id {s.id!r}")
        seen.add(s.id)
    return scenarios


def save_suite(scenarios, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([scenario_to_json(s) for s in scenarios], indent=2) + "\n", encoding="utf-8"
    )


@dataclass
class EvalRow:
    scenario_id: str
    task: str
    categories: tuple[str, ...]
    weight: float
    success: bool
    status: str
    abort_reason: str | None
    steps: int
    error: str | None = None


@dataclass
class CategoryStat:
    successes: float = 0.0
    trials: float = 0.0

    @property
    def rate(self) -> float:
        return 100.0 * self.successes / self.trials if self.trials else 0.0


@dataclass
class EvalReport:
    rows: list[EvalRow]
    per_tag: dict[str, CategoryStat]
    per_category: dict[str, CategoryStat]
    unweighted_average: float
    weighted_average: float

    @property
    def errored(self) -> list[EvalRow]:
        return [r for r in self.rows if r.error is not None]


def unweighted_average(rates) -> float:
    rates = list(rates)
    if not rates:
        return 0.0
    return sum(rates) / len(rates)


def weighted_average(rates_and_weights) -> float:
    pairs = list(rates_and_weights)
    total = sum(w for _, w in pairs)
    if total == 0:
        return 0.0
    return sum(r * w for r, w in pairs) / total


def aggregate(rows) -> EvalReport:
    """Fold per-episode rows into per-tag and per-category rates and averages.

    Rows with multiple tags count once per tag. Category successes/trials sum
    scenario weights, so with unit weights they are plain counts.
    """
    rows = sorted(rows, key=lambda r: r.scenario_id)
    per_tag: dict[str, CategoryStat] = {}
    per_category: dict[str, CategoryStat] = {}
    for row in rows:
        for tag in row.categories:
            base = tag.split(":", 1)[0]
            for table, key in ((per_tag, tag), (per_category, base)):
                stat = table.setdefault(key, CategoryStat())
                stat.trials += row.weight
                if row.success:
                    stat.successes += row.weight
    ordered = [c for c in BASE_CATEGORIES if c in per_category]
    rates = [per_category[c].rate for c in ordered]
    weights = [per_category[c].trials for c in ordered]
    return EvalReport(
        rows=rows,
        per_tag=per_tag,
        per_category=per_category,
        unweighted_average=unweighted_average(rates),
        weighted_average=weighted_average(zip(rates, weights)),
    )


def _run_one(
    scenario: ScenarioSpec,
    planner_factory,
    vision_factory,
    guards: LoopGuardConfig,
    sim_config: SimConfig,
    strict: bool,
    base_dir: Path | None,
    system_prompt: str | None,
) -> EvalRow:
    try:
        if scenario.world is not None:
            world, rig = scenario.world, scenario.rig
        else:
            ref = Path(scenario.world_ref)
            if base_dir is not None and not ref.is_absolute():
                ref = base_dir / ref
            world, rig = load_world(ref)
        outcome = run_episode(
            scenario.task,
            world,
            rig,
            planner=planner_factory(scenario),
            vision=vision_factory(scenario),
            guards=guards,
            goal=scenario.goal,
            sim_config=sim_config,
            system_prompt=system_prompt,
        )
    except Exception as err:
        return EvalRow(
            scenario_id=scenario.id,
            task=scenario.task,
            categories=scenario.categories,
            weight=scenario.weight,
            success=False,
            status="error",
            abort_reason=None,
            steps=0,
            error=f"{type(err).__name__}: {err}",
        )
    success = outcome.success and (outcome.episode.status == FINISHED or not strict)
    error = None
    if outcome.abort_reason == "backend_unavailable":
        error = "backend unavailable"
    return EvalRow(
        scenario_id=scenario.id,
        task=scenario.task,
        categories=scenario.categories,
        weight=scenario.weight,
        success=success,
        status=outcome.episode.status,
        abort_reason=outcome.abort_reason,
        steps=outcome.step_count,
        error=error,
    )


def run_suite(
    scenarios,
    planner_factory,
    vision_factory,
    parallelism: int = 1,
    guards: LoopGuardConfig = LoopGuardConfig(),
    sim_config: SimConfig = SimConfig(),
    strict: bool = True,
    base_dir: str | Path | None = None,
    system_prompt: str | None = None,
) -> EvalReport:
    """Run every scenario (optionally in parallel) and aggregate the rows.

    ``planner_factory`` and ``vision_factory`` take the scenario and return a
    fresh backend, so each episode owns its backend session. The report is
    deterministic regardless of parallelism: rows are keyed and sorted by
    scenario id.
    """
    base_dir = Path(base_dir) if base_dir is not None else None
    args = [
        (s, planner_factory, vision_factory, guards, sim_config, strict, base_dir, system_prompt)
        for s in scenarios
    ]
    if parallelism <= 1:
        rows = [_run_one(*a) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(lambda a: _run_one(*a), args))
    return aggregate(rows)


# ---------------------------------------------------------------------------
# Report output


def report_to_json(report: EvalReport) -> dict:
    return {
        "schema_version": 1,
        "per_category": {
            name: {"successes": s.successes, "trials": s.trials, "rate_pct": s.rate}
            for name, s in sorted(report.per_category.items())
        },
        "per_tag": {
            name: {"successes": s.successes, "trials": s.trials, "rate_pct": s.rate}
            for name, s in sorted(report.per_tag.items())
        },
        "averages": {
            "unweighted_pct": report.unweighted_average,
            "weighted_pct": report.weighted_average,
        },
        "rows": [
            {
                "scenario_id": r.scenario_id,
                "task": r.task,
                "categories": list(r.categories),
                "weight": r.weight,
                "success": r.success,
                "status": r.status,
                "abort_reason": r.abort_reason,
                "steps": r.steps,
                "error": r.error,
            }
            for r in report.rows
        ],
    }


def report_table(report: EvalReport) -> str:
    """Aligned text table: one row per base category, then the two averages."""
    headers = ("category", "successes", "trials", "rate %")
    body: list[tuple[str, str, str, str]] = []
    for name in BASE_CATEGORIES:
        if name not in report.per_category:
            continue
        stat = report.per_category[name]
        body.append((name, f"{stat.successes:g}", f"{stat.trials:g}", f"{stat.rate:.2f}"))
    body.append(("average (unweighted)", "-", "-", f"{report.unweighted_average:.2f}"))
    body.append(("average (weighted)", "-", "-", f"{report.weighted_average:.2f}"))
    widths = [max(len(headers[i]), *(len(row[i]) for row in body)) for i in range(4)]
    lines = [
        "  ".join(headers[i].ljust(widths[i]) for i in range(4)),
        "  ".join("-" * widths[i] for i in range(4)),
    ]
    for row in body:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(4)))
    return "\n".join(lines) + "\n"
