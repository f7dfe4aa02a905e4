"""Synthesize scenarios with the oracle, then evaluate them as a suite."""

from cogdog import GeneratorConfig, OraclePlanner, SimVision, synthesize_records
from cogdog.dataset import replay_conformance
from cogdog.evaluation import ScenarioSpec, report_table, run_suite

scenarios = synthesize_records(GeneratorConfig(), n=30, seed=7)
print(f"synthesized {len(scenarios)} records, e.g. task: {scenarios[0].task!r}")

clean = sum(replay_conformance(s.record, s.world, s.rig).conformant for s in scenarios)
print(f"self-replay conformant: {clean}/{len(scenarios)}")

specs = [
    ScenarioSpec(
        id=f"synth-{i:04d}",
        task=s.task,
        goal=s.goal,
        categories=s.categories,
        world=s.world,
        rig=s.rig,
    )
    for i, s in enumerate(scenarios)
]
report = run_suite(
    specs,
    planner_factory=lambda s: OraclePlanner(),
    vision_factory=lambda s: SimVision(),
    parallelism=4,
)
print()
print(report_table(report))
