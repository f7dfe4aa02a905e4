"""Run the rule-based oracle planner closed-loop in the tabletop world."""

from cogdog import OraclePlanner, SimVision, load_world, run_episode
from cogdog.assets import builtin_world_path
from cogdog.goals import DeliveredToUser, ObjectNear, Selector
from cogdog.orchestrator import transcript_text

world, rig = load_world(builtin_world_path("tabletop"))

for task, goal in [
    ("bring me the apple", DeliveredToUser(Selector(name="apple"), radius=0.5)),
    ("move the banana to the napkin", ObjectNear(Selector(name="banana"), Selector(name="napkin"), radius=0.6)),
    ("is there any fruit", None),
]:
    outcome = run_episode(task, world, rig, planner=OraclePlanner(), vision=SimVision(), goal=goal)
    print(f"task: {task}")
    print(f"  status={outcome.episode.status} success={outcome.success} steps={outcome.step_count}")
    for line in transcript_text(outcome).splitlines():
        print(f"  | {line}")
    print()
