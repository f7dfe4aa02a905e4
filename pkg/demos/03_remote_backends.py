"""Drive an episode over the wire protocol against the bundled mock server.

The scripted planner and the simulated vision backend run twice: once
in-process, once behind HTTP. The transcripts must match byte for byte.
"""

from cogdog import (
    MockBackendServer,
    RemotePlanner,
    RemoteVision,
    RetryPolicy,
    ScriptedPlanner,
    SimVision,
    load_world,
    run_episode,
)
from cogdog.assets import builtin_script_path, builtin_world_path
from cogdog.goals import DeliveredToUser, Selector
from cogdog.orchestrator import transcript_text

TASK = "find out what the weather is like outside, and then find and bring me suitable clothes"

world, rig = load_world(builtin_world_path("apartment"))
script = builtin_script_path("apartment_weather").read_text().splitlines()
goal = DeliveredToUser(Selector(name="hat"), radius=0.5)

local = run_episode(TASK, world, rig, ScriptedPlanner(script), SimVision(), goal=goal)

with MockBackendServer(
    planner_script=[s for s in script if s.strip()],
    vision_world=load_world(builtin_world_path("apartment")),
) as server:
    print(f"mock server on {server.base_url}")
    retry = RetryPolicy(attempts=3, backoff_s=0.05, timeout_s=10)
    remote = run_episode(
        TASK,
        world,
        rig,
        RemotePlanner(server.base_url, retry=retry),
        RemoteVision(server.base_url, retry=retry),
        goal=goal,
    )

print(transcript_text(remote))
print("byte-identical transcripts:", transcript_text(local) == transcript_text(remote))
print("delivered:", remote.success)
