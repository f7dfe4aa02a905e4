"""Behavior-step DSL, planner orchestration, simulated world, and evaluation."""

from .assets import default_system_prompt
from .backends import (
    OraclePlanner,
    RemotePlanner,
    RemoteVision,
    RetryPolicy,
    ScriptedPlanner,
    SimVision,
    dispatch_vision,
    sanitize_step_text,
)
from .camera import Camera, CameraRig, Detection, default_rig, localize, project, to_robot, to_world
from .dataset import (
    DatasetRecord,
    GeneratorConfig,
    adapt_external_record,
    load_dataset,
    replay_conformance,
    synthesize_records,
    write_dataset,
)
from .dsl import (
    Detections,
    HistoryEntry,
    ObjectRef,
    Outcome,
    RawStep,
    Step,
    StepKind,
    StepResult,
    Text,
    parse_result,
    parse_step,
    parse_transcript,
    render_result,
    render_step,
    render_transcript,
)
from .episode import Episode, LoopGuardConfig, append, check_guards, new_episode, render_prompt
from .evaluation import EvalReport, ScenarioSpec, load_suite, run_suite, unweighted_average
from .goals import DeliveredToUser, ObjectNear, Selector, Spoken, goal_from_json, goal_to_json
from .mockserver import MockBackendServer
from .orchestrator import EpisodeOutcome, route, run_episode
from .world import (
    SimConfig,
    SimObject,
    WorldState,
    execute,
    gt_describe,
    gt_detect,
    gt_vqa,
    load_world,
    save_world,
)

__version__ = "0.1.0"
