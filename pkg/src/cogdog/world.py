"""Deterministic simulated environment for physical steps and ground-truth vision.

Kinematics are teleport-with-validation: moves place the robot at a stop
distance from the target with no path planning, and failed steps leave the
world exactly as it was (execution works on a copy and returns the original
on failure). Objects are picked up by attach/detach only; a held object's
position tracks the robot.

Ground-truth vision answers stand in for a VQA model: scenario files carry a
``qa_table`` (pattern -> answer) and a ``category_map`` (category -> object
names) so semantic matches like "cold clothing" -> hat are table-driven.
Detections follow the full perception pipeline (project to a panorama box,
read depth, localize back to 3D) so a depth-quantization knob on the rig
degrades registered positions the way a real sensor would.
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .camera import (
    CameraRig,
    DegeneratePoint,
    Detection,
    azimuth_of,
    camera_distance,
    default_rig,
    localize,
    project,
    rig_from_json,
    rig_to_json,
    to_robot,
    to_world,
)
from .dsl import ObjectRef, Outcome, Step, StepKind, StepResult

WORLD_SCHEMA_VERSION = 1
DEFAULT_OBJECT_RADIUS = 0.15  # m, overridable per object via properties["radius_m"]
CARRY_HEIGHT = 0.1  # m, z of a held object
SURFACE_OFFSET = 0.01  # m, placement height above a surface object

POSTURES = ("standing", "sitting", "tilted_down", "tilted_up")

PHYSICAL_KINDS = frozenset(
    {
        StepKind.GO_TO,
        StepKind.TAKE,
        StepKind.PUT_IN,
        StepKind.TILT,
        StepKind.SIT,
        StepKind.UP,
        StepKind.TURN,
        StepKind.SAY,
        StepKind.FOLLOW,
        StepKind.GIVE_TO_USER,
        StepKind.GO_USER,
    }
)


class NotAPhysicalStep(TypeError):
    pass


class WorldFileError(ValueError):
    pass


@dataclass
class SimObject:
    uid: int
    name: str
    position: tuple[float, float, float]
    properties: dict[str, str] = field(default_factory=dict)
    graspable: bool = False
    is_surface: bool = False

    @property
    def radius(self) -> float:
        return float(self.properties.get("radius_m", DEFAULT_OBJECT_RADIUS))


@dataclass
class KnownObject:
    """A registered detection: the backing object uid (if grounded) and its
    remembered world-frame point."""

    uid: int | None
    point: tuple[float, float, float]


@dataclass
class RobotState:
    pose: tuple[float, float, float] = (0.0, 0.0, 0.0)  # x, y, yaw (rad, CCW)
    posture: str = "standing"
    holding: int | None = None
    # (name, instance id) -> registration; ids are dense per name from 1.
    known_objects: dict[tuple[str, int], KnownObject] = field(default_factory=dict)


@dataclass
class WorldState:
    objects: list[SimObject] = field(default_factory=list)
    robot: RobotState = field(default_factory=RobotState)
    user_position: tuple[float, float] = (0.0, 0.0)
    qa_table: dict[str, str] = field(default_factory=dict)
    category_map: dict[str, set[str]] = field(default_factory=dict)
    rng_seed: int = 0
    utterances: list[str] = field(default_factory=list)

    def object_by_uid(self, uid: int) -> SimObject | None:
        for obj in self.objects:
            if obj.uid == uid:
                return obj
        return None


@dataclass(frozen=True)
class SimConfig:
    interact_radius: float = 0.5  # m, reach for TAKE/PUT_IN
    arrive_radius: float = 0.8  # m, GO_TO stop distance

    def __post_init__(self):
        if self.interact_radius <= 0 or self.arrive_radius <= 0:
            raise ValueError("radii must be positive")

    @property
    def stop_distance(self) -> float:
        # Moves stop close enough both to have arrived and to reach the
        # target (with margin), otherwise a GO_TO/TAKE pair could never
        # succeed.
        return min(self.arrive_radius, 0.9 * self.interact_radius)


# ---------------------------------------------------------------------------
# World file I/O


def world_from_json(data: dict) -> tuple[WorldState, CameraRig]:
    """Build a world (and its rig) from the JSON schema.

    All angles in the file are degrees; they are converted to radians here.
    Object uids are assigned in file order starting at 1.
    """
    version = data.get("schema_version", WORLD_SCHEMA_VERSION)
    if version != WORLD_SCHEMA_VERSION:
        raise WorldFileError(f"unsupported world schema_version {version}")
    try:
        objects = []
        for i, od in enumerate(data.get("objects", []), start=1):
            x, y, z = (float(v) for v in od["position"])
            objects.append(
                SimObject(
                    uid=i,
                    name=str(od["name"]),
                    position=(x, y, z),
                    properties={str(k): str(v) for k, v in od.get("properties", {}).items()},
                    graspable=bool(od.get("graspable", False)),
                    is_surface=bool(od.get("is_surface", False)),
                )
            )
        rd = data.get("robot", {})
        px, py, yaw_deg = (float(v) for v in rd.get("pose", (0.0, 0.0, 0.0)))
        posture = rd.get("posture", "standing")
        if posture not in POSTURES:
            raise WorldFileError(f"unknown posture {posture!r}")
        ux, uy = (float(v) for v in data.get("user_position", (0.0, 0.0)))
        world = WorldState(
            objects=objects,
            robot=RobotState(pose=(px, py, math.radians(yaw_deg)), posture=posture),
            user_position=(ux, uy),
            qa_table={str(k): str(v) for k, v in data.get("qa_table", {}).items()},
            category_map={
                str(k): {str(n) for n in v} for k, v in data.get("category_map", {}).items()
            },
            rng_seed=int(data.get("rng_seed", 0)),
        )
        rig = rig_from_json(data["camera_rig"]) if "camera_rig" in data else default_rig()
        return world, rig
    except WorldFileError:
        raise
    except (KeyError, TypeError, ValueError) as err:
        raise WorldFileError(f"bad world file: {err}") from err


def world_to_json(world: WorldState, rig: CameraRig | None = None) -> dict:
    data = {
        "schema_version": WORLD_SCHEMA_VERSION,
        "objects": [
            {
                "name": o.name,
                "position": list(o.position),
                "properties": dict(o.properties),
                "graspable": o.graspable,
                "is_surface": o.is_surface,
            }
            for o in world.objects
        ],
        "robot": {
            "pose": [world.robot.pose[0], world.robot.pose[1], math.degrees(world.robot.pose[2])],
            "posture": world.robot.posture,
        },
        "user_position": list(world.user_position),
        "qa_table": dict(world.qa_table),
        "category_map": {k: sorted(v) for k, v in world.category_map.items()},
        "rng_seed": world.rng_seed,
    }
    if rig is not None:
        data["camera_rig"] = rig_to_json(rig)
    return data


def load_world(path: str | Path) -> tuple[WorldState, CameraRig]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise WorldFileError(f"{path}: invalid JSON: {err}") from err
    return world_from_json(data)


def save_world(world: WorldState, path: str | Path, rig: CameraRig | None = None) -> None:
    Path(path).write_text(
        json.dumps(world_to_json(world, rig), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Physical step execution


def _resolve(world: WorldState, ref: ObjectRef) -> KnownObject | None:
    """Resolve a reference through the registered detections.

    References without an instance id resolve only when exactly one instance
    of that name has been registered.
    """
    known = world.robot.known_objects
    if ref.instance_id is not None:
        return known.get((ref.name, ref.instance_id))
    matches = [ko for (name, _), ko in known.items() if name == ref.name]
    if len(matches) == 1:
        return matches[0]
    return None


def _sync_held(world: WorldState) -> None:
    if world.robot.holding is None:
        return
    obj = world.object_by_uid(world.robot.holding)
    rx, ry, _ = world.robot.pose
    obj.position = (rx, ry, CARRY_HEIGHT)


def _move_to(world: WorldState, target_xy: tuple[float, float], config: SimConfig) -> None:
    rx, ry, yaw = world.robot.pose
    tx, ty = target_xy
    dist = math.hypot(tx - rx, ty - ry)
    if dist > 1e-9:
        yaw = math.atan2(ty - ry, tx - rx)
    stop = config.stop_distance
    if dist > stop:
        ux, uy = (rx - tx) / dist, (ry - ty) / dist
        rx, ry = tx + ux * stop, ty + uy * stop
    world.robot.pose = (rx, ry, yaw)
    _sync_held(world)


def _normalized_yaw(yaw: float) -> float:
    yaw = math.fmod(yaw + math.pi, 2 * math.pi)
    if yaw <= 0:
        yaw += 2 * math.pi
    return yaw - math.pi


def _ambiguity_note(world: WorldState, ref: ObjectRef) -> str:
    if ref.instance_id is None:
        n = sum(1 for (name, _) in world.robot.known_objects if name == ref.name)
        if n > 1:
            return "ambiguous object reference"
    return "unknown object id"


def execute(step: Step, world: WorldState, config: SimConfig = SimConfig()) -> tuple[StepResult, WorldState]:
    """Execute one physical step; failures leave the world untouched.

    Returns the step outcome and the resulting world. Vision and FINISH steps
    are a routing bug here and raise NotAPhysicalStep; physical failures are
    in-band Outcome(failure, note) values, never exceptions.
    """
    if step.kind not in PHYSICAL_KINDS:
        raise NotAPhysicalStep(f"{step.kind.value} is not a physical step")
    w = copy.deepcopy(world)
    result = _EXECUTORS[step.kind](step, w, config)
    if isinstance(result, Outcome) and not result.ok:
        return result, world
    return result, w


def _exec_go_to(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    ko = _resolve(w, step.argument)
    if ko is None:
        return Outcome.failure(_ambiguity_note(w, step.argument))
    _move_to(w, (ko.point[0], ko.point[1]), config)
    return Outcome.success()


def _exec_take(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    ko = _resolve(w, step.argument)
    if ko is None:
        return Outcome.failure(_ambiguity_note(w, step.argument))
    if ko.uid is None:
        return Outcome.failure("unknown object id")
    if w.robot.holding is not None:
        return Outcome.failure("gripper occupied")
    obj = w.object_by_uid(ko.uid)
    if not obj.graspable:
        return Outcome.failure("object not graspable")
    rx, ry, _ = w.robot.pose
    if math.hypot(obj.position[0] - rx, obj.position[1] - ry) > config.interact_radius:
        return Outcome.failure("out of reach")
    w.robot.holding = obj.uid
    _sync_held(w)
    return Outcome.success()


def _exec_put_in(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    if w.robot.holding is None:
        return Outcome.failure("gripper empty")
    ko = _resolve(w, step.argument)
    if ko is None:
        return Outcome.failure(_ambiguity_note(w, step.argument))
    target = w.object_by_uid(ko.uid) if ko.uid is not None else None
    tx, ty, tz = target.position if target is not None else ko.point
    rx, ry, _ = w.robot.pose
    if math.hypot(tx - rx, ty - ry) > config.interact_radius:
        return Outcome.failure("out of reach")
    held = w.object_by_uid(w.robot.holding)
    z = tz + SURFACE_OFFSET if target is not None and target.is_surface else tz
    held.position = (tx, ty, z)
    w.robot.holding = None
    return Outcome.success()


def _exec_tilt(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    w.robot.posture = "tilted_down" if step.argument == "down" else "tilted_up"
    return Outcome.success()


def _exec_sit(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    w.robot.posture = "sitting"
    return Outcome.success()


def _exec_up(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    w.robot.posture = "standing"
    return Outcome.success()


def _exec_turn(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    # left/right are quarter turns; a number is degrees, CCW positive.
    if step.argument == "left":
        delta = math.pi / 2
    elif step.argument == "right":
        delta = -math.pi / 2
    else:
        delta = math.radians(int(step.argument))
    rx, ry, yaw = w.robot.pose
    w.robot.pose = (rx, ry, _normalized_yaw(yaw + delta))
    return Outcome.success()


def _exec_say(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    w.utterances.append(step.argument)
    return Outcome.success()


def _exec_follow(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    return _exec_go_to(step, w, config)


def _exec_go_user(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    _move_to(w, w.user_position, config)
    return Outcome.success()


def _exec_give_to_user(step: Step, w: WorldState, config: SimConfig) -> Outcome:
    if w.robot.holding is None:
        return Outcome.failure("gripper empty")
    _move_to(w, w.user_position, config)
    held = w.object_by_uid(w.robot.holding)
    held.position = (w.user_position[0], w.user_position[1], 0.0)
    w.robot.holding = None
    return Outcome.success()


_EXECUTORS = {
    StepKind.GO_TO: _exec_go_to,
    StepKind.TAKE: _exec_take,
    StepKind.PUT_IN: _exec_put_in,
    StepKind.TILT: _exec_tilt,
    StepKind.SIT: _exec_sit,
    StepKind.UP: _exec_up,
    StepKind.TURN: _exec_turn,
    StepKind.SAY: _exec_say,
    StepKind.FOLLOW: _exec_follow,
    StepKind.GIVE_TO_USER: _exec_give_to_user,
    StepKind.GO_USER: _exec_go_user,
}


# ---------------------------------------------------------------------------
# Ground-truth vision


def _project_object(world: WorldState, rig: CameraRig, obj: SimObject):
    point = to_robot(obj.position, world.robot.pose)
    try:
        return point, project(point, rig, obj.radius)
    except DegeneratePoint:
        return point, None


def _visible_objects(world: WorldState, rig: CameraRig):
    """Objects in view, with robot-frame point and bbox, sorted left to right."""
    out = []
    for obj in world.objects:
        point, bbox = _project_object(world, rig, obj)
        if bbox is not None:
            out.append((azimuth_of(point), obj, point, bbox))
    out.sort(key=lambda item: (item[0], item[1].uid))
    return out


def _category_names(world: WorldState, key: str) -> set[str]:
    key = key.lower()
    for cat, names in world.category_map.items():
        if cat.lower() == key:
            return {n.lower() for n in names}
    return set()


def _qa_lookup(world: WorldState, query: str) -> str | None:
    q = query.lower()
    # Longest pattern first so the most specific entry wins.
    for pattern in sorted(world.qa_table, key=lambda p: (-len(p), p)):
        if pattern.lower() in q:
            return world.qa_table[pattern]
    return None


_IS_THERE_RE = re.compile(r"\bis there (?:any |a |an |the )?(?P<thing>.+?)\s*[?.!]*$", re.I)


def gt_vqa(query: str, world: WorldState, rig: CameraRig) -> str:
    """Ground-truth answer for a view question.

    qa_table patterns match as case-insensitive substrings of the query;
    "is there any <name>" questions are answered from visibility; anything
    else is "unknown".
    """
    answer = _qa_lookup(world, query)
    if answer is not None:
        return answer
    m = _IS_THERE_RE.search(query.strip())
    if m:
        thing = m.group("thing").strip().lower()
        names = {thing} | _category_names(world, thing)
        for _, obj, _, _ in _visible_objects(world, rig):
            if obj.name.lower() in names:
                return "yes"
        return "no"
    return "unknown"


def gt_describe(query: str, world: WorldState, rig: CameraRig) -> str:
    """Ground-truth short description: qa_table hit, else visible object names."""
    answer = _qa_lookup(world, query)
    if answer is not None:
        return answer
    names = [obj.name for _, obj, _, _ in _visible_objects(world, rig)]
    if not names:
        return "you see: nothing"
    return "you see: " + ", ".join(names)


def _next_instance_id(known: dict[tuple[str, int], KnownObject], name: str) -> int:
    ids = [iid for (n, iid) in known if n == name]
    return max(ids, default=0) + 1


def _existing_instance_id(
    known: dict[tuple[str, int], KnownObject], name: str, uid: int
) -> int | None:
    for (n, iid), ko in known.items():
        if n == name and ko.uid == uid:
            return iid
    return None


def gt_detect(
    target: str, world: WorldState, rig: CameraRig
) -> tuple[list[Detection], WorldState]:
    """Ground-truth object search.

    Matches objects named ``target`` or listed under it in the category map.
    Visible matches get instance ids (dense per name, stable across repeat
    calls for the same object) and are registered into known_objects with 3D
    points obtained by localizing their panorama boxes at (optionally
    quantized) sensed depth. Returns the detections and the updated world.
    """
    w = copy.deepcopy(world)
    key = target.strip().lower()
    names = {key} | _category_names(w, key)
    detections: list[Detection] = []
    for _, obj, point, bbox in _visible_objects(w, rig):
        if obj.name.lower() not in names:
            continue
        depth = camera_distance(point, rig)
        if rig.depth_quantization > 0:
            depth = round(depth / rig.depth_quantization) * rig.depth_quantization
        point_robot = localize(bbox, depth, rig)
        point_world = to_world(point_robot, w.robot.pose)
        known = w.robot.known_objects
        iid = _existing_instance_id(known, obj.name, obj.uid)
        if iid is None:
            iid = _next_instance_id(known, obj.name)
        known[(obj.name, iid)] = KnownObject(obj.uid, point_world)
        detections.append(
            Detection(ObjectRef(obj.name, iid), bbox, depth, point_robot, point_world)
        )
    return detections, w
