import copy
import json
import math

import pytest

from cogdog.camera import default_rig
from cogdog.dsl import ObjectRef, Outcome, Step, StepKind
from cogdog.world import (
    NotAPhysicalStep,
    SimConfig,
    SimObject,
    WorldFileError,
    WorldState,
    execute,
    gt_describe,
    gt_detect,
    gt_vqa,
    load_world,
    world_from_json,
    world_to_json,
)

RIG = default_rig()
CONFIG = SimConfig()


def simple_world(**kwargs):
    objects = kwargs.pop(
        "objects",
        [
            SimObject(uid=1, name="apple", position=(2.0, 0.3, 0.05), graspable=True),
            SimObject(uid=2, name="apple", position=(2.5, -0.8, 0.05), graspable=True),
            SimObject(uid=3, name="hat", position=(3.0, 0.5, 0.1), graspable=True),
            SimObject(uid=4, name="table", position=(3.5, -0.5, 0.0), is_surface=True),
        ],
    )
    return WorldState(objects=objects, user_position=(-1.5, 0.0), **kwargs)


def searched(world, name):
    detections, w = gt_detect(name, world, RIG)
    assert detections, f"{name} should be visible"
    return detections, w


class TestExecute:
    def test_rejects_vision_steps(self):
        with pytest.raises(NotAPhysicalStep):
            execute(Step(StepKind.SEARCH_VIEW, "apple"), simple_world(), CONFIG)

    def test_go_to_requires_registration(self):
        result, w = execute(Step(StepKind.GO_TO, ObjectRef("apple", 1)), simple_world(), CONFIG)
        assert result == Outcome.failure("unknown object id")

    def test_go_to_registered_arrives(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        result, w = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        assert result.ok
        rx, ry, _ = w.robot.pose
        dist = math.hypot(3.0 - rx, 0.5 - ry)
        assert dist <= CONFIG.arrive_radius

    def test_take_sequence(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        _, w = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        result, w = execute(Step(StepKind.TAKE, dets[0].ref), w, CONFIG)
        assert result.ok
        assert w.robot.holding == 3
        # held object tracks the robot
        rx, ry, _ = w.robot.pose
        obj = w.object_by_uid(3)
        assert (obj.position[0], obj.position[1]) == (rx, ry)

    def test_take_gripper_occupied(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        _, w = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        _, w = execute(Step(StepKind.TAKE, dets[0].ref), w, CONFIG)
        apple_dets, w = searched(w, "apple")
        result, w2 = execute(Step(StepKind.TAKE, apple_dets[0].ref), w, CONFIG)
        assert result == Outcome.failure("gripper occupied")
        assert w2 is w  # untouched on failure

    def test_take_out_of_reach(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        result, _ = execute(Step(StepKind.TAKE, dets[0].ref), w, CONFIG)
        assert result == Outcome.failure("out of reach")

    def test_take_not_graspable(self):
        world = simple_world()
        dets, w = searched(world, "table")
        _, w = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        result, _ = execute(Step(StepKind.TAKE, dets[0].ref), w, CONFIG)
        assert result == Outcome.failure("object not graspable")

    def test_ambiguous_bare_reference(self):
        world = simple_world()
        _, w = searched(world, "apple")  # registers two apples
        result, _ = execute(Step(StepKind.GO_TO, ObjectRef("apple")), w, CONFIG)
        assert result == Outcome.failure("ambiguous object reference")

    def test_unique_bare_reference_resolves(self):
        world = simple_world()
        _, w = searched(world, "hat")
        result, _ = execute(Step(StepKind.GO_TO, ObjectRef("hat")), w, CONFIG)
        assert result.ok

    def test_put_in_on_surface(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        _, w = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        _, w = execute(Step(StepKind.TAKE, dets[0].ref), w, CONFIG)
        table_dets, w = searched(w, "table")
        _, w = execute(Step(StepKind.GO_TO, table_dets[0].ref), w, CONFIG)
        result, w = execute(Step(StepKind.PUT_IN, table_dets[0].ref), w, CONFIG)
        assert result.ok
        assert w.robot.holding is None
        hat = w.object_by_uid(3)
        assert hat.position[:2] == (3.5, -0.5)
        assert hat.position[2] > 0  # sits on the surface

    def test_put_in_requires_held_object(self):
        world = simple_world()
        dets, w = searched(world, "table")
        result, _ = execute(Step(StepKind.PUT_IN, dets[0].ref), w, CONFIG)
        assert result == Outcome.failure("gripper empty")

    def test_postures(self):
        w = simple_world()
        for step, posture in [
            (Step(StepKind.SIT), "sitting"),
            (Step(StepKind.UP), "standing"),
            (Step(StepKind.TILT, "down"), "tilted_down"),
            (Step(StepKind.TILT, "up"), "tilted_up"),
        ]:
            result, w = execute(step, w, CONFIG)
            assert result.ok
            assert w.robot.posture == posture

    def test_turn(self):
        w = simple_world()
        _, w = execute(Step(StepKind.TURN, "left"), w, CONFIG)
        assert w.robot.pose[2] == pytest.approx(math.pi / 2)
        _, w = execute(Step(StepKind.TURN, "right"), w, CONFIG)
        assert w.robot.pose[2] == pytest.approx(0.0)
        _, w = execute(Step(StepKind.TURN, "-45"), w, CONFIG)
        assert w.robot.pose[2] == pytest.approx(-math.pi / 4)

    def test_say_logs_utterance(self):
        result, w = execute(Step(StepKind.SAY, "hello there"), simple_world(), CONFIG)
        assert result.ok
        assert w.utterances == ["hello there"]

    def test_go_user(self):
        result, w = execute(Step(StepKind.GO_USER), simple_world(), CONFIG)
        assert result.ok
        rx, ry, _ = w.robot.pose
        assert math.hypot(rx + 1.5, ry) <= CONFIG.arrive_radius

    def test_follow_moves_to_registered_target(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        result, w = execute(Step(StepKind.FOLLOW, dets[0].ref), w, CONFIG)
        assert result.ok
        rx, ry, _ = w.robot.pose
        assert math.hypot(3.0 - rx, 0.5 - ry) <= CONFIG.arrive_radius

    def test_follow_unregistered_fails(self):
        result, _ = execute(Step(StepKind.FOLLOW, ObjectRef("hat", 4)), simple_world(), CONFIG)
        assert result == Outcome.failure("unknown object id")

    def test_give_to_user_requires_holding(self):
        world = simple_world()
        result, w2 = execute(Step(StepKind.GIVE_TO_USER), world, CONFIG)
        assert result == Outcome.failure("gripper empty")
        assert w2 is world

    def test_give_to_user_delivers(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        _, w = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        _, w = execute(Step(StepKind.TAKE, dets[0].ref), w, CONFIG)
        result, w = execute(Step(StepKind.GIVE_TO_USER), w, CONFIG)
        assert result.ok
        hat = w.object_by_uid(3)
        assert math.hypot(hat.position[0] + 1.5, hat.position[1]) <= CONFIG.interact_radius

    def test_failure_leaves_world_identical(self):
        world = simple_world()
        snapshot = copy.deepcopy(world)
        result, w2 = execute(Step(StepKind.TAKE, ObjectRef("hat", 9)), world, CONFIG)
        assert not result.ok
        assert w2 is world
        assert world_to_json(world) == world_to_json(snapshot)

    def test_uid_conservation(self):
        world = simple_world()
        uids = sorted(o.uid for o in world.objects)
        dets, w = searched(world, "hat")
        for step in [
            Step(StepKind.GO_TO, dets[0].ref),
            Step(StepKind.TAKE, dets[0].ref),
            Step(StepKind.GIVE_TO_USER),
            Step(StepKind.SIT),
        ]:
            _, w = execute(step, w, CONFIG)
            assert sorted(o.uid for o in w.objects) == uids


class TestGtVqa:
    def test_qa_table_hit(self):
        world = simple_world(qa_table={"weather": "it's cold outside"})
        assert gt_vqa("what is the weather like?", world, RIG) == "it's cold outside"

    def test_is_there_yes(self):
        assert gt_vqa("is there any apple", simple_world(), RIG) == "yes"

    def test_is_there_no(self):
        assert gt_vqa("is there any elephant", simple_world(), RIG) == "no"

    def test_is_there_category(self):
        world = simple_world(category_map={"fruit": {"apple"}})
        assert gt_vqa("is there any fruit?", world, RIG) == "yes"

    def test_unknown(self):
        assert gt_vqa("how old are you", simple_world(), RIG) == "unknown"


class TestGtDescribe:
    def test_qa_table_hit(self):
        world = simple_world(qa_table={"weather outside": "it's cold outside"})
        assert gt_describe("what's the weather outside?", world, RIG) == "it's cold outside"

    def test_empty_room(self):
        world = WorldState(objects=[], user_position=(0.0, 0.0))
        assert gt_describe("describe", world, RIG) == "you see: nothing"

    def test_left_to_right_order(self):
        # hat at (2, 1) is left of slipper at (2, -1): azimuths -26.6 and +26.6
        world = WorldState(
            objects=[
                SimObject(uid=1, name="slipper", position=(2.0, -1.0, 0.05)),
                SimObject(uid=2, name="hat", position=(2.0, 1.0, 0.05)),
            ],
            user_position=(0.0, 0.0),
        )
        assert gt_describe("what do you see", world, RIG) == "you see: hat, slipper"


class TestGtDetect:
    def test_two_apples_get_dense_ids(self):
        dets, w = gt_detect("apple", simple_world(), RIG)
        assert [d.ref.render() for d in dets] == ["<p>apple [1]</p>", "<p>apple [2]</p>"]
        assert ("apple", 1) in w.robot.known_objects
        assert ("apple", 2) in w.robot.known_objects

    def test_category_match(self):
        world = simple_world(category_map={"cold clothing": {"hat"}})
        dets, w = gt_detect("cold clothing", world, RIG)
        assert [d.ref.name for d in dets] == ["hat"]
        assert dets[0].ref.instance_id == 1

    def test_no_match_empty(self):
        dets, w = gt_detect("unicorn", simple_world(), RIG)
        assert dets == []

    def test_behind_robot_not_detected(self):
        world = WorldState(
            objects=[SimObject(uid=1, name="apple", position=(-2.0, 0.0, 0.05))],
            user_position=(0.0, 0.0),
        )
        dets, _ = gt_detect("apple", world, RIG)
        assert dets == []

    def test_beyond_range_not_detected(self):
        world = WorldState(
            objects=[SimObject(uid=1, name="apple", position=(9.5, 0.0, 0.05))],
            user_position=(0.0, 0.0),
        )
        dets, _ = gt_detect("apple", world, RIG)
        assert dets == []

    def test_ids_stable_across_calls(self):
        world = simple_world()
        dets1, w = gt_detect("apple", world, RIG)
        dets2, w = gt_detect("apple", w, RIG)
        assert [(d.ref.name, d.ref.instance_id) for d in dets1] == [
            (d.ref.name, d.ref.instance_id) for d in dets2
        ]
        assert [d.bbox for d in dets1] == [d.bbox for d in dets2]

    def test_registered_point_accurate_without_quantization(self):
        dets, w = gt_detect("hat", simple_world(), RIG)
        point = w.robot.known_objects[("hat", 1)].point
        assert math.dist(point, (3.0, 0.5, 0.1)) < 1e-9

    def test_registration_survives_motion(self):
        world = simple_world()
        dets, w = searched(world, "hat")
        _, w = execute(Step(StepKind.TURN, "180"), w, CONFIG)
        # hat now behind the robot, but the registration persists
        assert ("hat", 1) in w.robot.known_objects
        result, _ = execute(Step(StepKind.GO_TO, dets[0].ref), w, CONFIG)
        assert result.ok


class TestDeterminism:
    def test_identical_runs_identical_worlds(self):
        def run():
            world = simple_world(qa_table={"weather": "cold"})
            steps = []
            dets, w = gt_detect("hat", world, RIG)
            for step in [
                Step(StepKind.GO_TO, dets[0].ref),
                Step(StepKind.TAKE, dets[0].ref),
                Step(StepKind.GIVE_TO_USER),
            ]:
                result, w = execute(step, w, CONFIG)
                steps.append(result)
            return steps, world_to_json(w)

        assert run() == run()


class TestWorldFile:
    def test_round_trip(self, tmp_path):
        world = simple_world(qa_table={"a": "b"}, category_map={"c": {"apple"}})
        data = world_to_json(world, RIG)
        again, rig = world_from_json(json.loads(json.dumps(data)))
        assert world_to_json(again, rig) == data

    def test_yaw_in_degrees(self):
        world, _ = world_from_json(
            {"schema_version": 1, "objects": [], "robot": {"pose": [0, 0, 90]}}
        )
        assert world.robot.pose[2] == pytest.approx(math.pi / 2)

    def test_bad_schema_version(self):
        with pytest.raises(WorldFileError):
            world_from_json({"schema_version": 99, "objects": []})

    def test_bad_posture(self):
        with pytest.raises(WorldFileError):
            world_from_json(
                {"schema_version": 1, "objects": [], "robot": {"pose": [0, 0, 0], "posture": "flying"}}
            )

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_world(tmp_path / "nope.json")

    def test_radius_property(self):
        obj = SimObject(uid=1, name="x", position=(1, 1, 0), properties={"radius_m": "0.4"})
        assert obj.radius == 0.4
        assert SimObject(uid=2, name="y", position=(1, 1, 0)).radius == 0.15
