"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints a PASS line so a -s run reads as a checklist. Headline
success-rate tables from the original robot system are not reproducible
without its fine-tuned models; these criteria check the machinery instead:
golden-transcript replay, grammar and perception round trips, the detection
identifier contract, aggregation arithmetic, closed-loop oracle success,
wire-protocol conformance, and the dataset pipeline.
"""

import json
import math
import random
import time

import pytest

from cogdog.assets import builtin_dataset_path, builtin_world_path
from cogdog.backends import (
    OraclePlanner,
    RemotePlanner,
    RemoteVision,
    ScriptedPlanner,
    SimVision,
)
from cogdog.camera import default_rig, localize, project
from cogdog.conformance import VisionCase, check_planner_script, check_vision_cases
from cogdog.dataset import (
    DatasetError,
    GeneratorConfig,
    load_dataset,
    record_to_json,
    replay_conformance,
    synthesize_records,
    write_dataset,
)
from cogdog.dsl import ObjectRef, Step, StepKind, UnknownStepKind, parse_step, parse_result, render_result, render_step
from cogdog.episode import FINISHED
from cogdog.evaluation import ScenarioSpec, run_suite, unweighted_average
from cogdog.goals import DeliveredToUser, Selector
from cogdog.mockserver import MockBackendServer
from cogdog.orchestrator import run_episode, transcript_text
from cogdog.world import SimConfig, SimObject, WorldState, execute, gt_detect, load_world

from conftest import FAST_RETRY, GOLDEN_TASK
from test_backends import random_wire_message
from test_dsl import random_result, random_step

RIG = default_rig()


class TestGoldenReplay:
    def test_eight_step_transcript_replays_and_delivers(self, golden_script):
        started = time.perf_counter()

        records, errors = load_dataset(builtin_dataset_path("apartment_weather"))
        assert errors == []
        assert len(records) == 1
        record = records[0]
        assert len(record.entries) == 8
        assert render_step(record.entries[0].step) == "QUESTION_VIEW(is there any window)"
        assert record.entries[-1].step.kind is StepKind.FINISH

        world, rig = load_world(builtin_world_path("apartment"))
        report = replay_conformance(record, world, rig)
        assert report.matched == report.total == 8, report.mismatches

        outcome = run_episode(
            GOLDEN_TASK,
            world,
            rig,
            planner=ScriptedPlanner(golden_script),
            vision=SimVision(),
            goal=DeliveredToUser(Selector(name="hat"), radius=SimConfig().interact_radius),
        )
        assert outcome.episode.status == FINISHED
        assert outcome.success
        hat = next(o for o in outcome.final_world.objects if o.name == "hat")
        user = outcome.final_world.user_position
        assert math.hypot(hat.position[0] - user[0], hat.position[1] - user[1]) <= 0.5

        elapsed = time.perf_counter() - started
        assert elapsed < 1.0, f"golden replay took {elapsed:.3f}s"
        print(f"PASS: golden replay 8/8 conformant, delivered, {elapsed * 1000:.0f} ms")


class TestGrammarRoundTrip:
    def test_ten_thousand_cases_and_closed_vocabulary(self):
        rng = random.Random(90125)
        failures = 0
        for _ in range(5000):
            step = random_step(rng)
            if parse_step(render_step(step)) != step:
                failures += 1
        for _ in range(5000):
            result = random_result(rng)
            if parse_result(render_result(result)) != result:
                failures += 1
        assert failures == 0

        for kind in StepKind:
            assert StepKind(kind.value) is kind
        assert len(StepKind) == 15
        for impostor in ("FETCH", "WAIT", "SCAN", "GO", "TAKE_ALL", "FINISHING"):
            with pytest.raises(UnknownStepKind):
                parse_step(impostor)
        print("PASS: grammar round trip, 10000 cases, vocabulary closed at 15 kinds")


def _random_world(rng):
    pool = ("apple", "hat", "mug", "ball", "box")
    objects = []
    for uid in range(1, rng.randint(2, 5)):
        az = math.radians(rng.uniform(-120.0, 120.0))
        dist = rng.uniform(1.0, 5.5)
        objects.append(
            SimObject(
                uid=uid,
                name=rng.choice(pool),
                position=(
                    dist * math.cos(az),
                    -dist * math.sin(az),
                    round(rng.uniform(0.02, 0.15), 3),
                ),
                graspable=True,
            )
        )
    return WorldState(objects=objects, user_position=(-1.0, 0.0))


class TestIdentifierContract:
    def test_hundred_randomized_worlds(self):
        rng = random.Random(2002)
        config = SimConfig()
        unregistered_failures = 0
        registered_successes = 0
        trials = 0
        for _ in range(100):
            world = _random_world(rng)
            target = rng.choice(world.objects)
            trials += 1

            # ids never returned by a search must fail
            ghost = ObjectRef(target.name, 1)
            take_result, w = execute(Step(StepKind.TAKE, ghost), world, config)
            goto_result, w = execute(Step(StepKind.GO_TO, ghost), world, config)
            if not take_result.ok and not goto_result.ok:
                unregistered_failures += 1

            # ids returned by a search, approached first, must succeed
            detections, w = gt_detect(target.name, world, RIG)
            assert detections
            ref = detections[0].ref
            stale = ObjectRef(ref.name, len(detections) + 1)
            stale_result, _ = execute(Step(StepKind.TAKE, stale), w, config)
            assert not stale_result.ok
            goto, w = execute(Step(StepKind.GO_TO, ref), w, config)
            take, w = execute(Step(StepKind.TAKE, ref), w, config)
            if goto.ok and take.ok:
                registered_successes += 1
        assert unregistered_failures == trials
        assert registered_successes == trials
        print(f"PASS: identifier contract 100/100 on both sides over {trials} worlds")


class TestPerceptionRoundTrip:
    def test_thousand_points_exact_and_quantized(self):
        rng = random.Random(31337)
        worst = 0.0
        for _ in range(1000):
            az = rng.uniform(-134.9, 134.9)
            el = rng.uniform(-28.0, 28.0)
            dist = rng.uniform(0.2, 8.0)
            horiz = dist * math.cos(math.radians(el))
            point = (
                horiz * math.cos(math.radians(az)),
                -horiz * math.sin(math.radians(az)),
                0.3 + dist * math.sin(math.radians(el)),
            )
            bbox = project(point, RIG, extent=0.15)
            assert bbox is not None
            recovered = localize(bbox, dist, RIG)
            worst = max(worst, math.dist(point, recovered))
        assert worst < 1e-6, f"worst exact-depth error {worst}"

        worst_q = 0.0
        for dist in (0.213, 0.347, 0.504, 1.118, 2.231, 3.456, 5.155, 6.789, 7.996):
            for az in (-130.0, -90.0, -45.0, 0.0, 45.0, 90.0, 130.0):
                point = (
                    dist * math.cos(math.radians(az)),
                    -dist * math.sin(math.radians(az)),
                    0.3,
                )
                bbox = project(point, RIG, extent=0.15)
                quantized = round(dist / 0.01) * 0.01
                recovered = localize(bbox, quantized, RIG)
                worst_q = max(worst_q, math.dist(point, recovered))
        assert worst_q <= 0.02, f"worst quantized error {worst_q}"

        for _ in range(200):
            az = rng.choice((-1, 1)) * rng.uniform(135.0 + 1e-4, 180.0)
            dist = rng.uniform(0.5, 7.0)
            point = (
                dist * math.cos(math.radians(az)),
                -dist * math.sin(math.radians(az)),
                0.3,
            )
            assert project(point, RIG, extent=0.15) is None
        print(
            f"PASS: perception round trip, worst exact {worst:.2e} m, "
            f"worst quantized {worst_q:.4f} m, out-of-coverage never projects"
        )


class TestAggregationReproduction:
    def test_published_table_averages(self):
        # three unseen-category rates and their published average
        assert unweighted_average([65.5, 73.9, 64.79]) == pytest.approx(68.06, abs=0.01)
        # a one-decimal row from the capability table
        assert unweighted_average([16, 16, 17]) == pytest.approx(16.3, abs=0.05)
        # The capability-table average for the headline system (55.0) is not
        # the unweighted mean of its rows (24, 62, 54 -> 46.67); it needs
        # unpublished per-category instruction counts, so it is documented as
        # non-reproducible and deliberately NOT asserted here.
        assert unweighted_average([24, 62, 54]) == pytest.approx(46.67, abs=0.01)
        print("PASS: aggregation reproduces 68.06 and 16.3 at stated tolerances")


class TestClosedLoopOracle:
    def test_hundred_seeded_scenarios(self, tmp_path):
        started = time.perf_counter()
        config = GeneratorConfig(templates=("fetch", "relocate"))
        scenarios = synthesize_records(config, n=100, seed=20240)
        again = synthesize_records(config, n=100, seed=20240)
        assert [record_to_json(s.record) for s in scenarios] == [
            record_to_json(s.record) for s in again
        ]

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
        successes = sum(r.success for r in report.rows)
        elapsed = time.perf_counter() - started
        assert successes >= 95, f"only {successes}/100 succeeded"
        assert elapsed < 30.0, f"suite took {elapsed:.1f}s"
        print(f"PASS: closed-loop oracle {successes}/100 in {elapsed:.2f}s, deterministic")


class TestProtocolConformance:
    def test_mock_server_transcripts_byte_identical(self, apartment, golden_script):
        world, rig = apartment
        goal = DeliveredToUser(Selector(name="hat"), radius=0.5)
        local = run_episode(
            GOLDEN_TASK,
            world,
            rig,
            planner=ScriptedPlanner(golden_script),
            vision=SimVision(),
            goal=goal,
        )
        with MockBackendServer(
            planner_script=golden_script,
            vision_world=load_world(builtin_world_path("apartment")),
        ) as server:
            remote = run_episode(
                GOLDEN_TASK,
                world,
                rig,
                planner=RemotePlanner(server.base_url, retry=FAST_RETRY),
                vision=RemoteVision(server.base_url, retry=FAST_RETRY),
                goal=goal,
            )
            import requests

            requests.post(f"{server.base_url}/v1/reset", json={}, timeout=5)
            assert check_planner_script(server.base_url, golden_script) == []
            assert (
                check_vision_cases(
                    server.base_url,
                    [
                        VisionCase("vqa", "is there any window", expect_answer="yes"),
                        VisionCase("describe", "what's the weather outside?", expect_answer="it's cold outside"),
                        VisionCase("detect", "cold clothing", expect_labels=["hat"]),
                        VisionCase("detect", "unicorn", expect_labels=[]),
                    ],
                    rig=rig,
                )
                == []
            )
        assert transcript_text(local) == transcript_text(remote)
        assert local.success and remote.success

        rng = random.Random(404)
        for _ in range(1000):
            message = random_wire_message(rng)
            assert type(message).from_wire(json.loads(json.dumps(message.to_wire()))) == message
        print("PASS: protocol conformance, byte-identical transcripts, 1000 wire round trips")


class TestDatasetPipeline:
    def test_hundred_synthesized_records(self, tmp_path):
        scenarios = synthesize_records(GeneratorConfig(), n=100, seed=777)
        path = tmp_path / "synth.jsonl"
        write_dataset([s.record for s in scenarios], path)
        records, errors = load_dataset(path)
        assert errors == []
        assert len(records) == 100
        mismatch_total = 0
        for record, scenario in zip(records, scenarios):
            report = replay_conformance(record, scenario.world, scenario.rig)
            mismatch_total += len(report.mismatches)
        assert mismatch_total == 0

        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace("SEARCH_VIEW(", "SEACH_VIEW(", 1)
        corrupted = tmp_path / "corrupted.jsonl"
        corrupted.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetError) as excinfo:
            load_dataset(corrupted, strict=True)
        assert "line 3" in str(excinfo.value)
        assert "UnknownStepKind" in str(excinfo.value)
        print("PASS: dataset pipeline, 100 records replay clean, strict load pinpoints line 3")
