"""Operator entry point.

Subcommands:

    run         one task (or a REPL of tasks) against a world
    replay      check dataset records against a world's simulated outcomes
    eval        run a scenario suite and write a success-rate report
    synth       generate dataset records + worlds + a suite from the oracle
    mock-serve  host canned /v1/next_step and /v1/vision endpoints

Settings resolve as flags > environment (COGDOG_PLANNER_URL,
COGDOG_VISION_URL, COGDOG_TIMEOUT_S) > --config JSON file > defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .assets import builtin_suite_path, builtin_world_path, default_system_prompt
from .backends import (
    OraclePlanner,
    RemotePlanner,
    RemoteVision,
    RetryPolicy,
    ScriptedPlanner,
    SimVision,
)
from .dataset import (
    DatasetError,
    GenerationExhausted,
    GeneratorConfig,
    load_dataset,
    replay_conformance,
    synthesize_records,
    write_dataset,
)
from .episode import ABORTED, FINISHED, LoopGuardConfig
from .evaluation import (
    ScenarioSpec,
    SuiteError,
    load_suite,
    report_table,
    report_to_json,
    run_suite,
    save_suite,
)
from .mockserver import MockBackendServer
from .orchestrator import episode_to_json, run_episode, transcript_text, world_digest
from .world import SimConfig, WorldFileError, load_world, save_world
from .dsl import render_result, render_step

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ABORTED = 2
EXIT_BACKEND = 3
EXIT_MISMATCH = 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise CliError(f"cannot read config file {path}: {err}")
    if not isinstance(data, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return data


def _setting(flag, env_name: str, config: dict, key: str, default=None):
    if flag is not None:
        return flag
    env = os.environ.get(env_name)
    if env:
        return env
    if key in config:
        return config[key]
    return default


def _resolve_planner_spec(args, config: dict) -> str:
    env_url = os.environ.get("COGDOG_PLANNER_URL")
    fallback = f"remote:{env_url}" if env_url else config.get("planner", "oracle")
    return args.planner if args.planner is not None else fallback


def _resolve_vision_spec(args, config: dict) -> str:
    env_url = os.environ.get("COGDOG_VISION_URL")
    fallback = f"remote:{env_url}" if env_url else config.get("vision", "sim")
    return args.vision if args.vision is not None else fallback


def _retry_policy(args, config: dict) -> RetryPolicy:
    timeout = _setting(getattr(args, "timeout_s", None), "COGDOG_TIMEOUT_S", config, "timeout_s", 60.0)
    return RetryPolicy(timeout_s=float(timeout))


def make_planner(spec: str, retry: RetryPolicy):
    kind, _, rest = spec.partition(":")
    if kind == "oracle":
        return OraclePlanner()
    if kind == "scripted":
        if not rest:
            raise CliError("scripted planner needs a path: scripted:<file>")
        if not Path(rest).exists():
            raise CliError(f"no step script at {rest}")
        return ScriptedPlanner.from_file(rest)
    if kind == "remote":
        if not rest:
            raise CliError("remote planner needs a URL: remote:<url>")
        return RemotePlanner(rest, retry=retry)
    raise CliError(f"unknown planner spec {spec!r}")


def make_vision(spec: str, retry: RetryPolicy):
    kind, _, rest = spec.partition(":")
    if kind == "sim":
        return SimVision()
    if kind == "remote":
        if not rest:
            raise CliError("remote vision needs a URL: remote:<url>")
        return RemoteVision(rest, retry=retry)
    raise CliError(f"unknown vision spec {spec!r}")


def _resolve_world_path(ref: str) -> Path:
    path = Path(ref)
    if path.exists():
        return path
    if "/" not in ref and "\\" not in ref and not ref.endswith(".json"):
        try:
            return builtin_world_path(ref)
        except FileNotFoundError:
            pass
    raise CliError(f"no world file at {ref}")


def _resolve_suite_path(ref: str) -> Path:
    path = Path(ref)
    if path.exists():
        return path
    if "/" not in ref and not ref.endswith(".json"):
        try:
            return builtin_suite_path(ref)
        except FileNotFoundError:
            pass
    raise CliError(f"no suite file at {ref}")


def _guards(args) -> LoopGuardConfig:
    return LoopGuardConfig(max_steps=args.max_steps)


# ---------------------------------------------------------------------------
# run


def _episode_artifact_name(task: str, world_dig: str, planner_spec: str, seed: int | None) -> str:
    key = json.dumps([task, world_dig, planner_spec, seed])
    return "episode-" + hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


def _run_single(task, world, rig, planner, vision, args, out_dir, planner_spec):
    initial_digest = world_digest(world)
    outcome = run_episode(
        task,
        world,
        rig,
        planner=planner,
        vision=vision,
        guards=_guards(args),
        sim_config=SimConfig(),
        system_prompt=default_system_prompt(),
        on_step=lambda step: print(render_step(step), end="", flush=True),
        on_result=lambda result: print(
            "" if result is None else f", {render_result(result)}", flush=True
        ),
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        name = _episode_artifact_name(task, initial_digest, planner_spec, args.seed)
        payload = episode_to_json(outcome, SimConfig(), _guards(args), seed=args.seed)
        (out_dir / f"{name}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (out_dir / f"{name}.transcript.txt").write_text(
            transcript_text(outcome), encoding="utf-8"
        )
    return outcome


def cmd_run(args) -> int:
    config = _load_config_file(args.config)
    retry = _retry_policy(args, config)
    planner_spec = _resolve_planner_spec(args, config)
    vision_spec = _resolve_vision_spec(args, config)
    world_path = _resolve_world_path(args.world)
    try:
        world, rig = load_world(world_path)
    except WorldFileError as err:
        raise CliError(str(err))
    out_dir = Path(args.out) if args.out else None
    vision = make_vision(vision_spec, retry)

    if args.repl:
        while True:
            try:
                task = input("task> ").strip()
            except EOFError:
                print()
                return EXIT_OK
            if not task or task in ("quit", "exit"):
                return EXIT_OK
            planner = make_planner(planner_spec, retry)
            outcome = _run_single(task, world, rig, planner, vision, args, out_dir, planner_spec)
            world = outcome.final_world  # the world persists across REPL tasks
            print(f"[{outcome.episode.status}] success={outcome.success}")
        return EXIT_OK

    if not args.task:
        raise CliError("run needs --task or --repl")
    planner = make_planner(planner_spec, retry)
    outcome = _run_single(args.task, world, rig, planner, vision, args, out_dir, planner_spec)
    if outcome.episode.status == FINISHED:
        return EXIT_OK
    if outcome.episode.status == ABORTED:
        print(f"aborted: {outcome.episode.abort_reason}", file=sys.stderr)
        return EXIT_ABORTED
    return EXIT_ERROR


# ---------------------------------------------------------------------------
# replay


def cmd_replay(args) -> int:
    world_path = _resolve_world_path(args.world)
    world, rig = load_world(world_path)
    try:
        records, errors = load_dataset(args.dataset, strict=args.strict)
    except DatasetError as err:
        print(f"dataset error: {err}", file=sys.stderr)
        return EXIT_ERROR
    for err in errors:
        print(f"load error: {err}", file=sys.stderr)
    all_conformant = True
    for i, record in enumerate(records, start=1):
        report = replay_conformance(record, world, rig)
        status = "ok" if report.conformant else "MISMATCH"
        print(f"record {i} ({record.task!r}): {report.matched}/{report.total} {status}")
        for mismatch in report.mismatches:
            all_conformant = False
            print(
                f"  step {mismatch.index + 1} {mismatch.step}: "
                f"expected {mismatch.expected}, got {mismatch.actual}"
            )
    if errors:
        return EXIT_ERROR
    return EXIT_OK if all_conformant else EXIT_MISMATCH


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    config = _load_config_file(args.config)
    retry = _retry_policy(args, config)
    planner_spec = _resolve_planner_spec(args, config)
    vision_spec = _resolve_vision_spec(args, config)
    suite_path = _resolve_suite_path(args.suite)
    try:
        scenarios = load_suite(suite_path)
    except SuiteError as err:
        raise CliError(f"suite error: {err}")
    report = run_suite(
        scenarios,
        planner_factory=lambda s: make_planner(planner_spec, retry),
        vision_factory=lambda s: make_vision(vision_spec, retry),
        parallelism=args.parallel,
        guards=_guards(args),
        strict=not args.lenient,
        base_dir=suite_path.parent,
        system_prompt=default_system_prompt(),
    )
    table = report_table(report)
    print(table, end="")
    if args.report:
        report_path = Path(args.report)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(
            json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        report_path.with_suffix(".txt").write_text(table, encoding="utf-8")
    if report.errored:
        for row in report.errored:
            print(f"errored: {row.scenario_id}: {row.error}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    templates = tuple(t.strip() for t in args.templates.split(",") if t.strip())
    try:
        config = GeneratorConfig(templates=templates)
    except ValueError as err:
        raise CliError(str(err))
    try:
        scenarios = synthesize_records(config, n=args.n, seed=args.seed)
    except GenerationExhausted as err:
        raise CliError(f"generation exhausted: {err}")
    out = Path(args.out)
    (out / "worlds").mkdir(parents=True, exist_ok=True)
    write_dataset([s.record for s in scenarios], out / "dataset.jsonl")
    specs = []
    for i, s in enumerate(scenarios):
        sid = f"synth-{i:04d}"
        world_ref = f"worlds/{sid}.json"
        save_world(s.world, out / world_ref, s.rig)
        specs.append(
            ScenarioSpec(
                id=sid,
                task=s.task,
                goal=s.goal,
                categories=s.categories,
                world_ref=world_ref,
            )
        )
    save_suite(specs, out / "suite.json")
    print(f"wrote {len(scenarios)} records, worlds, and suite.json under {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mock-serve


def cmd_mock_serve(args) -> int:
    script = None
    vision_world = None
    if args.planner_script:
        script_path = Path(args.planner_script)
        if not script_path.exists():
            raise CliError(f"no step script at {script_path}")
        script = [
            line.strip()
            for line in script_path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    if args.vision_world:
        vision_world = load_world(_resolve_world_path(args.vision_world))
    if script is None and vision_world is None:
        raise CliError("mock-serve needs --planner-script and/or --vision-world")
    try:
        server = MockBackendServer(
            port=args.port, planner_script=script, vision_world=vision_world
        ).start()
    except OSError as err:
        raise CliError(f"cannot bind port {args.port}: {err}")
    print(f"mock backends serving on {server.base_url}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cogdog", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one task (or a REPL) against a world")
    run.add_argument("--world", required=True, help="world JSON path or builtin name")
    run.add_argument("--task", help="task text")
    run.add_argument("--repl", action="store_true", help="prompt for tasks interactively")
    run.add_argument("--planner", help="oracle | scripted:<file> | remote:<url>")
    run.add_argument("--vision", help="sim | remote:<url>")
    run.add_argument("--out", help="directory for episode artifacts (default: no files)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--max-steps", type=int, default=30)
    run.add_argument("--timeout-s", type=float, default=None)
    run.add_argument("--config", help="JSON config file")
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay", help="replay dataset records against a world")
    replay.add_argument("--dataset", required=True, help="JSONL dataset path")
    replay.add_argument("--world", required=True, help="world JSON path or builtin name")
    replay.add_argument("--strict", action="store_true", help="fail on the first bad record")
    replay.set_defaults(func=cmd_replay)

    ev = sub.add_parser("eval", help="run a scenario suite and report success rates")
    ev.add_argument("--suite", required=True, help="suite JSON path or builtin name")
    ev.add_argument("--planner", help="oracle | scripted:<file> | remote:<url>")
    ev.add_argument("--vision", help="sim | remote:<url>")
    ev.add_argument("--parallel", type=int, default=1)
    ev.add_argument("--report", help="write report JSON (and .txt table) here")
    ev.add_argument("--max-steps", type=int, default=30)
    ev.add_argument("--timeout-s", type=float, default=None)
    ev.add_argument("--lenient", action="store_true", help="count aborted-but-satisfied as success")
    ev.add_argument("--config", help="JSON config file")
    ev.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="synthesize records, worlds, and a suite")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--n", type=int, default=10)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--templates", default="fetch,relocate")
    synth.set_defaults(func=cmd_synth)

    mock = sub.add_parser("mock-serve", help="serve canned planner/vision backends")
    mock.add_argument("--port", type=int, default=8975)
    mock.add_argument("--planner-script", help="step script file for /v1/next_step")
    mock.add_argument("--vision-world", help="world file for /v1/vision")
    mock.set_defaults(func=cmd_mock_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (WorldFileError, DatasetError, SuiteError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
