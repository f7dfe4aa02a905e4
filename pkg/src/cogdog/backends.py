"""Planner and vision backends plus the JSON-over-HTTP wire protocol.

Planners produce the next step line for an episode: :class:`ScriptedPlanner`
replays a recorded step list, :class:`OraclePlanner` is a deterministic
closed-loop policy for fetch/relocate/query tasks, and :class:`RemotePlanner`
POSTs the episode to ``/v1/next_step``. Vision queries route through
:func:`dispatch_vision`, backed either by the simulated ground truth
(:class:`SimVision`) or a remote ``/v1/vision`` service.

The wire schema is deliberately minimal and frozen: requests carry both the
structured episode fields and the exact rendered prompt, so a server may use
either prompting style. Errors travel as ``{"error": {"code", "message"}}``
with a non-200 status. Panoramas are base64 PNG.
"""

from __future__ import annotations

import base64
import copy
import logging
import math
import re
import struct
import time
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import requests

from .camera import CameraRig, OutOfBounds, camera_distance, localize, to_world
from .dsl import (
    Detections,
    DslError,
    ObjectRef,
    Outcome,
    Step,
    StepKind,
    StepResult,
    Text,
    parse_step,
    render_result,
    render_step,
)
from .episode import Episode, render_prompt
from .world import KnownObject, WorldState, _project_object, gt_describe, gt_detect, gt_vqa

log = logging.getLogger(__name__)

WIRE_SCHEMA_VERSION = 1

VISION_KINDS = frozenset({StepKind.DESCRIBE_VIEW, StepKind.QUESTION_VIEW, StepKind.SEARCH_VIEW})

_MODE_BY_KIND = {
    StepKind.QUESTION_VIEW: "vqa",
    StepKind.DESCRIBE_VIEW: "describe",
    StepKind.SEARCH_VIEW: "detect",
}


class BackendError(Exception):
    pass


class TransportError(BackendError):
    pass


class RemoteProtocolError(BackendError):
    def __init__(self, message: str, status: int = 0, code: str = ""):
        super().__init__(message)
        self.status = status
        self.code = code


class UnparseableStep(BackendError):
    """Remote planner output that does not parse as a step; raw text kept."""

    def __init__(self, raw: str, reason: str):
        super().__init__(f"unparseable planner output {raw!r}: {reason}")
        self.raw = raw
        self.reason = reason


class ScriptExhausted(BackendError):
    pass


class UnsupportedTask(BackendError):
    pass


class SchemaError(ValueError):
    pass


class NotAVisionStep(TypeError):
    pass


# ---------------------------------------------------------------------------
# Wire schema


def _require(data: dict, key: str, types) -> object:
    if key not in data:
        raise SchemaError(f"missing field {key!r}")
    value = data[key]
    if not isinstance(value, types):
        raise SchemaError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


@dataclass(frozen=True)
class PlannerRequest:
    system_prompt: str
    task: str
    history: tuple[tuple[str, str | None], ...]
    rendered_prompt: str

    @classmethod
    def from_episode(cls, episode: Episode) -> "PlannerRequest":
        history = tuple(
            (render_step(e.step), render_result(e.result) if e.result is not None else None)
            for e in episode.history
        )
        return cls(
            system_prompt=episode.system_prompt,
            task=episode.task,
            history=history,
            rendered_prompt=render_prompt(episode),
        )

    def to_wire(self) -> dict:
        return {
            "schema_version": WIRE_SCHEMA_VERSION,
            "system_prompt": self.system_prompt,
            "task": self.task,
            "history": [{"step": s, "result": r} for s, r in self.history],
            "rendered_prompt": self.rendered_prompt,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "PlannerRequest":
        if not isinstance(data, dict):
            raise SchemaError("request body must be a JSON object")
        history = []
        raw_history = _require(data, "history", list)
        for i, item in enumerate(raw_history):
            if not isinstance(item, dict) or not isinstance(item.get("step"), str):
                raise SchemaError(f"history[{i}] must be an object with a string 'step'")
            result = item.get("result")
            if result is not None and not isinstance(result, str):
                raise SchemaError(f"history[{i}].result must be a string or null")
            history.append((item["step"], result))
        return cls(
            system_prompt=str(_require(data, "system_prompt", str)),
            task=str(_require(data, "task", str)),
            history=tuple(history),
            rendered_prompt=str(_require(data, "rendered_prompt", str)),
        )


@dataclass(frozen=True)
class PlannerResponse:
    step_text: str

    def to_wire(self) -> dict:
        return {"schema_version": WIRE_SCHEMA_VERSION, "step_text": self.step_text}

    @classmethod
    def from_wire(cls, data: dict) -> "PlannerResponse":
        if not isinstance(data, dict):
            raise SchemaError("response body must be a JSON object")
        text = _require(data, "step_text", str)
        if not text.strip():
            raise SchemaError("step_text must be non-empty")
        return cls(step_text=text)


@dataclass(frozen=True)
class Panorama:
    image_png: bytes
    width_px: int
    height_px: int
    coverage_deg: float

    def to_wire(self) -> dict:
        return {
            "image_png_b64": base64.b64encode(self.image_png).decode("ascii"),
            "rig": {
                "width_px": self.width_px,
                "height_px": self.height_px,
                "coverage_deg": self.coverage_deg,
            },
        }

    @classmethod
    def from_wire(cls, data: dict) -> "Panorama":
        if not isinstance(data, dict):
            raise SchemaError("panorama must be an object")
        rig = _require(data, "rig", dict)
        try:
            image = base64.b64decode(_require(data, "image_png_b64", str), validate=True)
        except (ValueError, TypeError) as err:
            raise SchemaError(f"panorama image is not valid base64: {err}") from err
        return cls(
            image_png=image,
            width_px=int(_require(rig, "width_px", int)),
            height_px=int(_require(rig, "height_px", int)),
            coverage_deg=float(rig.get("coverage_deg", 270.0)),
        )


VISION_MODES = ("vqa", "describe", "detect")


@dataclass(frozen=True)
class VisionRequest:
    mode: str
    query: str
    panorama: Panorama | None = None

    def to_wire(self) -> dict:
        return {
            "schema_version": WIRE_SCHEMA_VERSION,
            "mode": self.mode,
            "query": self.query,
            "panorama": self.panorama.to_wire() if self.panorama else None,
        }

    @classmethod
    def from_wire(cls, data: dict) -> "VisionRequest":
        if not isinstance(data, dict):
            raise SchemaError("request body must be a JSON object")
        mode = _require(data, "mode", str)
        if mode not in VISION_MODES:
            raise SchemaError(f"mode must be one of {VISION_MODES}, got {mode!r}")
        query = _require(data, "query", str)
        if not query.strip():
            raise SchemaError("query must be non-empty")
        panorama = data.get("panorama")
        return cls(
            mode=mode,
            query=query,
            panorama=Panorama.from_wire(panorama) if panorama is not None else None,
        )


@dataclass(frozen=True)
class WireDetection:
    label: str
    instance_id: int
    bbox: tuple[float, float, float, float]

    def to_wire(self) -> dict:
        return {"label": self.label, "instance_id": self.instance_id, "bbox": list(self.bbox)}

    @classmethod
    def from_wire(cls, data: dict) -> "WireDetection":
        if not isinstance(data, dict):
            raise SchemaError("detection must be an object")
        label = _require(data, "label", str)
        iid = _require(data, "instance_id", int)
        if isinstance(iid, bool) or iid < 1:
            raise SchemaError("instance_id must be a positive integer")
        bbox = _require(data, "bbox", list)
        if len(bbox) != 4 or not all(isinstance(v, (int, float)) for v in bbox):
            raise SchemaError("bbox must be [x1, y1, x2, y2]")
        x1, y1, x2, y2 = (float(v) for v in bbox)
        if not (x1 < x2 and y1 < y2):
            raise SchemaError("bbox must satisfy x1 < x2 and y1 < y2")
        return cls(label=label, instance_id=int(iid), bbox=(x1, y1, x2, y2))


@dataclass(frozen=True)
class VisionResponse:
    answer: str | None = None
    detections: tuple[WireDetection, ...] | None = None

    def __post_init__(self):
        if (self.answer is None) == (self.detections is None):
            raise SchemaError("exactly one of answer/detections must be set")

    def to_wire(self) -> dict:
        if self.answer is not None:
            return {"schema_version": WIRE_SCHEMA_VERSION, "answer": self.answer}
        return {
            "schema_version": WIRE_SCHEMA_VERSION,
            "detections": [d.to_wire() for d in self.detections],
        }

    @classmethod
    def from_wire(cls, data: dict) -> "VisionResponse":
        if not isinstance(data, dict):
            raise SchemaError("response body must be a JSON object")
        if "answer" in data:
            answer = _require(data, "answer", str)
            if not answer.strip():
                raise SchemaError("answer must be non-empty")
            return cls(answer=answer)
        if "detections" in data:
            dets = _require(data, "detections", list)
            return cls(detections=tuple(WireDetection.from_wire(d) for d in dets))
        raise SchemaError("response must carry 'answer' or 'detections'")


def error_envelope(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


@lru_cache(maxsize=8)
def blank_panorama_png(width: int, height: int, shade: int = 96) -> bytes:
    """A flat grayscale PNG of the panorama dimensions.

    No image rendering is modeled; remote requests carry this placeholder so
    the wire contract (panorama required) holds with deterministic bytes.
    """
    header = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)
    raw = (b"\x00" + bytes([shade]) * width) * height
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"IDAT", zlib.compress(raw, 9))
        + _png_chunk(b"IEND", b"")
    )


def panorama_for_rig(rig: CameraRig) -> Panorama:
    lo, hi = rig.coverage
    return Panorama(
        image_png=blank_panorama_png(rig.width_px, rig.height_px),
        width_px=rig.width_px,
        height_px=rig.height_px,
        coverage_deg=math.degrees(hi - lo),
    )


# ---------------------------------------------------------------------------
# Output sanitization


_QUOTES = "\"'`"


def sanitize_step_text(text: str) -> str:
    """First non-empty line, stripped of surrounding whitespace and quotes.

    Idempotent: applying it twice changes nothing.
    """
    line = ""
    for candidate in text.splitlines():
        candidate = candidate.strip()
        if candidate:
            line = candidate
            break
    while len(line) >= 2 and line[0] == line[-1] and line[0] in _QUOTES:
        line = line[1:-1].strip()
    return line


# ---------------------------------------------------------------------------
# HTTP client plumbing


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_s: float = 0.25
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")


def _error_from_response(resp) -> tuple[str, str]:
    try:
        err = resp.json().get("error", {})
        return str(err.get("code", "")), str(err.get("message", resp.text[:200]))
    except ValueError:
        return "", resp.text[:200]


def post_json(
    session: requests.Session,
    url: str,
    payload: dict,
    retry: RetryPolicy,
    token: str | None = None,
) -> tuple[dict, int]:
    """POST JSON with retries; returns (body, attempts used).

    Timeouts, connection errors, 5xx responses, and undecodable bodies retry
    with exponential backoff; 4xx responses raise immediately since they will
    not heal on retry.
    """
    headers = {}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    last_error: Exception | str | None = None
    for attempt in range(1, retry.attempts + 1):
        if attempt > 1:
            time.sleep(retry.backoff_s * 2 ** (attempt - 2))
        try:
            resp = session.post(url, json=payload, timeout=retry.timeout_s, headers=headers)
        except (requests.Timeout, requests.ConnectionError) as err:
            last_error = err
            log.warning("attempt %d/%d against %s failed: %s", attempt, retry.attempts, url, err)
            continue
        if resp.status_code >= 500:
            code, message = _error_from_response(resp)
            last_error = f"HTTP {resp.status_code} {code}: {message}"
            log.warning("attempt %d/%d against %s: %s", attempt, retry.attempts, url, last_error)
            continue
        if resp.status_code >= 400:
            code, message = _error_from_response(resp)
            raise RemoteProtocolError(message, status=resp.status_code, code=code)
        try:
            return resp.json(), attempt
        except ValueError as err:
            last_error = err
            continue
    raise TransportError(f"{url} failed after {retry.attempts} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Planners


class ScriptedPlanner:
    """Replays a recorded step list verbatim, ignoring live results."""

    def __init__(self, steps):
        self.steps = [s.strip() for s in steps if s.strip()]
        self.cursor = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedPlanner":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())

    def next_step(self, episode: Episode) -> str:
        if self.cursor >= len(self.steps):
            raise ScriptExhausted(f"script exhausted after {len(self.steps)} steps")
        step = self.steps[self.cursor]
        self.cursor += 1
        return step


_FETCH_RE = re.compile(r"^(?:bring|give)\s+me\s+(?:the\s+|a\s+|an\s+)?(?P<obj>.+?)\s*[.!]?$", re.I)
_RELOCATE_RE = re.compile(
    r"^move\s+(?:the\s+|a\s+|an\s+)?(?P<obj>.+?)\s+to\s+(?:the\s+|a\s+|an\s+)?(?P<dst>.+?)\s*[.!]?$",
    re.I,
)
_QUERY_RE = re.compile(r"^is there\b", re.I)

_ORACLE_ABORT_STEP = "SAY(cannot complete)"


class OraclePlanner:
    """Deterministic closed-loop policy for fetch/relocate/query tasks.

    The next step is a pure function of the episode: the policy plan is
    replayed against the history each call, so the planner itself holds no
    state. On a failed search or question it gives up (SAY then FINISH); on a
    failed physical step it re-issues the relevant search once and then
    retries the step, giving up on any further failure.
    """

    def next_step(self, episode: Episode) -> str:
        plan = self._plan_for(episode.task)
        return self._drive(plan, episode)

    def _plan_for(self, task: str) -> list[tuple]:
        task = task.strip()
        m = _RELOCATE_RE.match(task)
        if m:
            return [
                ("search", m.group("obj")),
                ("search", m.group("dst")),
                ("goto", 0),
                ("take", 0),
                ("goto", 1),
                ("putin", 1),
                ("finish",),
            ]
        m = _FETCH_RE.match(task)
        if m:
            return [("search", m.group("obj")), ("goto", 0), ("take", 0), ("give",), ("finish",)]
        if _QUERY_RE.match(task):
            return [("question", task.rstrip()), ("say",), ("finish",)]
        raise UnsupportedTask(f"no oracle policy for task {task!r}")

    @staticmethod
    def _feeding_search(plan: list[tuple], idx: int) -> int:
        slot = plan[idx]
        if len(slot) > 1 and isinstance(slot[1], int):
            return slot[1]
        for j in range(idx - 1, -1, -1):
            if plan[j][0] == "search":
                return j
        return 0

    def _drive(self, plan: list[tuple], episode: Episode) -> str:
        i = 0
        retry_used = False
        pending_retry: int | None = None
        abort_stage = 0  # 1: SAY emitted next, 2: FINISH emitted next
        search_refs: dict[int, ObjectRef] = {}
        say_text: str | None = None

        for entry in episode.history:
            result = entry.result
            failed = not isinstance(result, (Detections, Text)) and not (
                isinstance(result, Outcome) and result.ok
            )
            if abort_stage == 1:
                abort_stage = 2
                continue
            if abort_stage == 2:
                continue
            if pending_retry is not None:
                feeding = self._feeding_search(plan, pending_retry)
                if failed or not isinstance(result, Detections):
                    abort_stage = 1
                else:
                    search_refs[feeding] = result.refs[0]
                    i = pending_retry
                pending_retry = None
                continue
            if i >= len(plan):
                break
            slot = plan[i]
            if failed:
                if slot[0] in ("search", "question") or retry_used:
                    abort_stage = 1
                else:
                    retry_used = True
                    pending_retry = i
                continue
            if slot[0] == "search":
                if not isinstance(result, Detections):
                    abort_stage = 1
                    continue
                search_refs[i] = result.refs[0]
            elif slot[0] == "question":
                say_text = result.text if isinstance(result, Text) else "unknown"
            i += 1

        if abort_stage == 1:
            return _ORACLE_ABORT_STEP
        if abort_stage == 2:
            return "FINISH"
        if pending_retry is not None:
            feeding = self._feeding_search(plan, pending_retry)
            return f"SEARCH_VIEW({plan[feeding][1]})"
        if i >= len(plan):
            return "FINISH"
        return self._emit(plan[i], search_refs, say_text)

    @staticmethod
    def _emit(slot: tuple, search_refs: dict[int, ObjectRef], say_text: str | None) -> str:
        op = slot[0]
        if op == "search":
            return f"SEARCH_VIEW({slot[1]})"
        if op == "question":
            return f"QUESTION_VIEW({slot[1]})"
        if op == "say":
            return f"SAY({say_text or 'unknown'})"
        if op == "give":
            return "GIVE_TO_USER"
        if op == "finish":
            return "FINISH"
        ref = search_refs[slot[1]]
        keyword = {"goto": "GO_TO", "take": "TAKE", "putin": "PUT_IN"}[op]
        return f"{keyword}({ref.render()})"


class RemotePlanner:
    """Client for the /v1/next_step endpoint."""

    def __init__(
        self,
        base_url: str,
        retry: RetryPolicy = RetryPolicy(),
        token: str | None = None,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retry = retry
        self.token = token
        self.session = session or requests.Session()
        self.last_attempts = 0

    def next_step(self, episode: Episode) -> str:
        payload = PlannerRequest.from_episode(episode).to_wire()
        body, attempts = post_json(
            self.session, f"{self.base_url}/v1/next_step", payload, self.retry, self.token
        )
        self.last_attempts = attempts
        try:
            response = PlannerResponse.from_wire(body)
        except SchemaError as err:
            raise RemoteProtocolError(f"bad planner response: {err}") from err
        text = sanitize_step_text(response.step_text)
        try:
            parse_step(text)
        except DslError as err:
            raise UnparseableStep(response.step_text, str(err)) from err
        return text


# ---------------------------------------------------------------------------
# Vision backends


class SimVision:
    """Marker backend: answer vision steps from the simulated ground truth."""


class RemoteVision:
    """Client for the /v1/vision endpoint."""

    def __init__(
        self,
        base_url: str,
        retry: RetryPolicy = RetryPolicy(),
        token: str | None = None,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retry = retry
        self.token = token
        self.session = session or requests.Session()
        self.last_attempts = 0

    def query(self, request: VisionRequest) -> VisionResponse:
        body, attempts = post_json(
            self.session, f"{self.base_url}/v1/vision", request.to_wire(), self.retry, self.token
        )
        self.last_attempts = attempts
        try:
            return VisionResponse.from_wire(body)
        except SchemaError as err:
            raise RemoteProtocolError(f"bad vision response: {err}") from err


def _register_remote_detections(
    world: WorldState, rig: CameraRig, detections
) -> tuple[WorldState, tuple[ObjectRef, ...]]:
    """Ground remote detections against the simulated depth source.

    Each detection is matched to the same-named world object whose projected
    center is nearest the reported box (the RGB-D / SLAM stand-in); unmatched
    labels register as uid-less map points so GO_TO still works on them.
    """
    w = copy.deepcopy(world)
    refs = []
    for det in detections:
        cx = (det.bbox[0] + det.bbox[2]) / 2
        cy = (det.bbox[1] + det.bbox[3]) / 2
        best = None
        best_cost = None
        for obj in w.objects:
            if obj.name.lower() != det.label.lower():
                continue
            point, bbox = _project_object(w, rig, obj)
            if bbox is None:
                continue
            ox = (bbox[0] + bbox[2]) / 2
            oy = (bbox[1] + bbox[3]) / 2
            cost = abs(ox - cx) + abs(oy - cy)
            if best_cost is None or cost < best_cost:
                best, best_cost = (obj, point, bbox), cost
        if best is not None:
            obj, point, bbox = best
            depth = camera_distance(point, rig)
            if rig.depth_quantization > 0:
                depth = round(depth / rig.depth_quantization) * rig.depth_quantization
            point_robot = localize(bbox, depth, rig)
            ko = KnownObject(obj.uid, to_world(point_robot, w.robot.pose))
        else:
            try:
                point_robot = localize(det.bbox, rig.max_range / 2, rig)
                ko = KnownObject(None, to_world(point_robot, w.robot.pose))
            except OutOfBounds:
                rx, ry, _ = w.robot.pose
                ko = KnownObject(None, (rx, ry, 0.0))
        w.robot.known_objects[(det.label, det.instance_id)] = ko
        refs.append(ObjectRef(det.label, det.instance_id))
    return w, tuple(refs)


def dispatch_vision(
    step: Step, vision, world: WorldState, rig: CameraRig
) -> tuple[StepResult, WorldState]:
    """Route one vision step to the backend and map its reply to a result.

    Searches with no detections fail in-band ("not found"), and transport
    failures surface as Outcome(failure, "vision unavailable") so the planner
    can react. Detections register into known_objects, the one deliberate
    world mutation on the vision path.
    """
    if step.kind not in VISION_KINDS:
        raise NotAVisionStep(f"{step.kind.value} is not a vision step")
    query = step.argument

    if isinstance(vision, SimVision):
        if step.kind is StepKind.QUESTION_VIEW:
            return Text(gt_vqa(query, world, rig)), world
        if step.kind is StepKind.DESCRIBE_VIEW:
            return Text(gt_describe(query, world, rig)), world
        detections, w = gt_detect(query, world, rig)
        if not detections:
            return Outcome.failure("not found"), world
        return Detections(tuple(d.ref for d in detections)), w

    request = VisionRequest(
        mode=_MODE_BY_KIND[step.kind], query=query, panorama=panorama_for_rig(rig)
    )
    try:
        response = vision.query(request)
    except BackendError as err:
        log.warning("vision backend unavailable: %s", err)
        return Outcome.failure("vision unavailable"), world
    if response.answer is not None:
        return Text(response.answer), world
    if not response.detections:
        return Outcome.failure("not found"), world
    w, refs = _register_remote_detections(world, rig, response.detections)
    return Detections(refs), w
