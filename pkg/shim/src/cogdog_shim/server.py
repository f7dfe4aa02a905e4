"""The shim HTTP server: /v1/next_step and /v1/vision over hosted models.

Request/response shapes follow the engine's frozen wire schema
(schema_version 1, errors as {"error": {"code", "message"}}). Handlers are
stateless; model clients carry whatever session state they need.
"""

from __future__ import annotations

import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import ShimConfig
from .detections import DetectionParseError, parse_detections
from .models import ModelError, make_planner_model, make_vision_model
from .prompts import build_planner_prompt, build_vision_prompt

WIRE_SCHEMA_VERSION = 1
VISION_MODES = ("vqa", "describe", "detect")


class RequestError(ValueError):
    def __init__(self, message: str, status: int = 400, code: str = "schema_error"):
        super().__init__(message)
        self.status = status
        self.code = code


def _error(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _require(data: dict, key: str, types) -> object:
    if not isinstance(data, dict) or key not in data:
        raise RequestError(f"missing field {key!r}")
    value = data[key]
    if not isinstance(value, types):
        raise RequestError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


def validate_planner_request(data: dict) -> dict:
    _require(data, "system_prompt", str)
    _require(data, "task", str)
    _require(data, "rendered_prompt", str)
    history = _require(data, "history", list)
    for i, item in enumerate(history):
        if not isinstance(item, dict) or not isinstance(item.get("step"), str):
            raise RequestError(f"history[{i}] must be an object with a string 'step'")
        result = item.get("result")
        if result is not None and not isinstance(result, str):
            raise RequestError(f"history[{i}].result must be a string or null")
    return data


def validate_vision_request(data: dict) -> tuple[str, str, bytes, int, int]:
    mode = _require(data, "mode", str)
    if mode not in VISION_MODES:
        raise RequestError(f"mode must be one of {VISION_MODES}, got {mode!r}")
    query = _require(data, "query", str)
    if not query.strip():
        raise RequestError("query must be non-empty")
    panorama = data.get("panorama")
    if panorama is None:
        raise RequestError("panorama is required")
    rig = _require(panorama, "rig", dict)
    width = _require(rig, "width_px", int)
    height = _require(rig, "height_px", int)
    try:
        image = base64.b64decode(_require(panorama, "image_png_b64", str), validate=True)
    except (ValueError, TypeError) as err:
        raise RequestError(f"panorama image is not valid base64: {err}") from err
    return mode, query, image, int(width), int(height)


class ShimServer:
    """Threaded HTTP server hosting the configured planner/vision models."""

    def __init__(
        self,
        config: ShimConfig,
        planner_model=None,
        vision_model=None,
        host: str = "127.0.0.1",
    ):
        self.config = config
        self.host = host
        self.planner_model = planner_model or (
            make_planner_model(config.planner_model, config.timeout_s)
            if config.planner_model
            else None
        )
        self.vision_model = vision_model or (
            make_vision_model(config.vision_model, config.timeout_s)
            if config.vision_model
            else None
        )
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        if self._httpd is None:
            raise RuntimeError("server not started")
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    # -- request handling ----------------------------------------------------

    def handle_next_step(self, data: dict) -> tuple[int, dict]:
        if self.planner_model is None:
            return 404, _error("no_planner", "planner model not enabled")
        request = validate_planner_request(data)
        prompt = build_planner_prompt(request, self.config.prompt_template)
        try:
            completion = self.planner_model.complete(prompt)
        except ModelError as err:
            return 502, _error("model_backend", str(err))
        step_text = ""
        for line in completion.splitlines() or [completion]:
            if line.strip():
                step_text = line.strip()
                break
        if not step_text:
            return 502, _error("model_backend", "model returned an empty completion")
        return 200, {"schema_version": WIRE_SCHEMA_VERSION, "step_text": step_text}

    def handle_vision(self, data: dict) -> tuple[int, dict]:
        if self.vision_model is None:
            return 404, _error("no_vision", "vision model not enabled")
        mode, query, image, width, height = validate_vision_request(data)
        prompt = build_vision_prompt(mode, query)
        try:
            output = self.vision_model.answer(prompt, image)
        except ModelError as err:
            return 502, _error("model_backend", str(err))
        if mode == "detect":
            try:
                detections = parse_detections(
                    output, width, height, self.config.detection_grammar
                )
            except DetectionParseError as err:
                return 422, _error("unparseable_detections", str(err))
            return 200, {"schema_version": WIRE_SCHEMA_VERSION, "detections": detections}
        if not output.strip():
            return 502, _error("model_backend", "model returned an empty answer")
        return 200, {"schema_version": WIRE_SCHEMA_VERSION, "answer": output}

    # -- lifecycle -----------------------------------------------------------

    def start(self, port: int | None = None) -> "ShimServer":
        shim = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _send(self, status: int, payload: dict):
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/healthz":
                    self._send(200, {"ok": True})
                else:
                    self._send(404, _error("not_found", f"no route {self.path}"))

            def do_POST(self):
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    raw = self.rfile.read(length)
                    data = json.loads(raw) if raw else {}
                except (ValueError, UnicodeDecodeError) as err:
                    self._send(400, _error("bad_request", f"invalid JSON body: {err}"))
                    return
                try:
                    if self.path == "/v1/next_step":
                        self._send(*shim.handle_next_step(data))
                    elif self.path == "/v1/vision":
                        self._send(*shim.handle_vision(data))
                    else:
                        self._send(404, _error("not_found", f"no route {self.path}"))
                except RequestError as err:
                    self._send(err.status, _error(err.code, str(err)))
                except Exception as err:  # defensive: show up as a 500 envelope
                    self._send(500, _error("internal", str(err)))

        bind_port = self.config.port if port is None else port
        self._httpd = ThreadingHTTPServer((self.host, bind_port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "ShimServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
