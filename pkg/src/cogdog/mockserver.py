"""In-process HTTP server for wire-protocol conformance testing.

Serves /v1/next_step from a canned step script and /v1/vision from a world's
ground truth, with the same schemas and error envelopes the real backends
use. The vision world keeps its own robot pose (it never sees the client's
motion), so conformance fixtures keep queried objects visible from the spawn
pose. POST /v1/reset rewinds the script cursor and the world to their loaded
state, which lets one server instance back multiple test runs.
"""

from __future__ import annotations

import copy
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .backends import (
    PlannerRequest,
    PlannerResponse,
    SchemaError,
    VisionRequest,
    VisionResponse,
    WireDetection,
    error_envelope,
)
from .camera import CameraRig
from .world import WorldState, gt_describe, gt_detect, gt_vqa


class MockBackendServer:
    """Threaded mock planner/vision server; start() binds, stop() tears down."""

    def __init__(
        self,
        port: int = 0,
        planner_script: list[str] | None = None,
        vision_world: tuple[WorldState, CameraRig] | None = None,
        host: str = "127.0.0.1",
    ):
        self.host = host
        self._requested_port = port
        self._script = list(planner_script) if planner_script is not None else None
        self._cursor = 0
        self._world0 = copy.deepcopy(vision_world[0]) if vision_world else None
        self._world = copy.deepcopy(vision_world[0]) if vision_world else None
        self._rig = vision_world[1] if vision_world else None
        self._lock = threading.Lock()
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

    def start(self) -> "MockBackendServer":
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output clean
                pass

            def _send(self, status: int, payload: dict):
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    raw = self.rfile.read(length)
                    data = json.loads(raw) if raw else {}
                except (ValueError, UnicodeDecodeError) as err:
                    self._send(400, error_envelope("bad_request", f"invalid JSON body: {err}"))
                    return
                try:
                    if self.path == "/v1/next_step":
                        self._send(*server._handle_next_step(data))
                    elif self.path == "/v1/vision":
                        self._send(*server._handle_vision(data))
                    elif self.path == "/v1/reset":
                        self._send(*server._handle_reset())
                    else:
                        self._send(404, error_envelope("not_found", f"no route {self.path}"))
                except SchemaError as err:
                    self._send(400, error_envelope("schema_error", str(err)))
                except Exception as err:  # defensive: surface as a 500 envelope
                    self._send(500, error_envelope("internal", str(err)))

        self._httpd = ThreadingHTTPServer((self.host, self._requested_port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockBackendServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- handlers -----------------------------------------------------------

    def _handle_next_step(self, data: dict) -> tuple[int, dict]:
        if self._script is None:
            return 404, error_envelope("no_planner", "server started without a planner script")
        PlannerRequest.from_wire(data)  # validate, content unused for replay
        with self._lock:
            if self._cursor >= len(self._script):
                return 409, error_envelope(
                    "script_exhausted", f"script exhausted after {len(self._script)} steps"
                )
            step = self._script[self._cursor]
            self._cursor += 1
        return 200, PlannerResponse(step_text=step).to_wire()

    def _handle_vision(self, data: dict) -> tuple[int, dict]:
        if self._world is None:
            return 404, error_envelope("no_vision", "server started without a vision world")
        request = VisionRequest.from_wire(data)
        with self._lock:
            if request.mode == "vqa":
                response = VisionResponse(answer=gt_vqa(request.query, self._world, self._rig))
            elif request.mode == "describe":
                response = VisionResponse(
                    answer=gt_describe(request.query, self._world, self._rig)
                )
            else:
                detections, self._world = gt_detect(request.query, self._world, self._rig)
                response = VisionResponse(
                    detections=tuple(
                        WireDetection(d.ref.name, d.ref.instance_id, d.bbox) for d in detections
                    )
                )
        return 200, response.to_wire()

    def _handle_reset(self) -> tuple[int, dict]:
        with self._lock:
            self._cursor = 0
            self._world = copy.deepcopy(self._world0)
        return 200, {"ok": True}
