"""Model clients.

The shim delegates inference to any local serving stack; it owns only prompt
construction and output parsing. Two client families:

- ``Http*`` clients POST to a generic local inference endpoint
  (``{"prompt": ...}`` -> ``{"text": ...}``, plus ``image_b64`` for VQA).
- ``Stub*`` clients are deterministic stand-ins for tests and offline runs: a
  scripted completion queue and an exact-prompt answer table.

A client raising ModelError surfaces as HTTP 502 from the shim.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import requests


class ModelError(RuntimeError):
    pass


class StubChatModel:
    """Returns scripted completions in order; repeats the last one when
    exhausted (a stuck model is more realistic than a crash)."""

    def __init__(self, completions):
        self.completions = list(completions)
        if not self.completions:
            raise ValueError("stub needs at least one completion")
        self.cursor = 0
        self.prompts: list[str] = []  # kept for test inspection

    @classmethod
    def from_file(cls, path: str | Path) -> "StubChatModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines if line.strip()])

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        completion = self.completions[min(self.cursor, len(self.completions) - 1)]
        self.cursor += 1
        return completion


class StubVqaModel:
    """Answers by exact prompt lookup, so a wrong tag convention shows up as
    a missing-prompt failure instead of silently passing."""

    def __init__(self, table: dict[str, str], default: str | None = None):
        self.table = dict(table)
        self.default = default
        self.prompts: list[str] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "StubVqaModel":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data.get("table", {}), data.get("default"))

    def answer(self, prompt: str, image_png: bytes) -> str:
        self.prompts.append(prompt)
        if prompt in self.table:
            return self.table[prompt]
        if self.default is not None:
            return self.default
        raise ModelError(f"no canned answer for prompt {prompt!r}")


class HttpCompletionModel:
    def __init__(self, url: str, timeout_s: float = 60.0, session=None):
        self.url = url
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def complete(self, prompt: str) -> str:
        try:
            resp = self.session.post(self.url, json={"prompt": prompt}, timeout=self.timeout_s)
            resp.raise_for_status()
            return str(resp.json()["text"])
        except (requests.RequestException, ValueError, KeyError) as err:
            raise ModelError(f"completion backend failed: {err}") from err


class HttpVqaModel:
    def __init__(self, url: str, timeout_s: float = 60.0, session=None):
        self.url = url
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def answer(self, prompt: str, image_png: bytes) -> str:
        payload = {
            "prompt": prompt,
            "image_b64": base64.b64encode(image_png).decode("ascii"),
        }
        try:
            resp = self.session.post(self.url, json=payload, timeout=self.timeout_s)
            resp.raise_for_status()
            return str(resp.json()["text"])
        except (requests.RequestException, ValueError, KeyError) as err:
            raise ModelError(f"vqa backend failed: {err}") from err


def make_planner_model(spec: str, timeout_s: float = 60.0):
    kind, _, rest = spec.partition(":")
    if kind == "stub":
        return StubChatModel.from_file(rest) if rest else StubChatModel(["FINISH"])
    if kind == "http":
        return HttpCompletionModel(rest, timeout_s=timeout_s)
    raise ValueError(f"unknown planner model spec {spec!r}")


def make_vision_model(spec: str, timeout_s: float = 60.0):
    kind, _, rest = spec.partition(":")
    if kind == "stub":
        return StubVqaModel.from_file(rest) if rest else StubVqaModel({}, default="unknown")
    if kind == "http":
        return HttpVqaModel(rest, timeout_s=timeout_s)
    raise ValueError(f"unknown vision model spec {spec!r}")
