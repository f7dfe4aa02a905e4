"""Shim configuration: which models to host and how to prompt them.

Settings resolve as constructor args > environment (COGDOG_SHIM_*) > config
file > defaults, mirroring the engine CLI's conventions.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

PROMPT_TEMPLATES = ("plain", "chat")
DETECTION_GRAMMARS = ("bracket", "angle")


@dataclass(frozen=True)
class ShimConfig:
    planner_model: str | None = None  # stub:<script file> | http:<completion url>
    vision_model: str | None = None  # stub:<table file>  | http:<vqa url>
    prompt_template: str = "plain"
    detection_grammar: str = "bracket"
    port: int = 8976
    timeout_s: float = 60.0

    def __post_init__(self):
        if self.planner_model is None and self.vision_model is None:
            raise ValueError("enable at least one of planner_model/vision_model")
        if self.prompt_template not in PROMPT_TEMPLATES:
            raise ValueError(f"prompt_template must be one of {PROMPT_TEMPLATES}")
        if self.detection_grammar not in DETECTION_GRAMMARS:
            raise ValueError(f"detection_grammar must be one of {DETECTION_GRAMMARS}")


def _setting(value, env_name: str, file_config: dict, key: str, default):
    if value is not None:
        return value
    env = os.environ.get(env_name)
    if env:
        return env
    if key in file_config:
        return file_config[key]
    return default


def load_config(
    planner_model: str | None = None,
    vision_model: str | None = None,
    prompt_template: str | None = None,
    detection_grammar: str | None = None,
    port: int | None = None,
    config_file: str | None = None,
) -> ShimConfig:
    file_config = {}
    if config_file:
        file_config = json.loads(Path(config_file).read_text(encoding="utf-8"))
    return ShimConfig(
        planner_model=_setting(
            planner_model, "COGDOG_SHIM_PLANNER_MODEL", file_config, "planner_model", None
        ),
        vision_model=_setting(
            vision_model, "COGDOG_SHIM_VISION_MODEL", file_config, "vision_model", None
        ),
        prompt_template=_setting(
            prompt_template, "COGDOG_SHIM_TEMPLATE", file_config, "prompt_template", "plain"
        ),
        detection_grammar=_setting(
            detection_grammar,
            "COGDOG_SHIM_DETECTION_GRAMMAR",
            file_config,
            "detection_grammar",
            "bracket",
        ),
        port=int(_setting(port, "COGDOG_SHIM_PORT", file_config, "port", 8976)),
        timeout_s=float(_setting(None, "COGDOG_SHIM_TIMEOUT_S", file_config, "timeout_s", 60.0)),
    )
