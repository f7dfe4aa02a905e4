"""Access to bundled data files: system prompt, demo worlds, scripts, suites."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

SYSTEM_PROMPT_ASSET = "system_prompt_v1.txt"


def _root():
    return resources.files("cogdog") / "assets"


def default_system_prompt() -> str:
    """Shipped planner system prompt (versioned asset, not a code constant)."""
    return (_root() / SYSTEM_PROMPT_ASSET).read_text(encoding="utf-8")


def asset_path(relative: str) -> Path:
    """Filesystem path of a bundled asset (requires a non-zip install)."""
    path = Path(str(_root() / relative))
    if not path.exists():
        raise FileNotFoundError(f"no bundled asset {relative!r}")
    return path


def builtin_world_path(name: str) -> Path:
    return asset_path(f"worlds/{name}.json")


def builtin_script_path(name: str) -> Path:
    return asset_path(f"scripts/{name}.steps")


def builtin_suite_path(name: str) -> Path:
    return asset_path(f"suites/{name}.json")


def builtin_dataset_path(name: str) -> Path:
    return asset_path(f"datasets/{name}.jsonl")
