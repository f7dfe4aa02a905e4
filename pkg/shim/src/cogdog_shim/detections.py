"""Parse VQA-model detection output into wire-schema detections.

Detection grammars vary by model release, so each grammar is an isolated
parser selected by config:

- ``bracket``: ``<p>label</p> [x1,y1,x2,y2]`` in absolute pixels.
- ``angle``:   ``<p>label</p> {<x1><y1><x2><y2>}`` in 0-100 normalized
  coordinates, scaled to the panorama.

Multiple detections may appear in one output, separated by whitespace or
commas. Instance ids are assigned per label in order of appearance, starting
at 1. Boxes are clamped to the panorama; a box that collapses under clamping
or an output with no parseable group is a DetectionParseError (HTTP 422).
"""

from __future__ import annotations

import re


class DetectionParseError(ValueError):
    pass


_BRACKET_RE = re.compile(
    r"<p>(?P<label>[^<>]+)</p>\s*\[\s*(?P<x1>-?\d+(?:\.\d+)?)\s*,\s*(?P<y1>-?\d+(?:\.\d+)?)"
    r"\s*,\s*(?P<x2>-?\d+(?:\.\d+)?)\s*,\s*(?P<y2>-?\d+(?:\.\d+)?)\s*\]"
)
_ANGLE_RE = re.compile(
    r"<p>(?P<label>[^<>]+)</p>\s*\{<(?P<x1>-?\d+(?:\.\d+)?)><(?P<y1>-?\d+(?:\.\d+)?)>"
    r"<(?P<x2>-?\d+(?:\.\d+)?)><(?P<y2>-?\d+(?:\.\d+)?)>\}"
)

_GRAMMARS = {"bracket": _BRACKET_RE, "angle": _ANGLE_RE}


def parse_detections(
    text: str, width_px: int, height_px: int, grammar: str = "bracket"
) -> list[dict]:
    if grammar not in _GRAMMARS:
        raise ValueError(f"unknown detection grammar {grammar!r}")
    matches = list(_GRAMMARS[grammar].finditer(text))
    if not matches:
        raise DetectionParseError(f"no {grammar}-grammar detections in {text!r}")
    counters: dict[str, int] = {}
    detections = []
    for m in matches:
        label = m.group("label").strip()
        if not label:
            raise DetectionParseError(f"empty label in {m.group(0)!r}")
        x1, y1, x2, y2 = (float(m.group(k)) for k in ("x1", "y1", "x2", "y2"))
        if grammar == "angle":
            x1, x2 = x1 / 100.0 * width_px, x2 / 100.0 * width_px
            y1, y2 = y1 / 100.0 * height_px, y2 / 100.0 * height_px
        x1, x2 = max(0.0, min(x1, x2)), min(float(width_px), max(x1, x2))
        y1, y2 = max(0.0, min(y1, y2)), min(float(height_px), max(y1, y2))
        if not (x1 < x2 and y1 < y2):
            raise DetectionParseError(f"degenerate box in {m.group(0)!r}")
        counters[label] = counters.get(label, 0) + 1
        detections.append(
            {
                "label": label,
                "instance_id": counters[label],
                "bbox": [x1, y1, x2, y2],
            }
        )
    return detections
