"""Prompt construction for the hosted models.

Planner prompts either forward the request's pre-rendered prompt verbatim
("plain") or re-template the structured fields into a chat-style layout
("chat"). Vision prompts carry the per-mode tag conventions: questions get a
``[vqa]`` tag, descriptions append ``, describe shortly``, and object
searches get a ``[detection]`` tag.
"""

from __future__ import annotations

VQA_TAG = "[vqa] "
DETECTION_TAG = "[detection] "
DESCRIBE_SUFFIX = ", describe shortly"


def build_planner_prompt(request: dict, template: str) -> str:
    if template == "plain":
        return request["rendered_prompt"]
    lines = [
        "<<SYSTEM>>",
        request["system_prompt"].rstrip("\n"),
        "<</SYSTEM>>",
        f"[USER] {request['task']}",
        "[PLAN SO FAR]",
    ]
    for item in request["history"]:
        if item.get("result") is None:
            lines.append(item["step"])
        else:
            lines.append(f"{item['step']}, {item['result']}")
    lines.append("[NEXT STEP]")
    return "\n".join(lines) + "\n"


def build_vision_prompt(mode: str, query: str) -> str:
    if mode == "vqa":
        return VQA_TAG + query
    if mode == "describe":
        return query + DESCRIBE_SUFFIX
    if mode == "detect":
        return DETECTION_TAG + query
    raise ValueError(f"unknown vision mode {mode!r}")
