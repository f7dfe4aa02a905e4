"""Reusable remote-backend conformance checks.

The same checks run against the bundled mock server and against any external
service implementing the wire protocol (for example a model-hosting shim), so
a service that passes here is drop-in compatible with the engine's remote
clients. Each check returns a list of human-readable mismatch strings; empty
means conformant.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backends import (
    Outcome,
    RemotePlanner,
    RemoteVision,
    RetryPolicy,
    VisionRequest,
    panorama_for_rig,
)
from .camera import CameraRig, default_rig
from .episode import new_episode, append
from .dsl import StepKind, parse_step


def check_planner_script(
    base_url: str,
    script: list[str],
    task: str = "conformance check",
    system_prompt: str | None = None,
    retry: RetryPolicy = RetryPolicy(attempts=2, backoff_s=0.05, timeout_s=10),
    token: str | None = None,
) -> list[str]:
    """Drive the remote planner and require it to replay ``script`` exactly."""
    planner = RemotePlanner(base_url, retry=retry, token=token)
    episode = new_episode(task, system_prompt=system_prompt, step_budget=len(script) + 2)
    mismatches = []
    for i, expected in enumerate(script):
        try:
            got = planner.next_step(episode)
        except Exception as err:
            mismatches.append(f"step {i + 1}: request failed: {err}")
            break
        if got != expected.strip():
            mismatches.append(f"step {i + 1}: expected {expected!r}, got {got!r}")
        step = parse_step(got)
        if step.kind is StepKind.FINISH:
            episode = append(episode, step)
            if i != len(script) - 1:
                mismatches.append(f"step {i + 1}: FINISH before end of script")
            break
        episode = append(episode, step, Outcome.success())
    return mismatches


@dataclass
class VisionCase:
    """One vision conformance probe.

    ``expect_answer`` pins the exact answer text; ``expect_labels`` pins the
    multiset of detection labels; with neither set the case is schema-only.
    """

    mode: str
    query: str
    expect_answer: str | None = None
    expect_labels: list[str] | None = None
    schema_only: bool = False


def check_vision_cases(
    base_url: str,
    cases: list[VisionCase],
    rig: CameraRig | None = None,
    retry: RetryPolicy = RetryPolicy(attempts=2, backoff_s=0.05, timeout_s=10),
    token: str | None = None,
) -> list[str]:
    """Send each case to the remote vision service and check the response."""
    rig = rig or default_rig()
    vision = RemoteVision(base_url, retry=retry, token=token)
    panorama = panorama_for_rig(rig)
    mismatches = []
    for i, case in enumerate(cases):
        request = VisionRequest(mode=case.mode, query=case.query, panorama=panorama)
        try:
            response = vision.query(request)  # from_wire already schema-validates
        except Exception as err:
            mismatches.append(f"case {i + 1} ({case.mode} {case.query!r}): failed: {err}")
            continue
        if case.mode == "detect":
            if response.detections is None:
                mismatches.append(f"case {i + 1}: detect mode must return detections")
                continue
            for det in response.detections:
                if not (
                    0 <= det.bbox[0] < det.bbox[2] <= rig.width_px
                    and 0 <= det.bbox[1] < det.bbox[3] <= rig.height_px
                ):
                    mismatches.append(f"case {i + 1}: bbox {det.bbox} outside panorama")
            if not case.schema_only and case.expect_labels is not None:
                got = sorted(d.label for d in response.detections)
                if got != sorted(case.expect_labels):
                    mismatches.append(
                        f"case {i + 1}: expected labels {sorted(case.expect_labels)}, got {got}"
                    )
        else:
            if response.answer is None:
                mismatches.append(f"case {i + 1}: {case.mode} mode must return an answer")
                continue
            if case.expect_answer is not None and response.answer != case.expect_answer:
                mismatches.append(
                    f"case {i + 1}: expected answer {case.expect_answer!r}, got {response.answer!r}"
                )
    return mismatches
