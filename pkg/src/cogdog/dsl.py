"""Parsing and rendering of the behavior-step language.

A step is a single line such as ``TAKE(<p>hat</p>)`` or ``FINISH``; a result
is a single line such as ``RESULT(success)``. Transcripts interleave the two,
either on alternating lines or sharing a line as ``STEP, RESULT(...)``.

The step vocabulary is closed (exactly the 15 kinds of :class:`StepKind`) and
each kind has a fixed argument arity. Parsers accept both bare object names
(``GO_TO(window)``) and tagged identifiers (``TAKE(<p>hat [1]</p>)``);
renderers emit one canonical form (object arguments always tagged, outcome
keywords lower case), so ``parse_step(render_step(s)) == s`` for every valid
step, and likewise for results up to the upper/lower-case normalization of
``RESULT(SUCCESS)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class DslError(ValueError):
    """Base class for step/result grammar errors.

    ``line`` is filled in by :func:`parse_transcript` so multi-line input
    reports where it failed.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message


class UnknownStepKind(DslError):
    pass


class ArityMismatch(DslError):
    pass


class MalformedObjectTag(DslError):
    pass


class MalformedArgument(DslError):
    pass


class MissingResultWrapper(DslError):
    pass


class EmptyBody(DslError):
    pass


class DanglingResult(DslError):
    pass


class StepAfterFinish(DslError):
    pass


class MissingStepResult(DslError):
    pass


class UnexpectedResultForFinish(DslError):
    pass


class StepKind(Enum):
    GO_TO = "GO_TO"
    TAKE = "TAKE"
    PUT_IN = "PUT_IN"
    TILT = "TILT"
    SIT = "SIT"
    UP = "UP"
    TURN = "TURN"
    SAY = "SAY"
    FOLLOW = "FOLLOW"
    GIVE_TO_USER = "GIVE_TO_USER"
    GO_USER = "GO_USER"
    DESCRIBE_VIEW = "DESCRIBE_VIEW"
    QUESTION_VIEW = "QUESTION_VIEW"
    SEARCH_VIEW = "SEARCH_VIEW"
    FINISH = "FINISH"


NO_ARGUMENT_KINDS = frozenset(
    {StepKind.SIT, StepKind.UP, StepKind.GIVE_TO_USER, StepKind.GO_USER, StepKind.FINISH}
)
OBJECT_ARGUMENT_KINDS = frozenset(
    {StepKind.GO_TO, StepKind.TAKE, StepKind.PUT_IN, StepKind.FOLLOW}
)
TEXT_ARGUMENT_KINDS = frozenset(
    {StepKind.SAY, StepKind.DESCRIBE_VIEW, StepKind.QUESTION_VIEW, StepKind.SEARCH_VIEW}
)

TILT_ARGUMENTS = ("down", "up")
TURN_WORDS = ("left", "right")

_NAME_FORBIDDEN = set("<>[]\n")
_INT_RE = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class ObjectRef:
    """An object identifier: a name plus an optional detection instance id.

    Rendered as ``<p>name</p>`` or ``<p>name [k]</p>``.
    """

    name: str
    instance_id: int | None = None

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise MalformedObjectTag("object name must be non-empty")
        if self.name != self.name.strip():
            raise MalformedObjectTag(f"object name has stray whitespace: {self.name!r}")
        if any(c in _NAME_FORBIDDEN for c in self.name):
            raise MalformedObjectTag(f"object name contains forbidden characters: {self.name!r}")
        if self.instance_id is not None and self.instance_id < 1:
            raise MalformedObjectTag(f"instance id must be >= 1, got {self.instance_id}")

    def render(self) -> str:
        if self.instance_id is None:
            return f"<p>{self.name}</p>"
        return f"<p>{self.name} [{self.instance_id}]</p>"

    def key(self) -> tuple[str, int | None]:
        return (self.name, self.instance_id)


@dataclass(frozen=True)
class Step:
    """One parsed behavior step: a kind plus its (arity-checked) argument."""

    kind: StepKind
    argument: ObjectRef | str | None = None

    def __post_init__(self):
        kind, arg = self.kind, self.argument
        if kind in NO_ARGUMENT_KINDS:
            if arg is not None:
                raise ArityMismatch(f"{kind.value} takes no argument")
        elif kind in OBJECT_ARGUMENT_KINDS:
            if not isinstance(arg, ObjectRef):
                raise ArityMismatch(f"{kind.value} requires an object reference")
        elif kind in TEXT_ARGUMENT_KINDS:
            if not isinstance(arg, str) or not arg:
                raise ArityMismatch(f"{kind.value} requires a text argument")
            if "\n" in arg:
                raise MalformedArgument(f"{kind.value} argument must be a single line")
        elif kind is StepKind.TILT:
            if arg not in TILT_ARGUMENTS:
                raise MalformedArgument(f"TILT argument must be one of {TILT_ARGUMENTS}, got {arg!r}")
        elif kind is StepKind.TURN:
            if not isinstance(arg, str) or (arg not in TURN_WORDS and not _INT_RE.match(arg)):
                raise MalformedArgument(
                    f"TURN argument must be left, right, or signed integer degrees, got {arg!r}"
                )


@dataclass(frozen=True)
class RawStep:
    """Verbatim planner output that failed step parsing.

    Kept in episode histories so the planner sees its own rejected line next
    to an in-band failure result. Renders as-is; never produced by parsing.
    """

    text: str

    def __post_init__(self):
        if "\n" in self.text:
            raise MalformedArgument("raw step text must be a single line")


@dataclass(frozen=True)
class Outcome:
    """Success/failure result of a physical step. ``note`` only on failure."""

    ok: bool
    note: str | None = None

    def __post_init__(self):
        if self.ok and self.note is not None:
            raise MalformedArgument("success outcomes carry no note")
        if self.note is not None and "\n" in self.note:
            raise MalformedArgument("outcome note must be a single line")

    @classmethod
    def success(cls) -> "Outcome":
        return cls(True)

    @classmethod
    def failure(cls, note: str | None = None) -> "Outcome":
        return cls(False, note)


@dataclass(frozen=True)
class Text:
    """Free-text result of a vision query."""

    text: str

    def __post_init__(self):
        if not self.text:
            raise EmptyBody("text result must be non-empty")
        if "\n" in self.text:
            raise MalformedArgument("text result must be a single line")


@dataclass(frozen=True)
class Detections:
    """Result of an object search: one tagged reference per detection."""

    refs: tuple[ObjectRef, ...]

    def __post_init__(self):
        if not self.refs:
            raise EmptyBody("detections result must contain at least one reference")


StepResult = Outcome | Text | Detections


@dataclass(frozen=True)
class HistoryEntry:
    """One step together with its result; FINISH is the only result-less step."""

    step: Step | RawStep
    result: StepResult | None = None

    def __post_init__(self):
        is_finish = isinstance(self.step, Step) and self.step.kind is StepKind.FINISH
        if is_finish and self.result is not None:
            raise UnexpectedResultForFinish("FINISH carries no result")
        if not is_finish and self.result is None:
            raise MissingStepResult(f"step {render_step(self.step)!r} has no result")


_HEAD_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)\s*(.*)$", re.S)
_TAGGED_RE = re.compile(r"^<p>(?P<inner>[^<>]*)</p>$")
_REF_RE = re.compile(r"^(?P<name>.*?)(?:\s*\[(?P<id>\d+)\])?$")
_RESULT_RE = re.compile(r"^RESULT\((?P<body>.*)\)$", re.S)
_FAILURE_RE = re.compile(r"^(?:failure|fail)(?:\s*:\s*(?P<note>.*))?$", re.I)
_DETECTIONS_RE = re.compile(r"^<p>[^<>]*</p>(?:\s+<p>[^<>]*</p>)*$")
_DETECTION_GROUP_RE = re.compile(r"<p>([^<>]*)</p>")


def _parse_object_ref(body: str) -> ObjectRef:
    if "<" in body or ">" in body:
        m = _TAGGED_RE.match(body)
        if not m:
            raise MalformedObjectTag(f"malformed <p>...</p> tag: {body!r}")
        inner = m.group("inner").strip()
    else:
        inner = body
    m = _REF_RE.match(inner)
    name = m.group("name").strip()
    instance_id = int(m.group("id")) if m.group("id") else None
    if instance_id is not None and instance_id < 1:
        raise MalformedObjectTag(f"instance id must be >= 1: {body!r}")
    if not name:
        raise MalformedObjectTag(f"empty object name: {body!r}")
    return ObjectRef(name, instance_id)


def parse_step(text: str) -> Step:
    """Parse one step line into a :class:`Step`.

    Raises UnknownStepKind, ArityMismatch, MalformedObjectTag, or
    MalformedArgument. Step names are case-sensitive upper case.
    """
    s = text.strip()
    if "\n" in s:
        raise MalformedArgument("step must be a single line")
    if not s:
        raise UnknownStepKind("empty step line")
    m = _HEAD_RE.match(s)
    if not m:
        raise UnknownStepKind(f"not a step: {s!r}")
    head, rest = m.group(1), m.group(2).strip()
    try:
        kind = StepKind(head)
    except ValueError:
        raise UnknownStepKind(f"unknown step kind {head!r}") from None

    if not rest:
        if kind in NO_ARGUMENT_KINDS:
            return Step(kind)
        raise ArityMismatch(f"{kind.value} requires an argument")
    if not (rest.startswith("(") and rest.endswith(")")):
        raise MalformedArgument(f"unbalanced argument parentheses: {s!r}")
    if kind in NO_ARGUMENT_KINDS:
        raise ArityMismatch(f"{kind.value} takes no argument")
    body = rest[1:-1].strip()
    if not body:
        raise MalformedArgument(f"{kind.value} has an empty argument")
    if kind in OBJECT_ARGUMENT_KINDS:
        return Step(kind, _parse_object_ref(body))
    # TILT/TURN constraints and free-text kinds are validated by Step itself.
    return Step(kind, body)


def render_step(step: Step | RawStep) -> str:
    """Render a step in canonical form (object arguments always tagged)."""
    if isinstance(step, RawStep):
        return step.text
    if step.argument is None:
        return step.kind.value
    if isinstance(step.argument, ObjectRef):
        return f"{step.kind.value}({step.argument.render()})"
    return f"{step.kind.value}({step.argument})"


def parse_result(text: str) -> StepResult:
    """Parse one ``RESULT(...)`` line.

    The body classifies as Outcome (``success``/``failure[: note]``, any
    case), Detections (solely ``<p>...</p>`` groups), or Text (anything else).
    """
    s = text.strip()
    m = _RESULT_RE.match(s)
    if not m or "\n" in s:
        raise MissingResultWrapper(f"expected RESULT(...): {s!r}")
    body = m.group("body").strip()
    if not body:
        raise EmptyBody("RESULT(...) has an empty body")
    if body.lower() == "success":
        return Outcome.success()
    fm = _FAILURE_RE.match(body)
    if fm:
        note = (fm.group("note") or "").strip()
        return Outcome.failure(note or None)
    if _DETECTIONS_RE.match(body):
        refs = tuple(
            _parse_object_ref(f"<p>{inner}</p>") for inner in _DETECTION_GROUP_RE.findall(body)
        )
        return Detections(refs)
    return Text(body)


def render_result(result: StepResult) -> str:
    """Render a result in canonical form (lower-case outcome keywords)."""
    if isinstance(result, Outcome):
        if result.ok:
            return "RESULT(success)"
        if result.note:
            return f"RESULT(failure: {result.note})"
        return "RESULT(failure)"
    if isinstance(result, Text):
        return f"RESULT({result.text})"
    return "RESULT(" + " ".join(ref.render() for ref in result.refs) + ")"


def render_entry(entry: HistoryEntry) -> str:
    """Render one history entry as a transcript line."""
    if entry.result is None:
        return render_step(entry.step)
    return f"{render_step(entry.step)}, {render_result(entry.result)}"


_SHARED_SPLIT = ", RESULT("


def parse_transcript(text: str) -> list[HistoryEntry]:
    """Parse a multi-line transcript into ordered history entries.

    Steps and results may alternate on separate lines or share a line as
    ``STEP, RESULT(...)`` (split at the last such separator that yields a
    valid pair). Blank lines are ignored. FINISH, if present, must be last.
    Errors carry the 1-based line number.
    """
    entries: list[HistoryEntry] = []
    pending: Step | None = None
    pending_line = 0
    finished = False
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        try:
            if finished:
                raise StepAfterFinish(f"content after FINISH: {line!r}")
            if line.startswith("RESULT("):
                if pending is None:
                    raise DanglingResult(f"result with no preceding step: {line!r}")
                entries.append(HistoryEntry(pending, parse_result(line)))
                pending = None
                continue

            shared: tuple[Step, StepResult] | None = None
            idx = line.rfind(_SHARED_SPLIT)
            if idx != -1:
                try:
                    shared = (parse_step(line[:idx]), parse_result(line[idx + 2 :]))
                except DslError:
                    shared = None
            if shared is not None:
                if pending is not None:
                    raise MissingStepResult(
                        f"step {render_step(pending)!r} (line {pending_line}) has no result"
                    )
                step, result = shared
                if step.kind is StepKind.FINISH:
                    raise UnexpectedResultForFinish("FINISH carries no result")
                entries.append(HistoryEntry(step, result))
                continue

            step = parse_step(line)
            if pending is not None:
                raise MissingStepResult(
                    f"step {render_step(pending)!r} (line {pending_line}) has no result"
                )
            if step.kind is StepKind.FINISH:
                entries.append(HistoryEntry(step, None))
                finished = True
            else:
                pending = step
                pending_line = lineno
        except DslError as err:
            if err.line is None:
                err.line = lineno
            raise
    if pending is not None:
        raise MissingStepResult(
            f"step {render_step(pending)!r} has no result", line=pending_line
        )
    return entries


def render_transcript(entries) -> str:
    """Render entries as transcript text, one line per entry."""
    return "".join(render_entry(e) + "\n" for e in entries)
