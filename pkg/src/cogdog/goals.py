"""Machine-checkable success predicates evaluated against a final world state.

Scenarios carry one of these instead of a human judgment: object-near-object,
delivered-to-user, something-was-said, empty gripper, and boolean combinators.
Each predicate (de)serializes to a small JSON form for suite files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .world import SimObject, WorldState


class GoalSpecError(ValueError):
    pass


@dataclass
class Selector:
    """Match objects by (case-insensitive) name and property filters."""

    name: str | None = None
    properties: dict[str, str] = field(default_factory=dict)

    def matches(self, obj: SimObject) -> bool:
        if self.name is not None and obj.name.lower() != self.name.lower():
            return False
        return all(obj.properties.get(k) == v for k, v in self.properties.items())

    def select(self, world: WorldState) -> list[SimObject]:
        return [o for o in world.objects if self.matches(o)]


def _dist2d(a: tuple[float, ...], b: tuple[float, ...]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass
class ObjectNear:
    a: Selector
    b: Selector
    radius: float

    def evaluate(self, world: WorldState) -> bool:
        return any(
            oa.uid != ob.uid and _dist2d(oa.position, ob.position) <= self.radius
            for oa in self.a.select(world)
            for ob in self.b.select(world)
        )


@dataclass
class DeliveredToUser:
    selector: Selector
    radius: float = 0.5

    def evaluate(self, world: WorldState) -> bool:
        return any(
            _dist2d(obj.position, world.user_position) <= self.radius
            and world.robot.holding != obj.uid
            for obj in self.selector.select(world)
        )


@dataclass
class Spoken:
    substring: str

    def evaluate(self, world: WorldState) -> bool:
        needle = self.substring.lower()
        return any(needle in said.lower() for said in world.utterances)


@dataclass
class HoldingNothingAtEnd:
    def evaluate(self, world: WorldState) -> bool:
        return world.robot.holding is None


@dataclass
class AllOf:
    goals: list

    def evaluate(self, world: WorldState) -> bool:
        return all(g.evaluate(world) for g in self.goals)


@dataclass
class AnyOf:
    goals: list

    def evaluate(self, world: WorldState) -> bool:
        return any(g.evaluate(world) for g in self.goals)


GoalPredicate = ObjectNear | DeliveredToUser | Spoken | HoldingNothingAtEnd | AllOf | AnyOf


def _selector_from_json(data) -> Selector:
    if isinstance(data, str):
        return Selector(name=data)
    return Selector(name=data.get("name"), properties=dict(data.get("properties", {})))


def _selector_to_json(sel: Selector):
    if not sel.properties:
        return sel.name
    return {"name": sel.name, "properties": dict(sel.properties)}


def goal_from_json(data: dict) -> GoalPredicate:
    try:
        kind = data["type"]
        if kind == "object_near":
            radius = float(data["radius"])
            if radius <= 0:
                raise GoalSpecError("radius must be positive")
            return ObjectNear(
                _selector_from_json(data["a"]), _selector_from_json(data["b"]), radius
            )
        if kind == "delivered_to_user":
            radius = float(data.get("radius", 0.5))
            if radius <= 0:
                raise GoalSpecError("radius must be positive")
            return DeliveredToUser(_selector_from_json(data["object"]), radius)
        if kind == "spoken":
            return Spoken(str(data["substring"]))
        if kind == "holding_nothing":
            return HoldingNothingAtEnd()
        if kind == "all":
            return AllOf([goal_from_json(g) for g in data["of"]])
        if kind == "any":
            return AnyOf([goal_from_json(g) for g in data["of"]])
    except KeyError as err:
        raise GoalSpecError(f"goal spec missing field {err}") from err
    raise GoalSpecError(f"unknown goal type {data.get('type')!r}")


def goal_to_json(goal: GoalPredicate) -> dict:
    if isinstance(goal, ObjectNear):
        return {
            "type": "object_near",
            "a": _selector_to_json(goal.a),
            "b": _selector_to_json(goal.b),
            "radius": goal.radius,
        }
    if isinstance(goal, DeliveredToUser):
        return {
            "type": "delivered_to_user",
            "object": _selector_to_json(goal.selector),
            "radius": goal.radius,
        }
    if isinstance(goal, Spoken):
        return {"type": "spoken", "substring": goal.substring}
    if isinstance(goal, HoldingNothingAtEnd):
        return {"type": "holding_nothing"}
    if isinstance(goal, AllOf):
        return {"type": "all", "of": [goal_to_json(g) for g in goal.goals]}
    if isinstance(goal, AnyOf):
        return {"type": "any", "of": [goal_to_json(g) for g in goal.goals]}
    raise GoalSpecError(f"cannot serialize {type(goal).__name__}")
