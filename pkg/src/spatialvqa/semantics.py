"""Truth-conditional evaluation of spatial captions against scenes.

Every comparison uses a margin: differences within ``MARGIN`` (unit canvas
coordinates) count as ties, and a caption whose truth hinges on a tie is
``Verdict.INAPPLICABLE`` rather than true or false.
"""
from __future__ import annotations

import enum
import math

from .language import DEPTH, PROXIMITY, Caption, Explicit, Implicit, NounPhrase
from .scene import Entity, Scene, overlaps

MARGIN = 0.02


class Verdict(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    INAPPLICABLE = "inapplicable"

    @classmethod
    def of(cls, value: bool) -> "Verdict":
        return cls.TRUE if value else cls.FALSE


def matches(entity: Entity, np_: NounPhrase) -> bool:
    return (np_.color is None or entity.color == np_.color) and (np_.shape is None or entity.shape == np_.shape)


def denote(scene: Scene, np_: NounPhrase) -> list[Entity]:
    """Entities carrying every attribute the noun phrase states."""
    return [e for e in scene.entities if matches(e, np_)]


def distance(a: Entity, b: Entity) -> float:
    return math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1])


def _difference(e1: Entity, kind: str, e2: Entity, scene: Scene, reference: Entity | None) -> float:
    """Signed amount by which ``kind(e1, e2)`` holds; positive means it holds."""
    if kind == "left":
        return e2.center[0] - e1.center[0]
    if kind == "right":
        return e1.center[0] - e2.center[0]
    if kind == "above":
        return e2.center[1] - e1.center[1]
    if kind == "below":
        return e1.center[1] - e2.center[1]
    if kind == "closer":
        return distance(e2, reference) - distance(e1, reference)
    if kind == "farther":
        return distance(e1, reference) - distance(e2, reference)
    raise ValueError(f"no geometric difference for {kind!r}")


def relation_holds(e1: Entity, kind: str, e2: Entity, scene: Scene,
                   reference: Entity | None = None, margin: float = MARGIN) -> bool:
    """Whether ``e1`` stands in relation ``kind`` to ``e2`` by more than ``margin``.

    ``reference`` is the already-resolved proximity landmark.
    """
    if e1 is e2 or e1 == e2:
        return False
    if kind in DEPTH:
        if not overlaps(e1, e2, scene.canvas):
            return False
        return e1.z < e2.z if kind == "behind" else e1.z > e2.z
    if kind in PROXIMITY and reference is None:
        raise ValueError("proximity relations need a resolved reference")
    return _difference(e1, kind, e2, scene, reference) > margin


def _tied(e1: Entity, kind: str, e2: Entity, scene: Scene, reference: Entity | None) -> bool:
    if kind in DEPTH:
        return False
    return abs(_difference(e1, kind, e2, scene, reference)) <= MARGIN


def _unique(scene: Scene, np_: NounPhrase) -> Entity | None:
    found = denote(scene, np_)
    return found[0] if len(found) == 1 else None


def _evaluate_explicit(scene: Scene, caption: Explicit) -> Verdict:
    kind = caption.relation.kind
    subjects = denote(scene, caption.subject)
    objects = denote(scene, caption.object)
    if not subjects or not objects:
        return Verdict.INAPPLICABLE
    reference = None
    if kind in PROXIMITY:
        reference = _unique(scene, caption.relation.reference)
        if reference is None:
            return Verdict.INAPPLICABLE
        subjects = [e for e in subjects if e != reference]
        objects = [e for e in objects if e != reference]
    pairs = [(a, b) for a in subjects for b in objects if a != b]
    if not pairs:
        return Verdict.INAPPLICABLE
    if kind in DEPTH:
        pairs = [(a, b) for a, b in pairs if overlaps(a, b, scene.canvas)]
        if not pairs:
            # depth is only observable through occlusion
            return Verdict.INAPPLICABLE
    if any(relation_holds(a, kind, b, scene, reference) for a, b in pairs):
        return Verdict.TRUE
    if any(_tied(a, kind, b, scene, reference) for a, b in pairs):
        return Verdict.INAPPLICABLE
    return Verdict.FALSE


def select(scene: Scene, caption: Implicit) -> Entity | None:
    """The entity an implicit caption's restrictor + selector picks out, or None."""
    candidates = denote(scene, caption.restrictor)
    if caption.degree == "comparative" and len(candidates) != 2:
        return None
    if caption.degree == "superlative" and len(candidates) < 2:
        return None
    kind = caption.selector.kind
    reference = None
    if kind in PROXIMITY:
        reference = _unique(scene, caption.selector.reference)
        if reference is None or reference in candidates:
            return None
    winners = [c for c in candidates
               if all(relation_holds(c, kind, o, scene, reference) for o in candidates if o != c)]
    return winners[0] if len(winners) == 1 else None


def evaluate(scene: Scene, caption: Caption) -> Verdict:
    if isinstance(caption, Explicit):
        return _evaluate_explicit(scene, caption)
    chosen = select(scene, caption)
    if chosen is None:
        return Verdict.INAPPLICABLE
    return Verdict.of(matches(chosen, caption.predicate))
