"""Sampling captions with a requested agreement label for a given scene.

Negative captions are never corrupted token sequences: they are well-formed
captions whose presuppositions hold in the scene but which the semantics
judges false.
"""
from __future__ import annotations

import numpy as np

from .language import (CAPTION_TYPES, DEPTH, PROXIMITY, RELATIONS, SELECTOR_RELATIONS, Caption,
                       Explicit, Implicit, NounPhrase, Relation)
from .scene import COLORS, SHAPES, Entity, Scene, overlaps
from .semantics import Verdict, denote, evaluate, relation_holds, select

PATTERNS = ("shape", "color", "full")


class GenerationError(RuntimeError):
    """The scene admits no caption of the requested type, relation and label."""


def describe(entity: Entity, pattern: str, definite: bool = False) -> NounPhrase:
    if pattern == "shape":
        return NounPhrase(None, entity.shape, definite)
    if pattern == "color":
        return NounPhrase(entity.color, None, definite)
    return NounPhrase(entity.color, entity.shape, definite)


def relation_kinds(caption_type: str) -> tuple[str, ...]:
    if caption_type not in CAPTION_TYPES:
        raise ValueError(f"unknown caption type {caption_type!r}")
    return RELATIONS if caption_type == "explicit" else SELECTOR_RELATIONS


def _unique_reference(scene: Scene, entity: Entity, avoid: list[NounPhrase],
                      rng: np.random.Generator) -> NounPhrase | None:
    for pattern in rng.permutation(PATTERNS):
        np_ = describe(entity, str(pattern), definite=True)
        if any(np_.color == a.color and np_.shape == a.shape for a in avoid):
            continue
        if denote(scene, np_) == [entity]:
            return np_
    return None


def _pick(rng: np.random.Generator, items):
    return items[int(rng.integers(len(items)))]


def _explicit(scene: Scene, kind: str, target: bool, rng: np.random.Generator) -> Explicit | None:
    entities = list(scene.entities)
    if kind in DEPTH:
        pairs = [(a, b) for i, a in enumerate(entities) for b in entities[i + 1:]
                 if overlaps(a, b, scene.canvas)]
        if not pairs:
            raise GenerationError("behind/front need an overlapping pair")
        a, b = _pick(rng, pairs)
        reference = None
    else:
        if len(entities) < (3 if kind in PROXIMITY else 2):
            raise GenerationError("too few entities")
        i, j = rng.choice(len(entities), size=2, replace=False)
        a, b = entities[int(i)], entities[int(j)]
        reference = None
        if kind in PROXIMITY:
            rest = [e for e in entities if e != a and e != b]
            reference = _pick(rng, rest)
    if relation_holds(a, kind, b, scene, reference) != target:
        a, b = b, a
    subject = describe(a, _pick(rng, PATTERNS))
    obj = describe(b, _pick(rng, PATTERNS))
    ref_np = None
    if reference is not None:
        ref_np = _unique_reference(scene, reference, [subject, obj], rng)
        if ref_np is None:
            return None
    return Explicit(subject, Relation(kind, ref_np), obj)


def _restrictors(scene: Scene, degree: str) -> list[NounPhrase]:
    found = []
    for entity in scene.entities:
        for pattern in ("shape", "color"):
            np_ = describe(entity, pattern, definite=True)
            n = len(denote(scene, np_))
            if (n == 2 if degree == "comparative" else n >= 2) and np_ not in found:
                found.append(np_)
    return found


def _implicit(scene: Scene, degree: str, kind: str, target: bool, restrictors: list[NounPhrase],
              rng: np.random.Generator) -> Implicit | None:
    restrictor = _pick(rng, restrictors)
    reference = None
    if kind in PROXIMITY:
        candidates = denote(scene, restrictor)
        others = [e for e in scene.entities if e not in candidates]
        if not others:
            return None
        reference = _unique_reference(scene, _pick(rng, others), [restrictor], rng)
        if reference is None:
            return None
    selector = Relation(kind, reference)
    probe = Implicit(degree, selector, restrictor, NounPhrase("red", None, False))
    chosen = select(scene, probe)
    if chosen is None:
        return None
    # the predicate states the attribute the restrictor leaves open
    attribute = "color" if restrictor.color is None else "shape"
    actual = getattr(chosen, attribute)
    if target:
        value = actual
    else:
        distractors = sorted({getattr(e, attribute) for e in denote(scene, restrictor)} - {actual})
        if distractors and rng.random() < 0.5:
            value = _pick(rng, distractors)
        else:
            pool = [v for v in (COLORS if attribute == "color" else SHAPES) if v != actual]
            value = _pick(rng, pool)
    if attribute == "color":
        predicate = NounPhrase(value, None, False)
    else:
        predicate = NounPhrase(None, value, False)
    return Implicit(degree, selector, restrictor, predicate)


def generate_caption(scene: Scene, caption_type: str, target_label: bool, seed: int,
                     attempts: int = 64) -> tuple[Caption, bool]:
    """Sample a caption of ``caption_type`` whose verdict on ``scene`` is ``target_label``.

    The relation kind is drawn uniformly from the type's relations using
    ``seed`` alone, so it does not depend on the scene. Raises
    :class:`GenerationError` if the scene cannot support the caption.
    """
    rng = np.random.default_rng(seed)
    kinds = relation_kinds(caption_type)
    kind = kinds[int(rng.integers(len(kinds)))]
    wanted = Verdict.of(target_label)
    restrictors = None
    if caption_type != "explicit":
        restrictors = _restrictors(scene, caption_type)
        if not restrictors:
            raise GenerationError(f"no restrictor with the cardinality a {caption_type} needs")
    for _ in range(attempts):
        if caption_type == "explicit":
            caption = _explicit(scene, kind, target_label, rng)
        else:
            caption = _implicit(scene, caption_type, kind, target_label, restrictors, rng)
        if caption is not None and evaluate(scene, caption) is wanted:
            return caption, target_label
    raise GenerationError(f"no {caption_type} '{kind}' caption with label {target_label} after {attempts} attempts")
