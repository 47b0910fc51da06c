import math
from dataclasses import replace

import pytest

from conftest import generated_pairs
from oracle import brute_force
from spatialvqa.language import DIRECTIONAL, Implicit, NounPhrase, parse
from spatialvqa.scene import Entity, Scene
from spatialvqa.semantics import MARGIN, Verdict, denote, evaluate, relation_holds, select

DUAL = {"left": "right", "right": "left", "above": "below", "below": "above",
        "closer": "farther", "farther": "closer", "behind": "front", "front": "behind"}


def ent(shape, color, x, y, z=0, size=0.1):
    return Entity(shape, color, (x, y), (size, size), 0.0, z)


def test_denote():
    es = [ent("circle", "red", 0.1, 0.1), ent("circle", "blue", 0.3, 0.1), ent("circle", "red", 0.5, 0.1),
          ent("square", "red", 0.7, 0.1), ent("square", "green", 0.9, 0.1)]
    scene = Scene(tuple(es))
    assert denote(scene, NounPhrase(None, "circle")) == es[:3]
    assert denote(scene, NounPhrase("red", "circle")) == [es[0], es[2]]
    red = set(map(id, denote(scene, NounPhrase("red"))))
    circles = set(map(id, denote(scene, NounPhrase(None, "circle"))))
    assert set(map(id, denote(scene, NounPhrase("red", "circle")))) == red & circles
    assert len(denote(scene, NounPhrase("red", None))) == 3


def test_directional():
    a, b = ent("circle", "red", 0.2, 0.5), ent("square", "blue", 0.8, 0.5)
    scene = Scene((a, b))
    assert relation_holds(a, "left", b, scene)
    assert not relation_holds(a, "right", b, scene)
    upper, lower = ent("circle", "red", 0.5, 0.2), ent("circle", "red", 0.5, 0.8, 1)
    # y grows downward, so the smaller y is above
    assert relation_holds(upper, "above", lower, Scene((upper, lower)))


def test_proximity_hand_computed():
    e1, e2, ref = ent("circle", "red", 0.1, 0.1), ent("square", "blue", 0.9, 0.9, 1), ent("cross", "gray", 0.0, 0.0, 2)
    scene = Scene((e1, e2, ref))
    assert math.isclose(math.dist(e1.center, ref.center), 0.1414, abs_tol=1e-3)
    assert math.isclose(math.dist(e2.center, ref.center), 1.2728, abs_tol=1e-3)
    assert relation_holds(e1, "closer", e2, scene, ref)
    assert relation_holds(e2, "farther", e1, scene, ref)


def test_depth_requires_overlap():
    a, b = ent("circle", "red", 0.2, 0.2, 0), ent("circle", "blue", 0.8, 0.8, 1)
    scene = Scene((a, b))
    assert not relation_holds(a, "behind", b, scene)
    c = ent("square", "blue", 0.25, 0.2, 1)
    assert relation_holds(a, "behind", c, Scene((a, c)))
    assert relation_holds(c, "front", a, Scene((a, c)))
    caption = parse("a red circle is behind a blue circle .")
    assert evaluate(scene, caption) is Verdict.INAPPLICABLE


def test_margin_ties():
    a, b = ent("circle", "red", 0.5, 0.3), ent("square", "blue", 0.5 + MARGIN / 2, 0.7, 1)
    scene = Scene((a, b))
    assert not relation_holds(a, "left", b, scene)
    assert evaluate(scene, parse("a circle is to the left of a square .")) is Verdict.INAPPLICABLE
    assert evaluate(scene, parse("a circle is above a square .")) is Verdict.TRUE


def test_lower_cross_example():
    scene = Scene((ent("cross", "red", 0.3, 0.2, 0), ent("cross", "green", 0.6, 0.8, 1),
                   ent("circle", "gray", 0.8, 0.3, 2)))
    assert evaluate(scene, parse("the lower cross is green .")) is Verdict.TRUE
    assert evaluate(scene, parse("the upper cross is green .")) is Verdict.FALSE


def test_cardinality_presuppositions():
    crosses = tuple(ent("cross", "red", 0.2 + 0.3 * i, 0.2 + 0.2 * i, i) for i in range(3))
    scene = Scene(crosses)
    assert evaluate(scene, parse("the lower cross is red .")) is Verdict.INAPPLICABLE
    assert evaluate(scene, parse("the lowermost cross is red .")) is Verdict.TRUE
    single = Scene(crosses[:1])
    assert evaluate(single, parse("the lowermost cross is red .")) is Verdict.INAPPLICABLE
    assert evaluate(scene, parse("a circle is above a cross .")) is Verdict.INAPPLICABLE


def test_unique_reference():
    scene = Scene((ent("circle", "red", 0.1, 0.5, 0), ent("circle", "blue", 0.9, 0.5, 1),
                   ent("square", "gray", 0.2, 0.5, 2), ent("square", "gray", 0.5, 0.1, 3)))
    assert evaluate(scene, parse("the circle closer to the square is red .")) is Verdict.INAPPLICABLE
    scene = Scene(scene.entities[:3])
    assert evaluate(scene, parse("the circle closer to the square is red .")) is Verdict.TRUE


def test_explicit_pairs_must_be_distinct():
    scene = Scene((ent("circle", "red", 0.2, 0.5, 0), ent("square", "blue", 0.8, 0.5, 1)))
    # the only red shape cannot stand in a relation to itself
    assert evaluate(scene, parse("a red shape is to the left of a circle .")) is Verdict.INAPPLICABLE
    assert evaluate(scene, parse("a red shape is to the left of a square .")) is Verdict.TRUE


@pytest.mark.parametrize("caption_type", ["explicit", "comparative", "superlative"])
def test_duality_and_irreflexivity(caption_type):
    for scene, _, _ in generated_pairs(caption_type, 60, seed=21):
        es = scene.entities
        ref = es[-1]
        for a in es[:-1]:
            for kind in DIRECTIONAL:
                assert not relation_holds(a, kind, a, scene)
            for b in es[:-1]:
                if a is b:
                    continue
                for kind, dual in DUAL.items():
                    r = ref if kind in ("closer", "farther") else None
                    assert relation_holds(a, kind, b, scene, r) == relation_holds(b, dual, a, scene, r)


@pytest.mark.parametrize("caption_type", ["comparative", "superlative", "explicit"])
def test_translation_invariance(caption_type):
    for scene, caption, label in generated_pairs(caption_type, 150, seed=22):
        if caption.kind in ("behind", "front"):
            continue
        xs = [e.center[0] for e in scene.entities]
        ys = [e.center[1] for e in scene.entities]
        dx, dy = 0.5 * (1 - max(xs)), -0.5 * min(ys)
        moved = Scene(tuple(replace(e, center=(e.center[0] + dx, e.center[1] + dy)) for e in scene.entities),
                      scene.canvas)
        assert evaluate(moved, caption) is evaluate(scene, caption)


def test_selector_consistency():
    for scene, caption, _ in generated_pairs("comparative", 200, seed=23):
        superlative = Implicit("superlative", caption.selector, caption.restrictor, caption.predicate)
        assert select(scene, superlative) is select(scene, caption)


@pytest.mark.parametrize("caption_type", ["explicit", "comparative", "superlative"])
def test_agrees_with_brute_force(caption_type):
    for scene, caption, label in generated_pairs(caption_type, 400, seed=24):
        verdict = evaluate(scene, caption)
        assert verdict is Verdict.of(label)
        assert brute_force(scene, caption) == verdict.value


def test_brute_force_on_arbitrary_captions():
    # also compare on random (often inapplicable) captions, not only generated ones
    import numpy as np

    from strategies import sample_caption

    rng = np.random.default_rng(5)
    counts = {v: 0 for v in Verdict}
    for scene, _, _ in generated_pairs("explicit", 300, seed=25):
        for _ in range(5):
            caption = sample_caption(rng)
            verdict = evaluate(scene, caption)
            counts[verdict] += 1
            assert brute_force(scene, caption) == verdict.value
    assert all(counts.values())
