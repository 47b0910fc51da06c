"""Caption ASTs for spatial statements, their surface realization and parsing.

Three statement families are covered:

* explicit:     ``a red circle is to the left of a square .``
* comparative:  ``the lower cross is green .`` / ``the cross closer to the triangle is green .``
* superlative:  ``the leftmost circle is gray .`` / ``the circle closest to the triangle is gray .``

All realizations are lower-cased, whitespace-tokenized and end with ``"."``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .scene import COLORS, SHAPES

DIRECTIONAL = ("left", "right", "above", "below")
PROXIMITY = ("closer", "farther")
DEPTH = ("behind", "front")
RELATIONS = DIRECTIONAL + PROXIMITY + DEPTH
SELECTOR_RELATIONS = DIRECTIONAL + PROXIMITY

CAPTION_TYPES = ("explicit", "comparative", "superlative")
HYPERNYM = "shape"
PAD = "<pad>"
MAX_LENGTH = 24

EXPLICIT_PHRASES = {
    "left": ("to", "the", "left", "of"),
    "right": ("to", "the", "right", "of"),
    "above": ("above",),
    "below": ("below",),
    "behind": ("behind",),
    "front": ("in", "front", "of"),
}
PROXIMITY_PHRASES = {"closer": ("closer", "to"), "farther": ("farther", "from")}
COMPARATIVE_ADJECTIVES = {"left": "left", "right": "right", "above": "upper", "below": "lower"}
SUPERLATIVE_ADJECTIVES = {"left": "leftmost", "right": "rightmost", "above": "uppermost", "below": "lowermost"}
SUPERLATIVE_PROXIMITY = {"closer": ("closest", "to"), "farther": ("farthest", "from")}


class ParseError(ValueError):
    """Token sequence not derivable from the caption grammar.

    ``position`` is the 1-based index of the offending token (``len + 1`` when
    the sequence ends too early).
    """

    def __init__(self, position: int, message: str):
        super().__init__(f"token {position}: {message}")
        self.position = position


class VocabularyError(KeyError):
    pass


@dataclass(frozen=True)
class NounPhrase:
    color: str | None = None
    shape: str | None = None
    definite: bool = False

    def __post_init__(self):
        if self.color is None and self.shape is None:
            raise ValueError("noun phrase needs a color or a shape")
        if self.color is not None and self.color not in COLORS:
            raise ValueError(f"unknown color {self.color!r}")
        if self.shape is not None and self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")

    @property
    def pattern(self) -> str:
        if self.color is not None and self.shape is not None:
            return "full"
        return "color" if self.color is not None else "shape"


@dataclass(frozen=True)
class Relation:
    kind: str
    reference: NounPhrase | None = None

    def __post_init__(self):
        if self.kind not in RELATIONS:
            raise ValueError(f"unknown relation {self.kind!r}")
        if (self.kind in PROXIMITY) != (self.reference is not None):
            raise ValueError(f"relation {self.kind!r}: reference required exactly for proximity relations")
        if self.reference is not None and not self.reference.definite:
            raise ValueError("proximity reference must be definite")


@dataclass(frozen=True)
class Explicit:
    subject: NounPhrase
    relation: Relation
    object: NounPhrase

    def __post_init__(self):
        if self.subject.definite or self.object.definite:
            raise ValueError("explicit subject and object are indefinite")
        ref = self.relation.reference
        if ref is not None and (_same_description(ref, self.subject) or _same_description(ref, self.object)):
            raise ValueError("proximity reference must differ from subject and object descriptions")

    @property
    def kind(self) -> str:
        return self.relation.kind

    @property
    def caption_type(self) -> str:
        return "explicit"


@dataclass(frozen=True)
class Implicit:
    degree: str
    selector: Relation
    restrictor: NounPhrase
    predicate: NounPhrase

    def __post_init__(self):
        if self.degree not in ("comparative", "superlative"):
            raise ValueError(f"unknown degree {self.degree!r}")
        if self.selector.kind in DEPTH:
            raise ValueError("behind/front only occur in explicit captions")
        if not self.restrictor.definite:
            raise ValueError("restrictor must be definite")
        if self.predicate.definite:
            raise ValueError("predicate must be indefinite")
        ref = self.selector.reference
        if ref is not None and _same_description(ref, self.restrictor):
            raise ValueError("proximity reference must differ from the restrictor description")

    @property
    def kind(self) -> str:
        return self.selector.kind

    @property
    def caption_type(self) -> str:
        return self.degree


Caption = Union[Explicit, Implicit]


def _same_description(a: NounPhrase, b: NounPhrase) -> bool:
    return a.color == b.color and a.shape == b.shape


def np_pattern(caption: Caption) -> str:
    """Noun-phrase pattern used to group accuracy: e.g. ``shape-pair``, ``color-pair``."""
    if isinstance(caption, Explicit):
        s, o = caption.subject.pattern, caption.object.pattern
        return f"{s}-pair" if s == o else "mixed"
    return f"{caption.restrictor.pattern}-restrictor"


# realization ------------------------------------------------------------------

def _noun_phrase(np_: NounPhrase) -> list[str]:
    words = ["the" if np_.definite else "a"]
    if np_.color is not None:
        words.append(np_.color)
    words.append(np_.shape or HYPERNYM)
    return words


def _predicate(np_: NounPhrase) -> list[str]:
    # a bare color predicate is an adjective ("is green"), otherwise an indefinite NP
    if np_.shape is None:
        return [np_.color]
    return _noun_phrase(np_)


def realize(caption: Caption) -> list[str]:
    if isinstance(caption, Explicit):
        words = _noun_phrase(caption.subject) + ["is"]
        rel = caption.relation
        if rel.kind in PROXIMITY:
            words += list(PROXIMITY_PHRASES[rel.kind]) + _noun_phrase(rel.reference) + ["than"]
        else:
            words += list(EXPLICIT_PHRASES[rel.kind])
        return words + _noun_phrase(caption.object) + ["."]

    sel = caption.selector
    restrictor = _noun_phrase(caption.restrictor)
    if sel.kind in PROXIMITY:
        if caption.degree == "comparative":
            phrase = list(PROXIMITY_PHRASES[sel.kind])
        else:
            phrase = list(SUPERLATIVE_PROXIMITY[sel.kind])
        head = restrictor + phrase + _noun_phrase(sel.reference)
    else:
        table = COMPARATIVE_ADJECTIVES if caption.degree == "comparative" else SUPERLATIVE_ADJECTIVES
        head = [restrictor[0], table[sel.kind]] + restrictor[1:]
    return head + ["is"] + _predicate(caption.predicate) + ["."]


# parsing ----------------------------------------------------------------------

_COMPARATIVE_BY_WORD = {w: k for k, w in COMPARATIVE_ADJECTIVES.items()}
_SUPERLATIVE_BY_WORD = {w: k for k, w in SUPERLATIVE_ADJECTIVES.items()}


class _Parser:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def fail(self, message: str):
        raise ParseError(self.pos + 1, message)

    def take(self, *expected: str) -> str:
        tok = self.peek()
        if tok is None:
            self.fail(f"unexpected end, expected {' / '.join(expected)}")
        if expected and tok not in expected:
            self.fail(f"expected {' / '.join(expected)}, got {tok!r}")
        self.pos += 1
        return tok

    def noun(self, color: str | None, definite: bool) -> NounPhrase:
        tok = self.peek()
        if tok in SHAPES:
            self.pos += 1
            return NounPhrase(color, tok, definite)
        if tok == HYPERNYM and color is not None:
            self.pos += 1
            return NounPhrase(color, None, definite)
        self.fail(f"expected a shape noun, got {tok!r}")

    def color(self) -> str | None:
        if self.peek() in COLORS:
            return self.take()
        return None

    def noun_phrase(self, definite: bool) -> NounPhrase:
        self.take("the" if definite else "a")
        return self.noun(self.color(), definite)

    def predicate(self) -> NounPhrase:
        tok = self.peek()
        if tok in COLORS:
            self.pos += 1
            return NounPhrase(tok, None, False)
        np_ = self.noun_phrase(definite=False)
        if np_.shape is None:
            # "a red shape" would duplicate the bare adjective form
            raise ParseError(self.pos, "predicate noun must be a concrete shape")
        return np_

    def end(self):
        self.take(".")
        if self.pos != len(self.tokens):
            self.fail("trailing tokens after '.'")

    def explicit(self) -> Explicit:
        subject = self.noun_phrase(definite=False)
        self.take("is")
        tok = self.peek()
        reference = None
        if tok == "to":
            self.take("to")
            self.take("the")
            kind = self.take("left", "right")
            self.take("of")
        elif tok in ("above", "below", "behind"):
            kind = self.take()
        elif tok == "in":
            self.take("in")
            self.take("front")
            self.take("of")
            kind = "front"
        elif tok in PROXIMITY_PHRASES:
            kind = self.take()
            self.take(PROXIMITY_PHRASES[kind][1])
            reference = self.noun_phrase(definite=True)
            self.take("than")
        else:
            self.fail(f"expected a relation, got {tok!r}")
        obj = self.noun_phrase(definite=False)
        self.end()
        return self._build(lambda: Explicit(subject, Relation(kind, reference), obj))

    def implicit(self) -> Implicit:
        self.take("the")
        tok = self.peek()
        if tok in _COMPARATIVE_BY_WORD or tok in _SUPERLATIVE_BY_WORD:
            self.pos += 1
            if tok in _COMPARATIVE_BY_WORD:
                degree, kind = "comparative", _COMPARATIVE_BY_WORD[tok]
            else:
                degree, kind = "superlative", _SUPERLATIVE_BY_WORD[tok]
            restrictor = self.noun(self.color(), True)
            selector = Relation(kind)
        else:
            restrictor = self.noun(self.color(), True)
            tok = self.peek()
            if tok in ("closer", "farther"):
                degree, kind = "comparative", self.take()
                self.take(PROXIMITY_PHRASES[kind][1])
            elif tok in ("closest", "farthest"):
                degree = "superlative"
                kind = "closer" if self.take() == "closest" else "farther"
                self.take(SUPERLATIVE_PROXIMITY[kind][1])
            else:
                self.fail(f"expected a selector, got {tok!r}")
            selector = None
            reference = self.noun_phrase(definite=True)
        self.take("is")
        predicate = self.predicate()
        self.end()
        if selector is None:
            selector = Relation(kind, reference)
        return self._build(lambda: Implicit(degree, selector, restrictor, predicate))

    def _build(self, make):
        try:
            return make()
        except ValueError as exc:
            raise ParseError(self.pos, str(exc)) from None

    def caption(self) -> Caption:
        tok = self.peek()
        if tok == "a":
            return self.explicit()
        if tok == "the":
            return self.implicit()
        self.fail(f"a caption starts with 'a' or 'the', got {tok!r}")


def parse(tokens: Sequence[str] | str) -> Caption:
    if isinstance(tokens, str):
        tokens = tokens.split()
    return _Parser(tokens).caption()


# vocabulary -------------------------------------------------------------------

def _grammar_words() -> list[str]:
    words = ["a", "the", "is", ".", HYPERNYM, "than"]
    for phrase in EXPLICIT_PHRASES.values():
        words += phrase
    for phrase in PROXIMITY_PHRASES.values():
        words += phrase
    for phrase in SUPERLATIVE_PROXIMITY.values():
        words += phrase
    words += COMPARATIVE_ADJECTIVES.values()
    words += SUPERLATIVE_ADJECTIVES.values()
    words += COLORS
    words += SHAPES
    return list(dict.fromkeys(words))


class Vocabulary:
    """Immutable token <-> id bijection with the pad token at id 0."""

    def __init__(self, words: Iterable[str] | None = None):
        words = list(words) if words is not None else [PAD] + _grammar_words()
        if words[0] != PAD:
            raise ValueError("vocabulary must start with the pad token")
        if len(set(words)) != len(words):
            raise ValueError("duplicate vocabulary entries")
        self._words = tuple(words)
        self._ids = {w: i for i, w in enumerate(self._words)}

    @property
    def words(self) -> tuple[str, ...]:
        return self._words

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and other._words == self._words

    def __hash__(self):
        return hash(self._words)

    def id(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise VocabularyError(word) from None

    def encode(self, tokens: Sequence[str], max_length: int | None = None) -> tuple[np.ndarray, int]:
        """Ids padded (with 0) to ``max_length``, plus the true length."""
        ids = [self.id(t) for t in tokens]
        if max_length is None:
            return np.array(ids, dtype=np.int64), len(ids)
        if len(ids) > max_length:
            ids = ids[:max_length]
        length = len(ids)
        out = np.zeros(max_length, dtype=np.int64)
        out[:length] = ids
        return out, length

    def decode(self, ids: Sequence[int], length: int | None = None) -> list[str]:
        ids = list(ids)
        if length is None:
            length = len(ids)
            while length > 0 and ids[length - 1] == 0:
                length -= 1
        out = []
        for i in ids[:length]:
            if not 0 <= int(i) < len(self._words):
                raise VocabularyError(int(i))
            out.append(self._words[int(i)])
        return out

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(list(self._words), indent=1))

    @classmethod
    def from_json(cls, path: str | Path) -> "Vocabulary":
        return cls(json.loads(Path(path).read_text()))


VOCABULARY = Vocabulary()


def encode(tokens: Sequence[str], max_length: int | None = None) -> tuple[np.ndarray, int]:
    return VOCABULARY.encode(tokens, max_length)


def decode(ids: Sequence[int], length: int | None = None) -> list[str]:
    return VOCABULARY.decode(ids, length)
