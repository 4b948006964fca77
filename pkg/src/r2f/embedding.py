"""Deterministic stand-in for a shared vision-language embedding space.

Visual concepts and text queries are unit vectors in R^D. Concept vectors are
seeded Gaussian draws, so unrelated concepts are nearly orthogonal (cosine std
about 1/sqrt(D)). Query and synonym vectors are built with ``make_related`` so
their cosine to the visual concept is set exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidArgument, UnknownConcept

DEFAULT_DIM = 512
DEFAULT_MATCH_COS = 0.18
STRUCTURAL_CONCEPTS = ("wall", "floor", "ceiling", "void")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


fnv1a = fnv1a_64


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & _MASK64)


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidArgument("cannot normalize a zero or non-finite vector")
    return v / n


@dataclass(frozen=True)
class ConceptSpec:
    """A named visual concept.

    ``seed`` is the scene seed; the concept's own stream is ``fnv1a(name) ^ seed``.
    ``relates_to`` optionally ties the visual vector to another concept's query
    embedding at cosine ``relation_cos`` (context objects that hint at a target
    without matching it).
    """

    name: str
    seed: int = 0
    match_cos: float = DEFAULT_MATCH_COS
    relates_to: str | None = None
    relation_cos: float = 0.0

    def __post_init__(self):
        if not self.name:
            raise InvalidArgument("concept name must be non-empty")
        if not 0.0 < self.match_cos <= 1.0:
            raise InvalidArgument(f"match_cos must lie in (0, 1], got {self.match_cos}")
        if abs(self.relation_cos) > 1.0:
            raise InvalidArgument("relation_cos must lie in [-1, 1]")

    def to_dict(self) -> dict:
        d = {"name": self.name, "seed": self.seed, "match_cos": self.match_cos}
        if self.relates_to is not None:
            d["relates_to"] = self.relates_to
            d["relation_cos"] = self.relation_cos
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConceptSpec":
        return cls(
            name=d["name"],
            seed=int(d.get("seed", 0)),
            match_cos=float(d.get("match_cos", DEFAULT_MATCH_COS)),
            relates_to=d.get("relates_to"),
            relation_cos=float(d.get("relation_cos", 0.0)),
        )


def encode_concept(spec: ConceptSpec, dimension: int = DEFAULT_DIM) -> np.ndarray:
    if dimension < 2:
        raise InvalidArgument(f"dimension must be >= 2, got {dimension}")
    g = _rng(fnv1a(spec.name) ^ spec.seed).standard_normal(dimension)
    return normalize(g)


def make_related(base, target_cos: float, seed: int) -> np.ndarray:
    """Unit vector whose cosine with ``base`` equals ``target_cos``."""
    if abs(target_cos) > 1.0:
        raise InvalidArgument(f"|target_cos| must be <= 1, got {target_cos}")
    base = np.asarray(base, dtype=np.float64)
    if target_cos == 1.0:
        return base.copy()
    if target_cos == -1.0:
        return -base
    rng = _rng(seed)
    r = rng.standard_normal(base.shape[0])
    r -= (r @ base) * base
    r = normalize(r)
    out = target_cos * base + np.sqrt(1.0 - target_cos * target_cos) * r
    return out / np.linalg.norm(out)


def cosine(a, b) -> float:
    return float(np.dot(a, b))


def _orthogonal_unit(base: np.ndarray, seed: int) -> np.ndarray:
    r = _rng(seed).standard_normal(base.shape[0])
    r -= (r @ base) * base
    return normalize(r)


# relative weight of the attribute direction mixed into an attributed query
ATTRIBUTE_WEIGHT = 0.25


class ConceptRegistry:
    """Concept table for one scene: visual embeddings and text embeddings.

    Structural concepts (wall, floor, ceiling, void) are always registered.
    """

    def __init__(self, concepts: Iterable[ConceptSpec | str] = (), seed: int = 0,
                 dimension: int = DEFAULT_DIM, match_cos: float = DEFAULT_MATCH_COS):
        if dimension < 2:
            raise InvalidArgument(f"dimension must be >= 2, got {dimension}")
        self.seed = int(seed)
        self.dimension = int(dimension)
        self.match_cos = float(match_cos)
        self._specs: dict[str, ConceptSpec] = {}
        for name in STRUCTURAL_CONCEPTS:
            self._specs[name] = ConceptSpec(name, self.seed, self.match_cos)
        for c in concepts:
            if isinstance(c, str):
                c = ConceptSpec(c, self.seed, self.match_cos)
            self._specs[c.name] = c
        self._visual: dict[str, np.ndarray] = {}
        self._query: dict[tuple, np.ndarray] = {}

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def __len__(self) -> int:
        return len(self._specs)

    @property
    def names(self) -> list[str]:
        return list(self._specs)

    def spec(self, name: str) -> ConceptSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownConcept(name, self._specs) from None

    def visual(self, name: str) -> np.ndarray:
        v = self._visual.get(name)
        if v is None:
            spec = self.spec(name)
            if spec.relates_to is not None:
                if spec.relates_to == name:
                    raise InvalidArgument(f"concept {name!r} relates to itself")
                anchor = self.query(spec.relates_to)
                v = make_related(anchor, spec.relation_cos, fnv1a("context:" + name) ^ spec.seed)
            else:
                v = encode_concept(spec, self.dimension)
            v.setflags(write=False)
            self._visual[name] = v
        return v

    def resolve_head(self, phrase: str) -> str:
        """Registered concept named by ``phrase``: the full phrase or its last word."""
        phrase = " ".join(phrase.split())
        if phrase in self._specs:
            return phrase
        words = phrase.split()
        if words and words[-1] in self._specs:
            return words[-1]
        raise UnknownConcept(phrase, self._specs)

    def query(self, head: str, attributes: Sequence[str] = ()) -> np.ndarray:
        key = (head, tuple(attributes))
        q = self._query.get(key)
        if q is not None:
            return q
        spec = self.spec(head)
        base = self.visual(head) if spec.relates_to is None else encode_concept(spec, self.dimension)
        q = make_related(base, spec.match_cos, fnv1a("query:" + head) ^ self.seed)
        if attributes:
            direction = np.zeros(self.dimension)
            for word in sorted(set(attributes)):
                direction += _orthogonal_unit(base, fnv1a("attr:" + word) ^ self.seed)
            # orthogonal to the whole query plane, so the head cosine becomes
            # match_cos / sqrt(1 + ATTRIBUTE_WEIGHT^2) for any attribute set
            direction -= (direction @ base) * base
            spread = normalize(q - (q @ base) * base)
            direction -= (direction @ spread) * spread
            q = normalize(q + ATTRIBUTE_WEIGHT * normalize(direction))
        q.setflags(write=False)
        self._query[key] = q
        return q

    def text(self, phrase: str) -> np.ndarray:
        """Text embedding of an arbitrary noun phrase.

        Registered heads go through ``query``; anything else gets a seeded vector
        unrelated to every visual concept.
        """
        words = " ".join(phrase.split()).split()
        try:
            head = self.resolve_head(" ".join(words))
        except UnknownConcept:
            return normalize(_rng(fnv1a("text:" + " ".join(words)) ^ self.seed).standard_normal(self.dimension))
        attrs = [] if head == " ".join(words) else words[:-1]
        return self.query(head, attrs)

    def synonym(self, original: str, variant: str, target_cos: float) -> np.ndarray:
        base = self.text(original)
        return make_related(base, target_cos, fnv1a(f"syn:{original}:{variant}") ^ self.seed)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dimension": self.dimension,
            "match_cos": self.match_cos,
            "concepts": [s.to_dict() for n, s in self._specs.items() if n not in STRUCTURAL_CONCEPTS],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConceptRegistry":
        return cls(
            [ConceptSpec.from_dict(c) for c in d.get("concepts", [])],
            seed=int(d.get("seed", 0)),
            dimension=int(d.get("dimension", DEFAULT_DIM)),
            match_cos=float(d.get("match_cos", DEFAULT_MATCH_COS)),
        )


def encode_query(target_phrase: str, attribute_words: Sequence[str], registry: ConceptRegistry) -> np.ndarray:
    head = registry.resolve_head(target_phrase)
    extra = target_phrase.split()[:-1] if head != " ".join(target_phrase.split()) else []
    return registry.query(head, list(extra) + list(attribute_words))


SynonymLexicon = dict


def load_lexicon(path: str | Path | None = None) -> dict[str, list[str]]:
    if path is None:
        text = resources.files("r2f").joinpath("data/lexicon.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    lexicon = {}
    for noun, variants in raw.items():
        lexicon[noun] = [v for v in variants if v != noun]
    return lexicon
