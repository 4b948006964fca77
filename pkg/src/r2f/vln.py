"""Instruction following: parse target and landmarks, expand landmark synonyms, verify by sweep."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .config import R2FConfig
from .embedding import ConceptRegistry, cosine, load_lexicon
from .errors import UnparseableInstruction
from .policy import Policy


@dataclass(frozen=True)
class Grammar:
    relations: tuple[str, ...]
    stoplist: frozenset

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Grammar":
        if path is None:
            text = resources.files("r2f").joinpath("data/grammar.json").read_text()
        else:
            text = Path(path).read_text()
        raw = json.loads(text)
        stop = set()
        for key in ("articles", "pronouns", "directional", "imperatives"):
            stop.update(raw.get(key, []))
        # longest keywords first so "next to" wins over a bare "to"
        rel = tuple(sorted(raw["relations"], key=lambda r: (-len(r.split()), r)))
        return cls(rel, frozenset(stop))


_DEFAULT_GRAMMAR: Grammar | None = None


def default_grammar() -> Grammar:
    global _DEFAULT_GRAMMAR
    if _DEFAULT_GRAMMAR is None:
        _DEFAULT_GRAMMAR = Grammar.load()
    return _DEFAULT_GRAMMAR


@dataclass(frozen=True)
class ParsedInstruction:
    target_head: str
    target_attributes: tuple[str, ...] = ()
    landmarks: tuple[str, ...] = ()

    @property
    def target_phrase(self) -> str:
        return " ".join(self.target_attributes + (self.target_head,))

    def render(self) -> str:
        """Canonical text that parses back to this structure."""
        if not self.landmarks:
            return self.target_phrase
        return f"{self.target_phrase} near {', '.join(self.landmarks)}"

    def to_dict(self) -> dict:
        return {"target_head": self.target_head, "target_attributes": list(self.target_attributes),
                "landmarks": list(self.landmarks)}


def _tokens(text: str) -> list[str]:
    """Lowercased words with commas kept as separate tokens."""
    text = re.sub(r"[^a-z0-9,\s]", " ", text.lower())
    return re.findall(r"[a-z0-9]+|,", text)


def _find_relation(tokens: Sequence[str], relations: Sequence[str]) -> tuple[int, int] | None:
    """(start, length) of the earliest relation keyword in ``tokens``."""
    for i in range(len(tokens)):
        for rel in relations:
            words = rel.split()
            if list(tokens[i:i + len(words)]) == words:
                return i, len(words)
    return None


def _strip(words: Sequence[str], stop) -> list[str]:
    return [w for w in words if w not in stop and w != ","]


def parse_instruction(text: str, grammar: Grammar | None = None) -> ParsedInstruction:
    g = grammar or default_grammar()
    tokens = _tokens(text)
    rel = _find_relation(tokens, g.relations)
    if rel is None:
        pre, post = tokens, []
    else:
        pre, post = tokens[:rel[0]], tokens[rel[0] + rel[1]:]
    target = _strip(pre, g.stoplist)
    if not target:
        raise UnparseableInstruction(f"no target phrase in {text!r}")
    head, attrs = target[-1], tuple(target[:-1])
    landmarks = []
    chunk: list[str] = []
    for tok in post + [","]:
        if tok in (",", "and"):
            words = _strip(chunk, g.stoplist)
            phrase = " ".join(words)
            if phrase and phrase != head and phrase not in landmarks:
                landmarks.append(phrase)
            chunk = []
        else:
            chunk.append(tok)
    return ParsedInstruction(head, attrs, tuple(landmarks))


@dataclass(frozen=True)
class Landmark:
    name: str
    sources: tuple[str, ...]      # original first, then surviving variants
    embeddings: np.ndarray        # (k, D), row 0 is the original

    def __len__(self) -> int:
        return len(self.sources)


@dataclass(frozen=True)
class LandmarkSet:
    landmarks: tuple[Landmark, ...] = ()

    def __len__(self) -> int:
        return len(self.landmarks)

    @property
    def names(self) -> list[str]:
        return [lm.name for lm in self.landmarks]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All embeddings as one (N, D) array plus the landmark index of each row."""
        if not self.landmarks:
            return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
        embs = np.concatenate([lm.embeddings for lm in self.landmarks])
        owner = np.concatenate([np.full(len(lm), i) for i, lm in enumerate(self.landmarks)])
        return embs, owner


def expand_landmarks(parsed: ParsedInstruction, lexicon: Mapping[str, Sequence[str]], registry: ConceptRegistry,
                     tau_syn: float = 0.60, k_syn: int = 5, synonym_cos: float = 0.7,
                     embed_variant: Callable[[str, str], np.ndarray] | None = None) -> LandmarkSet:
    """Original landmark embedding plus its best lexicon variants above ``tau_syn``, at most ``k_syn`` in all."""
    embed_variant = embed_variant or (lambda lm, v: registry.synonym(lm, v, synonym_cos))
    out = []
    for lm in parsed.landmarks:
        orig = registry.text(lm)
        scored = []
        for v in lexicon.get(lm, ()):
            e = embed_variant(lm, v)
            c = cosine(orig, e)
            if c >= tau_syn:
                scored.append((c, v, e))
        scored.sort(key=lambda s: (-s[0], s[1]))
        keep = scored[:max(k_syn - 1, 0)]
        out.append(Landmark(lm, (lm,) + tuple(v for _, v, _ in keep),
                            np.stack([orig] + [e for _, _, e in keep])))
    return LandmarkSet(tuple(out))


def landmark_maxima(obs, landmarks: LandmarkSet) -> np.ndarray:
    """Per-landmark maximum cosine over pixels and synonym embeddings in one frame."""
    embs, owner = landmarks.stacked()
    if embs.shape[0] == 0:
        return np.zeros(0)
    per_emb = obs.similarity_max(embs)
    out = np.full(len(landmarks), -np.inf)
    np.maximum.at(out, owner, per_emb)
    return out


def verify_candidate(sweep_obs, landmarks: LandmarkSet, tau_l: float = 0.11) -> bool:
    """True iff some landmark's maximum similarity over the sweep exceeds ``tau_l``."""
    if len(landmarks) == 0:
        return True
    best = np.full(len(landmarks), -np.inf)
    for obs in sweep_obs:
        best = np.maximum(best, landmark_maxima(obs, landmarks))
    return bool(np.any(best > tau_l))


class LandmarkVerifier:
    """Running landmark maxima over a sweep, fed one frame at a time."""

    def __init__(self, landmarks: LandmarkSet, tau_l: float = 0.11):
        self.landmarks = landmarks
        self.tau_l = tau_l
        self.maxima = np.full(len(landmarks), -np.inf)
        self.frames = 0

    @property
    def has_landmarks(self) -> bool:
        return len(self.landmarks) > 0

    def reset(self) -> None:
        self.maxima = np.full(len(self.landmarks), -np.inf)
        self.frames = 0

    def observe(self, obs) -> None:
        self.maxima = np.maximum(self.maxima, landmark_maxima(obs, self.landmarks))
        self.frames += 1

    def confirmed(self) -> bool:
        return not self.has_landmarks or bool(np.any(self.maxima > self.tau_l))


@dataclass
class VLNSetup:
    parsed: ParsedInstruction
    landmarks: LandmarkSet
    query: np.ndarray
    extras: dict = field(default_factory=dict)


def prepare_instruction(instruction: str, registry: ConceptRegistry, config: R2FConfig | None = None,
                        lexicon: Mapping[str, Sequence[str]] | None = None,
                        grammar: Grammar | None = None) -> VLNSetup:
    cfg = config or R2FConfig()
    parsed = parse_instruction(instruction, grammar)
    lexicon = load_lexicon() if lexicon is None else lexicon
    lms = expand_landmarks(parsed, lexicon, registry, cfg.tau_syn, cfg.k_syn, cfg.synonym_cos)
    query = registry.text(parsed.target_phrase)
    return VLNSetup(parsed, lms, query)


def vln_policy(setup: VLNSetup, config: R2FConfig | None = None) -> Policy:
    """R2F with landmark verification, or plain R2F when verification is switched off."""
    cfg = config or R2FConfig()
    verifier = LandmarkVerifier(setup.landmarks, cfg.tau_l) if cfg.landmark_verification else None
    return Policy(setup.query, cfg, semantic=True, verifier=verifier)


def vln_step_policy(policy: Policy, obs, grid, regions, step_index: int, synced: bool = False):
    return policy.act(obs, grid, regions, step_index, synced)
