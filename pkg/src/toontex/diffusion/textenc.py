"""Closed-grammar tokenizer for the prompt template.

The vocabulary is built from the dataset grammar (species, colors, cloth
nouns, pattern adjectives, template words) plus two reserved rows: pad and
the null token whose embedding row stands in for unconditional prediction.
Unknown words are an error, never silently padded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..dataforge import CLOTH_TYPES, COLORS, PATTERNS, SPECIES
from ..errors import ContractError

PAD_ID = 0
NULL_ID = 1
MAX_TOKENS = 12

_TEMPLATE_WORDS = ("a", "cartoon", "wearing", "and")


def grammar_words() -> list[str]:
    nouns = {noun for garments in CLOTH_TYPES.values() for noun, _ in garments}
    words = set(_TEMPLATE_WORDS) | set(SPECIES) | set(COLORS) | set(nouns)
    words |= {p for p in PATTERNS if p != "solid"}
    return sorted(words)


@dataclass
class Vocabulary:
    words: list[str] = field(default_factory=grammar_words)

    def __post_init__(self):
        self.index = {w: i + 2 for i, w in enumerate(self.words)}  # 0=pad, 1=null

    @property
    def size(self) -> int:
        return len(self.words) + 2

    def tokenize(self, prompt: str) -> list[str]:
        return prompt.strip().rstrip(".").lower().split()

    def encode(self, prompt: str, length: int = MAX_TOKENS) -> list[int]:
        tokens = self.tokenize(prompt)
        if len(tokens) > length:
            raise ContractError(f"prompt longer than {length} tokens: {prompt!r}")
        ids = []
        for tok in tokens:
            if tok not in self.index:
                raise ContractError(f"unknown vocabulary token {tok!r} in {prompt!r}")
            ids.append(self.index[tok])
        return ids + [PAD_ID] * (length - len(ids))

    def null_sequence(self, length: int = MAX_TOKENS) -> list[int]:
        return [NULL_ID] + [PAD_ID] * (length - 1)
