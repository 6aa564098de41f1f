"""Synthetic segmented languages for tests, demos and the toy experiments."""

from __future__ import annotations

import random
from dataclasses import dataclass

DEFAULT_ALPHABET = "abdeiklmnost"


@dataclass(frozen=True)
class SynthLanguage:
    lexicon: tuple[str, ...]
    alphabet: str

    def sentence(self, rng: random.Random, min_words: int = 3, max_words: int = 8) -> str:
        return " ".join(rng.choice(self.lexicon) for _ in range(rng.randint(min_words, max_words)))

    def corpus(self, n_lines: int, seed: int, min_words: int = 3, max_words: int = 8) -> list[str]:
        """Gold-segmented lines (words separated by single spaces)."""
        rng = random.Random(seed)
        return [self.sentence(rng, min_words, max_words) for _ in range(n_lines)]


def make_lexicon(n_words: int, alphabet: str = DEFAULT_ALPHABET, min_len: int = 2, max_len: int = 5,
                 seed: int = 0) -> SynthLanguage:
    rng = random.Random(seed)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < n_words:
        w = "".join(rng.choice(alphabet) for _ in range(rng.randint(min_len, max_len)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return SynthLanguage(tuple(words), alphabet)


def related_language(base: SynthLanguage, n_shared: int, n_new: int, seed: int) -> SynthLanguage:
    """A language keeping ``n_shared`` words of ``base`` plus fresh ones over the same alphabet."""
    rng = random.Random(seed)
    shared = rng.sample(list(base.lexicon), n_shared)
    lengths = [len(w) for w in base.lexicon]
    seen = set(base.lexicon)
    new: list[str] = []
    while len(new) < n_new:
        w = "".join(rng.choice(base.alphabet) for _ in range(rng.randint(min(lengths), max(lengths))))
        if w not in seen:
            seen.add(w)
            new.append(w)
    return SynthLanguage(tuple(shared + new), base.alphabet)


def strip_spaces(lines: list[str]) -> list[str]:
    return ["".join(line.split()) for line in lines]
