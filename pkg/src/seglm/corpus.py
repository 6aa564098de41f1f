"""Corpus preparation: cleaning, balancing, vocabularies and line encoding.

Every operation is a pure function over ``RawCorpus`` values. Characters are
Unicode codepoints after NFC normalization; "alphabetic" means a Unicode
letter category (``L*``).
"""

from __future__ import annotations

import hashlib
import random
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>", "<seg-start>", "<seg-end>")
VOCAB_HEADER = "seglm-vocab v1"

URL_MARKERS = ("http://", "https://", "www.")
SENTENCE_PUNCT = ".!?;:"


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus data."""


def nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def is_alpha(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def strip_ws(text: str) -> str:
    return "".join(ch for ch in text if not ch.isspace())


@dataclass(frozen=True)
class RawCorpus:
    lines: tuple[str, ...]
    source_tag: str = ""
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))
        for i, line in enumerate(self.lines):
            if "\n" in line or "\r" in line:
                raise CorpusError(f"line {i} contains a newline")

    def __len__(self) -> int:
        return len(self.lines)

    def replace(self, lines: Iterable[str], note: str | None = None) -> "RawCorpus":
        prov = self.provenance if note is None else _join_prov(self.provenance, note)
        return RawCorpus(tuple(lines), self.source_tag, prov)


def _join_prov(a: str, b: str) -> str:
    return f"{a} | {b}" if a else b


def read_corpus(path: str | Path, source_tag: str | None = None) -> RawCorpus:
    """Read a UTF-8, one-sentence-per-line file. Lines are NFC-normalized."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    lines = [nfc(line.rstrip("\r")) for line in lines]
    tag = source_tag if source_tag is not None else path.stem
    return RawCorpus(tuple(lines), tag, str(path))


def write_corpus(corpus: RawCorpus, path: str | Path) -> None:
    body = "".join(line + "\n" for line in corpus.lines)
    Path(path).write_bytes(body.encode("utf-8"))


# ---------------------------------------------------------------------------
# cleaning and balancing


@dataclass(frozen=True)
class CleaningRules:
    """Which line filters are active.

    ``min_alpha_fraction`` drops lines whose share of alphabetic characters
    (whitespace excluded) is strictly below the threshold; 0.5 reproduces the
    "more than half non-alphabetic" rule.
    """

    drop_urls: bool = True
    drop_no_alpha: bool = True
    min_alpha_fraction: float | None = None
    blocklist: tuple[str, ...] = ()
    max_chars: int = 2000
    dedupe: bool = False


def _keep_line(line: str, rules: CleaningRules) -> bool:
    if rules.drop_urls and any(m in line for m in URL_MARKERS):
        return False
    if any(b in line for b in rules.blocklist):
        return False
    chars = strip_ws(line)
    n_alpha = sum(1 for ch in chars if is_alpha(ch))
    if rules.drop_no_alpha and n_alpha == 0:
        return False
    if rules.min_alpha_fraction is not None:
        if not chars or n_alpha / len(chars) < rules.min_alpha_fraction:
            return False
    return True


def clean_lines(corpus: RawCorpus, rules: CleaningRules) -> RawCorpus:
    kept = [line for line in corpus.lines if _keep_line(line, rules)]
    return corpus.replace(kept, f"clean({len(corpus)}->{len(kept)})")


def _split_one(line: str, max_chars: int) -> list[str]:
    pieces = []
    rest = line
    while len(rest) > max_chars:
        window = rest[:max_chars]
        cut = max((window.rfind(p) for p in SENTENCE_PUNCT), default=-1)
        if cut >= 0:
            head, rest = rest[: cut + 1], rest[cut + 1 :]
        else:
            # a whitespace at index max_chars still yields a head of max_chars
            ws = max((i for i, ch in enumerate(rest[: max_chars + 1]) if ch.isspace()), default=-1)
            if ws > 0:
                head, rest = rest[:ws], rest[ws + 1 :]
            else:
                head, rest = rest[:max_chars], rest[max_chars:]
        head = head.rstrip()
        rest = rest.lstrip()
        if head:
            pieces.append(head)
    if rest:
        pieces.append(rest)
    return pieces


def split_long_lines(corpus: RawCorpus, max_chars: int) -> RawCorpus:
    """Split lines longer than ``max_chars``.

    Split points prefer sentence punctuation (kept with the left piece), then
    whitespace (dropped), then a hard cut. Whitespace around a split point is
    treated as the delimiter and removed.
    """
    if max_chars < 1:
        raise CorpusError(f"max_chars must be >= 1, got {max_chars}")
    out: list[str] = []
    for line in corpus.lines:
        if len(line) <= max_chars:
            out.append(line)
        else:
            out.extend(_split_one(line, max_chars))
    return corpus.replace(out, f"split({max_chars})")


def dedupe(corpus: RawCorpus) -> RawCorpus:
    seen: set[str] = set()
    out = []
    for line in corpus.lines:
        key = nfc(line)
        if key not in seen:
            seen.add(key)
            out.append(line)
    return corpus.replace(out, f"dedupe({len(corpus)}->{len(out)})")


def overlap_key(line: str) -> str:
    """NFC, trimmed, internal whitespace runs collapsed to one space."""
    return " ".join(nfc(line).split())


def remove_overlap(train: RawCorpus, heldout: RawCorpus) -> RawCorpus:
    banned = {overlap_key(line) for line in heldout.lines}
    kept = [line for line in train.lines if overlap_key(line) not in banned]
    return train.replace(kept, f"remove_overlap({heldout.source_tag or 'heldout'})")


def downsample(corpus: RawCorpus, n: int, seed: int) -> RawCorpus:
    """Uniform sample of ``n`` lines without replacement, original order kept."""
    if n < 0:
        raise CorpusError(f"cannot downsample to a negative size ({n})")
    if n > len(corpus):
        raise CorpusError(f"cannot downsample {len(corpus)} lines to {n}: requested size exceeds corpus size")
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(corpus)), n))
    return corpus.replace((corpus.lines[i] for i in picked), f"downsample({n}, seed={seed})")


def concat_corpora(parts: Sequence[RawCorpus], source_tag: str = "concat") -> RawCorpus:
    lines: list[str] = []
    for part in parts:
        lines.extend(part.lines)
    prov = "concat(" + ", ".join(p.source_tag or "?" for p in parts) + ")"
    return RawCorpus(tuple(lines), source_tag, prov)


def preprocess(corpus: RawCorpus, rules: CleaningRules) -> RawCorpus:
    """clean -> split -> clean -> (dedupe); applying it twice equals once."""
    out = clean_lines(corpus, rules)
    out = split_long_lines(out, rules.max_chars)
    # pieces of a split line may themselves fail a predicate
    out = clean_lines(out, rules)
    if rules.dedupe:
        out = dedupe(out)
    return out


# ---------------------------------------------------------------------------
# vocabulary


@dataclass
class CharVocab:
    """Character <-> id map. Specials occupy ids 0..5, characters follow."""

    chars: list[str]
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.chars = list(self.chars)
        if len(set(self.chars)) != len(self.chars):
            raise CorpusError("duplicate characters in vocabulary")
        for ch in self.chars:
            if ch in SPECIALS or len(ch) != 1:
                raise CorpusError(f"invalid vocabulary entry {ch!r}")
        self.id_of = {sym: i for i, sym in enumerate(self.symbols)}

    @property
    def symbols(self) -> list[str]:
        return list(SPECIALS) + self.chars

    def __len__(self) -> int:
        return len(SPECIALS) + len(self.chars)

    def __contains__(self, ch: str) -> bool:
        return ch in self.id_of and ch not in SPECIALS

    def char_of(self, idx: int) -> str:
        return self.symbols[idx]

    @property
    def pad(self) -> int:
        return 0

    @property
    def bos(self) -> int:
        return 1

    @property
    def eos(self) -> int:
        return 2

    @property
    def unk(self) -> int:
        return 3

    @property
    def seg_start(self) -> int:
        return 4

    @property
    def seg_end(self) -> int:
        return 5

    @property
    def special_ids(self) -> list[int]:
        return list(range(len(SPECIALS)))

    def to_text(self) -> str:
        return "\n".join([VOCAB_HEADER, *self.symbols]) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str) -> "CharVocab":
        rows = text.split("\n")
        if rows and rows[-1] == "":
            rows.pop()
        if not rows or rows[0] != VOCAB_HEADER:
            raise CorpusError(f"not a vocabulary file (expected header {VOCAB_HEADER!r})")
        body = rows[1:]
        if tuple(body[: len(SPECIALS)]) != SPECIALS:
            raise CorpusError("vocabulary file must list the specials first")
        return cls(body[len(SPECIALS) :])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_text().encode("utf-8"))

    @classmethod
    def load(cls, path: str | Path) -> "CharVocab":
        return cls.from_text(Path(path).read_bytes().decode("utf-8"))


def corpus_chars(corpus: RawCorpus) -> set[str]:
    out: set[str] = set()
    for line in corpus.lines:
        out.update(strip_ws(nfc(line)))
    return out


def build_vocab(corpus: RawCorpus) -> CharVocab:
    if not corpus.lines:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    return CharVocab(sorted(corpus_chars(corpus)))


def extend_vocab(base: CharVocab, corpus: RawCorpus) -> tuple[CharVocab, list[int]]:
    """Append characters of ``corpus`` missing from ``base``; base ids are kept."""
    missing = sorted(corpus_chars(corpus) - set(base.chars))
    if not missing:
        return base, []
    ext = CharVocab(base.chars + missing)
    return ext, [ext.id_of[ch] for ch in missing]


# ---------------------------------------------------------------------------
# encoding


@dataclass(frozen=True)
class EncodedLine:
    ids: tuple[int, ...]
    raw: str
    gold_boundaries: frozenset[int] | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def gold_segments(self) -> list[str] | None:
        if self.gold_boundaries is None:
            return None
        return segments_from_boundaries(self.raw, self.gold_boundaries)


def encode_line(vocab: CharVocab, line: str, gold: bool = False) -> EncodedLine:
    """Delete whitespace from ``line`` and map characters to ids.

    With ``gold=True`` each whitespace run becomes a boundary after the
    preceding character. Unknown characters map to ``<unk>``.
    """
    line = nfc(line)
    chars: list[str] = []
    bounds: set[int] = set()
    for ch in line:
        if ch.isspace():
            if chars:
                bounds.add(len(chars))
        else:
            chars.append(ch)
    if not chars:
        raise CorpusError("line is empty after whitespace removal")
    raw = "".join(chars)
    bounds.discard(len(chars))
    ids = tuple(vocab.id_of.get(ch, vocab.unk) if ch not in SPECIALS else vocab.unk for ch in chars)
    return EncodedLine(ids, raw, frozenset(bounds) if gold else None)


def decode(vocab: CharVocab, ids: Iterable[int]) -> str:
    return "".join(vocab.char_of(i) for i in ids)


def encode_corpus(vocab: CharVocab, corpus: RawCorpus, gold: bool = False) -> list[EncodedLine]:
    """Encode every line that is nonempty after whitespace removal."""
    return [encode_line(vocab, line, gold) for line in corpus.lines if strip_ws(line)]


def segments_from_boundaries(raw: str, boundaries: Iterable[int]) -> list[str]:
    cuts = sorted(b for b in boundaries if 0 < b < len(raw))
    segs = []
    prev = 0
    for c in cuts + [len(raw)]:
        segs.append(raw[prev:c])
        prev = c
    return segs


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class StatsReport:
    lines: int
    total_tokens: int
    unique_tokens: int
    total_characters: int
    unique_characters: int
    mean_token_length: float

    COLUMNS = ("Lines", "Total Tokens", "Unique Tokens", "Total Characters", "Unique Characters", "Mean Token Length")

    def row(self) -> list[str]:
        return [
            f"{self.lines:,}",
            f"{self.total_tokens:,}",
            f"{self.unique_tokens:,}",
            f"{self.total_characters:,}",
            f"{self.unique_characters:,}",
            f"{self.mean_token_length:.2f}",
        ]


def corpus_stats(corpus: RawCorpus) -> StatsReport:
    tokens: Counter[str] = Counter()
    chars: set[str] = set()
    n_chars = 0
    for line in corpus.lines:
        for tok in nfc(line).split():
            tokens[tok] += 1
            n_chars += len(tok)
            chars.update(tok)
    total = sum(tokens.values())
    return StatsReport(
        lines=len(corpus),
        total_tokens=total,
        unique_tokens=len(tokens),
        total_characters=n_chars,
        unique_characters=len(chars),
        mean_token_length=n_chars / total if total else 0.0,
    )
