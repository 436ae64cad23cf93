"""Typographic word sets and sampling."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

PARTS_OF_SPEECH = ("noun", "adjective", "verb", "unknown")


class WordSetError(ValueError):
    pass


@dataclass(frozen=True)
class WordEntry:
    word: str
    pos: str = "unknown"


@dataclass(frozen=True)
class WordSet:
    entries: tuple
    source: str = ""

    def __post_init__(self):
        if not self.entries:
            raise WordSetError(f"word set {self.source or '<memory>'} is empty")
        for e in self.entries:
            if not e.word or any(unicodedata.category(ch).startswith("C") for ch in e.word):
                raise WordSetError(f"invalid word {e.word!r} in {self.source or '<memory>'}")
            if e.pos not in PARTS_OF_SPEECH:
                raise WordSetError(f"invalid part of speech {e.pos!r} for {e.word!r}")

    def __len__(self):
        return len(self.entries)

    @property
    def words(self):
        return [e.word for e in self.entries]

    def pool(self, pos=None):
        if pos is None:
            return [e.word for e in self.entries]
        return [e.word for e in self.entries if e.pos == pos]

    @classmethod
    def from_words(cls, words, pos="unknown", source=""):
        return cls(tuple(WordEntry(w, pos) for w in words), source)


def parse_word_lines(lines, source=""):
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" in line:
            word, pos = line.split("\t", 1)
            word, pos = word.strip(), pos.strip().lower()
            if pos not in PARTS_OF_SPEECH or "\t" in pos:
                raise WordSetError(f"{source or '<memory>'}, line {lineno}: unknown part of speech {pos!r}")
        else:
            word, pos = line.strip(), "unknown"
        if not word or any(unicodedata.category(ch).startswith("C") for ch in word):
            raise WordSetError(f"{source or '<memory>'}, line {lineno}: malformed word {word!r}")
        entries.append(WordEntry(word, pos))
    if not entries:
        raise WordSetError(f"{source}: no words found")
    return WordSet(tuple(entries), str(source))


def load_word_set(path) -> WordSet:
    """Load a UTF-8 ``word<TAB>pos`` file; lines without a tab get pos ``unknown``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise WordSetError(f"cannot read word set {path}: {exc}") from exc
    return parse_word_lines(text.splitlines(), source=str(path))


def bundled_word_set(name="nouns") -> WordSet:
    """One of the word lists shipped in ``xadv/data/words``."""
    ref = resources.files("xadv") / "data" / "words" / f"{name}.tsv"
    return parse_word_lines(ref.read_text(encoding="utf-8").splitlines(), source=f"bundled:{name}")


def sample_words(words: WordSet, pos_filter, amount, rng) -> list:
    """Draw ``amount`` words uniformly, without replacement when the pool allows it."""
    if amount < 1:
        raise ValueError(f"amount must be >= 1, got {amount}")
    pool = words.pool(pos_filter)
    if not pool:
        raise WordSetError(f"no {pos_filter} words in {words.source or 'word set'}")
    replace = len(pool) < amount
    idx = rng.choice(len(pool), size=amount, replace=replace)
    return [pool[i] for i in idx]
