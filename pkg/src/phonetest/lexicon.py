"""Pronunciation lexicon: CMU-style dictionary parsing and lookup.

Entries map lowercase words to one or more ARPAbet pronunciations.
Vowel tokens carry a trailing stress digit (0/1/2); the reverse index is
keyed on stress-stripped sequences so that lookups survive stress
differences between transcription sources.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

PhonemeSequence = tuple[str, ...]

VOWELS = frozenset(
    "AA AE AH AO AW AY EH ER EY IH IY OW OY UH UW".split()
)
CONSONANTS = frozenset(
    "B CH D DH F G HH JH K L M N NG P R S SH T TH V W Y Z ZH".split()
)
PHONEME_INVENTORY = VOWELS | CONSONANTS

_TOKEN_RE = re.compile(r"^([A-Z]+)([0-2]?)$")
_WORD_RE = re.compile(r"^(.*?)(?:\((\d+)\))?$")


class LexiconError(ValueError):
    """Raised for malformed lexicon files; message carries the line number."""


def base_phoneme(token: str) -> str:
    """ARPAbet token without any stress digit: 'IY1' -> 'IY'."""
    return token.rstrip("012")


def strip_stress(phonemes: Sequence[str]) -> PhonemeSequence:
    return tuple(base_phoneme(p) for p in phonemes)


def syllable_count(phonemes: Sequence[str]) -> int:
    """Number of vowel nuclei (tokens from the vowel inventory)."""
    return sum(1 for p in phonemes if base_phoneme(p) in VOWELS)


def _validate_token(token: str, line_no: int, line: str) -> None:
    m = _TOKEN_RE.match(token)
    if not m or m.group(1) not in PHONEME_INVENTORY:
        raise LexiconError(f"line {line_no}: unknown phoneme token {token!r} in {line!r}")
    if m.group(2) and m.group(1) not in VOWELS:
        raise LexiconError(
            f"line {line_no}: stress digit on non-vowel {token!r} in {line!r}"
        )


@dataclass
class Lexicon:
    """Word -> pronunciations map plus a stress-insensitive reverse index."""

    entries: dict[str, list[PhonemeSequence]] = field(default_factory=dict)
    _reverse: dict[PhonemeSequence, set[str]] = field(default_factory=dict, repr=False)

    def add(self, word: str, phonemes: Sequence[str]) -> None:
        pron = tuple(phonemes)
        prons = self.entries.setdefault(word, [])
        if pron not in prons:
            prons.append(pron)
        self._reverse.setdefault(strip_stress(pron), set()).add(word)

    @property
    def vocabulary(self) -> list[str]:
        return sorted(self.entries)

    @property
    def inventory(self) -> frozenset[str]:
        """Base phonemes actually used by this lexicon's entries."""
        seen = set()
        for prons in self.entries.values():
            for pron in prons:
                seen.update(strip_stress(pron))
        return frozenset(seen)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, word: str) -> list[PhonemeSequence]:
        """All pronunciations for a word (case-insensitive); [] if absent."""
        return list(self.entries.get(word.strip().lower(), []))

    def primary(self, word: str) -> PhonemeSequence:
        """First listed pronunciation; raises KeyError if the word is absent."""
        prons = self.lookup(word)
        if not prons:
            raise KeyError(f"word not in lexicon: {word!r}")
        return prons[0]

    def reverse_lookup(self, phonemes: Sequence[str]) -> set[str]:
        """Words whose pronunciation matches, ignoring stress digits."""
        return set(self._reverse.get(strip_stress(phonemes), set()))


def load_lexicon(path: str | Path) -> Lexicon:
    """Parse a CMU-style dictionary file.

    Lines starting with ';;;' are comments. Each entry is WORD followed by
    whitespace-separated ARPAbet tokens; alternate pronunciations use the
    WORD(n) convention and fold into the same headword.
    """
    lex = Lexicon()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith(";;;"):
                continue
            fields = line.split()
            if len(fields) < 2:
                raise LexiconError(f"line {line_no}: entry has no phonemes: {line!r}")
            word_field, phones = fields[0], fields[1:]
            m = _WORD_RE.match(word_field)
            word = (m.group(1) if m else word_field).lower()
            if not word:
                raise LexiconError(f"line {line_no}: empty word field in {line!r}")
            for tok in phones:
                _validate_token(tok, line_no, line)
            lex.add(word, phones)
    if len(lex) == 0:
        raise LexiconError(f"lexicon file {path} has no entries")
    return lex


def save_lexicon(lex: Lexicon, path: str | Path) -> None:
    """Write back in the same text format, alternates as WORD(n)."""
    with open(path, "w", encoding="utf-8") as fh:
        for word in lex.vocabulary:
            for i, pron in enumerate(lex.entries[word]):
                head = word.upper() if i == 0 else f"{word.upper()}({i + 1})"
                fh.write(f"{head}  {' '.join(pron)}\n")


def _edit_distance(a: Sequence, b: Sequence) -> int:
    """Plain Levenshtein on any token sequences; two-row iterative DP."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


_PUNCT_EDGE = re.compile(r"^[^\w']+|[^\w']+$")


def lexical_normalize(raw: str, lex: Lexicon) -> str:
    """Map a raw ASR string onto the nearest vocabulary word.

    Lowercases, trims, keeps only the first whitespace-separated token,
    and strips surrounding punctuation (apostrophes survive, since the
    vocabulary may contain them). In-vocabulary words pass through;
    anything else maps to the vocabulary word at minimum character
    edit distance, ties broken by shorter word then alphabetical order.
    """
    text = raw.strip().lower()
    if text:
        text = text.split()[0]
        text = _PUNCT_EDGE.sub("", text)
    if not text:
        raise ValueError(f"nothing to normalize in ASR output {raw!r}")
    if text in lex:
        return text
    best_word = None
    best_key = None
    for word in lex.vocabulary:
        d = _edit_distance(text, word)
        key = (d, len(word), word)
        if best_key is None or key < best_key:
            best_key = key
            best_word = word
            if d == 0:
                break
    assert best_word is not None
    return best_word


def word_distance(a: str, b: str) -> int:
    """Character-level Levenshtein distance between two spellings."""
    return _edit_distance(a, b)
