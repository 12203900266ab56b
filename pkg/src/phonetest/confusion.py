"""Confusion-matrix accumulation and error statistics over edit scripts.

Cells are (original, transcribed) phoneme pairs; the empty string stands
in for the absent side of deletions and insertions. A place-of-
articulation projection and a frequency-relevance tagging of phonemes
support the frequency-specific analyses downstream.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .alignment import (
    EPSILON,
    AlignmentResult,
    EditKind,
    EditOp,
    align,
    ops_from_string,
    ops_to_string,
)
from .lexicon import PHONEME_INVENTORY, PhonemeSequence, VOWELS, base_phoneme


class ConfigurationError(ValueError):
    """A phoneme is missing from a mapping table it should be covered by."""


# Place of articulation for every consonant; vowels form their own class.
ARTICULATION_CLASS: dict[str, str] = {
    **{p: "Bilabial" for p in ("P", "B", "M", "W")},
    **{p: "Labiodental" for p in ("F", "V")},
    **{p: "Dental" for p in ("TH", "DH")},
    **{
        p: "Alveolar/Palatal"
        for p in ("T", "D", "S", "Z", "N", "L", "R", "SH", "ZH", "CH", "JH", "Y")
    },
    **{p: "Velar/Palatal" for p in ("K", "G", "NG")},
    "HH": "Glottal",
    **{p: "Vowel" for p in VOWELS},
}

ARTICULATION_CLASSES = (
    "Alveolar/Palatal",
    "Labiodental",
    "Bilabial",
    "Velar/Palatal",
    "Dental",
    "Glottal",
    "Vowel",
)

FREQUENCY_RELEVANCE_LEVELS = ("High", "Mid-High", "Mid", "General")


def articulation_class_of(phoneme: str) -> str:
    """Articulation class of a (possibly stressed) phoneme token."""
    base = base_phoneme(phoneme)
    try:
        return ARTICULATION_CLASS[base]
    except KeyError:
        raise ConfigurationError(
            f"phoneme {phoneme!r} missing from the articulation class map"
        ) from None


def load_relevance_table(path: str | Path | None = None) -> dict[str, str]:
    """Phoneme -> frequency relevance map, from a JSON config.

    The JSON holds relevance level -> phoneme list plus a "default"
    level for everything unlisted. None loads the packaged table.
    """
    if path is None:
        text = (
            resources.files("phonetest") / "data" / "frequency_relevance.json"
        ).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    default = raw.get("default", "General")
    table: dict[str, str] = {p: default for p in PHONEME_INVENTORY}
    for level, phonemes in raw.items():
        if level == "default":
            continue
        if level not in FREQUENCY_RELEVANCE_LEVELS:
            raise ConfigurationError(f"unknown relevance level {level!r}")
        for p in phonemes:
            if p not in PHONEME_INVENTORY:
                raise ConfigurationError(f"relevance table lists unknown phoneme {p!r}")
            table[p] = level
    return table


_DEFAULT_RELEVANCE: dict[str, str] | None = None


def frequency_relevance_of(phoneme: str, table: Mapping[str, str] | None = None) -> str:
    """Frequency-relevance tag of a phoneme token (stress ignored)."""
    global _DEFAULT_RELEVANCE
    if table is None:
        if _DEFAULT_RELEVANCE is None:
            _DEFAULT_RELEVANCE = load_relevance_table()
        table = _DEFAULT_RELEVANCE
    base = base_phoneme(phoneme)
    if base not in table:
        raise ConfigurationError(
            f"phoneme {phoneme!r} missing from the frequency relevance table"
        )
    return table[base]


@dataclass
class ConfusionMatrix:
    """Sparse (original, transcribed) -> count map with ε edges."""

    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    def add(self, original: str, transcribed: str, n: int = 1) -> None:
        if original == EPSILON and transcribed == EPSILON:
            raise ValueError("an ε→ε cell is meaningless")
        if n < 0:
            raise ValueError("counts are non-negative")
        key = (original, transcribed)
        self.counts[key] = self.counts.get(key, 0) + n

    def total(self, kind: EditKind) -> int:
        if kind is EditKind.MATCH:
            return sum(
                c for (o, t), c in self.counts.items() if o == t and o != EPSILON
            )
        if kind is EditKind.SUBSTITUTION:
            return sum(
                c
                for (o, t), c in self.counts.items()
                if o != EPSILON and t != EPSILON and o != t
            )
        if kind is EditKind.DELETION:
            return sum(c for (o, t), c in self.counts.items() if t == EPSILON)
        return sum(c for (o, t), c in self.counts.items() if o == EPSILON)

    def total_errors(self) -> int:
        return (
            self.total(EditKind.SUBSTITUTION)
            + self.total(EditKind.DELETION)
            + self.total(EditKind.INSERTION)
        )


def accumulate(
    matrix: ConfusionMatrix, ops: Iterable[EditOp], count_matches: bool = True
) -> ConfusionMatrix:
    """Fold an edit script into the matrix (mutates and returns it)."""
    for op in ops:
        if op.kind is EditKind.MATCH:
            if count_matches:
                matrix.add(op.ref_phoneme, op.hyp_phoneme)  # type: ignore[arg-type]
        elif op.kind is EditKind.SUBSTITUTION:
            matrix.add(op.ref_phoneme, op.hyp_phoneme)  # type: ignore[arg-type]
        elif op.kind is EditKind.DELETION:
            matrix.add(op.ref_phoneme, EPSILON)  # type: ignore[arg-type]
        else:
            matrix.add(EPSILON, op.hyp_phoneme)  # type: ignore[arg-type]
    return matrix


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Associative merge of independently accumulated matrices."""
    out = ConfusionMatrix(counts=dict(a.counts))
    for (o, t), c in b.counts.items():
        out.counts[(o, t)] = out.counts.get((o, t), 0) + c
    return out


def error_distribution(matrix: ConfusionMatrix) -> dict:
    """Counts and percentages of substitutions, deletions, insertions."""
    sub = matrix.total(EditKind.SUBSTITUTION)
    dele = matrix.total(EditKind.DELETION)
    ins = matrix.total(EditKind.INSERTION)
    total = sub + dele + ins
    def pct(n: int) -> float:
        return 100.0 * n / total if total else 0.0
    return {
        "total_errors": total,
        "substitutions": {"count": sub, "percent": pct(sub)},
        "deletions": {"count": dele, "percent": pct(dele)},
        "insertions": {"count": ins, "percent": pct(ins)},
    }


def top_confusions(
    matrix: ConfusionMatrix, n: int
) -> list[tuple[tuple[str, str], int]]:
    """Non-match cells ranked by count desc, ties lexicographic."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cells = [
        ((o, t), c)
        for (o, t), c in matrix.counts.items()
        if o != t  # diagonal cells are matches
    ]
    cells.sort(key=lambda item: (-item[1], item[0]))
    return cells[:n]


def articulation_projection(matrix: ConfusionMatrix) -> ConfusionMatrix:
    """Substitution mass re-binned by place of articulation.

    Deletion/insertion cells are dropped; counts are conserved over the
    substitution cells.
    """
    out = ConfusionMatrix()
    for (o, t), c in matrix.counts.items():
        if o == EPSILON or t == EPSILON or o == t:
            continue
        out.add(articulation_class_of(o), articulation_class_of(t), c)
    return out


# ---------------------------------------------------------------------------
# Confusion dataset rows (one per word x condition) and artifact exports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionRecord:
    """Aligned transcription outcome for one word under one condition."""

    word: str
    condition: str
    clean_phonemes: PhonemeSequence
    hl_phonemes: PhonemeSequence
    ops: tuple[EditOp, ...]


def record_from_alignment(
    word: str, condition: str, ref: Sequence[str], hyp: Sequence[str]
) -> ConfusionRecord:
    result = align(ref, hyp)
    return ConfusionRecord(
        word=word,
        condition=condition,
        clean_phonemes=tuple(ref),
        hl_phonemes=tuple(hyp),
        ops=result.ops,
    )


DATASET_COLUMNS = ("word", "condition", "clean_phonemes", "hl_phonemes", "ops")


def write_dataset(records: Iterable[ConfusionRecord], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.word,
                    rec.condition,
                    " ".join(rec.clean_phonemes),
                    " ".join(rec.hl_phonemes),
                    ops_to_string(rec.ops),
                ]
            )


def read_dataset(path: str | Path) -> list[ConfusionRecord]:
    records: list[ConfusionRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DATASET_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"dataset {path} missing columns: {sorted(missing)}")
        for row in reader:
            clean = tuple(row["clean_phonemes"].split())
            hl = tuple(row["hl_phonemes"].split())
            ops = ops_from_string(row["ops"], clean)
            records.append(
                ConfusionRecord(
                    word=row["word"],
                    condition=row["condition"],
                    clean_phonemes=clean,
                    hl_phonemes=hl,
                    ops=ops,
                )
            )
    return records


def matrix_from_records(
    records: Iterable[ConfusionRecord], count_matches: bool = True
) -> ConfusionMatrix:
    matrix = ConfusionMatrix()
    for rec in records:
        accumulate(matrix, rec.ops, count_matches=count_matches)
    return matrix


def write_matrix_csv(matrix: ConfusionMatrix, path: str | Path) -> None:
    """Rows: original, transcribed, count; sorted for stable diffs."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["original", "transcribed", "count"])
        for (o, t), c in sorted(matrix.counts.items()):
            writer.writerow([o, t, c])


def read_matrix_csv(path: str | Path) -> ConfusionMatrix:
    matrix = ConfusionMatrix()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            matrix.add(row["original"], row["transcribed"], int(row["count"]))
    return matrix


def write_stats_json(matrix: ConfusionMatrix, path: str | Path, top_n: int = 20) -> None:
    """Error distribution, top confusions, and articulation projection."""
    stats = {
        "distribution": error_distribution(matrix),
        "top_confusions": [
            {"original": o, "transcribed": t, "count": c}
            for (o, t), c in top_confusions(matrix, top_n)
        ],
        "articulation_projection": [
            {"original": o, "transcribed": t, "count": c}
            for (o, t), c in sorted(
                articulation_projection(matrix).counts.items(),
                key=lambda item: (-item[1], item[0]),
            )
        ],
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
