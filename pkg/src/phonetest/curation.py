"""Battery curation: selecting diagnostically targeted 2AFC word pairs.

Selection is two-phase. Phase 1 guarantees coverage of the most frequent
confusion types; Phase 2 tops the battery up so the error-type mix
matches the observed substitution/deletion/insertion proportions via
largest-remainder apportionment. The whole pass is deterministic: record
order and sorted tie-breaks decide everything, no RNG involved.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .alignment import EPSILON, EditKind, EditOp, edit_distance
from .confusion import ConfusionRecord, frequency_relevance_of
from .lexicon import Lexicon, PhonemeSequence, syllable_count, word_distance

ERROR_TYPES = (EditKind.SUBSTITUTION, EditKind.DELETION, EditKind.INSERTION)


@dataclass(frozen=True, order=True)
class ConfusionKey:
    """Identity of one confusion type: kind + the phonemes involved."""

    error_type: EditKind
    clean: str  # EPSILON for insertions
    hl: str  # EPSILON for deletions

    @classmethod
    def from_op(cls, op: EditOp) -> "ConfusionKey":
        if op.kind is EditKind.MATCH:
            raise ValueError("matches do not form confusion keys")
        return cls(
            error_type=op.kind,
            clean=op.ref_phoneme if op.ref_phoneme is not None else EPSILON,
            hl=op.hyp_phoneme if op.hyp_phoneme is not None else EPSILON,
        )

    @property
    def label(self) -> str:
        return f"{self.error_type.value}_{self.clean}_{self.hl}"


@dataclass(frozen=True)
class CandidatePair:
    target: str
    distractor: str
    error_type: EditKind
    clean_phoneme: str
    hl_phoneme: str
    distractor_source: str  # "ASR-observed" or "phonetically-generated"
    frequency_relevance: str | None = None

    def __post_init__(self) -> None:
        if self.target == self.distractor:
            raise ValueError("target and distractor must differ")
        if self.error_type not in ERROR_TYPES:
            raise ValueError(f"not an error type: {self.error_type}")
        if self.distractor_source not in ("ASR-observed", "phonetically-generated"):
            raise ValueError(f"unknown distractor source {self.distractor_source!r}")

    @property
    def key(self) -> ConfusionKey:
        return ConfusionKey(self.error_type, self.clean_phoneme, self.hl_phoneme)


@dataclass(frozen=True)
class CurationConfig:
    total_items: int = 200
    phase1_top_k: int = 10
    max_word_lev: int = 2
    max_phoneme_lev: int = 8
    target_mix: tuple[float, float, float] = (0.527, 0.349, 0.124)  # sub, del, ins

    def __post_init__(self) -> None:
        if self.total_items < 1 or self.phase1_top_k < 1:
            raise ValueError("totals must be positive")
        if abs(sum(self.target_mix) - 1.0) > 1e-3:
            raise ValueError("target_mix must sum to 1")
        if any(w < 0 for w in self.target_mix):
            raise ValueError("target_mix weights must be non-negative")


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Hamilton apportionment of total into len(weights) integer parts."""
    if total < 0:
        raise ValueError("total must be non-negative")
    scale = sum(weights)
    if scale <= 0:
        raise ValueError("weights must have positive sum")
    quotas = [w / scale * total for w in weights]
    floors = [math.floor(q) for q in quotas]
    shortfall = total - sum(floors)
    by_remainder = sorted(
        range(len(weights)), key=lambda i: (floors[i] - quotas[i], i)
    )
    for i in by_remainder[:shortfall]:
        floors[i] += 1
    return floors


def filter_candidate(
    pair: CandidatePair, lex: Lexicon, cfg: CurationConfig
) -> str | None:
    """None if the pair is acceptable, else the first failed criterion."""
    if word_distance(pair.target, pair.distractor) > cfg.max_word_lev:
        return "word_lev"
    t_prons = lex.lookup(pair.target)
    d_prons = lex.lookup(pair.distractor)
    if not t_prons or not d_prons:
        return "lexicon"
    if syllable_count(t_prons[0]) != syllable_count(d_prons[0]):
        return "syllables"
    if edit_distance(t_prons[0], d_prons[0]) > cfg.max_phoneme_lev:
        return "phoneme_lev"
    return None


def _op_matches(op: EditOp, key: ConfusionKey) -> bool:
    return op.kind is key.error_type and (
        (op.ref_phoneme if op.ref_phoneme is not None else EPSILON) == key.clean
        and (op.hyp_phoneme if op.hyp_phoneme is not None else EPSILON) == key.hl
    )


def _edited_sequences(pron: PhonemeSequence, key: ConfusionKey) -> list[PhonemeSequence]:
    """All single applications of the key's edit to a pronunciation."""
    out: list[PhonemeSequence] = []
    if key.error_type is EditKind.SUBSTITUTION:
        for i, p in enumerate(pron):
            if p == key.clean:
                out.append(pron[:i] + (key.hl,) + pron[i + 1 :])
    elif key.error_type is EditKind.DELETION:
        for i, p in enumerate(pron):
            if p == key.clean:
                out.append(pron[:i] + pron[i + 1 :])
    else:
        for i in range(len(pron) + 1):
            out.append(pron[:i] + (key.hl,) + pron[i:])
    return out


def generate_distractors(
    target: str,
    key: ConfusionKey,
    lex: Lexicon,
    records: Sequence[ConfusionRecord] = (),
) -> list[CandidatePair]:
    """Candidate pairs for one target word and confusion type.

    Words the recognizer actually produced for this target (rows whose
    edit script contains the key) come first; words reachable by applying
    the key's edit to the target's pronunciation follow. Unfiltered;
    the caller applies filter_candidate.
    """
    if target not in lex:
        raise KeyError(f"target {target!r} not in lexicon")

    def make(distractor: str, source: str) -> CandidatePair:
        return CandidatePair(
            target=target,
            distractor=distractor,
            error_type=key.error_type,
            clean_phoneme=key.clean,
            hl_phoneme=key.hl,
            distractor_source=source,
        )

    pairs: list[CandidatePair] = []
    seen: set[str] = set()
    for rec in records:
        if rec.word != target:
            continue
        if not any(_op_matches(op, key) for op in rec.ops):
            continue
        observed = sorted(
            lex.reverse_lookup(rec.hl_phonemes) - {target},
            key=lambda w: (len(w), w),
        )
        for word in observed:
            if word not in seen:
                seen.add(word)
                pairs.append(make(word, "ASR-observed"))

    for pron in lex.lookup(target):
        for edited in _edited_sequences(pron, key):
            for word in sorted(
                lex.reverse_lookup(edited) - {target}, key=lambda w: (len(w), w)
            ):
                if word not in seen:
                    seen.add(word)
                    pairs.append(make(word, "phonetically-generated"))
    return pairs


@dataclass
class CurationResult:
    pairs: list[CandidatePair]
    warnings: list[str]
    type_targets: dict[EditKind, int]
    type_counts: Counter = field(default_factory=Counter)


def _candidate_pool(
    key: ConfusionKey,
    records: Sequence[ConfusionRecord],
    lex: Lexicon,
    cfg: CurationConfig,
) -> list[CandidatePair]:
    """Accepted candidates for a key, in deterministic priority order."""
    targets_in_order: list[str] = []
    seen_targets: set[str] = set()
    for rec in records:
        if rec.word in seen_targets or rec.word not in lex:
            continue
        if any(_op_matches(op, key) for op in rec.ops):
            seen_targets.add(rec.word)
            targets_in_order.append(rec.word)
    pool: list[CandidatePair] = []
    seen_pairs: set[tuple[str, str]] = set()
    for target in targets_in_order:
        for pair in generate_distractors(target, key, lex, records):
            ident = (pair.target, pair.distractor)
            if ident in seen_pairs:
                continue
            seen_pairs.add(ident)
            if filter_candidate(pair, lex, cfg) is None:
                pool.append(pair)
    return pool


def curate(
    records: Sequence[ConfusionRecord],
    lex: Lexicon,
    cfg: CurationConfig | None = None,
    relevance_table: Mapping[str, str] | None = None,
) -> CurationResult:
    """Select the battery. See the module docstring for the strategy."""
    if not records:
        raise ValueError("confusion dataset is empty")
    cfg = cfg or CurationConfig()

    key_counts: Counter = Counter()
    for rec in records:
        for op in rec.ops:
            if op.kind is not EditKind.MATCH:
                key_counts[ConfusionKey.from_op(op)] += 1
    ranked = sorted(key_counts, key=lambda k: (-key_counts[k], k.label))

    targets = largest_remainder(cfg.total_items, cfg.target_mix)
    type_targets = dict(zip(ERROR_TYPES, targets))

    selected: list[CandidatePair] = []
    selected_ids: set[tuple[str, str]] = set()
    type_counts: Counter = Counter()
    warnings: list[str] = []
    pools: dict[ConfusionKey, list[CandidatePair]] = {}

    def pool(key: ConfusionKey) -> list[CandidatePair]:
        if key not in pools:
            pools[key] = _candidate_pool(key, records, lex, cfg)
        return pools[key]

    def take(pair: CandidatePair) -> None:
        selected.append(pair)
        selected_ids.add((pair.target, pair.distractor))
        type_counts[pair.error_type] += 1

    # Phase 1: coverage of the most frequent confusion types.
    quota = cfg.total_items // cfg.phase1_top_k // 2
    for key in ranked[: cfg.phase1_top_k]:
        taken = 0
        for pair in pool(key):
            if taken >= quota or len(selected) >= cfg.total_items:
                break
            if (pair.target, pair.distractor) in selected_ids:
                continue
            take(pair)
            taken += 1

    # Phase 2: proportional fill toward the apportioned mix.
    for kind in ERROR_TYPES:
        needed = type_targets[kind] - type_counts[kind]
        if needed <= 0:
            continue
        for key in ranked:
            if key.error_type is not kind:
                continue
            for pair in pool(key):
                if needed == 0 or len(selected) >= cfg.total_items:
                    break
                if (pair.target, pair.distractor) in selected_ids:
                    continue
                take(pair)
                needed -= 1
            if needed == 0 or len(selected) >= cfg.total_items:
                break
        if len(selected) >= cfg.total_items and needed > 0:
            warnings.append(
                f"{kind.value}: battery reached {cfg.total_items} items before "
                f"its target of {type_targets[kind]}"
            )
        elif needed > 0:
            warnings.append(f"{kind.value}: short by {needed} candidate pairs")

    pairs = annotate_relevance(selected, relevance_table)
    for pair in pairs:
        reason = filter_candidate(pair, lex, cfg)
        assert reason is None, f"selected pair fails its own filter: {reason}"
    return CurationResult(
        pairs=pairs,
        warnings=warnings,
        type_targets=type_targets,
        type_counts=type_counts,
    )


def annotate_relevance(
    pairs: Iterable[CandidatePair], table: Mapping[str, str] | None = None
) -> list[CandidatePair]:
    """Tag each pair with the frequency relevance of its clean phoneme.

    Insertions have no clean phoneme, so the inserted one is used.
    """
    out = []
    for pair in pairs:
        phoneme = (
            pair.hl_phoneme
            if pair.error_type is EditKind.INSERTION
            else pair.clean_phoneme
        )
        out.append(replace(pair, frequency_relevance=frequency_relevance_of(phoneme, table)))
    return out


BATTERY_COLUMNS = (
    "OriginalWord",
    "Distractor",
    "ErrorType",
    "CleanPhonemeInvolved",
    "HLPhonemeInvolved",
    "FrequencyRelevance",
    "DistractorSource",
)


def write_battery(pairs: Iterable[CandidatePair], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BATTERY_COLUMNS)
        for p in pairs:
            writer.writerow(
                [
                    p.target,
                    p.distractor,
                    p.error_type.value,
                    p.clean_phoneme,
                    p.hl_phoneme,
                    p.frequency_relevance or "",
                    p.distractor_source,
                ]
            )


def read_battery(path: str | Path) -> list[CandidatePair]:
    pairs: list[CandidatePair] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(BATTERY_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"battery {path} missing columns: {sorted(missing)}")
        for row in reader:
            pairs.append(
                CandidatePair(
                    target=row["OriginalWord"],
                    distractor=row["Distractor"],
                    error_type=EditKind(row["ErrorType"]),
                    clean_phoneme=row["CleanPhonemeInvolved"],
                    hl_phoneme=row["HLPhonemeInvolved"],
                    distractor_source=row["DistractorSource"],
                    frequency_relevance=row["FrequencyRelevance"] or None,
                )
            )
    if not pairs:
        raise ValueError(f"battery {path} has no items")
    return pairs
