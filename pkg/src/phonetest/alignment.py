"""Phoneme-sequence alignment: unit-cost Levenshtein with a full backtrace.

The backtrace makes the edit script explicit so confusion statistics can
be accumulated per operation. Tie-breaking is fixed (Match, then
Substitution, then Deletion, then Insertion) so the same inputs produce
the same script on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

EPSILON = ""  # absent-side marker used in confusion cells and keys


class EditKind(str, Enum):
    MATCH = "Match"
    SUBSTITUTION = "Substitution"
    DELETION = "Deletion"
    INSERTION = "Insertion"


@dataclass(frozen=True)
class EditOp:
    """One step of an edit script.

    position is the reference index the op applies at; for insertions it
    is the gap index (number of reference tokens consumed so far).
    """

    kind: EditKind
    ref_phoneme: str | None
    hyp_phoneme: str | None
    position: int

    def __post_init__(self) -> None:
        k = self.kind
        if k in (EditKind.MATCH, EditKind.SUBSTITUTION):
            if self.ref_phoneme is None or self.hyp_phoneme is None:
                raise ValueError(f"{k.value} op needs both phonemes")
            if k is EditKind.MATCH and self.ref_phoneme != self.hyp_phoneme:
                raise ValueError("Match op with differing phonemes")
            if k is EditKind.SUBSTITUTION and self.ref_phoneme == self.hyp_phoneme:
                raise ValueError("Substitution op with identical phonemes")
        elif k is EditKind.DELETION:
            if self.ref_phoneme is None or self.hyp_phoneme is not None:
                raise ValueError("Deletion op carries the reference phoneme only")
        elif k is EditKind.INSERTION:
            if self.hyp_phoneme is None or self.ref_phoneme is not None:
                raise ValueError("Insertion op carries the hypothesis phoneme only")


@dataclass(frozen=True)
class AlignmentResult:
    ops: tuple[EditOp, ...]
    distance: int
    per: float

    @property
    def error_ops(self) -> tuple[EditOp, ...]:
        return tuple(op for op in self.ops if op.kind is not EditKind.MATCH)


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Unit-cost Levenshtein distance without a backtrace (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def align(ref: Sequence[str], hyp: Sequence[str]) -> AlignmentResult:
    """Optimal edit script turning ref into hyp.

    PER is distance over reference length; for an empty reference it is
    taken over the hypothesis length instead (and 0 when both are empty),
    keeping the ratio within [0, 1] for the degenerate case.
    """
    ref = tuple(ref)
    hyp = tuple(hyp)
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row = dist[i]
        above = dist[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                above[j - 1] + (ri != hyp[j - 1]),
                above[j] + 1,
                row[j - 1] + 1,
            )

    # Backtrace from the corner, preferring Match > Sub > Del > Ins.
    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i - 1][j - 1] == here:
            i -= 1
            j -= 1
            ops.append(EditOp(EditKind.MATCH, ref[i], hyp[j], i))
        elif i > 0 and j > 0 and ref[i - 1] != hyp[j - 1] and dist[i - 1][j - 1] + 1 == here:
            i -= 1
            j -= 1
            ops.append(EditOp(EditKind.SUBSTITUTION, ref[i], hyp[j], i))
        elif i > 0 and dist[i - 1][j] + 1 == here:
            i -= 1
            ops.append(EditOp(EditKind.DELETION, ref[i], None, i))
        else:
            j -= 1
            ops.append(EditOp(EditKind.INSERTION, None, hyp[j], i))
    ops.reverse()

    distance = dist[n][m]
    if n > 0:
        per = distance / n
    elif m > 0:
        per = distance / m
    else:
        per = 0.0
    return AlignmentResult(ops=tuple(ops), distance=distance, per=per)


def replay(ref: Sequence[str], ops: Iterable[EditOp]) -> tuple[str, ...]:
    """Apply an edit script to ref, reconstructing the hypothesis."""
    ref = tuple(ref)
    out: list[str] = []
    i = 0
    for op in ops:
        if op.kind is EditKind.MATCH:
            if i >= len(ref) or ref[i] != op.ref_phoneme:
                raise ValueError(f"script out of sync at position {i}: {op}")
            out.append(ref[i])
            i += 1
        elif op.kind is EditKind.SUBSTITUTION:
            if i >= len(ref) or ref[i] != op.ref_phoneme:
                raise ValueError(f"script out of sync at position {i}: {op}")
            out.append(op.hyp_phoneme)  # type: ignore[arg-type]
            i += 1
        elif op.kind is EditKind.DELETION:
            if i >= len(ref) or ref[i] != op.ref_phoneme:
                raise ValueError(f"script out of sync at position {i}: {op}")
            i += 1
        else:
            out.append(op.hyp_phoneme)  # type: ignore[arg-type]
    if i != len(ref):
        raise ValueError(f"script consumed {i} of {len(ref)} reference tokens")
    return tuple(out)


# Compact textual form, one code per op: "M,S:S>F,M,D:T,I:AH0"
def ops_to_string(ops: Iterable[EditOp]) -> str:
    parts = []
    for op in ops:
        if op.kind is EditKind.MATCH:
            parts.append("M")
        elif op.kind is EditKind.SUBSTITUTION:
            parts.append(f"S:{op.ref_phoneme}>{op.hyp_phoneme}")
        elif op.kind is EditKind.DELETION:
            parts.append(f"D:{op.ref_phoneme}")
        else:
            parts.append(f"I:{op.hyp_phoneme}")
    return ",".join(parts)


def ops_from_string(text: str, ref: Sequence[str]) -> tuple[EditOp, ...]:
    """Inverse of ops_to_string.

    The compact form writes Match ops as a bare "M", so the reference
    sequence is needed to recover their phonemes; tokens that do carry a
    reference phoneme are cross-checked against it.
    """
    ref = tuple(ref)
    ops: list[EditOp] = []
    pos = 0
    for token in text.split(",") if text else []:
        if token == "M":
            if pos >= len(ref):
                raise ValueError(f"ops string overruns reference at token {token!r}")
            ops.append(EditOp(EditKind.MATCH, ref[pos], ref[pos], pos))
            pos += 1
        elif token.startswith("S:"):
            refp, _, hypp = token[2:].partition(">")
            if not refp or not hypp:
                raise ValueError(f"malformed substitution op {token!r}")
            if pos >= len(ref) or ref[pos] != refp:
                raise ValueError(f"substitution op {token!r} disagrees with reference")
            ops.append(EditOp(EditKind.SUBSTITUTION, refp, hypp, pos))
            pos += 1
        elif token.startswith("D:"):
            refp = token[2:]
            if pos >= len(ref) or ref[pos] != refp:
                raise ValueError(f"deletion op {token!r} disagrees with reference")
            ops.append(EditOp(EditKind.DELETION, refp, None, pos))
            pos += 1
        elif token.startswith("I:"):
            ops.append(EditOp(EditKind.INSERTION, None, token[2:], pos))
        else:
            raise ValueError(f"unknown op token {token!r}")
    if pos != len(ref):
        raise ValueError(f"ops string consumed {pos} of {len(ref)} reference tokens")
    return tuple(ops)
