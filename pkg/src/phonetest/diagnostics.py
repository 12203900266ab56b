"""Diagnostic value assessment, cohort simulation, and ROC analysis.

Three concerns share this module: measuring how well each battery item
separates normal-hearing from hearing-impaired listeners (via the ASR
bridge), Monte Carlo simulation of a listener cohort through a
psychometric response model, and threshold diagnostics (ROC, AUC,
Youden's J, sensitivity/specificity).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .alignment import edit_distance
from .asr import Backend, BackendError, TranscriptionRequest, forced_choice
from .curation import CandidatePair, read_battery
from .dsp import (
    Audiogram,
    AudioBuffer,
    MixSpec,
    apply_filter,
    design_hl_filter,
    gen_pink_noise,
    mix_at_snr,
    rms_normalize,
)
from .lexicon import Lexicon


@dataclass(frozen=True)
class PsychometricParams:
    """Response model constants.

    k scales phoneme distance into discriminability; hl_impact_db is the
    per-dB-HL penalty; chance_floor is the 2AFC guessing rate.
    """

    k: float = 0.8
    hl_impact_db: float = 0.05
    chance_floor: float = 0.5

    def __post_init__(self) -> None:
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.hl_impact_db < 0:
            raise ValueError("hl_impact_db must be non-negative")
        if not 0.0 <= self.chance_floor < 1.0:
            raise ValueError("chance_floor must be in [0, 1)")


def logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def p_correct(
    delta_d: float, mean_hl_db: float, params: PsychometricParams | None = None
) -> float:
    """Probability of answering a 2AFC item correctly.

    p = max(chance_floor, sigmoid(k * delta_d - hl_impact * mean_hl_db)).
    delta_d is the phoneme edit distance between the pair's words;
    mean_hl_db the listener's mean hearing threshold.
    """
    if delta_d < 0:
        raise ValueError("delta_d must be non-negative")
    if mean_hl_db < 0:
        raise ValueError("mean_hl_db must be non-negative")
    params = params or PsychometricParams()
    raw = logistic(params.k * delta_d - params.hl_impact_db * mean_hl_db)
    return max(params.chance_floor, raw)


# ---------------------------------------------------------------------------
# Item assessment through the ASR bridge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ItemDiagnostics:
    item: CandidatePair
    snr_db: float
    nh_correct_pct: float
    hl_correct_pct: float
    complete: bool = True

    def __post_init__(self) -> None:
        for v in (self.nh_correct_pct, self.hl_correct_pct):
            if not 0.0 <= v <= 100.0:
                raise ValueError("percentages live in [0, 100]")

    @property
    def difference(self) -> float:
        return self.nh_correct_pct - self.hl_correct_pct


def assess_items(
    battery: Sequence[CandidatePair],
    stimuli: Callable[[str], AudioBuffer],
    lex: Lexicon,
    backend: Backend,
    snr_levels: Sequence[float],
    trials_per_condition: int = 50,
    hl_audiogram: Audiogram | None = None,
    seed: int = 0,
    sample_rate: int = 16000,
    mix: MixSpec | None = None,
    choice_mode: str = "deterministic",
) -> list[ItemDiagnostics]:
    """Percent-correct per item and SNR under NH and HL conditions.

    NH trials mix the word with pink noise; HL trials additionally pass
    the complete mixture through the hearing-loss filter, so the noise is
    degraded along with the speech. stimuli maps a word to its clean
    recording. A backend failure marks every row of that item incomplete
    rather than aborting the run.
    """
    if not battery:
        raise ValueError("battery is empty")
    if trials_per_condition < 1:
        raise ValueError("trials_per_condition must be at least 1")
    hl_audiogram = hl_audiogram or _moderate()
    base_mix = mix or MixSpec(snr_db=0.0)
    coeffs = design_hl_filter(hl_audiogram, sample_rate)

    out: list[ItemDiagnostics] = []
    for item_idx, item in enumerate(battery):
        speech = rms_normalize(stimuli(item.target), -20.0)
        failed = False
        rows: list[ItemDiagnostics] = []
        for snr in snr_levels:
            spec = MixSpec(snr_db=snr, lead_in_s=base_mix.lead_in_s, ramp_s=base_mix.ramp_s)
            pct = {}
            for condition, filtered in (("NH", False), ("HL", True)):
                correct = 0
                for trial in range(trials_per_condition):
                    noise_seed = _derive_seed(
                        seed, f"{item.target}|{item.distractor}|{condition}|{snr}|{trial}"
                    )
                    noise = gen_pink_noise(
                        speech.duration_s + 2 * spec.lead_in_s, sample_rate, noise_seed
                    )
                    mixed = mix_at_snr(speech, noise, spec)
                    if filtered:
                        mixed = apply_filter(mixed, coeffs)
                    request = TranscriptionRequest(
                        mixed, condition, word=item.target, trial=trial
                    )
                    try:
                        hypothesis = backend.transcribe(request)
                    except BackendError:
                        failed = True
                        break
                    choice = forced_choice(
                        hypothesis,
                        item.target,
                        item.distractor,
                        lex,
                        mode=choice_mode,
                        seed=_derive_seed(seed, f"choice|{condition}|{snr}|{trial}|{item_idx}"),
                    )
                    correct += choice == item.target
                if failed:
                    break
                pct[condition] = 100.0 * correct / trials_per_condition
            if failed:
                break
            rows.append(
                ItemDiagnostics(
                    item=item,
                    snr_db=float(snr),
                    nh_correct_pct=pct["NH"],
                    hl_correct_pct=pct["HL"],
                )
            )
        if failed:
            out.extend(
                ItemDiagnostics(
                    item=item,
                    snr_db=float(snr),
                    nh_correct_pct=0.0,
                    hl_correct_pct=0.0,
                    complete=False,
                )
                for snr in snr_levels
            )
        else:
            out.extend(rows)
    return out


def optimal_snr(rows: Sequence[ItemDiagnostics]) -> dict[tuple[str, str], float]:
    """Per item, the SNR with the largest NH-HL difference (first wins ties)."""
    best: dict[tuple[str, str], ItemDiagnostics] = {}
    for row in rows:
        if not row.complete:
            continue
        ident = (row.item.target, row.item.distractor)
        cur = best.get(ident)
        if cur is None or row.difference > cur.difference:
            best[ident] = row
    return {ident: row.snr_db for ident, row in best.items()}


def select_diagnostic(
    rows: Sequence[ItemDiagnostics], threshold_pp: float = 5.0
) -> list[ItemDiagnostics]:
    """Items whose best-SNR difference exceeds the threshold.

    Returns one row per item (the best SNR), sorted by difference
    descending; incomplete items are excluded. Ties keep input order.
    """
    if threshold_pp < 0:
        raise ValueError("threshold_pp must be non-negative")
    best: dict[tuple[str, str], ItemDiagnostics] = {}
    order: list[tuple[str, str]] = []
    for row in rows:
        if not row.complete:
            continue
        ident = (row.item.target, row.item.distractor)
        if ident not in best:
            order.append(ident)
            best[ident] = row
        elif row.difference > best[ident].difference:
            best[ident] = row
    kept = [best[ident] for ident in order if best[ident].difference > threshold_pp]
    kept.sort(key=lambda r: -r.difference)
    return kept


DIAGNOSTICS_COLUMNS = (
    "OriginalWord",
    "Distractor",
    "SNR",
    "NH_Perc_corr",
    "HL_Perc_corr",
    "Difference",
)


def write_diagnostics(rows: Iterable[ItemDiagnostics], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DIAGNOSTICS_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.item.target,
                    r.item.distractor,
                    _fmt(r.snr_db),
                    _fmt(r.nh_correct_pct),
                    _fmt(r.hl_correct_pct),
                    _fmt(r.difference),
                ]
            )


def read_diagnostics(path: str | Path) -> list[dict]:
    """Diagnostics rows as plain dicts (no battery join needed)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DIAGNOSTICS_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"diagnostics {path} missing columns: {sorted(missing)}")
        for row in reader:
            rows.append(
                {
                    "target": row["OriginalWord"],
                    "distractor": row["Distractor"],
                    "snr_db": float(row["SNR"]),
                    "nh_correct_pct": float(row["NH_Perc_corr"]),
                    "hl_correct_pct": float(row["HL_Perc_corr"]),
                    "difference": float(row["Difference"]),
                }
            )
    return rows


def reference_means(path: str | Path, snr_db: float) -> tuple[float, float]:
    """Mean NH and HL percent correct at one SNR from a diagnostics file."""
    rows = [r for r in read_diagnostics(path) if r["snr_db"] == snr_db]
    if not rows:
        raise ValueError(f"diagnostics file {path} has no rows at SNR {snr_db}")
    nh = sum(r["nh_correct_pct"] for r in rows) / len(rows)
    hl = sum(r["hl_correct_pct"] for r in rows) / len(rows)
    return nh, hl


def _fmt(x: float) -> str:
    return f"{x:g}"


def _moderate() -> Audiogram:
    from .dsp import builtin_audiogram

    return builtin_audiogram("moderate")


def _derive_seed(master: int, tag: str) -> int:
    import hashlib

    digest = hashlib.md5(f"{master}|{tag}".encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


# ---------------------------------------------------------------------------
# Cohort simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulatedParticipant:
    group: str  # "NH" or "HI"
    audiogram: Audiogram
    seed: int
    item_subset: tuple[int, ...]
    score: float

    def __post_init__(self) -> None:
        if self.group not in ("NH", "HI"):
            raise ValueError(f"unknown group {self.group!r}")
        if not 0.0 <= self.score <= 100.0:
            raise ValueError("score lives in [0, 100]")


@dataclass(frozen=True)
class RocResult:
    points: tuple[tuple[float, float, float], ...]  # (fpr, tpr, threshold)
    auc: float
    youden_threshold: float
    sensitivity: float
    specificity: float
    fixed_threshold: float
    fixed_sensitivity: float
    fixed_specificity: float


@dataclass(frozen=True)
class CohortRun:
    participants: tuple[SimulatedParticipant, ...]
    roc: RocResult
    seed: int
    subset_size: int
    params: PsychometricParams


def simulate_cohort(
    battery: Sequence[CandidatePair],
    lex: Lexicon,
    n_nh: int = 50,
    n_hi: int = 50,
    subset_size: int = 50,
    base_hi_audiogram: Audiogram | None = None,
    params: PsychometricParams | None = None,
    seed: int = 0,
    fixed_threshold: float = 80.0,
    perturb_db: float = 10.0,
) -> CohortRun:
    """Monte Carlo cohort: NH listeners at 0 dB HL, HI listeners on a
    perturbed base audiogram, each answering a random battery subset
    through the psychometric model.

    Per-participant generators are spawned from one seed sequence, so
    the run is reproducible and participants are independent.
    """
    if n_nh < 1 or n_hi < 1:
        raise ValueError("both groups need at least one participant")
    if not 1 <= subset_size <= len(battery):
        raise ValueError(
            f"subset_size {subset_size} outside 1..{len(battery)} (battery size)"
        )
    params = params or PsychometricParams()
    base_hi = base_hi_audiogram or _moderate()
    nh_audiogram = Audiogram(
        "flat-0", tuple((f, 0.0) for f, _ in base_hi.points)
    )

    # phoneme distance per item, fixed across participants
    deltas = []
    for item in battery:
        deltas.append(
            float(edit_distance(lex.primary(item.target), lex.primary(item.distractor)))
        )

    root = np.random.SeedSequence(seed)
    children = root.spawn(n_nh + n_hi)
    participants: list[SimulatedParticipant] = []
    for idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        group = "NH" if idx < n_nh else "HI"
        if group == "NH":
            audiogram = nh_audiogram
        else:
            audiogram = base_hi.perturbed(rng, spread_db=perturb_db)
        mean_hl = audiogram.mean_threshold()
        subset = rng.choice(len(battery), size=subset_size, replace=False)
        correct = 0
        for item_idx in subset:
            p = p_correct(deltas[item_idx], mean_hl, params)
            correct += rng.random() < p
        participants.append(
            SimulatedParticipant(
                group=group,
                audiogram=audiogram,
                seed=int(child.generate_state(1)[0]),
                item_subset=tuple(int(i) for i in sorted(subset)),
                score=100.0 * correct / subset_size,
            )
        )

    labeled = [(p.group, p.score) for p in participants]
    roc = roc_analysis(labeled, fixed_threshold=fixed_threshold)
    return CohortRun(
        participants=tuple(participants),
        roc=roc,
        seed=seed,
        subset_size=subset_size,
        params=params,
    )


def roc_analysis(
    labeled_scores: Iterable[tuple[str, float]], fixed_threshold: float = 80.0
) -> RocResult:
    """ROC with NH as the positive class (score >= threshold -> NH).

    The Youden-optimal threshold maximizes tpr - fpr, ties going to the
    higher (stricter) threshold. The fixed-threshold sensitivity and
    specificity are reported from the perspective of detecting hearing
    impairment: sensitivity = HI share below threshold, specificity =
    NH share at or above it.
    """
    nh_scores: list[float] = []
    hi_scores: list[float] = []
    for label, score in labeled_scores:
        if label == "NH":
            nh_scores.append(score)
        elif label == "HI":
            hi_scores.append(score)
        else:
            raise ValueError(f"unknown label {label!r}")
    if not nh_scores or not hi_scores:
        raise ValueError("roc_analysis needs scores from both classes")

    nh = np.asarray(nh_scores, dtype=np.float64)
    hi = np.asarray(hi_scores, dtype=np.float64)

    def rates(threshold: float) -> tuple[float, float]:
        tpr = float(np.mean(nh >= threshold))
        fpr = float(np.mean(hi >= threshold))
        return fpr, tpr

    thresholds = sorted(set(nh.tolist()) | set(hi.tolist()))
    # sentinels give the (1,1) and (0,0) endpoints
    sweep = [-math.inf, *thresholds, math.inf]
    points = tuple((*rates(t), t) for t in sweep)

    # trapezoid over the (fpr, tpr) path, which runs from (1,1) to (0,0)
    auc = 0.0
    for (f1, t1, _), (f2, t2, _) in zip(points, points[1:]):
        auc += (f1 - f2) * (t1 + t2) / 2.0

    best_j = -math.inf
    best_threshold = -math.inf
    best_rates = (0.0, 0.0)
    for f, t, thr in points:
        j = t - f
        if j > best_j or (j == best_j and thr > best_threshold):
            best_j = j
            best_threshold = thr
            best_rates = (f, t)
    fixed_fpr, fixed_tpr = rates(fixed_threshold)
    return RocResult(
        points=points,
        auc=auc,
        youden_threshold=best_threshold,
        sensitivity=1.0 - best_rates[0],
        specificity=best_rates[1],
        fixed_threshold=fixed_threshold,
        fixed_sensitivity=1.0 - fixed_fpr,
        fixed_specificity=fixed_tpr,
    )


def classify_human(score: float, nh_mean: float, hl_mean: float) -> str:
    """Closer-mean classification; exact midpoint counts as Hearing Loss."""
    if nh_mean == hl_mean:
        raise ValueError("reference means coincide; classification undefined")
    d_nh = abs(score - nh_mean)
    d_hl = abs(score - hl_mean)
    return "Normal Hearing" if d_nh < d_hl else "Hearing Loss"


# ---------------------------------------------------------------------------
# Cohort artifacts
# ---------------------------------------------------------------------------

def cohort_to_dict(run: CohortRun) -> dict:
    return {
        "seed": run.seed,
        "subset_size": run.subset_size,
        "params": {
            "k": run.params.k,
            "hl_impact_db": run.params.hl_impact_db,
            "chance_floor": run.params.chance_floor,
        },
        "participants": [
            {
                "group": p.group,
                "score": p.score,
                "mean_hl_db": p.audiogram.mean_threshold(),
                "seed": p.seed,
                "items": list(p.item_subset),
            }
            for p in run.participants
        ],
        "roc": [[f, t, _json_safe(thr)] for f, t, thr in run.roc.points],
        "auc": run.roc.auc,
        "youden_threshold": _json_safe(run.roc.youden_threshold),
        "sensitivity": run.roc.sensitivity,
        "specificity": run.roc.specificity,
        "fixed_threshold": run.roc.fixed_threshold,
        "fixed_sensitivity": run.roc.fixed_sensitivity,
        "fixed_specificity": run.roc.fixed_specificity,
    }


def _json_safe(x: float):
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return x


def write_cohort_json(run: CohortRun, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cohort_to_dict(run), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_scores_csv(run: CohortRun, path: str | Path) -> None:
    """Histogram/boxplot source data: one row per participant."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "score"])
        for p in run.participants:
            writer.writerow([p.group, _fmt(p.score)])
