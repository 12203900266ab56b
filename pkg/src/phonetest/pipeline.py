"""Stage orchestration: each stage reads its predecessor's artifacts and
writes its own under output_dir/<stage>/, plus a manifest carrying the
config hash so mismatched inputs are caught.

Artifacts are deliberately timestamp-free and written with sorted keys
and stable float formatting: the same config and seed must produce
byte-identical trees.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import confusion as cf
from .alignment import EditKind
from .asr import BackendError, TranscriptionRequest, make_backend
from .config import PipelineConfig, config_hash, read_corpus_manifest
from .curation import CandidatePair, curate, read_battery, write_battery
from .diagnostics import (
    assess_items,
    read_diagnostics,
    roc_analysis,
    select_diagnostic,
    simulate_cohort,
    write_cohort_json,
    write_diagnostics,
    write_scores_csv,
    _json_safe,
)
from .dsp import (
    Audiogram,
    MixSpec,
    apply_filter,
    builtin_audiogram,
    design_hl_filter,
    gen_pink_noise,
    mix_at_snr,
    read_wav,
    rms_normalize,
    write_wav,
)
from .lexicon import Lexicon, lexical_normalize, load_lexicon, syllable_count, word_distance
from .alignment import edit_distance

STAGES = (
    "degrade",
    "transcribe",
    "analyze",
    "curate",
    "assess",
    "simulate",
    "roc",
    "report",
)

# which stage must have run before each one (first missing gets reported)
_UPSTREAM = {
    "degrade": (),
    "transcribe": ("degrade",),
    "analyze": ("transcribe",),
    "curate": ("analyze",),
    "assess": ("curate", "degrade"),
    "simulate": ("curate",),
    "roc": ("simulate",),
    "report": ("analyze", "curate", "assess", "simulate", "roc"),
}


class PipelineError(RuntimeError):
    pass


@dataclass
class StageResult:
    stage: str
    artifacts: list[Path]
    warnings: list[str] = field(default_factory=list)
    skipped_items: int = 0
    total_items: int = 0

    @property
    def skip_fraction(self) -> float:
        return self.skipped_items / self.total_items if self.total_items else 0.0


def _stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    return Path(cfg.output_dir) / stage


def _manifest_path(cfg: PipelineConfig, stage: str) -> Path:
    return _stage_dir(cfg, stage) / "manifest.json"


def _write_manifest(cfg: PipelineConfig, result: StageResult) -> None:
    path = _manifest_path(cfg, result.stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "stage": result.stage,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "artifacts": sorted(
            str(p.relative_to(cfg.output_dir)) for p in result.artifacts
        ),
        "warnings": result.warnings,
        "skipped_items": result.skipped_items,
        "total_items": result.total_items,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_upstream(cfg: PipelineConfig, stage: str, force: bool) -> None:
    for upstream in _UPSTREAM[stage]:
        manifest = _manifest_path(cfg, upstream)
        if not manifest.exists():
            raise PipelineError(
                f"stage {stage!r} needs artifacts from {upstream!r}; "
                f"run {upstream} first"
            )
        with open(manifest, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("config_hash") != config_hash(cfg) and not force:
            raise PipelineError(
                f"artifacts in {manifest.parent} were produced under config hash "
                f"{data.get('config_hash')}, current is {config_hash(cfg)}; "
                f"rerun {upstream} or pass --force"
            )


def _hl_audiogram(cfg: PipelineConfig) -> Audiogram:
    if cfg.hl_audiogram is None:
        return builtin_audiogram("moderate")
    return Audiogram.from_json(cfg.hl_audiogram)


def _derive_seed(master: int, tag: str) -> int:
    import hashlib

    digest = hashlib.md5(f"{master}|{tag}".encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


def _fmt(x: float) -> str:
    return f"{x:g}"


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_degrade(cfg: PipelineConfig) -> StageResult:
    """Normalized clean copies plus noise-mixed, HL-filtered versions."""
    corpus = read_corpus_manifest(cfg.corpus_manifest)
    stage_dir = _stage_dir(cfg, "degrade")
    clean_dir = stage_dir / "clean"
    hl_dir = stage_dir / "hl"
    clean_dir.mkdir(parents=True, exist_ok=True)
    hl_dir.mkdir(parents=True, exist_ok=True)

    coeffs = design_hl_filter(_hl_audiogram(cfg), cfg.sample_rate)
    spec = MixSpec(snr_db=cfg.analysis_snr)
    result = StageResult("degrade", [], total_items=len(corpus))
    for word, wav_path in corpus:
        try:
            speech = rms_normalize(read_wav(wav_path, target_rate=cfg.sample_rate), -20.0)
        except (OSError, ValueError) as exc:
            result.warnings.append(f"skipped {word}: {exc}")
            result.skipped_items += 1
            continue
        noise = gen_pink_noise(
            speech.duration_s + 2 * spec.lead_in_s,
            cfg.sample_rate,
            _derive_seed(cfg.seed, f"degrade-noise|{word}"),
        )
        degraded = apply_filter(mix_at_snr(speech, noise, spec), coeffs)
        clean_path = clean_dir / f"{word}.wav"
        hl_path = hl_dir / f"{word}.wav"
        write_wav(speech, clean_path)
        write_wav(degraded, hl_path)
        result.artifacts += [clean_path, hl_path]
    if result.skipped_items == result.total_items:
        raise PipelineError("degrade: every corpus item failed to load")
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "degrade"))
    return result


TRANSCRIPT_COLUMNS = ("word", "condition", "transcript")


def stage_transcribe(cfg: PipelineConfig, force: bool = False) -> StageResult:
    """Run the ASR backend over clean and degraded audio."""
    _require_upstream(cfg, "transcribe", force)
    corpus = read_corpus_manifest(cfg.corpus_manifest)
    lex = load_lexicon(cfg.lexicon)
    backend = make_backend(cfg.backend, lex)
    degrade_dir = _stage_dir(cfg, "degrade")

    rows: list[tuple[str, str, str]] = []
    result = StageResult("transcribe", [], total_items=len(corpus))
    for word, _ in corpus:
        word_rows = []
        try:
            for condition, sub_dir in (("clean", "clean"), ("HL", "hl")):
                wav = degrade_dir / sub_dir / f"{word}.wav"
                if not wav.exists():
                    raise BackendError(f"missing degraded audio {wav}", condition, word)
                audio = read_wav(wav)
                text = backend.transcribe(
                    TranscriptionRequest(audio, condition, word=word)
                )
                word_rows.append((word, condition, text))
        except BackendError as exc:
            result.warnings.append(f"skipped {word}: {exc}")
            result.skipped_items += 1
            continue
        rows.extend(word_rows)

    if not rows:
        raise PipelineError("transcribe: no word survived the backend")
    out = _stage_dir(cfg, "transcribe") / "transcripts.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRANSCRIPT_COLUMNS)
        writer.writerows(rows)
    result.artifacts.append(out)
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "transcribe"))
    return result


def read_transcripts(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRANSCRIPT_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"transcripts {path} missing columns: {sorted(missing)}")
        return list(reader)


def stage_analyze(cfg: PipelineConfig, force: bool = False) -> StageResult:
    """Align clean-condition vs degraded-condition phonemes per word."""
    _require_upstream(cfg, "analyze", force)
    lex = load_lexicon(cfg.lexicon)
    transcripts = read_transcripts(_stage_dir(cfg, "transcribe") / "transcripts.csv")

    by_word: dict[str, dict[str, str]] = {}
    order: list[str] = []
    for row in transcripts:
        if row["word"] not in by_word:
            order.append(row["word"])
        by_word.setdefault(row["word"], {})[row["condition"]] = row["transcript"]

    def phonemes_of(text: str) -> tuple[str, ...]:
        text = text.strip()
        if not text:
            return ()
        try:
            return lex.primary(lexical_normalize(text, lex))
        except (KeyError, ValueError):
            return ()

    records = []
    result = StageResult("analyze", [], total_items=len(order))
    for word in order:
        conditions = by_word[word]
        if "clean" not in conditions or "HL" not in conditions:
            result.warnings.append(f"skipped {word}: missing a condition")
            result.skipped_items += 1
            continue
        records.append(
            cf.record_from_alignment(
                word,
                "HL",
                phonemes_of(conditions["clean"]),
                phonemes_of(conditions["HL"]),
            )
        )
    if not records:
        raise PipelineError("analyze: no complete word rows to align")

    stage_dir = _stage_dir(cfg, "analyze")
    dataset = stage_dir / "confusion_dataset.csv"
    matrix_csv = stage_dir / "confusion_matrix.csv"
    stats = stage_dir / "stats.json"
    cf.write_dataset(records, dataset)
    matrix = cf.matrix_from_records(records)
    cf.write_matrix_csv(matrix, matrix_csv)
    cf.write_stats_json(matrix, stats)
    result.artifacts += [dataset, matrix_csv, stats]
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "analyze"))
    return result


def stage_curate(cfg: PipelineConfig, force: bool = False) -> StageResult:
    _require_upstream(cfg, "curate", force)
    lex = load_lexicon(cfg.lexicon)
    records = cf.read_dataset(_stage_dir(cfg, "analyze") / "confusion_dataset.csv")
    outcome = curate(records, lex, cfg.curation)
    battery_path = _stage_dir(cfg, "curate") / "battery.csv"
    write_battery(outcome.pairs, battery_path)
    result = StageResult(
        "curate",
        [battery_path],
        warnings=list(outcome.warnings),
        skipped_items=cfg.curation.total_items - len(outcome.pairs),
        total_items=cfg.curation.total_items,
    )
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "curate"))
    return result


def stage_assess(cfg: PipelineConfig, force: bool = False) -> StageResult:
    _require_upstream(cfg, "assess", force)
    lex = load_lexicon(cfg.lexicon)
    battery = read_battery(_stage_dir(cfg, "curate") / "battery.csv")
    backend = make_backend(cfg.backend, lex)
    clean_dir = _stage_dir(cfg, "degrade") / "clean"

    def stimuli(word: str):
        return read_wav(clean_dir / f"{word}.wav")

    rows = assess_items(
        battery,
        stimuli,
        lex,
        backend,
        snr_levels=cfg.snr_levels,
        trials_per_condition=cfg.trials_per_condition,
        hl_audiogram=_hl_audiogram(cfg),
        seed=cfg.seed,
        sample_rate=cfg.sample_rate,
    )
    stage_dir = _stage_dir(cfg, "assess")
    diag_path = stage_dir / "diagnostics.csv"
    selected_path = stage_dir / "selected.csv"
    write_diagnostics(rows, diag_path)
    selected = select_diagnostic(rows, cfg.diagnostic_threshold_pp)
    write_diagnostics(selected, selected_path)

    incomplete = {
        (r.item.target, r.item.distractor) for r in rows if not r.complete
    }
    result = StageResult(
        "assess",
        [diag_path, selected_path],
        skipped_items=len(incomplete),
        total_items=len(battery),
    )
    for target, distractor in sorted(incomplete):
        result.warnings.append(f"item {target}/{distractor}: backend failed")
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "assess"))
    return result


def stage_simulate(cfg: PipelineConfig, force: bool = False) -> StageResult:
    _require_upstream(cfg, "simulate", force)
    lex = load_lexicon(cfg.lexicon)
    battery = read_battery(_stage_dir(cfg, "curate") / "battery.csv")
    result = StageResult("simulate", [], total_items=len(battery))
    subset = cfg.cohort.subset_size
    if subset > len(battery):
        result.warnings.append(
            f"subset_size {subset} exceeds battery size {len(battery)}; clamped"
        )
        subset = len(battery)
    run = simulate_cohort(
        battery,
        lex,
        n_nh=cfg.cohort.n_nh,
        n_hi=cfg.cohort.n_hi,
        subset_size=subset,
        base_hi_audiogram=_hl_audiogram(cfg),
        params=cfg.psychometric,
        seed=cfg.seed,
        fixed_threshold=cfg.cohort.fixed_threshold,
        perturb_db=cfg.cohort.perturb_db,
    )
    stage_dir = _stage_dir(cfg, "simulate")
    cohort_path = stage_dir / "cohort.json"
    scores_path = stage_dir / "scores.csv"
    write_cohort_json(run, cohort_path)
    write_scores_csv(run, scores_path)
    result.artifacts += [cohort_path, scores_path]
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "simulate"))
    return result


def read_scores_csv(path: str | Path) -> list[tuple[str, float]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"group", "score"} - set(reader.fieldnames):
            raise ValueError(f"scores file {path} needs group,score columns")
        return [(row["group"], float(row["score"])) for row in reader]


def stage_roc(cfg: PipelineConfig, force: bool = False) -> StageResult:
    _require_upstream(cfg, "roc", force)
    labeled = read_scores_csv(_stage_dir(cfg, "simulate") / "scores.csv")
    roc = roc_analysis(labeled, fixed_threshold=cfg.cohort.fixed_threshold)
    stage_dir = _stage_dir(cfg, "roc")
    stage_dir.mkdir(parents=True, exist_ok=True)

    summary_path = stage_dir / "roc.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "auc": roc.auc,
                "youden_threshold": _json_safe(roc.youden_threshold),
                "sensitivity": roc.sensitivity,
                "specificity": roc.specificity,
                "fixed_threshold": roc.fixed_threshold,
                "fixed_sensitivity": roc.fixed_sensitivity,
                "fixed_specificity": roc.fixed_specificity,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    points_path = stage_dir / "roc_points.csv"
    with open(points_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, threshold in roc.points:
            writer.writerow([_fmt(fpr), _fmt(tpr), _fmt(threshold)])

    result = StageResult("roc", [summary_path, points_path], total_items=len(labeled))
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "roc"))
    return result


def stage_report(cfg: PipelineConfig, force: bool = False) -> StageResult:
    """Analysis tables and figure source data, all as flat CSV/JSON."""
    _require_upstream(cfg, "report", force)
    lex = load_lexicon(cfg.lexicon)
    battery = read_battery(_stage_dir(cfg, "curate") / "battery.csv")
    matrix = cf.read_matrix_csv(_stage_dir(cfg, "analyze") / "confusion_matrix.csv")
    selected = read_diagnostics(_stage_dir(cfg, "assess") / "selected.csv")
    scores = read_scores_csv(_stage_dir(cfg, "simulate") / "scores.csv")

    stage_dir = _stage_dir(cfg, "report")
    tables = stage_dir / "tables"
    figures = stage_dir / "figures"
    tables.mkdir(parents=True, exist_ok=True)
    figures.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []

    def table(path: Path, header: list[str], rows: list[list]) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        artifacts.append(path)

    # dataset-level summaries
    table(
        tables / "table1_top_confusions.csv",
        ["rank", "original", "transcribed", "count"],
        [
            [i + 1, o, t, c]
            for i, ((o, t), c) in enumerate(cf.top_confusions(matrix, 20))
        ],
    )
    projection = cf.articulation_projection(matrix)
    table(
        tables / "table2_articulation_confusions.csv",
        ["original_class", "transcribed_class", "count"],
        [
            [o, t, c]
            for (o, t), c in sorted(
                projection.counts.items(), key=lambda kv: (-kv[1], kv[0])
            )
        ],
    )
    table(
        tables / "table3_diagnostic_items.csv",
        ["OriginalWord", "Distractor", "SNR", "NH_Perc_corr", "HL_Perc_corr", "Difference"],
        [
            [r["target"], r["distractor"], _fmt(r["snr_db"]), _fmt(r["nh_correct_pct"]),
             _fmt(r["hl_correct_pct"]), _fmt(r["difference"])]
            for r in selected
        ],
    )

    # battery-level figure data
    from .curation import ERROR_TYPES, largest_remainder

    type_counts = {kind: 0 for kind in ERROR_TYPES}
    for item in battery:
        type_counts[item.error_type] += 1
    targets = largest_remainder(len(battery), cfg.curation.target_mix)
    table(
        figures / "fig1_error_distribution.csv",
        ["error_type", "curated_count", "target_count"],
        [
            [kind.value, type_counts[kind], target]
            for kind, target in zip(ERROR_TYPES, targets)
        ],
    )

    from collections import Counter

    key_counts = Counter(item.key.label for item in battery)
    table(
        figures / "fig2_top_confusions.csv",
        ["confusion", "items"],
        [[label, n] for label, n in sorted(key_counts.items(), key=lambda kv: (-kv[1], kv[0]))[:20]],
    )

    sub_matrix = cf.ConfusionMatrix()
    for item in battery:
        if item.error_type is EditKind.SUBSTITUTION:
            sub_matrix.add(item.clean_phoneme, item.hl_phoneme)
    sub_projection = cf.articulation_projection(sub_matrix)
    table(
        figures / "fig3_articulation_matrix.csv",
        ["original_class", "transcribed_class", "items"],
        [
            [o, t, c]
            for (o, t), c in sorted(
                sub_projection.counts.items(), key=lambda kv: (-kv[1], kv[0])
            )
        ],
    )

    char_rows = []
    for item in battery:
        t_pron = lex.primary(item.target)
        d_pron = lex.primary(item.distractor)
        char_rows.append(
            [
                item.target,
                item.distractor,
                syllable_count(t_pron),
                syllable_count(d_pron),
                word_distance(item.target, item.distractor),
                edit_distance(t_pron, d_pron),
            ]
        )
    table(
        figures / "fig4_item_characteristics.csv",
        ["target", "distractor", "target_syllables", "distractor_syllables",
         "word_lev", "phoneme_lev"],
        char_rows,
    )

    relevance_counts = Counter(item.frequency_relevance or "General" for item in battery)
    table(
        figures / "fig5_frequency_relevance.csv",
        ["relevance", "items"],
        [[lvl, n] for lvl, n in sorted(relevance_counts.items(), key=lambda kv: (-kv[1], kv[0]))],
    )

    source_counts = Counter(item.distractor_source for item in battery)
    table(
        figures / "fig6_distractor_source.csv",
        ["source", "items"],
        [[src, n] for src, n in sorted(source_counts.items())],
    )

    table(
        figures / "fig7_score_distributions.csv",
        ["group", "score"],
        [[group, _fmt(score)] for group, score in scores],
    )

    roc_points = _stage_dir(cfg, "roc") / "roc_points.csv"
    fig8 = figures / "fig8_roc_curve.csv"
    fig8.write_bytes(roc_points.read_bytes())
    artifacts.append(fig8)

    result = StageResult("report", artifacts, total_items=len(battery))
    _write_manifest(cfg, result)
    result.artifacts.append(_manifest_path(cfg, "report"))
    return result


_STAGE_FUNCS = {
    "degrade": lambda cfg, force: stage_degrade(cfg),
    "transcribe": stage_transcribe,
    "analyze": stage_analyze,
    "curate": stage_curate,
    "assess": stage_assess,
    "simulate": stage_simulate,
    "roc": stage_roc,
    "report": stage_report,
}


def run_stage(stage: str, cfg: PipelineConfig, force: bool = False) -> StageResult:
    if stage not in _STAGE_FUNCS:
        raise PipelineError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    return _STAGE_FUNCS[stage](cfg, force)


def run_all(cfg: PipelineConfig, force: bool = False) -> list[StageResult]:
    return [run_stage(stage, cfg, force) for stage in STAGES]
