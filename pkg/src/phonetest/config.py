"""Pipeline configuration: YAML loading, validation, and config hashing.

The hash identifies a configuration independent of where its outputs
land, so output_dir is excluded. Artifacts stamped with the hash let
downstream stages refuse inputs produced under different settings.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .asr import BackendConfig
from .curation import CurationConfig
from .diagnostics import PsychometricParams


@dataclass(frozen=True)
class CohortConfig:
    n_nh: int = 50
    n_hi: int = 50
    subset_size: int = 50
    perturb_db: float = 10.0
    fixed_threshold: float = 80.0

    def __post_init__(self) -> None:
        if self.n_nh < 1 or self.n_hi < 1 or self.subset_size < 1:
            raise ValueError("cohort sizes must be positive")
        if self.perturb_db < 0:
            raise ValueError("perturb_db must be non-negative")


@dataclass(frozen=True)
class PipelineConfig:
    corpus_manifest: Path
    lexicon: Path
    output_dir: Path
    hl_audiogram: Path | None = None  # None -> builtin moderate profile
    snr_levels: tuple[float, ...] = (5.0, 10.0, 20.0)
    analysis_snr: float = 10.0
    sample_rate: int = 16000
    seed: int = 0
    backend: BackendConfig = field(default_factory=lambda: BackendConfig(kind="mock"))
    curation: CurationConfig = field(default_factory=CurationConfig)
    psychometric: PsychometricParams = field(default_factory=PsychometricParams)
    cohort: CohortConfig = field(default_factory=CohortConfig)
    trials_per_condition: int = 50
    diagnostic_threshold_pp: float = 5.0
    max_skip_fraction: float = 0.2

    def __post_init__(self) -> None:
        if not self.snr_levels:
            raise ValueError("snr_levels must be non-empty")
        if self.sample_rate < 8000:
            raise ValueError("sample_rate too low for speech")
        if not 0.0 <= self.max_skip_fraction <= 1.0:
            raise ValueError("max_skip_fraction lives in [0, 1]")
        if self.trials_per_condition < 1:
            raise ValueError("trials_per_condition must be positive")


def load_config(path: str | Path) -> PipelineConfig:
    """Read a YAML config file. Relative paths resolve against the file."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config {path} must be a mapping")
    base = path.parent
    return config_from_dict(raw, base)


def config_from_dict(raw: dict, base: Path | None = None) -> PipelineConfig:
    base = base or Path(".")

    def resolve(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    known = {
        "corpus_manifest",
        "lexicon",
        "output_dir",
        "hl_audiogram",
        "snr_levels",
        "analysis_snr",
        "sample_rate",
        "seed",
        "backend",
        "curation",
        "psychometric",
        "cohort",
        "trials_per_condition",
        "diagnostic_threshold_pp",
        "max_skip_fraction",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for required in ("corpus_manifest", "lexicon", "output_dir"):
        if required not in raw:
            raise ValueError(f"config missing required key {required!r}")

    kwargs: dict = {
        "corpus_manifest": resolve(raw["corpus_manifest"]),
        "lexicon": resolve(raw["lexicon"]),
        "output_dir": resolve(raw["output_dir"]),
    }
    if raw.get("hl_audiogram"):
        kwargs["hl_audiogram"] = resolve(raw["hl_audiogram"])
    if "snr_levels" in raw:
        kwargs["snr_levels"] = tuple(float(s) for s in raw["snr_levels"])
    for scalar in (
        "analysis_snr",
        "sample_rate",
        "seed",
        "trials_per_condition",
        "diagnostic_threshold_pp",
        "max_skip_fraction",
    ):
        if scalar in raw:
            kwargs[scalar] = raw[scalar]
    if "backend" in raw:
        b = dict(raw["backend"])
        if "command" in b:
            b["command"] = tuple(b["command"])
        kwargs["backend"] = BackendConfig(**b)
    if "curation" in raw:
        c = dict(raw["curation"])
        if "target_mix" in c:
            c["target_mix"] = tuple(float(x) for x in c["target_mix"])
        kwargs["curation"] = CurationConfig(**c)
    if "psychometric" in raw:
        kwargs["psychometric"] = PsychometricParams(**raw["psychometric"])
    if "cohort" in raw:
        kwargs["cohort"] = CohortConfig(**raw["cohort"])
    return PipelineConfig(**kwargs)


def config_hash(cfg: PipelineConfig) -> str:
    """Stable short digest of everything that affects artifact content.

    output_dir is a storage location, not a parameter, so two runs of the
    same settings into different directories share a hash.
    """
    payload = asdict(cfg)
    payload.pop("output_dir")
    canon = json.dumps(payload, sort_keys=True, default=_stringify)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _stringify(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"cannot hash config value {value!r}")


def write_example_config(path: str | Path) -> None:
    """A full, commented config example; doubles as format documentation."""
    text = """\
# Speech-test factory pipeline configuration.
# Relative paths resolve against this file's directory.

corpus_manifest: corpus/manifest.csv   # CSV: word,wav_path
lexicon: lexicon.txt                   # CMUdict-style pronunciation list
output_dir: out                        # artifact tree root

# Hearing-loss simulation profile (JSON audiogram). Omit for the builtin
# moderate sloping profile.
# hl_audiogram: audiograms/moderate.json

snr_levels: [5, 10, 20]   # dB, used by the item assessment sweep
analysis_snr: 10          # dB, used when degrading the corpus
sample_rate: 16000
seed: 0

backend:
  kind: mock              # mock | command | http
  seed: 0
  # command: [my-asr, --flag]   # receives a WAV path as final argument
  # url: http://localhost:9000/transcribe
  # timeout_s: 30

curation:
  total_items: 200
  phase1_top_k: 10
  max_word_lev: 2
  max_phoneme_lev: 8
  target_mix: [0.527, 0.349, 0.124]   # substitution, deletion, insertion

psychometric:
  k: 0.8
  hl_impact_db: 0.05
  chance_floor: 0.5

cohort:
  n_nh: 50
  n_hi: 50
  subset_size: 50
  perturb_db: 10
  fixed_threshold: 80

trials_per_condition: 50    # ASR trials per item, condition, and SNR
diagnostic_threshold_pp: 5  # NH-HL difference needed to keep an item
max_skip_fraction: 0.2      # tolerated share of skipped items per stage
"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# Corpus manifest
# ---------------------------------------------------------------------------

def read_corpus_manifest(path: str | Path) -> list[tuple[str, Path]]:
    """CSV of word,wav_path rows; relative paths resolve against the file."""
    path = Path(path)
    base = path.parent
    out: list[tuple[str, Path]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or {"word", "wav_path"} - set(reader.fieldnames):
            raise ValueError(f"corpus manifest {path} needs word,wav_path columns")
        for row in reader:
            word = row["word"].strip()
            wav = Path(row["wav_path"])
            if not word:
                raise ValueError(f"corpus manifest {path} has a blank word")
            out.append((word, wav if wav.is_absolute() else base / wav))
    if not out:
        raise ValueError(f"corpus manifest {path} is empty")
    return out


def write_corpus_manifest(rows: list[tuple[str, str]], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["word", "wav_path"])
        for word, wav_path in rows:
            writer.writerow([word, wav_path])
