"""Synthetic demo assets: a small lexicon rich in minimal pairs, seeded
word audio, and ready-made battery/diagnostics files.

Real deployments plug in an actual word corpus and CMUdict; these
fixtures make the full pipeline, the HTTP service, and the test suite
runnable out of the box with nothing downloaded.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .alignment import EPSILON, EditKind
from .asr import _stable_int_hash
from .config import write_corpus_manifest, write_example_config
from .curation import CandidatePair, annotate_relevance, write_battery
from .diagnostics import ItemDiagnostics, write_diagnostics
from .dsp import AudioBuffer, rms_normalize, write_wav
from .lexicon import Lexicon, load_lexicon

# One line per entry, CMUdict format. Clustered into minimal-pair families
# so single-phoneme edits frequently land on real words.
FIXTURE_LEXICON_TEXT = """\
;;; synthetic demo lexicon
A  AH0
ART  AA1 R T
ATE  EY1 T
BAR  B AA1 R
BAT  B AE1 T
BATS  B AE1 T S
BAY  B EY1
BEAT  B IY1 T
BEE  B IY1
BEES  B IY1 Z
BET  B EH1 T
BIT  B IH1 T
BUNNY  B AH1 N IY0
CAR  K AA1 R
CART  K AA1 R T
CAT  K AE1 T
CATS  K AE1 T S
CHAT  CH AE1 T
CHIP  CH IH1 P
DATE  D EY1 T
DAY  D EY1
DEAL  D IY1 L
DEAR  D IY1 R
DIE  D AY1
DIP  D IH1 P
DOG  D AO1 G
DOT  D AA1 T
EAR  IY1 R
EAT  IY1 T
EEL  IY1 L
FAR  F AA1 R
FAT  F AE1 T
FATE  F EY1 T
FEE  F IY1
FEEL  F IY1 L
FEW  F Y UW1
FIT  F IH1 T
FUNNY  F AH1 N IY0
GATE  G EY1 T
GET  G EH1 T
GIRL  G ER1 L
GIRLS  G ER1 L Z
GNAT  N AE1 T
GOD  G AA1 D
GOT  G AA1 T
GUY  G AY1
HAT  HH AE1 T
HATE  HH EY1 T
HATS  HH AE1 T S
HAY  HH EY1
HE  HH IY1
HEAR  HH IY1 R
HEAT  HH IY1 T
HEEL  HH IY1 L
HIGH  HH AY1
HIP  HH IH1 P
HIT  HH IH1 T
HONEY  HH AH1 N IY0
HOT  HH AA1 T
IRE  AY1 ER0
KEEL  K IY1 L
KEEP  K IY1 P
KEY  K IY1
KEYS  K IY1 Z
KIP  K IH1 P
KIT  K IH1 T
KNEE  N IY1
KNIT  N IH1 T
LATE  L EY1 T
LAY  L EY1
LET  L EH1 T
LIE  L AY1
LINK  L IH1 NG K
LIP  L IH1 P
LIT  L IH1 T
LOT  L AA1 T
MAD  M AE1 D
MADE  M EY1 D
MANY  M EH1 N IY0
MAT  M AE1 T
MATE  M EY1 T
MAY  M EY1
ME  M IY1
MEAL  M IY1 L
MEAT  M IY1 T
MET  M EH1 T
MONEY  M AH1 N IY0
MUDDY  M AH1 D IY0
MY  M AY1
NET  N EH1 T
NOT  N AA1 T
OBJECT  AA1 B JH EH0 K T
EJECT  IH0 JH EH1 K T
PAT  P AE1 T
PAY  P EY1
PEA  P IY1
PEAS  P IY1 Z
PEEL  P IY1 L
PENNY  P EH1 N IY0
PET  P EH1 T
PIE  P AY1
PINK  P IH1 NG K
PIT  P IH1 T
POT  P AA1 T
RAT  R AE1 T
RATE  R EY1 T
RATS  R AE1 T S
RAY  R EY1
READ  R EH1 D
READ(2)  R IY1 D
RED  R EH1 D
REED  R IY1 D
RIP  R IH1 P
SAT  S AE1 T
SAY  S EY1
SEA  S IY1
SEAL  S IY1 L
SEAS  S IY1 Z
SEAT  S IY1 T
SEATS  S IY1 T S
SEE  S IY1
SET  S EH1 T
SHE  SH IY1
SHIP  SH IH1 P
SIGH  S AY1
SINK  S IH1 NG K
SIP  S IH1 P
SIT  S IH1 T
SUNNY  S AH1 N IY0
TAR  T AA1 R
TEA  T IY1
THAT  DH AE1 T
THE  DH AH0
THEY  DH EY1
THIGH  TH AY1
THINK  TH IH1 NG K
THIS  DH IH1 S
TIE  T AY1
TIP  T IH1 P
TO  T UW1
TOO  T UW1
TWO  T UW1
VAT  V AE1 T
WAY  W EY1
WE  W IY1
WET  W EH1 T
WHEAT  W IY1 T
WHEEL  W IY1 L
WHY  W AY1
WINK  W IH1 NG K
WIRE  W AY1 ER0
WIT  W IH1 T
YEAR  Y IY1 R
ZIP  Z IH1 P
"""


def write_fixture_lexicon(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(FIXTURE_LEXICON_TEXT, encoding="utf-8")
    return path


def fixture_lexicon() -> Lexicon:
    import tempfile

    with tempfile.TemporaryDirectory() as td:
        return load_lexicon(write_fixture_lexicon(Path(td) / "lexicon.txt"))


def synth_word_audio(
    word: str, sample_rate: int = 16000, duration_s: float = 0.55
) -> AudioBuffer:
    """Deterministic stand-in for a recorded word.

    A few seeded sinusoids plus a 4-7.8 kHz noise band, so hearing-loss
    filtering and band-energy checks have high-frequency content to act
    on. Same word, same waveform.
    """
    rng = np.random.default_rng(_stable_int_hash(f"fixture-audio|{word.lower()}"))
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    sig = np.zeros(n)
    for _ in range(4):
        freq = rng.uniform(180.0, 2600.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        sig += rng.uniform(0.4, 1.0) * np.sin(2.0 * np.pi * freq * t + phase)

    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum[(freqs < 4000.0) | (freqs > 7800.0)] = 0.0
    high = np.fft.irfft(spectrum, n=n)
    high *= 0.35 * np.sqrt(np.mean(sig**2)) / (np.sqrt(np.mean(high**2)) + 1e-12)
    sig += high

    attack = int(0.03 * sample_rate)
    decay = int(0.08 * sample_rate)
    envelope = np.ones(n)
    envelope[:attack] = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, attack)))
    envelope[n - decay :] = 0.5 * (1.0 + np.cos(np.linspace(0.0, np.pi, decay)))
    return rms_normalize(AudioBuffer(sig * envelope, sample_rate), -20.0)


def write_fixture_corpus(
    dir_path: str | Path, words: list[str] | None = None, sample_rate: int = 16000
) -> Path:
    """WAV per word plus a word,wav_path manifest. Returns the manifest path."""
    dir_path = Path(dir_path)
    if words is None:
        words = fixture_lexicon().vocabulary
    wav_dir = dir_path / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for word in sorted(set(words)):
        wav = wav_dir / f"{word}.wav"
        write_wav(synth_word_audio(word, sample_rate), wav)
        rows.append((word, f"wavs/{word}.wav"))
    manifest = dir_path / "manifest.csv"
    write_corpus_manifest(rows, manifest)
    return manifest


# Hand-checked pairs: every one passes the curation filters against the
# fixture lexicon, and every target word has fixture audio.
_BATTERY_PAIRS = (
    ("sat", "fat", EditKind.SUBSTITUTION, "S", "F"),
    ("see", "fee", EditKind.SUBSTITUTION, "S", "F"),
    ("seal", "feel", EditKind.SUBSTITUTION, "S", "F"),
    ("sit", "fit", EditKind.SUBSTITUTION, "S", "F"),
    ("sip", "tip", EditKind.SUBSTITUTION, "S", "T"),
    ("sea", "tea", EditKind.SUBSTITUTION, "S", "T"),
    ("think", "sink", EditKind.SUBSTITUTION, "TH", "S"),
    ("keep", "kip", EditKind.SUBSTITUTION, "IY1", "IH1"),
    ("made", "mad", EditKind.SUBSTITUTION, "EY1", "AE1"),
    ("pie", "tie", EditKind.SUBSTITUTION, "P", "T"),
    ("cats", "cat", EditKind.DELETION, "S", EPSILON),
    ("seats", "seat", EditKind.DELETION, "S", EPSILON),
    ("keys", "key", EditKind.DELETION, "Z", EPSILON),
    ("girls", "girl", EditKind.DELETION, "Z", EPSILON),
    ("cart", "car", EditKind.DELETION, "T", EPSILON),
    ("bees", "bee", EditKind.DELETION, "Z", EPSILON),
    ("eat", "heat", EditKind.INSERTION, EPSILON, "HH"),
    ("ear", "hear", EditKind.INSERTION, EPSILON, "HH"),
    ("art", "cart", EditKind.INSERTION, EPSILON, "K"),
    ("ate", "late", EditKind.INSERTION, EPSILON, "L"),
)


def fixture_battery(n_items: int = 20) -> list[CandidatePair]:
    if not 1 <= n_items <= len(_BATTERY_PAIRS):
        raise ValueError(f"n_items outside 1..{len(_BATTERY_PAIRS)}")
    pairs = [
        CandidatePair(
            target=t,
            distractor=d,
            error_type=kind,
            clean_phoneme=clean,
            hl_phoneme=hl,
            distractor_source="phonetically-generated",
        )
        for t, d, kind, clean, hl in _BATTERY_PAIRS[:n_items]
    ]
    return annotate_relevance(pairs)


def write_fixture_battery(path: str | Path, n_items: int = 20) -> Path:
    path = Path(path)
    write_battery(fixture_battery(n_items), path)
    return path


def write_fixture_diagnostics(
    path: str | Path,
    n_items: int = 20,
    snr_db: float = 10.0,
    nh_pct: float = 92.0,
    hl_pct: float = 60.0,
) -> Path:
    """Diagnostics rows with uniform reference percentages per item."""
    rows = [
        ItemDiagnostics(item=item, snr_db=snr_db, nh_correct_pct=nh_pct, hl_correct_pct=hl_pct)
        for item in fixture_battery(n_items)
    ]
    path = Path(path)
    write_diagnostics(rows, path)
    return path


def build_demo_workspace(root: str | Path) -> Path:
    """Everything a pipeline or service run needs, under one directory.

    Returns the path of the written config file.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_fixture_lexicon(root / "lexicon.txt")
    write_fixture_corpus(root / "corpus")
    write_fixture_battery(root / "battery.csv")
    write_fixture_diagnostics(root / "diagnostics.csv")
    config_path = root / "pipeline.yaml"
    write_example_config(config_path)
    text = config_path.read_text(encoding="utf-8")
    text = text.replace("total_items: 200", "total_items: 40")
    text = text.replace("trials_per_condition: 50", "trials_per_condition: 10")
    text = text.replace("subset_size: 50", "subset_size: 30")
    config_path.write_text(text, encoding="utf-8")
    return config_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m phonetest.fixtures",
        description="Write a self-contained demo workspace (lexicon, corpus, "
        "battery, diagnostics, pipeline config).",
    )
    parser.add_argument("directory", help="workspace directory to create")
    args = parser.parse_args(argv)
    config_path = build_demo_workspace(args.directory)
    print(f"demo workspace ready; config at {config_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
