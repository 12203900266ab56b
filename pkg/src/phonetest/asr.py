"""ASR bridge: pluggable transcription backends and 2AFC forced choice.

Three backends share one interface: a seeded mock that pushes the word's
pronunciation through a phoneme confusion channel, an external command
wrapper, and an HTTP client. The mock is the default for desk-scale runs
and for deterministic pipelines; it never looks at the audio, only at
the ground-truth word carried on the request.
"""
from __future__ import annotations

import hashlib
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
import requests

from .alignment import edit_distance
from .confusion import ARTICULATION_CLASS, articulation_class_of
from .dsp import AudioBuffer, wav_bytes
from .lexicon import (
    CONSONANTS,
    VOWELS,
    Lexicon,
    PhonemeSequence,
    base_phoneme,
    lexical_normalize,
    strip_stress,
)

# Observed error-type proportions: substitutions / deletions / insertions.
ERROR_MIX = (0.527, 0.349, 0.124)

# Default substitution bias: frequent confusion targets under
# high-frequency attenuation, weighted by observed occurrence counts.
DEFAULT_CONFUSION_BIAS: dict[str, dict[str, float]] = {
    "S": {"F": 251, "T": 201, "K": 134},
    "IY1": {"EY1": 212, "IH1": 147},
    "IH1": {"EH1": 200, "IY1": 136},
    "W": {"B": 186},
    "T": {"D": 172, "K": 142},
    "AE1": {"EH1": 163},
    "N": {"L": 155, "T": 131},
    "R": {"B": 140, "T": 129, "K": 122},
    "M": {"L": 134},
    "OW1": {"AA1": 123},
    "AA1": {"AH1": 121},
    "AO1": {"AA1": 114},
}


class BackendError(RuntimeError):
    """Transcription failure, tagged with the condition and word involved."""

    def __init__(self, message: str, condition_label: str = "", word: str | None = None):
        super().__init__(message)
        self.condition_label = condition_label
        self.word = word


@dataclass(frozen=True)
class TranscriptionRequest:
    """One stimulus to transcribe.

    word and trial exist so errors are attributable and so the mock can
    derive a per-request seed; real backends only consume the audio.
    """

    audio: AudioBuffer
    condition_label: str
    word: str | None = None
    trial: int = 0

    def __post_init__(self) -> None:
        if len(self.audio) == 0:
            raise ValueError("transcription request with empty audio")


@dataclass(frozen=True)
class MockChannelParams:
    """Per-phoneme i.i.d. error channel probabilities."""

    p_sub: float
    p_del: float
    p_ins: float
    confusion_bias: Mapping[str, Mapping[str, float]] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_sub", "p_del", "p_ins"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1): got {v}")
        if self.p_sub + self.p_del > 1.0:
            raise ValueError("p_sub + p_del may not exceed 1")


def channel_params(error_mass: float, seed: int = 0) -> MockChannelParams:
    """Channel whose total per-phoneme error rate is error_mass.

    The mass is split by the observed error-type mix, so the realized
    substitution/deletion/insertion proportions track that mix.
    """
    sub, dele, ins = ERROR_MIX
    return MockChannelParams(
        p_sub=sub * error_mass, p_del=dele * error_mass, p_ins=ins * error_mass, seed=seed
    )


def clean_channel_params(seed: int = 0) -> MockChannelParams:
    """Near-perfect recognizer: clean speech, no degradation."""
    return channel_params(0.02, seed)


def nh_channel_params(seed: int = 0) -> MockChannelParams:
    """Noise-only degradation at a moderate SNR."""
    return channel_params(0.10, seed)


def hl_channel_params(seed: int = 0) -> MockChannelParams:
    """Noise plus simulated hearing-loss filtering."""
    return channel_params(0.40, seed)


def _stable_int_hash(text: str) -> int:
    return int(hashlib.md5(text.encode("utf-8")).hexdigest()[:16], 16)


def _attach_stress(base: str, like: str) -> str:
    if base in VOWELS:
        digit = like[-1] if like and like[-1] in "012" else "0"
        return base + digit
    return base


def _draw_substitute(
    phoneme: str,
    bias: Mapping[str, Mapping[str, float]],
    rng: np.random.Generator,
) -> str:
    table = bias.get(phoneme) or bias.get(base_phoneme(phoneme))
    if table:
        targets = sorted(table)
        weights = np.array([table[t] for t in targets], dtype=np.float64)
        choice = int(rng.choice(len(targets), p=weights / weights.sum()))
        return targets[choice]
    # uncovered phoneme: uniform within its articulation class
    base = base_phoneme(phoneme)
    cls = articulation_class_of(base)
    members = sorted(p for p, c in ARTICULATION_CLASS.items() if c == cls and p != base)
    if not members:  # singleton class (e.g. the glottal)
        members = sorted(CONSONANTS - {base})
    pick = members[int(rng.integers(len(members)))]
    return _attach_stress(pick, phoneme)


def _draw_insertion(rng: np.random.Generator) -> str:
    pool = sorted(CONSONANTS | VOWELS)
    pick = pool[int(rng.integers(len(pool)))]
    return pick + "0" if pick in VOWELS else pick


def channel_events(
    phonemes: Sequence[str], params: MockChannelParams, rng: np.random.Generator
) -> tuple[PhonemeSequence, dict[str, int]]:
    """Run the confusion channel once, returning output and event counts."""
    bias = params.confusion_bias or DEFAULT_CONFUSION_BIAS
    out: list[str] = []
    counts = {"match": 0, "sub": 0, "del": 0, "ins": 0}
    for ph in phonemes:
        u = rng.random()
        if u < params.p_sub:
            out.append(_draw_substitute(ph, bias, rng))
            counts["sub"] += 1
        elif u < params.p_sub + params.p_del:
            counts["del"] += 1
        else:
            out.append(ph)
            counts["match"] += 1
        if rng.random() < params.p_ins:
            out.append(_draw_insertion(rng))
            counts["ins"] += 1
    return tuple(out), counts


def phonemes_to_word(phonemes: Sequence[str], lex: Lexicon) -> str:
    """Map a phoneme sequence onto the closest vocabulary word.

    Exact (stress-insensitive) reverse lookup first; otherwise a phonetic
    nearest-neighbor scan over the whole vocabulary, ties broken by
    shorter spelling then alphabetical order. An empty sequence means
    nothing was recognized and maps to the empty string.
    """
    if not phonemes:
        return ""
    exact = lex.reverse_lookup(phonemes)
    if exact:
        return min(exact, key=lambda w: (len(w), w))
    key = strip_stress(phonemes)
    best: tuple[int, int, str] | None = None
    for word in lex.vocabulary:
        for pron in lex.entries[word]:
            d = edit_distance(key, strip_stress(pron))
            cand = (d, len(word), word)
            if best is None or cand < best:
                best = cand
    assert best is not None
    return best[2]


def mock_transcribe(
    word_phonemes: Sequence[str],
    params: MockChannelParams,
    lex: Lexicon,
    rng: np.random.Generator | None = None,
) -> str:
    """Degrade a pronunciation through the channel and name the result."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    out, _ = channel_events(word_phonemes, params, rng)
    return phonemes_to_word(out, lex)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

class Backend(Protocol):
    def transcribe(self, request: TranscriptionRequest) -> str: ...


@dataclass(frozen=True)
class BackendConfig:
    """How to reach a recognizer: mock, external command, or HTTP."""

    kind: str = "mock"
    command: tuple[str, ...] = ()
    url: str = ""
    timeout_s: float = 30.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "command", "http"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


class MockBackend:
    """Seeded confusion-channel recognizer.

    Conditions select channel presets by label. Each request gets its own
    generator seeded from (params.seed, word, condition, trial), so
    concurrent calls share no RNG state and replays are deterministic.
    """

    def __init__(
        self,
        lex: Lexicon,
        params_by_condition: Mapping[str, MockChannelParams],
        default_params: MockChannelParams | None = None,
    ):
        self.lex = lex
        self.params_by_condition = dict(params_by_condition)
        self.default_params = default_params

    def transcribe(self, request: TranscriptionRequest) -> str:
        params = self.params_by_condition.get(request.condition_label, self.default_params)
        if params is None:
            raise BackendError(
                f"no channel preset for condition {request.condition_label!r}",
                request.condition_label,
                request.word,
            )
        if request.word is None:
            raise BackendError(
                "mock backend needs the ground-truth word on the request",
                request.condition_label,
                request.word,
            )
        try:
            pron = self.lex.primary(request.word)
        except KeyError as exc:
            raise BackendError(
                str(exc), request.condition_label, request.word
            ) from exc
        rng = np.random.default_rng(
            [
                params.seed,
                _stable_int_hash(
                    f"{request.word}|{request.condition_label}|{request.trial}"
                ),
            ]
        )
        out, _ = channel_events(pron, params, rng)
        return phonemes_to_word(out, self.lex)


class CommandBackend:
    """Wraps an external recognizer command.

    The request audio is written to a temporary WAV whose path is
    appended to the argument list; standard output is the hypothesis.
    """

    def __init__(self, command: Sequence[str], timeout_s: float = 30.0):
        if not command:
            raise ValueError("command backend needs a non-empty argument list")
        self.command = tuple(command)
        self.timeout_s = timeout_s

    def transcribe(self, request: TranscriptionRequest) -> str:
        tmp = tempfile.NamedTemporaryFile(suffix=".wav", delete=False)
        try:
            tmp.write(wav_bytes(request.audio))
            tmp.close()
            try:
                proc = subprocess.run(
                    [*self.command, tmp.name],
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                )
            except (subprocess.TimeoutExpired, OSError) as exc:
                raise BackendError(
                    f"recognizer command failed: {exc}",
                    request.condition_label,
                    request.word,
                ) from exc
            if proc.returncode != 0:
                raise BackendError(
                    f"recognizer command exited {proc.returncode}: "
                    f"{proc.stderr.strip()[:200]}",
                    request.condition_label,
                    request.word,
                )
            return proc.stdout.strip()
        finally:
            os.unlink(tmp.name)


class HttpBackend:
    """POSTs WAV bytes to a recognizer endpoint returning {"text": ...}."""

    def __init__(self, url: str, timeout_s: float = 30.0):
        if not url:
            raise ValueError("http backend needs a URL")
        self.url = url
        self.timeout_s = timeout_s

    def transcribe(self, request: TranscriptionRequest) -> str:
        try:
            resp = requests.post(
                self.url,
                data=wav_bytes(request.audio),
                headers={"Content-Type": "audio/wav"},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            body = resp.json()
            return str(body["text"])
        except (requests.RequestException, ValueError, KeyError) as exc:
            raise BackendError(
                f"http recognizer failed: {exc}", request.condition_label, request.word
            ) from exc


def default_mock_conditions(seed: int = 0) -> dict[str, MockChannelParams]:
    return {
        "clean": clean_channel_params(seed),
        "NH": nh_channel_params(seed),
        "HL": hl_channel_params(seed),
    }


def make_backend(cfg: BackendConfig, lex: Lexicon) -> Backend:
    if cfg.kind == "mock":
        return MockBackend(lex, default_mock_conditions(cfg.seed))
    if cfg.kind == "command":
        return CommandBackend(cfg.command, cfg.timeout_s)
    return HttpBackend(cfg.url, cfg.timeout_s)


def transcribe(request: TranscriptionRequest, backend: Backend) -> str:
    """Dispatch a request; empty string means nothing was recognized."""
    return backend.transcribe(request)


# ---------------------------------------------------------------------------
# Forced choice
# ---------------------------------------------------------------------------

def forced_choice(
    asr_output: str,
    target: str,
    distractor: str,
    lex: Lexicon,
    mode: str = "deterministic",
    seed: int = 0,
    temperature: float = 1.0,
) -> str:
    """Pick one of two words as the recognized answer.

    The raw ASR output is normalized onto the vocabulary, then compared
    to both options by phoneme edit distance. Deterministic mode takes
    the smaller distance (tie: seeded fair coin); probabilistic mode
    samples from softmax(-distance / temperature). Output that cannot be
    normalized (empty or all punctuation) falls back to the coin.
    Decisions depend only on the unordered option set, so swapping the
    labels never changes which word wins.
    """
    if mode not in ("deterministic", "probabilistic"):
        raise ValueError(f"unknown forced-choice mode {mode!r}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if target == distractor:
        raise ValueError("target and distractor must differ")
    first, second = sorted((target, distractor))
    prons = {}
    for option in (first, second):
        try:
            prons[option] = lex.primary(option)
        except KeyError:
            raise LookupError(f"option {option!r} has no pronunciation") from None

    rng = np.random.default_rng(
        [seed, _stable_int_hash(f"{first}|{second}|{asr_output}")]
    )
    try:
        word = lexical_normalize(asr_output, lex)
    except ValueError:
        return first if rng.random() < 0.5 else second

    out_pron = lex.primary(word)
    d_first = edit_distance(out_pron, prons[first])
    d_second = edit_distance(out_pron, prons[second])
    if mode == "deterministic":
        if d_first < d_second:
            return first
        if d_second < d_first:
            return second
        return first if rng.random() < 0.5 else second
    p_first = 1.0 / (1.0 + np.exp((d_first - d_second) / temperature))
    return first if rng.random() < p_first else second
