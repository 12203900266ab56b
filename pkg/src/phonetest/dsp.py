"""Audio DSP primitives: hearing-loss FIR simulation, pink noise, SNR mixing, WAV I/O.

All audio is carried as float64 mono at a known sample rate. Filters are
linear-phase FIRs designed by frequency sampling from an audiogram, so the
group delay is an integer number of samples and can be trimmed exactly.
"""
from __future__ import annotations

import io
import json
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import resample_poly

EPS = 1e-12

# Audiometric standard frequencies used by the builtin profiles (Hz).
AUDIOGRAM_FREQS = (250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)

_BUILTIN_THRESHOLDS = {
    # Flat 0 dB HL: the all-pass reference listener.
    "normal": (0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
    # Gently sloping loss, 5 dB at 250 Hz to 50 dB at 8 kHz (linear in log-f).
    "mild": (5.0, 14.0, 23.0, 32.0, 41.0, 50.0),
    # Moderate sloping loss, 10 dB at 250 Hz to 70 dB at 8 kHz.
    "moderate": (10.0, 20.0, 30.0, 45.0, 60.0, 70.0),
}


@dataclass(frozen=True)
class Audiogram:
    """Hearing thresholds in dB HL at a set of frequencies.

    Thresholds between the measured points are interpolated linearly in
    dB over log2(frequency); outside the measured range the endpoint
    value is held flat.
    """

    name: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("audiogram needs at least one (frequency, threshold) point")
        freqs = [f for f, _ in self.points]
        if any(f <= 0 for f in freqs):
            raise ValueError("audiogram frequencies must be positive")
        if sorted(freqs) != freqs or len(set(freqs)) != len(freqs):
            raise ValueError("audiogram frequencies must be strictly increasing")
        if any(t < 0 for _, t in self.points):
            raise ValueError("thresholds are dB HL and must be non-negative")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([f for f, _ in self.points], dtype=np.float64)

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([t for _, t in self.points], dtype=np.float64)

    def threshold_at(self, freqs: Sequence[float] | np.ndarray) -> np.ndarray:
        """Interpolated threshold (dB HL) at arbitrary frequencies."""
        freqs = np.asarray(freqs, dtype=np.float64)
        out = np.empty_like(freqs)
        pos = freqs > 0
        # log-frequency interpolation; np.interp holds endpoints flat
        out[pos] = np.interp(
            np.log2(freqs[pos]), np.log2(self.frequencies), self.thresholds
        )
        # DC and negative frequencies take the low-frequency endpoint
        out[~pos] = self.thresholds[0]
        return out

    def mean_threshold(self) -> float:
        """Mean of the measured thresholds, a scalar severity summary."""
        return float(np.mean(self.thresholds))

    def perturbed(self, rng: np.random.Generator, spread_db: float = 10.0) -> "Audiogram":
        """Individual variant: each threshold jittered uniformly by +/- spread_db, clamped at 0."""
        jitter = rng.uniform(-spread_db, spread_db, size=len(self.points))
        pts = tuple(
            (f, float(max(0.0, t + j))) for (f, t), j in zip(self.points, jitter)
        )
        return Audiogram(name=f"{self.name}~", points=pts)

    @classmethod
    def from_json(cls, path: str | Path) -> "Audiogram":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            name = raw["name"]
            points = tuple((float(f), float(t)) for f, t in raw["points"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed audiogram file {path}: {exc}") from exc
        return cls(name=name, points=points)

    def to_json(self, path: str | Path) -> None:
        payload = {"name": self.name, "points": [[f, t] for f, t in self.points]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def builtin_audiogram(name: str) -> Audiogram:
    """One of the builtin profiles: 'normal', 'mild', or 'moderate'."""
    key = name.strip().lower()
    if key not in _BUILTIN_THRESHOLDS:
        raise ValueError(
            f"unknown audiogram profile {name!r}; expected one of {sorted(_BUILTIN_THRESHOLDS)}"
        )
    pts = tuple(zip(AUDIOGRAM_FREQS, _BUILTIN_THRESHOLDS[key]))
    return Audiogram(name=key, points=pts)


@dataclass(frozen=True)
class AudioBuffer:
    """Immutable mono audio: float64 samples plus sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("AudioBuffer is mono: samples must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    def rms_dbfs(self) -> float:
        return 20.0 * float(np.log10(self.rms() + EPS))


@dataclass(frozen=True)
class MixSpec:
    """Placement of speech inside a noise bed.

    Noise runs for lead_in_s before the speech starts and for the same
    span after it ends, with raised-cosine on/off ramps of ramp_s.
    """

    snr_db: float
    lead_in_s: float = 0.5
    ramp_s: float = 0.05

    def __post_init__(self) -> None:
        if self.lead_in_s < 0 or self.ramp_s < 0:
            raise ValueError("lead_in_s and ramp_s must be non-negative")
        if self.ramp_s > self.lead_in_s and self.lead_in_s > 0:
            raise ValueError("ramp must fit inside the lead-in")


# ---------------------------------------------------------------------------
# FIR design and application
# ---------------------------------------------------------------------------

def design_hl_filter(
    audiogram: Audiogram, sample_rate: int, num_taps: int = 1024
) -> np.ndarray:
    """Linear-phase FIR whose attenuation tracks the audiogram.

    The target magnitude is -threshold(f) dB on a dense frequency grid;
    the impulse response comes from the inverse real FFT of the target
    spectrum with a pure linear-phase term, then a Hann window. An even
    num_taps is met by designing one tap short and appending a zero,
    because an even-length symmetric FIR is forced to a null at Nyquist
    and could never express a finite attenuation there.
    """
    if num_taps < 3:
        raise ValueError("num_taps must be at least 3")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    m = num_taps if num_taps % 2 == 1 else num_taps - 1
    delay = (m - 1) / 2.0

    nfft = 1 << 16
    freqs = np.fft.rfftfreq(nfft, d=1.0 / sample_rate)
    target_db = -audiogram.threshold_at(freqs)
    mag = 10.0 ** (target_db / 20.0)
    spectrum = mag * np.exp(-2j * np.pi * freqs / sample_rate * delay)
    impulse = np.fft.irfft(spectrum, n=nfft)[:m]
    window = np.hanning(m + 2)[1:-1]
    coeffs = impulse * window
    if num_taps % 2 == 0:
        coeffs = np.append(coeffs, 0.0)
    return coeffs


def filter_delay(coeffs: np.ndarray) -> int:
    """Group delay in samples of a filter from design_hl_filter."""
    n = len(coeffs)
    # even lengths carry one trailing pad tap; the symmetric core is n-1 long
    return (n - 1) // 2 if n % 2 == 1 else (n - 2) // 2


def apply_filter(audio: AudioBuffer, coeffs: np.ndarray) -> AudioBuffer:
    """Convolve and trim the group delay so output aligns with input."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 1 or len(coeffs) == 0:
        raise ValueError("filter coefficients must be a non-empty 1-D array")
    delay = filter_delay(coeffs)
    out = np.convolve(audio.samples, coeffs)
    out = out[delay : delay + len(audio.samples)]
    return AudioBuffer(samples=out, sample_rate=audio.sample_rate)


def filter_response_db(
    coeffs: np.ndarray, freqs: Sequence[float], sample_rate: int
) -> np.ndarray:
    """Magnitude response in dB at the given frequencies."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    w = 2.0 * np.pi * np.asarray(freqs, dtype=np.float64) / sample_rate
    n = np.arange(len(coeffs))
    response = np.exp(-1j * np.outer(w, n)) @ coeffs
    return 20.0 * np.log10(np.abs(response) + EPS)


# ---------------------------------------------------------------------------
# Noise generation and mixing
# ---------------------------------------------------------------------------

def gen_pink_noise(duration_s: float, sample_rate: int, seed: int) -> AudioBuffer:
    """Pink (1/f power) noise via spectral shaping of seeded white noise.

    White Gaussian noise is shaped by 1/sqrt(f) in the frequency domain,
    giving the -3 dB/octave power spectral density slope. Output is RMS
    normalized to 0.1 full scale. Deterministic for a fixed seed.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    n = max(1, int(round(duration_s * sample_rate)))
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    scale = np.ones_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    scale[0] = 0.0  # no DC
    shaped = np.fft.irfft(spectrum * scale, n=n)
    rms = np.sqrt(np.mean(shaped**2))
    if rms > EPS:
        shaped *= 0.1 / rms
    return AudioBuffer(samples=shaped, sample_rate=sample_rate)


def rms_normalize(audio: AudioBuffer, target_dbfs: float = -20.0) -> AudioBuffer:
    """Scale so the RMS level equals target_dbfs (dB re full scale)."""
    rms = audio.rms()
    if rms <= EPS:
        raise ValueError("cannot normalize silent audio")
    gain = 10.0 ** (target_dbfs / 20.0) / rms
    return AudioBuffer(samples=audio.samples * gain, sample_rate=audio.sample_rate)


def mix_at_snr(speech: AudioBuffer, noise: AudioBuffer, spec: MixSpec) -> AudioBuffer:
    """Embed speech in a noise bed at an exact SNR.

    The noise gain is solved from the RMS of the enveloped noise over the
    speech-active region, so the realized SNR there matches spec.snr_db
    exactly rather than nominally. Noise must cover lead-in + speech +
    lead-out at the speech sample rate.
    """
    if speech.sample_rate != noise.sample_rate:
        raise ValueError("speech and noise sample rates differ")
    if len(speech) == 0:
        raise ValueError("speech is empty")
    sr = speech.sample_rate
    lead = int(round(spec.lead_in_s * sr))
    ramp = int(round(spec.ramp_s * sr))
    total = lead + len(speech) + lead
    if len(noise) < total:
        raise ValueError(
            f"noise too short: need {total} samples, got {len(noise)}"
        )

    envelope = np.ones(total)
    if ramp > 0:
        # raised-cosine fade-in / fade-out at the edges of the noise bed
        t = np.linspace(0.0, np.pi, ramp)
        envelope[:ramp] = 0.5 * (1.0 - np.cos(t))
        envelope[-ramp:] = 0.5 * (1.0 + np.cos(t))
    bed = noise.samples[:total] * envelope

    speech_rms = speech.rms()
    if speech_rms <= EPS:
        raise ValueError("speech is silent; SNR undefined")
    active = bed[lead : lead + len(speech)]
    noise_rms = float(np.sqrt(np.mean(active**2)))
    if noise_rms <= EPS:
        raise ValueError("noise is silent over the speech-active region")
    gain = (speech_rms / noise_rms) * 10.0 ** (-spec.snr_db / 20.0)

    mixed = bed * gain
    mixed[lead : lead + len(speech)] += speech.samples
    return AudioBuffer(samples=mixed, sample_rate=sr)


def measure_snr(mixed: AudioBuffer, speech: AudioBuffer, spec: MixSpec) -> float:
    """Realized SNR of a mix_at_snr output, for verification.

    Recovers the noise over the speech-active region by subtraction,
    which is exact because mixing is additive.
    """
    sr = mixed.sample_rate
    lead = int(round(spec.lead_in_s * sr))
    active = mixed.samples[lead : lead + len(speech)]
    noise_part = active - speech.samples
    s_rms = speech.rms()
    n_rms = float(np.sqrt(np.mean(noise_part**2)))
    return 20.0 * float(np.log10((s_rms + EPS) / (n_rms + EPS)))


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

def read_wav(path: str | Path, target_rate: int | None = None) -> AudioBuffer:
    """Read a PCM WAV file as mono float64 in [-1, 1].

    Stereo input is downmixed by averaging channels; if target_rate is
    given and differs, the audio is resampled with a polyphase filter.
    """
    with wave.open(str(path), "rb") as wf:
        n_channels = wf.getnchannels()
        width = wf.getsampwidth()
        rate = wf.getframerate()
        frames = wf.readframes(wf.getnframes())
    if width == 2:
        data = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 4:
        data = np.frombuffer(frames, dtype="<i4").astype(np.float64) / 2147483648.0
    elif width == 1:
        data = (np.frombuffer(frames, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    else:
        raise ValueError(f"unsupported WAV sample width: {width} bytes")
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    if target_rate is not None and target_rate != rate:
        from math import gcd

        g = gcd(int(target_rate), int(rate))
        data = resample_poly(data, int(target_rate) // g, int(rate) // g)
        rate = int(target_rate)
    return AudioBuffer(samples=data, sample_rate=rate)


def wav_bytes(audio: AudioBuffer) -> bytes:
    """Serialize to 16-bit PCM WAV bytes (clipping at full scale)."""
    clipped = np.clip(audio.samples, -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(ints.tobytes())
    return buf.getvalue()


def write_wav(audio: AudioBuffer, path: str | Path) -> None:
    """Write 16-bit PCM WAV."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(wav_bytes(audio))


def band_energy_db(audio: AudioBuffer, lo_hz: float, hi_hz: float) -> float:
    """Total spectral energy in [lo_hz, hi_hz), in dB. For band comparisons."""
    spectrum = np.abs(np.fft.rfft(audio.samples)) ** 2
    freqs = np.fft.rfftfreq(len(audio.samples), d=1.0 / audio.sample_rate)
    idx = (freqs >= lo_hz) & (freqs < hi_hz)
    return 10.0 * float(np.log10(np.sum(spectrum[idx]) + EPS))
