"""EEG record ingestion, synthetic Beta-band signals, and Beta isolation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ArgumentError, EmptyInputError, InsufficientDataError, ParseError

DEFAULT_SAMPLE_RATE_HZ = 512.0
BETA_BAND_HZ = (12.0, 30.0)
FILTER_ORDER = 4

_HEADER_KEYS = ("sample_rate_hz", "subject_id", "task_label")


@dataclass(frozen=True, eq=False)
class EegRecord:
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    subject_id: str = ""
    task_label: str = ""

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptyInputError("EEG record has no samples")
        if not np.all(np.isfinite(samples)):
            raise ArgumentError("EEG samples must be finite")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ArgumentError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, EegRecord):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.subject_id == other.subject_id
            and self.task_label == other.task_label
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class BetaSignal:
    samples: np.ndarray
    sample_rate_hz: float
    window_seconds: float
    amplitude_multiplier: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        expected = round(self.window_seconds * self.sample_rate_hz)
        if samples.size != expected:
            raise ArgumentError(f"expected {expected} samples, got {samples.size}")
        if not self.amplitude_multiplier > 0:
            raise ArgumentError("amplitude_multiplier must be positive")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)


def load_record(path: str | Path, format: str = "csv") -> EegRecord:
    """Read an EEG CSV file: optional ``# key=value`` headers, then one sample per line."""
    if format != "csv":
        raise ArgumentError(f"unsupported EEG format {format!r}")
    text = Path(path).read_text(encoding="utf-8")
    return parse_record(text)


def parse_record(text: str) -> EegRecord:
    meta: dict[str, str] = {}
    samples: list[float] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                continue  # free-form comment
            key, _, value = body.partition("=")
            key, value = key.strip(), value.strip()
            if key in _HEADER_KEYS:
                meta[key] = value
            continue
        try:
            value = float(line)
        except ValueError:
            raise ParseError(f"cannot parse sample {line!r}", line=lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite sample {line!r}", line=lineno)
        samples.append(value)
    if not samples:
        raise EmptyInputError("EEG file contains no samples")

    rate = DEFAULT_SAMPLE_RATE_HZ
    if "sample_rate_hz" in meta:
        try:
            rate = float(meta["sample_rate_hz"])
        except ValueError:
            raise ParseError(f"bad sample_rate_hz {meta['sample_rate_hz']!r}") from None
    return EegRecord(
        samples=np.asarray(samples),
        sample_rate_hz=rate,
        subject_id=meta.get("subject_id", ""),
        task_label=meta.get("task_label", ""),
    )


def format_record(record: EegRecord) -> str:
    lines = [f"# sample_rate_hz={record.sample_rate_hz!r}"]
    if record.subject_id:
        lines.append(f"# subject_id={record.subject_id}")
    if record.task_label:
        lines.append(f"# task_label={record.task_label}")
    # repr() keeps full float precision so a save/load round trip is exact
    lines.extend(repr(float(s)) for s in record.samples)
    return "\n".join(lines) + "\n"


def save_record(record: EegRecord, path: str | Path) -> None:
    Path(path).write_text(format_record(record), encoding="utf-8")


def synthesize_beta(
    seed: int,
    duration_s: float,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    tones: Iterable[tuple[float, float, float]] = (),
    noise_std: float = 0.0,
    subject_id: str = "",
    task_label: str = "",
) -> EegRecord:
    """Sum of sinusoids ``(freq_hz, amplitude, phase)`` plus seeded gaussian noise."""
    if not duration_s > 0 or not sample_rate_hz > 0:
        raise ArgumentError("duration_s and sample_rate_hz must be positive")
    if noise_std < 0:
        raise ArgumentError("noise_std must be non-negative")
    count = round(duration_s * sample_rate_hz)
    if count < 1:
        raise ArgumentError("duration too short for one sample")
    t = np.arange(count) / sample_rate_hz
    samples = np.zeros(count)
    for freq, amp, phase in tones:
        samples += amp * np.sin(2 * np.pi * freq * t + phase)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        samples += rng.normal(0.0, noise_std, count)
    return EegRecord(samples, sample_rate_hz, subject_id, task_label)


def subject_tones(subject_seed: int, count: int = 4) -> list[tuple[float, float, float]]:
    """Reproducible Beta-band tone set standing in for one person's signature."""
    rng = np.random.default_rng([0x5EB, subject_seed])
    freqs = rng.uniform(*BETA_BAND_HZ, count)
    amps = rng.uniform(0.5, 2.0, count)
    phases = rng.uniform(0, 2 * np.pi, count)
    return [(float(f), float(a), float(p)) for f, a, p in zip(freqs, amps, phases)]


def _band_sos(sample_rate_hz: float) -> np.ndarray:
    lo, hi = BETA_BAND_HZ
    if sample_rate_hz <= 2 * hi:
        raise ArgumentError(f"sample rate {sample_rate_hz} Hz cannot resolve the Beta band")
    return sps.butter(FILTER_ORDER, [lo, hi], btype="bandpass", fs=sample_rate_hz, output="sos")


def bandpass_beta(samples: Sequence[float], sample_rate_hz: float) -> np.ndarray:
    """Zero-phase Butterworth band-pass over 12-30 Hz."""
    x = np.asarray(samples, dtype=np.float64)
    sos = _band_sos(sample_rate_hz)
    # sosfiltfilt needs more than its default pad length
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    return sps.sosfiltfilt(sos, x, padlen=padlen)


def extract_beta(record: EegRecord, window_seconds: float, amplitude_multiplier: float) -> BetaSignal:
    if not window_seconds > 0 or not amplitude_multiplier > 0:
        raise ArgumentError("window_seconds and amplitude_multiplier must be positive")
    count = round(window_seconds * record.sample_rate_hz)
    if count < 1 or len(record) < count:
        raise InsufficientDataError(
            f"record has {len(record)} samples, window needs {count}"
        )
    window = record.samples[:count]
    filtered = bandpass_beta(window, record.sample_rate_hz) if count > 1 else np.zeros(1)
    return BetaSignal(
        samples=filtered * amplitude_multiplier,
        sample_rate_hz=record.sample_rate_hz,
        window_seconds=window_seconds,
        amplitude_multiplier=amplitude_multiplier,
    )
