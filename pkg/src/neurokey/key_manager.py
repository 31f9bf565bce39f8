"""Enrollment, key reproduction and rotation.

An enrollment turns one EEG record into a 128-bit session key plus a public
``EnrollmentRecord``. The record carries everything needed to re-derive the
same key from a later, noisy reading of the same person, and nothing that
reveals the key directly.
"""
from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bch
from .eeg_signal import EegRecord, extract_beta
from .errors import (
    AuthenticationError,
    ConfigError,
    IrrecoverableError,
    RecordFormatError,
)
from .feature_pipeline import (
    DEFAULT_DEGREE,
    DEFAULT_SCALE,
    DEFAULT_THETA,
    MaskParameters,
    features_from_signal,
    generate_mask,
)
from .fuzzy_extractor import (
    DEFAULT_NOISE_ABS,
    DEFAULT_NOISE_REL,
    Syndrome,
    UniversalHashKey,
    extract_randomness,
    quantize,
    quantize_level,
    quantizer_bounds,
    reproduce,
    syndrome,
)
from .galois import HASH_FIELD_BITS

KEY_BYTES = 16
KEY_BITS = 8 * KEY_BYTES
RECORD_MAGIC = b"NKEY"
RECORD_VERSION = 1
_SALT_TAG = b"neurokey/key-check-salt/v1"
MAX_MASKED_DEGREE = 10


@dataclass(frozen=True)
class PipelineConfig:
    degree: int = DEFAULT_DEGREE
    c: float = DEFAULT_SCALE
    theta: float = DEFAULT_THETA
    code: tuple[int, int] = bch.DEFAULT_CODE
    window_seconds: float = 2.0
    amplitude_multiplier: float = 10.0
    q: int = 4
    l: int = 32
    noise_rel: float = DEFAULT_NOISE_REL
    noise_abs: float = DEFAULT_NOISE_ABS

    @property
    def dimension(self) -> int:
        return self.degree + 3

    def validate(self) -> None:
        if self.q * self.l != KEY_BITS:
            raise ConfigError(f"q*l must be {KEY_BITS}, got {self.q}*{self.l}")
        if not 0 < self.l <= HASH_FIELD_BITS:
            raise ConfigError("l must be in [1, 127]")
        if not 1 <= self.q <= self.dimension:
            raise ConfigError(f"cannot select {self.q} of {self.dimension} features")
        if not 0 <= self.degree <= MAX_MASKED_DEGREE:
            # larger unit-column-sum masks fail the determinant guard
            raise ConfigError(f"degree must be in [0, {MAX_MASKED_DEGREE}]")
        if not (self.c > 0 and self.theta > 0):
            raise ConfigError("c and theta must be positive")
        if not (self.window_seconds > 0 and self.amplitude_multiplier > 0):
            raise ConfigError("window_seconds and amplitude_multiplier must be positive")
        if tuple(self.code) not in bch.SUPPORTED_CODES:
            raise ConfigError(f"unsupported BCH code {self.code}")


@dataclass(frozen=True)
class SessionKey:
    bytes: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.bytes) != KEY_BYTES:
            raise ValueError(f"session key must be {KEY_BYTES} bytes")

    def hex(self) -> str:
        return self.bytes.hex()


@dataclass(frozen=True)
class RecordParams:
    """Acquisition constants needed to recompute features at reproduction."""

    c: float
    window_seconds: float
    amplitude_multiplier: float


@dataclass(frozen=True)
class EnrollmentRecord:
    version: int
    code_spec: tuple[int, int, int]
    mask: MaskParameters
    quantizer_bounds: tuple[tuple[float, float], ...]
    syndromes: tuple[Syndrome, ...]
    hash_keys: tuple[UniversalHashKey, ...]
    selection_indices: tuple[int, ...]
    key_check: bytes
    params: RecordParams

    def __post_init__(self):
        d = self.mask.dimension
        idx = self.selection_indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise RecordFormatError("selection indices must be strictly increasing")
        if not all(1 <= j <= d for j in idx):
            raise RecordFormatError(f"selection indices must lie in [1, {d}]")
        if not (len(self.quantizer_bounds) == len(self.syndromes) == len(self.hash_keys) == d):
            raise RecordFormatError("per-feature sections disagree with the mask dimension")
        if sum(self.hash_keys[j - 1].output_bits for j in idx) != KEY_BITS:
            raise RecordFormatError(f"selected randomness must total {KEY_BITS} bits")
        if len(self.key_check) != 16:
            raise RecordFormatError("key_check must be 16 bytes")

    @property
    def dimension(self) -> int:
        return self.mask.dimension

    @property
    def degree(self) -> int:
        return self.dimension - 3

    @property
    def code(self) -> bch.BchCode:
        n, k, t = self.code_spec
        return bch.make_code(n, k, t)

    @property
    def fingerprint(self) -> str:
        return self.key_check[:4].hex()

    # --- binary form ----------------------------------------------------

    def to_bytes(self) -> bytes:
        n, k, t = self.code_spec
        sections = [
            struct.pack("<HHB", n, k, t),
            self.mask.to_bytes(),
            _pack_bounds(self.quantizer_bounds),
            _pack_syndromes(self.syndromes),
            _pack_hash_keys(self.hash_keys),
            _pack_indices(self.selection_indices),
            self.key_check,
            struct.pack(
                "<ddd", self.params.c, self.params.window_seconds, self.params.amplitude_multiplier
            ),
        ]
        out = bytearray(RECORD_MAGIC)
        out.append(self.version)
        for section in sections:
            out += struct.pack("<I", len(section)) + section
        return bytes(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EnrollmentRecord":
        if blob[:4] != RECORD_MAGIC:
            raise RecordFormatError("not an enrollment record (bad magic)")
        if len(blob) < 5:
            raise RecordFormatError("enrollment record truncated")
        version = blob[4]
        if version != RECORD_VERSION:
            raise RecordFormatError(f"unsupported enrollment record version {version}")
        sections, pos = [], 5
        while pos < len(blob):
            if pos + 4 > len(blob):
                raise RecordFormatError("truncated section header")
            (size,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            if pos + size > len(blob):
                raise RecordFormatError("truncated section body")
            sections.append(blob[pos:pos + size])
            pos += size
        if len(sections) != 8:
            raise RecordFormatError(f"expected 8 sections, found {len(sections)}")
        code_s, mask_s, bounds_s, synd_s, keys_s, idx_s, check_s, params_s = sections
        try:
            n, k, t = struct.unpack("<HHB", code_s)
            code = bch.make_code(n, k, t)
            return cls(
                version=version,
                code_spec=(n, k, t),
                mask=MaskParameters.from_bytes(mask_s),
                quantizer_bounds=_unpack_bounds(bounds_s),
                syndromes=_unpack_syndromes(synd_s, 2 * code.t),
                hash_keys=_unpack_hash_keys(keys_s),
                selection_indices=_unpack_indices(idx_s),
                key_check=bytes(check_s),
                params=RecordParams(*struct.unpack("<ddd", params_s)),
            )
        except (struct.error, ValueError) as exc:
            raise RecordFormatError(f"malformed enrollment record: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "EnrollmentRecord":
        return cls.from_bytes(Path(path).read_bytes())


def _pack_bounds(bounds) -> bytes:
    return struct.pack("<H", len(bounds)) + b"".join(struct.pack("<dd", lo, hi) for lo, hi in bounds)


def _unpack_bounds(data: bytes) -> tuple[tuple[float, float], ...]:
    (count,) = struct.unpack_from("<H", data)
    if len(data) != 2 + 16 * count:
        raise RecordFormatError("bounds section length mismatch")
    return tuple(struct.unpack_from("<dd", data, 2 + 16 * i) for i in range(count))


def _pack_syndromes(syndromes) -> bytes:
    out = bytearray(struct.pack("<H", len(syndromes)))
    for s in syndromes:
        out += bytes(s.components)
    return bytes(out)


def _unpack_syndromes(data: bytes, width: int) -> tuple[Syndrome, ...]:
    (count,) = struct.unpack_from("<H", data)
    if len(data) != 2 + width * count:
        raise RecordFormatError("syndrome section length mismatch")
    return tuple(Syndrome(tuple(data[2 + width * i: 2 + width * (i + 1)])) for i in range(count))


def _pack_hash_keys(keys) -> bytes:
    out = bytearray(struct.pack("<H", len(keys)))
    for hk in keys:
        out += hk.key.to_bytes(16, "little") + bytes([hk.output_bits])
    return bytes(out)


def _unpack_hash_keys(data: bytes) -> tuple[UniversalHashKey, ...]:
    (count,) = struct.unpack_from("<H", data)
    if len(data) != 2 + 17 * count:
        raise RecordFormatError("hash key section length mismatch")
    keys = []
    for i in range(count):
        chunk = data[2 + 17 * i: 2 + 17 * (i + 1)]
        keys.append(UniversalHashKey(int.from_bytes(chunk[:16], "little"), chunk[16]))
    return tuple(keys)


def _pack_indices(indices) -> bytes:
    return struct.pack(f"<H{len(indices)}H", len(indices), *indices)


def _unpack_indices(data: bytes) -> tuple[int, ...]:
    (count,) = struct.unpack_from("<H", data)
    if len(data) != 2 + 2 * count:
        raise RecordFormatError("index section length mismatch")
    return struct.unpack_from(f"<{count}H", data, 2)


def key_check_tag(key: bytes, hash_keys, indices) -> bytes:
    """First 16 bytes of SHA-256(salt || key); salt is bound to the public record."""
    salt = hashlib.sha256(_SALT_TAG + _pack_hash_keys(hash_keys) + _pack_indices(indices)).digest()[:16]
    return hashlib.sha256(salt + key).digest()[:16]


def _derive_seeds(seed: int) -> tuple[int, int, int]:
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)


def _draw_hash_key(rng: np.random.Generator, l: int) -> UniversalHashKey:
    while True:
        value = int.from_bytes(rng.bytes(16), "little") & ((1 << HASH_FIELD_BITS) - 1)
        if value:
            return UniversalHashKey(value, l)


def masked_features(record: EegRecord, mask: MaskParameters, params: RecordParams) -> np.ndarray:
    beta = extract_beta(record, params.window_seconds, params.amplitude_multiplier)
    return features_from_signal(beta, mask, mask.dimension - 3, params.c).values


def feature_levels(record: EegRecord, enrollment: EnrollmentRecord) -> list[int]:
    """Quantizer level of every feature of ``record`` under ``enrollment``'s bounds."""
    w = masked_features(record, enrollment.mask, enrollment.params)
    n = enrollment.code_spec[0]
    return [quantize_level(v, b, n) for v, b in zip(w, enrollment.quantizer_bounds)]


def _concat(pieces) -> bytes:
    acc, bits = 0, 0
    for r in pieces:
        acc = (acc << r.length) | r.value
        bits += r.length
    return acc.to_bytes(bits // 8, "big")


def enroll(record: EegRecord, config: PipelineConfig | None = None, seed: int = 0):
    """Return ``(SessionKey, EnrollmentRecord)``; deterministic in all inputs."""
    config = config or PipelineConfig()
    config.validate()
    mask_seed, hash_seed, select_seed = _derive_seeds(seed)
    mask = generate_mask(mask_seed, config.dimension, config.theta)
    params = RecordParams(config.c, config.window_seconds, config.amplitude_multiplier)
    w = masked_features(record, mask, params)
    code = bch.make_code(*config.code)

    bounds = tuple(quantizer_bounds(float(v), config.noise_rel, config.noise_abs) for v in w)
    words = [quantize(float(v), b, code) for v, b in zip(w, bounds)]
    syndromes = tuple(syndrome(word, code) for word in words)

    rng = np.random.default_rng(hash_seed)
    hash_keys = tuple(_draw_hash_key(rng, config.l) for _ in range(config.dimension))
    picks = np.random.default_rng(select_seed).choice(config.dimension, config.q, replace=False)
    indices = tuple(sorted(int(j) + 1 for j in picks))

    key = _concat(extract_randomness(words[j - 1], hash_keys[j - 1]) for j in indices)
    enrollment = EnrollmentRecord(
        version=RECORD_VERSION,
        code_spec=code.params,
        mask=mask,
        quantizer_bounds=bounds,
        syndromes=syndromes,
        hash_keys=hash_keys,
        selection_indices=indices,
        key_check=key_check_tag(key, hash_keys, indices),
        params=params,
    )
    return SessionKey(key), enrollment


def reproduce_key(fresh: EegRecord, enrollment: EnrollmentRecord) -> SessionKey:
    """Re-derive the enrolled key from a new reading or raise AuthenticationError."""
    code = enrollment.code
    w = masked_features(fresh, enrollment.mask, enrollment.params)
    pieces = []
    for j in enrollment.selection_indices:
        noisy = quantize(float(w[j - 1]), enrollment.quantizer_bounds[j - 1], code)
        try:
            word = reproduce(noisy, enrollment.syndromes[j - 1], code)
        except IrrecoverableError as exc:
            raise AuthenticationError(f"feature {j} could not be recovered: {exc}") from None
        pieces.append(extract_randomness(word, enrollment.hash_keys[j - 1]))
    key = _concat(pieces)
    expected = key_check_tag(key, enrollment.hash_keys, enrollment.selection_indices)
    if not hmac.compare_digest(expected, enrollment.key_check):
        raise AuthenticationError("reproduced key does not match the key check value")
    return SessionKey(key)


def rotate_key(fresh: EegRecord, config: PipelineConfig | None = None, seed: int = 1):
    """Enroll again under a new seed; the previous record is superseded."""
    return enroll(fresh, config, seed)


def verify_key(key: SessionKey, enrollment: EnrollmentRecord) -> bool:
    expected = key_check_tag(key.bytes, enrollment.hash_keys, enrollment.selection_indices)
    return hmac.compare_digest(expected, enrollment.key_check)
