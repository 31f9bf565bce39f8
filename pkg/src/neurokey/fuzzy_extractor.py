"""Secure sketch plus universal-hash extractor over thermometer-coded features.

Each real-valued masked feature is quantized to a unary word of n bits, so that
level distance equals Hamming distance and the BCH capability t bounds the
tolerated drift directly. The BCH syndrome of that word is the public sketch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .bch import BchCode
from .errors import ArgumentError, ParameterError
from .galois import HASH_FIELD_BITS, gf127_mul

DEFAULT_OUTPUT_BITS = 32
DEFAULT_NOISE_REL = 0.02
DEFAULT_NOISE_ABS = 0.01
BOUNDS_HALF_WIDTH_SIGMAS = 5.0


def thermometer(level: int, n: int) -> int:
    """Word with bits 0..level-1 set (bit j = coefficient of x^j)."""
    if not 0 <= level <= n:
        raise ArgumentError(f"level {level} outside [0, {n}]")
    return (1 << level) - 1


def thermometer_level(word: int) -> int | None:
    """Inverse of ``thermometer``; None when ``word`` is not unary."""
    if word & (word + 1):
        return None
    return word.bit_length()


@dataclass(frozen=True)
class QuantizedFeature:
    """An n-bit word. ``level`` is set only when the word is a thermometer code."""

    word: int
    n: int
    level: int | None = None

    def __post_init__(self):
        if self.word < 0 or self.word >> self.n:
            raise ArgumentError(f"word does not fit in {self.n} bits")
        if self.level is not None and thermometer(self.level, self.n) != self.word:
            raise ArgumentError("level does not match the thermometer word")

    @classmethod
    def from_word(cls, word: int, n: int) -> "QuantizedFeature":
        return cls(word, n, thermometer_level(word))

    @property
    def bits(self) -> str:
        """Coefficients w_0..w_{n-1} as a '0'/'1' string."""
        return "".join("1" if (self.word >> j) & 1 else "0" for j in range(self.n))

    def flip(self, *positions: int) -> "QuantizedFeature":
        word = self.word
        for p in positions:
            word ^= 1 << p
        return QuantizedFeature.from_word(word, self.n)


@dataclass(frozen=True)
class Syndrome:
    components: tuple[int, ...]

    def __xor__(self, other: "Syndrome") -> "Syndrome":
        return Syndrome(tuple(a ^ b for a, b in zip(self.components, other.components)))

    def is_zero(self) -> bool:
        return not any(self.components)


@dataclass(frozen=True)
class UniversalHashKey:
    key: int
    output_bits: int = DEFAULT_OUTPUT_BITS

    def __post_init__(self):
        if not 0 < self.key < (1 << HASH_FIELD_BITS):
            raise ArgumentError("hash key must be a nonzero element of GF(2^127)")
        if not 0 < self.output_bits <= HASH_FIELD_BITS:
            raise ArgumentError("output_bits must be in [1, 127]")


@dataclass(frozen=True)
class FeatureRandomness:
    value: int
    length: int

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.length + 7) // 8, "big")

    @property
    def bits(self) -> str:
        return format(self.value, f"0{self.length}b")


def quantizer_bounds(
    value: float,
    noise_rel: float = DEFAULT_NOISE_REL,
    noise_abs: float = DEFAULT_NOISE_ABS,
) -> tuple[float, float]:
    """Public quantizer window for one enrolled feature.

    sigma = noise_rel*|value| + noise_abs. The half-width is 5 sigma rounded up
    to a power of sqrt(2), and the centre is snapped to a grid of that
    half-width. Centring on the value itself would put every enrolled level at
    mid-scale, and a grid that scaled continuously with |value| would do nearly
    the same; on a fixed ladder the level tracks the reading. The value always
    lands in the middle half of the window.
    """
    if not math.isfinite(value):
        raise ArgumentError("feature value must be finite")
    sigma = noise_rel * abs(value) + noise_abs
    if not sigma > 0:
        raise ArgumentError("noise scale must be positive")
    rung = math.ceil(2 * math.log2(BOUNDS_HALF_WIDTH_SIGMAS * sigma))
    half = 2.0 ** (rung // 2) * (math.sqrt(2) if rung % 2 else 1.0)
    centre = math.floor(value / half + 0.5) * half
    return centre - half, centre + half


def quantize_level(value: float, bounds: tuple[float, float], n: int) -> int:
    lo, hi = bounds
    if not math.isfinite(value):
        raise ArgumentError("cannot quantize a non-finite value")
    if not lo < hi:
        raise ArgumentError("quantizer bounds need lo < hi")
    scaled = (value - lo) / (hi - lo) * n
    return min(max(math.floor(scaled + 0.5), 0), n)  # round half up, then clamp


def quantize(value: float, bounds: tuple[float, float], code: BchCode) -> QuantizedFeature:
    level = quantize_level(value, bounds, code.n)
    return QuantizedFeature(thermometer(level, code.n), code.n, level)


def syndrome(q: QuantizedFeature, code: BchCode) -> Syndrome:
    if q.n != code.n:
        raise ParameterError(f"word length {q.n} != code length {code.n}")
    return Syndrome(code.syndrome(q.word))


def reproduce(q_noisy: QuantizedFeature, stored: Syndrome, code: BchCode) -> QuantizedFeature:
    """Recover the enrolled word from a re-reading within Hamming distance t.

    Raises IrrecoverableError when the decoder cannot explain the syndrome
    difference with at most t bit errors.
    """
    if q_noisy.n != code.n:
        raise ParameterError(f"word length {q_noisy.n} != code length {code.n}")
    if len(stored.components) != 2 * code.t:
        raise ParameterError("stored syndrome has the wrong number of components")
    return QuantizedFeature.from_word(code.correct(q_noisy.word, stored.components), code.n)


def extract_randomness(q: QuantizedFeature, hkey: UniversalHashKey) -> FeatureRandomness:
    """Top ``output_bits`` bits of key * word in GF(2^127)."""
    product = gf127_mul(hkey.key, q.word)
    return FeatureRandomness(product >> (HASH_FIELD_BITS - hkey.output_bits), hkey.output_bits)
