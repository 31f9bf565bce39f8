"""Legendre fitting of a Beta window and linear masking of the feature vector."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .eeg_signal import BetaSignal
from .errors import ArgumentError, DomainError, MaskGenerationError, RankError, RecordFormatError

MAX_DEGREE = 64
DEFAULT_DEGREE = 8
DEFAULT_SCALE = 100.0
DEFAULT_THETA = 4.0

MASK_BLOB_VERSION = 1
_MAX_MASK_ATTEMPTS = 100
_MIN_ABS_DET = 1e-12
_MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class LegendreFit:
    coefficients: np.ndarray
    degree: int
    residual_rms: float

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=np.float64)
        if coeffs.shape != (self.degree + 1,):
            raise ArgumentError("coefficient count must be degree + 1")
        if not np.all(np.isfinite(coeffs)):
            raise ArgumentError("coefficients must be finite")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coefficients", coeffs)

    def evaluate(self, x) -> np.ndarray:
        return legendre_basis(self.degree, x) @ self.coefficients


@dataclass(frozen=True, eq=False)
class RawFeatureVector:
    values: np.ndarray
    scale_constant: float

    @property
    def degree(self) -> int:
        return self.values.size - 3


@dataclass(frozen=True, eq=False)
class MaskParameters:
    matrix: np.ndarray
    offset: np.ndarray
    theta: float
    seed: int

    @property
    def dimension(self) -> int:
        return self.offset.size

    def __eq__(self, other):
        if not isinstance(other, MaskParameters):
            return NotImplemented
        return (
            self.theta == other.theta
            and self.seed == other.seed
            and np.array_equal(self.matrix, other.matrix)
            and np.array_equal(self.offset, other.offset)
        )

    def to_bytes(self) -> bytes:
        d = self.dimension
        head = struct.pack("<BHdQ", MASK_BLOB_VERSION, d, self.theta, self.seed)
        return (
            head
            + np.ascontiguousarray(self.matrix, dtype="<f8").tobytes()
            + np.ascontiguousarray(self.offset, dtype="<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MaskParameters":
        head = struct.calcsize("<BHdQ")
        if len(blob) < head:
            raise RecordFormatError("mask blob truncated")
        version, d, theta, seed = struct.unpack_from("<BHdQ", blob)
        if version != MASK_BLOB_VERSION:
            raise RecordFormatError(f"unsupported mask blob version {version}")
        if len(blob) != head + 8 * (d * d + d):
            raise RecordFormatError("mask blob length does not match its dimension")
        matrix = np.frombuffer(blob, dtype="<f8", count=d * d, offset=head).reshape(d, d)
        offset = np.frombuffer(blob, dtype="<f8", count=d, offset=head + 8 * d * d)
        return cls(matrix.astype(np.float64), offset.astype(np.float64), theta, seed)


@dataclass(frozen=True, eq=False)
class MaskedFeatureVector:
    values: np.ndarray


def legendre_polynomial(n: int, x: float) -> float:
    """P_n(x) via the three-term recurrence (n+1)P_{n+1} = (2n+1)xP_n - nP_{n-1}."""
    if n < 0 or n > MAX_DEGREE:
        raise ArgumentError(f"degree must be in [0, {MAX_DEGREE}]")
    if not abs(x) <= 1.0:
        raise DomainError(f"x={x} is outside [-1, 1]")
    prev, cur = 1.0, x
    if n == 0:
        return prev
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1) * x * cur - k * prev) / (k + 1)
    return cur


def legendre_basis(degree: int, x) -> np.ndarray:
    """Design matrix with columns P_0(x)..P_degree(x)."""
    x = np.asarray(x, dtype=np.float64)
    if degree < 0 or degree > MAX_DEGREE:
        raise ArgumentError(f"degree must be in [0, {MAX_DEGREE}]")
    if np.any(np.abs(x) > 1.0):
        raise DomainError("abscissae must lie in [-1, 1]")
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for k in range(1, degree):
        out[..., k + 1] = ((2 * k + 1) * x * out[..., k] - k * out[..., k - 1]) / (k + 1)
    return out


def time_axis(count: int) -> np.ndarray:
    """Sample instants mapped affinely onto [-1, 1]."""
    if count == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, count)


def fit_legendre(signal: BetaSignal, degree: int = DEFAULT_DEGREE) -> LegendreFit:
    y = np.asarray(signal.samples, dtype=np.float64)
    if degree < 0:
        raise ArgumentError("degree must be non-negative")
    if y.size < degree + 1:
        raise ArgumentError(f"need at least {degree + 1} samples, got {y.size}")
    design = legendre_basis(degree, time_axis(y.size))
    coeffs, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < degree + 1:
        raise RankError(f"design matrix rank {rank} < {degree + 1}")
    residual = y - design @ coeffs
    return LegendreFit(coeffs, degree, float(np.sqrt(np.mean(residual**2))))


def build_raw_features(fit: LegendreFit, signal: BetaSignal, c: float = DEFAULT_SCALE) -> RawFeatureVector:
    if not c > 0:
        raise ArgumentError("scale constant c must be positive")
    values = np.concatenate(
        [c * fit.coefficients, [signal.amplitude_multiplier, signal.window_seconds]]
    )
    return RawFeatureVector(values, float(c))


def generate_mask(seed: int, dimension: int, theta: float = DEFAULT_THETA) -> MaskParameters:
    """Random invertible matrix with unit column sums plus a signed offset vector.

    Offset magnitudes are uniform on [2**-theta, 2**theta].
    """
    if dimension < 1:
        raise ArgumentError("dimension must be at least 1")
    if not theta > 0:
        raise ArgumentError("theta must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_MASK_ATTEMPTS):
        matrix = rng.uniform(0.0, 1.0, (dimension, dimension))
        sums = matrix.sum(axis=0)
        if np.any(sums == 0):
            continue
        matrix /= sums
        if abs(np.linalg.det(matrix)) > _MIN_ABS_DET and np.linalg.cond(matrix) < _MAX_CONDITION:
            break
    else:
        raise MaskGenerationError(f"no invertible matrix after {_MAX_MASK_ATTEMPTS} draws")
    magnitudes = rng.uniform(2.0**-theta, 2.0**theta, dimension)
    signs = rng.choice([-1.0, 1.0], dimension)
    return MaskParameters(matrix, signs * magnitudes, float(theta), int(seed))


def mask_features(z: RawFeatureVector, params: MaskParameters) -> MaskedFeatureVector:
    """w = z M + gamma, with z as a row vector."""
    if z.values.size != params.dimension:
        raise ArgumentError(
            f"feature dimension {z.values.size} != mask dimension {params.dimension}"
        )
    return MaskedFeatureVector(z.values @ params.matrix + params.offset)


def unmask_features(w: MaskedFeatureVector, params: MaskParameters) -> np.ndarray:
    if w.values.size != params.dimension:
        raise ArgumentError("dimension mismatch")
    return np.linalg.solve(params.matrix.T, w.values - params.offset)


def features_from_signal(
    signal: BetaSignal, params: MaskParameters, degree: int, c: float
) -> MaskedFeatureVector:
    fit = fit_legendre(signal, degree)
    return mask_features(build_raw_features(fit, signal, c), params)

