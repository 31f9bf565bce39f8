"""Narrow-sense binary BCH codes: generator construction and syndrome decoding."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache

from .errors import IrrecoverableError, ParameterError
from .galois import GF2m, clmul, field

# (n, k) -> t for the parameter sets this package supports
SUPPORTED_CODES = {(15, 7): 2, (31, 16): 3, (127, 64): 10}
DEFAULT_CODE = (127, 64)


def _gf_poly_mul(gf: GF2m, a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] ^= gf.mul(ai, bj)
    return out


def cyclotomic_coset(i: int, m: int) -> tuple[int, ...]:
    order = (1 << m) - 1
    coset, j = [], i % order
    while j not in coset:
        coset.append(j)
        j = (2 * j) % order
    return tuple(sorted(coset))


def minimal_polynomial(gf: GF2m, i: int) -> int:
    """Minimal polynomial of alpha^i over GF(2), bit-packed."""
    poly = [1]
    for j in cyclotomic_coset(i, gf.m):
        poly = _gf_poly_mul(gf, poly, [gf.alpha_pow(j), 1])  # (x + alpha^j)
    if any(c not in (0, 1) for c in poly):
        raise ArithmeticError("minimal polynomial has coefficients outside GF(2)")
    return sum(c << k for k, c in enumerate(poly))


@dataclass(frozen=True)
class BchCode:
    n: int
    k: int
    t: int
    m: int
    generator_poly: int
    gf: GF2m = dc_field(repr=False, compare=False)

    @property
    def params(self) -> tuple[int, int, int]:
        return (self.n, self.k, self.t)

    def is_codeword(self, word: int) -> bool:
        return not any(self.syndrome(word))

    def encode(self, message: int) -> int:
        """Non-systematic encoding c(x) = m(x) g(x)."""
        if message >> self.k:
            raise ParameterError(f"message wider than k={self.k} bits")
        return clmul(message, self.generator_poly)

    @cached_property
    def _byte_tables(self) -> tuple[tuple[int, tuple[int, ...]], ...]:
        """Per i: (alpha^(8i), value of every byte polynomial at alpha^i)."""
        gf = self.gf
        tables = []
        for i in range(1, 2 * self.t + 1):
            powers = [gf.alpha_pow(i * j) for j in range(8)]
            row = [0] * 256
            for b in range(1, 256):
                low = b & -b
                row[b] = row[b ^ low] ^ powers[low.bit_length() - 1]
            tables.append((gf.alpha_pow(8 * i), tuple(row)))
        return tuple(tables)

    def syndrome(self, word: int) -> tuple[int, ...]:
        """(w(alpha^1), ..., w(alpha^2t)) by Horner evaluation in steps of x^8."""
        if word >> self.n:
            raise ParameterError(f"word wider than n={self.n} bits")
        chunks = word.to_bytes((self.n + 7) // 8, "big")
        mul = self.gf.mul
        out = []
        for step, row in self._byte_tables:
            acc = 0
            for b in chunks:
                acc = mul(acc, step) ^ row[b]
            out.append(acc)
        return tuple(out)

    def error_locator(self, syndromes: tuple[int, ...]) -> list[int]:
        """Berlekamp-Massey; returns Lambda(x) coefficients, lowest degree first."""
        gf = self.gf
        c, b = [1], [1]
        length, shift, last_d = 0, 1, 1
        for step, s in enumerate(syndromes):
            d = s
            for i in range(1, min(length, len(c) - 1) + 1):
                d ^= gf.mul(c[i], syndromes[step - i])
            if d == 0:
                shift += 1
                continue
            coef = gf.div(d, last_d)
            update = [0] * shift + [gf.mul(coef, x) for x in b]
            size = max(len(c), len(update))
            new_c = [
                (c[i] if i < len(c) else 0) ^ (update[i] if i < len(update) else 0)
                for i in range(size)
            ]
            if 2 * length <= step:
                b, last_d = c, d
                length = step + 1 - length
                shift = 1
            else:
                shift += 1
            c = new_c
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        if len(c) - 1 != length:
            raise IrrecoverableError("error locator degree disagrees with LFSR length")
        return c

    def chien_search(self, locator: list[int]) -> list[int]:
        """Positions j with Lambda(alpha^-j) = 0."""
        exp, log, order = self.gf.exp, self.gf.log, self.gf.order
        terms = [(log[coef], k) for k, coef in enumerate(locator) if coef]
        positions = []
        for j in range(self.n):
            acc = 0
            for lg, k in terms:
                acc ^= exp[(lg - j * k) % order]
            if acc == 0:
                positions.append(j)
        return positions

    def correct(self, word: int, stored: tuple[int, ...]) -> int:
        """Return the word whose syndrome equals ``stored`` within distance t of ``word``."""
        diff = tuple(a ^ b for a, b in zip(self.syndrome(word), stored))
        if not any(diff):
            return word
        locator = self.error_locator(diff)
        degree = len(locator) - 1
        if degree > self.t:
            raise IrrecoverableError(f"{degree} errors exceed capability t={self.t}")
        positions = self.chien_search(locator)
        if len(positions) != degree:
            raise IrrecoverableError(
                f"Chien search found {len(positions)} roots for a degree-{degree} locator"
            )
        for j in positions:
            word ^= 1 << j
        if self.syndrome(word) != tuple(stored):
            raise IrrecoverableError("corrected word does not match the stored syndrome")
        return word


@lru_cache(maxsize=None)
def make_code(n: int, k: int, t: int | None = None) -> BchCode:
    if (n, k) not in SUPPORTED_CODES:
        raise ParameterError(f"unsupported BCH parameters ({n},{k})")
    expected_t = SUPPORTED_CODES[(n, k)]
    if t is not None and t != expected_t:
        raise ParameterError(f"BCH({n},{k}) corrects t={expected_t}, not {t}")
    m = (n + 1).bit_length() - 1
    gf = field(m)
    seen: set[tuple[int, ...]] = set()
    g = 1
    for i in range(1, 2 * expected_t + 1):
        coset = cyclotomic_coset(i, m)
        if coset in seen:
            continue
        seen.add(coset)
        g = clmul(g, minimal_polynomial(gf, i))
    if g.bit_length() - 1 != n - k:
        raise ParameterError(f"generator degree {g.bit_length() - 1} != n-k={n - k}")
    return BchCode(n, k, expected_t, m, g, gf)


def parse_code_spec(text: str) -> tuple[int, int]:
    """'127,64' -> (127, 64)."""
    try:
        n, k = (int(p) for p in text.split(","))
    except ValueError:
        raise ParameterError(f"code must look like 'n,k', got {text!r}") from None
    if (n, k) not in SUPPORTED_CODES:
        raise ParameterError(f"unsupported BCH parameters ({n},{k})")
    return n, k
