"""Binary extension field arithmetic.

GF(2^m) for m <= 7 runs on log/antilog tables; GF(2^127) uses carry-less
multiplication reduced by the trinomial x^127 + x + 1. Elements are ints whose
bit i is the coefficient of x^i.
"""
from __future__ import annotations

from functools import lru_cache

# Primitive polynomials, bit i = coefficient of x^i.
PRIMITIVE_POLYS = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,  # x^4 + x + 1
    5: 0b100101,  # x^5 + x^2 + 1
    6: 0b1000011,
    7: 0b10001001,  # x^7 + x^3 + 1
}


class GF2m:
    """GF(2^m) with precomputed exp/log tables; immutable once built."""

    def __init__(self, m: int, primitive_poly: int | None = None):
        if m not in PRIMITIVE_POLYS and primitive_poly is None:
            raise ValueError(f"no primitive polynomial known for m={m}")
        self.m = m
        self.order = (1 << m) - 1
        self.poly = primitive_poly if primitive_poly is not None else PRIMITIVE_POLYS[m]
        exp = [0] * (2 * self.order)
        log = [-1] * (1 << m)
        x = 1
        for i in range(self.order):
            exp[i] = x
            if log[x] != -1:
                raise ValueError(f"polynomial {self.poly:#x} is not primitive")
            log[x] = i
            x <<= 1
            if x >> m:
                x ^= self.poly
        # doubled table avoids a modulo in mul()
        for i in range(self.order, 2 * self.order):
            exp[i] = exp[i - self.order]
        self.exp = tuple(exp)
        self.log = tuple(log)

    def alpha_pow(self, i: int) -> int:
        return self.exp[i % self.order]

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp[self.log[a] + self.log[b]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero in GF(2^m)")
        if a == 0:
            return 0
        return self.exp[(self.log[a] - self.log[b]) % self.order]

    def inv(self, a: int) -> int:
        return self.div(1, a)

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            return 0 if e else 1
        return self.exp[(self.log[a] * e) % self.order]

    def eval_poly(self, coeffs_int: int, x: int) -> int:
        """Horner evaluation of a GF(2)[x] polynomial (bit-packed) at x."""
        acc = 0
        for i in range(coeffs_int.bit_length() - 1, -1, -1):
            acc = self.mul(acc, x) ^ ((coeffs_int >> i) & 1)
        return acc


@lru_cache(maxsize=None)
def field(m: int) -> GF2m:
    return GF2m(m)


def clmul(a: int, b: int) -> int:
    """Carry-less product of two bit-packed GF(2)[x] polynomials."""
    if a.bit_length() > b.bit_length():
        a, b = b, a
    out = 0
    i = 0
    while a:
        if a & 1:
            out ^= b << i
        a >>= 1
        i += 1
    return out


def poly_mod(a: int, m: int) -> int:
    dm = m.bit_length()
    while a.bit_length() >= dm:
        a ^= m << (a.bit_length() - dm)
    return a


def poly_mul_mod(a: int, b: int, m: int) -> int:
    return poly_mod(clmul(a, b), m)


HASH_FIELD_BITS = 127
HASH_FIELD_POLY = (1 << 127) | 0b11
_MASK127 = (1 << 127) - 1


def gf127_mul(a: int, b: int) -> int:
    """Product in GF(2^127) = GF(2)[x]/(x^127 + x + 1)."""
    p = clmul(a, b)
    # x^127 == x + 1, fold the high half down twice
    hi = p >> 127
    p = (p & _MASK127) ^ hi ^ (hi << 1)
    hi = p >> 127
    p = (p & _MASK127) ^ hi ^ (hi << 1)
    return p
