"""Reference arithmetic in Z_{2^k}[X]/(X^n + 1) with centered residues.

Everything the in-memory executor produces is compared against the
functions here, so they are written for clarity first.  ``poly_mult`` is the
fast path (Kronecker substitution on big integers) used by the B/FV
reference; ``poly_mult_schoolbook`` and ``poly_mult_karatsuba`` are the
independent slow paths it is checked against.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

try:
    import gmpy2

    _mpz = gmpy2.mpz
except ImportError:  # pragma: no cover
    _mpz = int


def reduce_centered(x: int, k: int) -> int:
    """Representative of x mod 2**k in [-2**(k-1), 2**(k-1))."""
    if k < 1:
        raise ValueError("k must be >= 1")
    half = 1 << (k - 1)
    return ((x + half) & ((1 << k) - 1)) - half


def to_unsigned(x: int, k: int) -> int:
    return x & ((1 << k) - 1)


def scale_round(x: int, shift: int) -> int:
    """round(x / 2**shift) with ties toward +infinity."""
    if shift < 0:
        raise ValueError("shift must be non-negative")
    if shift == 0:
        return x
    return (x + (1 << (shift - 1))) >> shift


def shift_add(a: int, b: int, bits: int | None = None) -> int:
    """Bit-serial multiply: scan the multiplier, add the running multiplicand.

    The multiplier's magnitude is scanned LSB first; its sign is applied at
    the end.  ``bits`` is the number of multiplier bits scanned (defaults to
    the multiplier's bit length).
    """
    neg = b < 0
    mag = -b if neg else b
    if bits is None:
        bits = mag.bit_length()
    if mag >> bits:
        raise ValueError(f"multiplier {b} does not fit in {bits} bits")
    out = 0
    acc = a
    for i in range(bits):
        if (mag >> i) & 1:
            out += acc
        acc <<= 1
    return -out if neg else out


@dataclass(frozen=True)
class RingPoly:
    """Element of Z_{2^k}[X]/(X^n+1); coeffs[i] multiplies X**i."""

    coeffs: tuple[int, ...]
    k: int
    n: int

    def __post_init__(self):
        if len(self.coeffs) != self.n:
            raise ValueError(f"expected {self.n} coefficients, got {len(self.coeffs)}")
        lo, hi = -(1 << (self.k - 1)), 1 << (self.k - 1)
        for c in self.coeffs:
            if not lo <= c < hi:
                raise ValueError(f"coefficient {c} outside centered range for k={self.k}")

    @classmethod
    def from_ints(cls, values: Iterable[int], k: int, n: int | None = None) -> "RingPoly":
        vals = [int(v) for v in values]
        if n is None:
            n = len(vals)
        if len(vals) > n:
            raise ValueError("more coefficients than ring degree")
        vals += [0] * (n - len(vals))
        return cls(tuple(reduce_centered(v, k) for v in vals), k, n)

    @classmethod
    def zero(cls, k: int, n: int) -> "RingPoly":
        return cls((0,) * n, k, n)

    @classmethod
    def one(cls, k: int, n: int) -> "RingPoly":
        return cls((1,) + (0,) * (n - 1), k, n)

    @classmethod
    def monomial(cls, degree: int, k: int, n: int, coeff: int = 1) -> "RingPoly":
        """coeff * X**degree, folded by X**n = -1."""
        sign = -1 if (degree // n) % 2 else 1
        vals = [0] * n
        vals[degree % n] = sign * coeff
        return cls.from_ints(vals, k, n)

    def unsigned(self) -> list[int]:
        mask = (1 << self.k) - 1
        return [c & mask for c in self.coeffs]

    def __add__(self, other: "RingPoly") -> "RingPoly":
        return poly_add(self, other)

    def __sub__(self, other: "RingPoly") -> "RingPoly":
        return poly_sub(self, other)

    def __mul__(self, other: "RingPoly") -> "RingPoly":
        return poly_mult(self, other)

    def __neg__(self) -> "RingPoly":
        return RingPoly(tuple(reduce_centered(-c, self.k) for c in self.coeffs), self.k, self.n)


def _check_pair(a: RingPoly, b: RingPoly) -> None:
    if a.k != b.k or a.n != b.n:
        raise ValueError(f"ring mismatch: (k={a.k}, n={a.n}) vs (k={b.k}, n={b.n})")


def poly_add(a: RingPoly, b: RingPoly) -> RingPoly:
    _check_pair(a, b)
    return RingPoly(tuple(reduce_centered(x + y, a.k) for x, y in zip(a.coeffs, b.coeffs)), a.k, a.n)


def poly_sub(a: RingPoly, b: RingPoly) -> RingPoly:
    _check_pair(a, b)
    return RingPoly(tuple(reduce_centered(x - y, a.k) for x, y in zip(a.coeffs, b.coeffs)), a.k, a.n)


def negacyclic_fold(full: Sequence[int], n: int) -> list[int]:
    """Reduce an integer product of length <= 2n-1 by X**n = -1 (no modulus)."""
    out = list(full[:n]) + [0] * max(0, n - len(full))
    for i in range(n, len(full)):
        out[i - n] -= full[i]
    return out


def mult_full_schoolbook(a: Sequence[int], b: Sequence[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def poly_mult_schoolbook(a: RingPoly, b: RingPoly) -> RingPoly:
    """O(n^2) negacyclic convolution; the slowest and plainest oracle."""
    _check_pair(a, b)
    n = a.n
    acc = [0] * n
    for i, x in enumerate(a.coeffs):
        if not x:
            continue
        for j, y in enumerate(b.coeffs):
            d = i + j
            if d < n:
                acc[d] += x * y
            else:
                acc[d - n] -= x * y
    return RingPoly(tuple(reduce_centered(v, a.k) for v in acc), a.k, n)


def karatsuba_full(
    a: Sequence[int],
    b: Sequence[int],
    base: Callable[[int, int], int] = shift_add,
) -> list[int]:
    """Integer polynomial product (length 2n-1) by recursive Karatsuba.

    Splits at floor(n/2); single coefficients go to ``base``.
    """
    n = len(a)
    if n != len(b):
        raise ValueError("operands must have equal length")
    if n == 0:
        return []
    if n == 1:
        return [base(a[0], b[0])]
    h = n // 2
    lo_a, hi_a = a[:h], a[h:]
    lo_b, hi_b = b[:h], b[h:]
    # odd n: the high half is one longer, pad the low half to match
    m = n - h
    sum_a = [x + y for x, y in zip(list(lo_a) + [0] * (m - h), hi_a)]
    sum_b = [x + y for x, y in zip(list(lo_b) + [0] * (m - h), hi_b)]
    r1 = karatsuba_full(sum_a, sum_b, base)
    r2 = karatsuba_full(hi_a, hi_b, base)
    r3 = karatsuba_full(list(lo_a) + [0] * (m - h), list(lo_b) + [0] * (m - h), base)
    mid = [x - y - z for x, y, z in zip(r1, r2, r3)]
    out = [0] * (2 * n - 1)
    for i, v in enumerate(r3):
        if i < len(out):
            out[i] += v
    for i, v in enumerate(mid):
        out[i + h] += v
    for i, v in enumerate(r2):
        out[i + 2 * h] += v
    return out


def poly_mult_karatsuba(a: RingPoly, b: RingPoly, base: Callable[[int, int], int] = shift_add) -> RingPoly:
    _check_pair(a, b)
    full = karatsuba_full(a.coeffs, b.coeffs, base)
    return RingPoly(tuple(reduce_centered(v, a.k) for v in negacyclic_fold(full, a.n)), a.k, a.n)


def karatsuba_int_trace(a: int, b: int, bits: int) -> dict[str, int]:
    """One Karatsuba level on two ``bits``-wide integers, with intermediates.

    Halves are ``bits // 2`` wide; each half-product uses ``shift_add``.
    """
    h = bits // 2
    lo_a, hi_a = a & ((1 << h) - 1), a >> h
    lo_b, hi_b = b & ((1 << h) - 1), b >> h
    r1 = shift_add(lo_a + hi_a, lo_b + hi_b)
    r2 = shift_add(hi_a, hi_b)
    r3 = shift_add(lo_a, lo_b)
    mid = r1 - r2 - r3
    return {
        "high_a": hi_a, "low_a": lo_a, "high_b": hi_b, "low_b": lo_b,
        "sum_a": lo_a + hi_a, "sum_b": lo_b + hi_b,
        "r1": r1, "r2": r2, "r3": r3, "r1_minus_r3": r1 - r3, "mid": mid,
        "mid_shifted": mid << h, "r2_shifted": r2 << (2 * h),
        "product": (r2 << (2 * h)) + (mid << h) + r3,
    }


# -- fast path: Kronecker substitution ---------------------------------------

def _slot_bits(a: Sequence[int], b: Sequence[int]) -> int:
    ma = max((abs(x) for x in a), default=0).bit_length()
    mb = max((abs(x) for x in b), default=0).bit_length()
    bits = ma + mb + max(len(a), len(b)).bit_length() + 2
    return -(-bits // 8) * 8


def _pack(vals: Sequence[int], bits: int):
    nb = bits // 8
    off = 1 << (bits - 1)
    raw = b"".join((int(v) + off).to_bytes(nb, "little") for v in vals)
    ones = int.from_bytes(b"".join(((1 << (bits - 1))).to_bytes(nb, "little") for _ in vals), "little")
    return _mpz(int.from_bytes(raw, "little")) - _mpz(ones)


def _unpack(x, count: int, bits: int) -> list[int]:
    nb = bits // 8
    off = 1 << (bits - 1)
    ones = int.from_bytes(b"".join(off.to_bytes(nb, "little") for _ in range(count)), "little")
    raw = int(x + ones).to_bytes(count * nb, "little")
    return [int.from_bytes(raw[i * nb:(i + 1) * nb], "little") - off for i in range(count)]


def mult_full(a: Sequence[int], b: Sequence[int]) -> list[int]:
    """Exact integer product of two coefficient lists, length len(a)+len(b)-1."""
    if not a or not b:
        return []
    bits = _slot_bits(a, b)
    prod = _pack(a, bits) * _pack(b, bits)
    return _unpack(prod, len(a) + len(b) - 1, bits)


def poly_mult(a: RingPoly, b: RingPoly) -> RingPoly:
    """Negacyclic product via one big-integer multiplication."""
    _check_pair(a, b)
    full = mult_full(a.coeffs, b.coeffs)
    return RingPoly(tuple(reduce_centered(v, a.k) for v in negacyclic_fold(full, a.n)), a.k, a.n)


def poly_scale_round(a: RingPoly, k_prime: int, out_k: int | None = None) -> RingPoly:
    """Divide every coefficient by 2**k_prime, rounding ties up.

    Works on the unsigned k-bit pattern of each coefficient (what the
    shifter sees), then re-centers modulo 2**out_k (default: a.k).
    """
    if not 0 <= k_prime <= a.k:
        raise ValueError(f"k_prime={k_prime} outside [0, {a.k}]")
    out_k = a.k if out_k is None else out_k
    vals = [reduce_centered(scale_round(u, k_prime), out_k) for u in a.unsigned()]
    return RingPoly(tuple(vals), out_k, a.n)


# -- serialization -----------------------------------------------------------

_HEADER = struct.Struct("<IIQ")


def coeff_bytes(k: int) -> int:
    return -(-k // 8)


def poly_to_bytes(p: RingPoly) -> bytes:
    """Header (k, n, payload length) then n little-endian two's-complement records."""
    nb = coeff_bytes(p.k)
    payload = b"".join(c.to_bytes(nb, "little", signed=True) for c in p.coeffs)
    return _HEADER.pack(p.k, p.n, len(payload)) + payload


def poly_from_bytes(buf: bytes, offset: int = 0) -> tuple[RingPoly, int]:
    """Parse one serialized polynomial; returns it and the offset just past it."""
    if len(buf) - offset < _HEADER.size:
        raise ValueError("truncated polynomial header")
    k, n, length = _HEADER.unpack_from(buf, offset)
    nb = coeff_bytes(k)
    if length != n * nb:
        raise ValueError(f"payload length {length} does not match n={n}, k={k}")
    start = offset + _HEADER.size
    end = start + length
    if end > len(buf):
        raise ValueError("truncated polynomial payload")
    vals = tuple(int.from_bytes(buf[start + i * nb:start + (i + 1) * nb], "little", signed=True) for i in range(n))
    return RingPoly(vals, k, n), end
