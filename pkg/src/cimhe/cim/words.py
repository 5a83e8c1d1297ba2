"""Multi-limb word arithmetic backing the simulated memory.

A register of ``lanes`` words, each ``width`` bits, is a C-contiguous
``uint64`` array of shape (lanes, width // 64), least significant limb
first.  Values are two's complement modulo 2**width.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numba import njit

U64 = np.uint64
_ONE = U64(1)
_S63 = U64(63)


def nlimbs(width: int) -> int:
    if width <= 0 or width % 64:
        raise ValueError(f"word width {width} must be a positive multiple of 64")
    return width // 64


def zeros(lanes: int, width: int) -> np.ndarray:
    return np.zeros((lanes, nlimbs(width)), dtype=U64)


def from_ints(values: Sequence[int], width: int) -> np.ndarray:
    """Pack integers (any sign) as two's complement words."""
    nl = nlimbs(width)
    mask = (1 << width) - 1
    nb = 8 * nl
    raw = b"".join((int(v) & mask).to_bytes(nb, "little") for v in values)
    return np.frombuffer(raw, dtype="<u8").astype(U64).reshape(len(values), nl)


def from_int64(values: np.ndarray, width: int) -> np.ndarray:
    """Fast path for machine-size integers: sign-extend int64 into limbs."""
    v = np.asarray(values, dtype=np.int64).reshape(-1)
    return resize(v.view(U64).reshape(-1, 1), width)


def to_ints(words: np.ndarray, signed: bool = True) -> list[int]:
    lanes, nl = words.shape
    width = 64 * nl
    raw = np.ascontiguousarray(words, dtype="<u8").tobytes()
    nb = 8 * nl
    out = [int.from_bytes(raw[i * nb:(i + 1) * nb], "little") for i in range(lanes)]
    if signed:
        half = 1 << (width - 1)
        full = 1 << width
        out = [v - full if v >= half else v for v in out]
    return out


def broadcast(value: int, lanes: int, width: int) -> np.ndarray:
    one = from_ints([value], width)
    return np.repeat(one, lanes, axis=0)


def resize(words: np.ndarray, width: int) -> np.ndarray:
    """Sign-extend or truncate to a new width."""
    nl = nlimbs(width)
    cur = words.shape[1]
    if nl == cur:
        return words.copy()
    if nl < cur:
        return np.ascontiguousarray(words[:, :nl])
    neg = (words[:, -1] >> _S63).astype(bool)
    fill = np.where(neg, U64(0xFFFFFFFFFFFFFFFF), U64(0))
    out = np.empty((words.shape[0], nl), dtype=U64)
    out[:, :cur] = words
    out[:, cur:] = fill[:, None]
    return out


@njit(cache=True)
def _add(x, y, cin, out):
    n, nl = x.shape
    for r in range(n):
        c = U64(cin)
        for j in range(nl):
            a = x[r, j]
            s = a + y[r, j]
            c1 = s < a
            s2 = s + c
            c = U64(c1 | (s2 < s))
            out[r, j] = s2


def add(x: np.ndarray, y: np.ndarray, cin: int = 0) -> np.ndarray:
    """(x + y + cin) mod 2**width; carry-out is dropped."""
    if x.shape != y.shape:
        raise ValueError(f"operand shapes differ: {x.shape} vs {y.shape}")
    out = np.empty_like(x)
    _add(np.ascontiguousarray(x), np.ascontiguousarray(y), int(cin), out)
    return out


def bitwise(op: str, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    if op == "NOT":
        return ~x
    if y is None or x.shape != y.shape:
        raise ValueError(f"{op} needs two operands of equal shape")
    if op == "AND":
        return x & y
    if op == "OR":
        return x | y
    if op == "XOR":
        return x ^ y
    raise ValueError(f"unknown bitwise op {op!r}")


def shift_left(x: np.ndarray, s: int) -> np.ndarray:
    nl = x.shape[1]
    if s <= 0:
        return x.copy() if s == 0 else shift_right(x, -s)
    q, r = divmod(s, 64)
    out = np.zeros_like(x)
    if q >= nl:
        return out
    if r == 0:
        out[:, q:] = x[:, :nl - q]
    else:
        out[:, q:] = x[:, :nl - q] << U64(r)
        if nl - q > 1:
            out[:, q + 1:] |= x[:, :nl - q - 1] >> U64(64 - r)
    return out


def shift_right(x: np.ndarray, s: int) -> np.ndarray:
    """Logical (zero-fill) right shift."""
    nl = x.shape[1]
    if s <= 0:
        return x.copy() if s == 0 else shift_left(x, -s)
    q, r = divmod(s, 64)
    out = np.zeros_like(x)
    if q >= nl:
        return out
    if r == 0:
        out[:, :nl - q] = x[:, q:]
    else:
        out[:, :nl - q] = x[:, q:] >> U64(r)
        if nl - q > 1:
            out[:, :nl - q - 1] |= x[:, q + 1:] << U64(64 - r)
    return out


def any_set(x: np.ndarray) -> np.ndarray:
    """Per-lane OR of every bit: the horizontal-OR flag."""
    return np.any(x != 0, axis=1)


def select(flag: np.ndarray, new: np.ndarray, old: np.ndarray) -> np.ndarray:
    return np.where(flag[:, None], new, old)


@njit(cache=True)
def _shift_add_leaf(a, b, bits, out):
    """Per lane: |a| * |b| by scanning ``bits`` multiplier bits, then sign fix.

    Returns the number of lanes whose multiplier did not fit in ``bits``.
    """
    n, nl = a.shape
    sh = np.zeros(nl, dtype=np.uint64)
    acc = np.zeros(nl, dtype=np.uint64)
    bm = np.zeros(nl, dtype=np.uint64)
    bad = 0
    for r in range(n):
        neg_a = (a[r, nl - 1] >> _S63) & _ONE
        neg_b = (b[r, nl - 1] >> _S63) & _ONE
        # magnitudes via NOT + 1 where negative
        c = neg_a
        for j in range(nl):
            v = a[r, j] ^ (U64(0) - neg_a)
            s = v + c
            c = U64(s < v) & c
            sh[j] = s
        c = neg_b
        for j in range(nl):
            v = b[r, j] ^ (U64(0) - neg_b)
            s = v + c
            c = U64(s < v) & c
            bm[j] = s
        # the scanned window must hold the whole multiplier
        top = bits >> 6
        for j in range(nl):
            if j > top and bm[j] != 0:
                bad += 1
                break
            if j == top and (bits & 63) and (bm[j] >> U64(bits & 63)) != 0:
                bad += 1
                break
            if j == top and (bits & 63) == 0 and bm[j] != 0:
                bad += 1
                break
        hi = 0
        for j in range(nl):
            acc[j] = 0
            if sh[j] != 0:
                hi = j + 1
        for i in range(bits):
            if (bm[i >> 6] >> U64(i & 63)) & _ONE:
                c = U64(0)
                lim = min(hi + 1, nl)
                for j in range(lim):
                    x = acc[j]
                    s = x + sh[j]
                    c1 = s < x
                    s2 = s + c
                    c = U64(c1 | (s2 < s))
                    acc[j] = s2
                if lim < nl and c:
                    acc[lim] += c
            cin = U64(0)
            lim = min(hi + 1, nl)
            for j in range(lim):
                v = sh[j]
                sh[j] = (v << _ONE) | cin
                cin = v >> _S63
            if lim > hi and lim <= nl and sh[lim - 1] != 0:
                hi = lim
        neg = neg_a ^ neg_b
        c = neg
        for j in range(nl):
            v = acc[j] ^ (U64(0) - neg)
            s = v + c
            c = U64(s < v) & c
            out[r, j] = s
    return bad


def shift_add_leaf(a: np.ndarray, b: np.ndarray, bits: int) -> np.ndarray:
    """Lane-parallel Shift-Add: a * b mod 2**width with ``bits`` multiplier bits."""
    if a.shape != b.shape:
        raise ValueError("leaf operands differ in shape")
    out = np.empty_like(a)
    bad = _shift_add_leaf(np.ascontiguousarray(a), np.ascontiguousarray(b), int(bits), out)
    if bad:
        raise OverflowError(f"{bad} multiplier lanes exceed the {bits}-bit scan window")
    return out
