"""Textbook B/FV over q = 2**k, t = 2**t_log2, used as ground truth.

Sampling is deterministic: every random polynomial is drawn from a Philox
stream keyed by sha256(seed || label), so identical seeds reproduce
identical keys and ciphertext bytes.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .params import ParamSet, multiplicative_depth, validate
from .polyring import (
    RingPoly,
    mult_full,
    poly_add,
    poly_from_bytes,
    poly_mult,
    poly_scale_round,
    poly_sub,
    poly_to_bytes,
    reduce_centered,
    scale_round,
)

DEFAULT_DECOMP_LOG2 = 30


class DepthWarning(UserWarning):
    """A multiplication was requested past the parameter set's depth."""


@dataclass(frozen=True)
class Plaintext:
    poly: RingPoly

    @property
    def t_log2(self) -> int:
        return self.poly.k

    @classmethod
    def from_ints(cls, values: Sequence[int], params: ParamSet) -> "Plaintext":
        return cls(RingPoly.from_ints(values, params.t_log2, params.n))

    @classmethod
    def constant(cls, value: int, params: ParamSet) -> "Plaintext":
        return cls.from_ints([value], params)

    def __getitem__(self, i: int) -> int:
        return self.poly.coeffs[i]


@dataclass(frozen=True)
class Ciphertext:
    c0: RingPoly
    c1: RingPoly
    level_hint: int = 0

    def __post_init__(self):
        if (self.c0.k, self.c0.n) != (self.c1.k, self.c1.n):
            raise ValueError("ciphertext components disagree on (k, n)")

    @property
    def k(self) -> int:
        return self.c0.k

    @property
    def n(self) -> int:
        return self.c0.n

    def to_bytes(self) -> bytes:
        return poly_to_bytes(self.c0) + poly_to_bytes(self.c1)


@dataclass(frozen=True)
class KeySet:
    params: ParamSet
    sk: RingPoly | None  # None in a public-only bundle
    pk: tuple[RingPoly, RingPoly]
    rlk: tuple[tuple[RingPoly, RingPoly], ...]
    decomp_log2: int = DEFAULT_DECOMP_LOG2

    def __post_init__(self):
        if self.sk is not None and any(c not in (-1, 0, 1) for c in self.sk.coeffs):
            raise ValueError("secret key must be ternary")
        if len(self.rlk) != num_digits(self.params.k, self.decomp_log2):
            raise ValueError("relinearization key has the wrong number of digits")


@dataclass(frozen=True)
class NoiseSample:
    poly: RingPoly
    bound: int

    def __post_init__(self):
        if any(abs(c) > self.bound for c in self.poly.coeffs):
            raise ValueError("noise coefficient exceeds bound")


def num_digits(k: int, w: int) -> int:
    return -(-k // w)


# -- sampling ----------------------------------------------------------------

@dataclass
class Sampler:
    """Counter-mode PRG keyed by the user seed; one stream per label."""

    seed: bytes
    _counter: int = field(default=0, repr=False)

    def __post_init__(self):
        if isinstance(self.seed, str):
            self.seed = self.seed.encode()
        if not self.seed or not any(self.seed):
            raise ValueError("refusing empty or all-zero randomness seed")

    def _rng(self, label: str) -> np.random.Generator:
        digest = hashlib.sha256(self.seed + b"|" + label.encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        return np.random.Generator(np.random.Philox(key=key))

    def uniform(self, label: str, k: int, n: int) -> RingPoly:
        nb = -(-k // 8)
        raw = self._rng(label).bytes(n * nb)
        mask = (1 << k) - 1
        vals = [int.from_bytes(raw[i * nb:(i + 1) * nb], "little") & mask for i in range(n)]
        return RingPoly.from_ints(vals, k, n)

    def bounded(self, label: str, bound: int, k: int, n: int) -> RingPoly:
        vals = self._rng(label).integers(-bound, bound, size=n, endpoint=True)
        return RingPoly.from_ints((int(v) for v in vals), k, n)

    def ternary(self, label: str, k: int, n: int) -> RingPoly:
        return self.bounded(label, 1, k, n)


def _check_params(params: ParamSet) -> None:
    check = validate(params)
    if not check:
        raise ValueError("invalid parameters: " + "; ".join(check.violations))


def _lift(p: RingPoly, k: int) -> RingPoly:
    """Re-embed small coefficients (ternary, errors) into width k."""
    return RingPoly.from_ints(p.coeffs, k, p.n)


# -- key generation, encryption, decryption ----------------------------------

def keygen(params: ParamSet, seed: bytes | str, decomp_log2: int = DEFAULT_DECOMP_LOG2) -> KeySet:
    _check_params(params)
    if decomp_log2 < 1:
        raise ValueError("decomp_log2 must be positive")
    rng = Sampler(seed)
    k, n, b = params.k, params.n, params.error_bound
    s = rng.ternary("sk", k, n)
    a = rng.uniform("pk.a", k, n)
    e = rng.bounded("pk.e", b, k, n)
    pk0 = -(poly_add(poly_mult(a, s), e))
    s2 = poly_mult(s, s)
    rlk = []
    for i in range(num_digits(k, decomp_log2)):
        ai = rng.uniform(f"rlk.a.{i}", k, n)
        ei = rng.bounded(f"rlk.e.{i}", b, k, n)
        scaled = RingPoly.from_ints([c << (decomp_log2 * i) for c in s2.coeffs], k, n)
        r0 = poly_add(-(poly_add(poly_mult(ai, s), ei)), scaled)
        rlk.append((r0, ai))
    return KeySet(params, s, (pk0, a), tuple(rlk), decomp_log2)


def encrypt(m: Plaintext, pk: tuple[RingPoly, RingPoly], params: ParamSet, seed: bytes | str) -> Ciphertext:
    if m.poly.n != params.n or m.t_log2 != params.t_log2:
        raise ValueError("plaintext does not match parameters")
    if pk[0].k != params.k or pk[0].n != params.n:
        raise ValueError("public key does not match parameters")
    rng = Sampler(seed)
    k, n, b = params.k, params.n, params.error_bound
    u = rng.ternary("enc.u", k, n)
    e1 = rng.bounded("enc.e1", b, k, n)
    e2 = rng.bounded("enc.e2", b, k, n)
    dm = RingPoly.from_ints([c * params.delta for c in m.poly.coeffs], k, n)
    c0 = poly_add(poly_add(dm, poly_mult(pk[0], u)), e1)
    c1 = poly_add(poly_mult(pk[1], u), e2)
    return Ciphertext(c0, c1)


def encrypt_trivial(m: Plaintext, params: ParamSet) -> Ciphertext:
    """Noise-free (delta*m, 0); public constants enter the circuit this way."""
    dm = RingPoly.from_ints([c * params.delta for c in m.poly.coeffs], params.k, params.n)
    return Ciphertext(dm, RingPoly.zero(params.k, params.n))


def phase(c: Ciphertext, sk: RingPoly) -> RingPoly:
    if sk is None:
        raise ValueError("this operation needs the secret key")
    return poly_add(c.c0, poly_mult(c.c1, _lift(sk, c.k)))


def decrypt(c: Ciphertext, sk: RingPoly, params: ParamSet) -> Plaintext:
    ph = phase(c, sk)
    return Plaintext(poly_scale_round(ph, params.k - params.t_log2, out_k=params.t_log2))


def noise_bits(c: Ciphertext, sk: RingPoly, m: Plaintext, params: ParamSet) -> int:
    """Bit length of the largest |phase - delta*m| coefficient."""
    ph = phase(c, sk)
    dm = RingPoly.from_ints([x * params.delta for x in m.poly.coeffs], params.k, params.n)
    return max(abs(x) for x in poly_sub(ph, dm).coeffs).bit_length()


# -- homomorphic operations --------------------------------------------------

def _same_ring(c1: Ciphertext, c2: Ciphertext) -> None:
    if (c1.k, c1.n) != (c2.k, c2.n):
        raise ValueError(f"ciphertext mismatch: (k={c1.k}, n={c1.n}) vs (k={c2.k}, n={c2.n})")


def hom_add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _same_ring(c1, c2)
    return Ciphertext(poly_add(c1.c0, c2.c0), poly_add(c1.c1, c2.c1), max(c1.level_hint, c2.level_hint))


def hom_sub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _same_ring(c1, c2)
    return Ciphertext(poly_sub(c1.c0, c2.c0), poly_sub(c1.c1, c2.c1), max(c1.level_hint, c2.level_hint))


def mul_plain_scalar(c: Ciphertext, scalar: int) -> Ciphertext:
    """Multiply by a public integer; decrypts to [scalar * m]_t."""
    k, n = c.k, c.n
    return Ciphertext(
        RingPoly.from_ints([x * scalar for x in c.c0.coeffs], k, n),
        RingPoly.from_ints([x * scalar for x in c.c1.coeffs], k, n),
        c.level_hint,
    )


def scale_tensor(full: Sequence[int], k: int, shift: int) -> list[int]:
    """Rounded t/q scaling of full-length product coefficients, mod 2**k."""
    return [reduce_centered(scale_round(x, shift), k) for x in full]


def fold_mod(full: Sequence[int], k: int, n: int) -> RingPoly:
    vals = list(full[:n]) + [0] * max(0, n - len(full))
    for i in range(n, len(full)):
        vals[i - n] -= full[i]
    return RingPoly.from_ints(vals, k, n)


def tensor(c1: Ciphertext, c2: Ciphertext, params: ParamSet) -> tuple[RingPoly, RingPoly, RingPoly]:
    """(c_x, c_y, c_z): exact products, scaled by t/q, then folded mod q."""
    k, n = params.k, params.n
    shift = k - params.t_log2
    d0 = mult_full(c1.c0.coeffs, c2.c0.coeffs)
    d1 = [x + y for x, y in zip(mult_full(c1.c0.coeffs, c2.c1.coeffs), mult_full(c1.c1.coeffs, c2.c0.coeffs))]
    d2 = mult_full(c1.c1.coeffs, c2.c1.coeffs)
    return tuple(fold_mod(scale_tensor(d, k, shift), k, n) for d in (d0, d1, d2))


def decompose(p: RingPoly, w: int) -> list[RingPoly]:
    """Base-2**w digits of the unsigned k-bit pattern of each coefficient.

    Digits are non-negative and below 2**w; they are stored as ring
    elements of the same width (k > w is assumed by callers that multiply).
    """
    k = p.k
    mask = (1 << w) - 1
    us = p.unsigned()
    return [RingPoly.from_ints([(u >> (w * i)) & mask for u in us], k, p.n) for i in range(num_digits(k, w))]


def relinearize(cx: RingPoly, cy: RingPoly, cz: RingPoly, keys: KeySet) -> tuple[RingPoly, RingPoly]:
    out0, out1 = cx, cy
    for digit, (r0, r1) in zip(decompose(cz, keys.decomp_log2), keys.rlk):
        out0 = poly_add(out0, poly_mult(r0, digit))
        out1 = poly_add(out1, poly_mult(r1, digit))
    return out0, out1


def hom_mult(c1: Ciphertext, c2: Ciphertext, keys: KeySet) -> Ciphertext:
    _same_ring(c1, c2)
    params = keys.params
    if (c1.k, c1.n) != (params.k, params.n):
        raise ValueError("ciphertext does not match key parameters")
    level = max(c1.level_hint, c2.level_hint) + 1
    depth = multiplicative_depth(params).depth
    if level > depth:
        warnings.warn(f"level {level} exceeds supported depth {depth}", DepthWarning, stacklevel=2)
    cx, cy, cz = tensor(c1, c2, params)
    r0, r1 = relinearize(cx, cy, cz, keys)
    return Ciphertext(r0, r1, level)


# -- files -------------------------------------------------------------------

TAG_POLY = 0x02
TAG_SK = 0x03
TAG_PK = 0x04
TAG_RLK = 0x05
TAG_LEVEL = 0x10
TAG_DECOMP = 0x11
TAG_PARAMS = 0x12

MAGIC_CT = b"CHEC"
MAGIC_KEY = b"CHEK"


def _default_mode() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return 0o666 & ~mask


def atomic_write(path: str | Path, data: bytes, mode: int | None = None) -> None:
    """Write via a temp file in the same directory, then rename.

    The temp file starts private; it gets ``mode`` (default: what the
    umask allows) just before the rename.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, _default_mode() if mode is None else mode)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _int_record(tag: int, value: int) -> bytes:
    return bytes([tag]) + value.to_bytes(8, "little")


def _params_record(p: ParamSet) -> bytes:
    body = b"".join(int(v).to_bytes(8, "little") for v in (p.k, p.n, p.t_log2, p.error_bound, p.security_bits))
    return bytes([TAG_PARAMS]) + body


def _read_records(buf: bytes, magic: bytes):
    if buf[:4] != magic:
        raise ValueError(f"bad magic {buf[:4]!r}, expected {magic!r}")
    off = 4
    while off < len(buf):
        tag = buf[off]
        off += 1
        if tag in (TAG_POLY, TAG_SK, TAG_PK, TAG_RLK):
            poly, off = poly_from_bytes(buf, off)
            yield tag, poly
        elif tag in (TAG_LEVEL, TAG_DECOMP):
            if off + 8 > len(buf):
                raise ValueError("truncated integer record")
            yield tag, int.from_bytes(buf[off:off + 8], "little")
            off += 8
        elif tag == TAG_PARAMS:
            if off + 40 > len(buf):
                raise ValueError("truncated parameter record")
            vals = [int.from_bytes(buf[off + 8 * i:off + 8 * i + 8], "little") for i in range(5)]
            yield tag, ParamSet(*vals)
            off += 40
        else:
            raise ValueError(f"unknown record tag 0x{tag:02x} at offset {off - 1}")


def ciphertext_to_bytes(c: Ciphertext) -> bytes:
    return (
        MAGIC_CT
        + bytes([TAG_POLY]) + poly_to_bytes(c.c0)
        + bytes([TAG_POLY]) + poly_to_bytes(c.c1)
        + _int_record(TAG_LEVEL, c.level_hint)
    )


def ciphertext_from_bytes(buf: bytes) -> Ciphertext:
    polys, level = [], 0
    for tag, val in _read_records(buf, MAGIC_CT):
        if tag == TAG_POLY:
            polys.append(val)
        elif tag == TAG_LEVEL:
            level = val
    if len(polys) != 2:
        raise ValueError(f"ciphertext file holds {len(polys)} polynomials, expected 2")
    return Ciphertext(polys[0], polys[1], level)


def keys_to_bytes(keys: KeySet, include_secret: bool = True) -> bytes:
    out = [MAGIC_KEY, _params_record(keys.params), _int_record(TAG_DECOMP, keys.decomp_log2)]
    if include_secret and keys.sk is not None:
        out.append(bytes([TAG_SK]) + poly_to_bytes(keys.sk))
    for p in keys.pk:
        out.append(bytes([TAG_PK]) + poly_to_bytes(p))
    for r0, r1 in keys.rlk:
        out.append(bytes([TAG_RLK]) + poly_to_bytes(r0))
        out.append(bytes([TAG_RLK]) + poly_to_bytes(r1))
    return b"".join(out)


def keys_from_bytes(buf: bytes) -> KeySet:
    params, decomp, sk = None, DEFAULT_DECOMP_LOG2, None
    pk, rlk = [], []
    for tag, val in _read_records(buf, MAGIC_KEY):
        if tag == TAG_PARAMS:
            params = val
        elif tag == TAG_DECOMP:
            decomp = val
        elif tag == TAG_SK:
            sk = val
        elif tag == TAG_PK:
            pk.append(val)
        elif tag == TAG_RLK:
            rlk.append(val)
    if params is None or len(pk) != 2 or len(rlk) % 2:
        raise ValueError("incomplete key file")
    pairs = tuple((rlk[i], rlk[i + 1]) for i in range(0, len(rlk), 2))
    return KeySet(params, sk, (pk[0], pk[1]), pairs, decomp)


def save_ciphertext(path: str | Path, c: Ciphertext) -> None:
    atomic_write(path, ciphertext_to_bytes(c))


def load_ciphertext(path: str | Path) -> Ciphertext:
    return ciphertext_from_bytes(Path(path).read_bytes())


def save_keys(path: str | Path, keys: KeySet, include_secret: bool = True) -> None:
    # a file holding the secret key is readable by its owner only
    secret = include_secret and keys.sk is not None
    atomic_write(path, keys_to_bytes(keys, include_secret), 0o600 if secret else None)


def load_keys(path: str | Path) -> KeySet:
    return keys_from_bytes(Path(path).read_bytes())
