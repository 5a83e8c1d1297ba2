"""Lane-parallel Karatsuba stages on spill registers.

A spill register with ``groups`` G and L lanes holds G polynomials of L/G
coefficients each.  Splitting turns (G, m) into (3G, m/2) ordered as
[high+low, high, low]; the leaf multiplies lane pairs by Shift-Add; the
combine stage folds (3G, 2h-1) partial products back into (G, 4h-1).
All three branches of a level run in the same lockstep waves.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from . import words as W
from .core import CimBank, CimError, Ref, SpillReg, TraceRecord

SPLIT_KINDS = {"ipmb-move": 2, "add": 1, "ipcb-copy": 1}
COMBINE_KINDS = {"bitwise-logic": 2, "ipcb-copy": 6, "add": 4, "ipmb-move": 3}
LOAD_KINDS = {"read": 1, "ipmb-move": 1}


def _grouped(reg: SpillReg) -> np.ndarray:
    g = reg.groups
    lanes, nl = reg.data.shape
    if lanes % g:
        raise CimError("spill register lanes are not a multiple of its groups")
    return reg.data.reshape(g, lanes // g, nl)


def _flat_add(x: np.ndarray, y: np.ndarray, cin: int = 0) -> np.ndarray:
    shape = x.shape
    return W.add(x.reshape(-1, shape[-1]), y.reshape(-1, shape[-1]), cin).reshape(shape)


def _flat_sub(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return _flat_add(x, ~y, 1)


def _charge_lanes(bank: CimBank, op: str, kinds, lanes: int, width: int, **extra) -> TraceRecord:
    g = bank.geometry
    c = g.slots_per_row
    slots = lanes * max(1, -(-width // g.word_bits))
    arrays = -(-slots // c) if lanes else 0
    waves = -(-slots // (g.num_arrays * c)) if lanes else 0
    return bank.record(op, kinds, arrays, waves, **extra)


def kara_load(bank: CimBank, dst: str, srcs: list[Ref], width: int) -> TraceRecord:
    parts = [W.resize(bank._view(r), width) for r in srcs]
    m = {len(p) for p in parts}
    if len(m) != 1:
        raise CimError("Karatsuba operands differ in length")
    data = np.ascontiguousarray(np.concatenate(parts, axis=0))
    bank.put_spill(dst, data, width, groups=len(parts))
    return _charge_lanes(bank, "kara_load", LOAD_KINDS, len(data), width,
                         operands={"dst": dst, "srcs": [r.to_json() for r in srcs], "width": width})


def kara_split(bank: CimBank, src: str, dst: str) -> TraceRecord:
    reg = bank._spill(src)
    x = _grouped(reg)
    g, m, nl = x.shape
    if m < 2 or m % 2:
        raise CimError(f"cannot split polynomials of length {m}")
    h = m // 2
    low, high = x[:, :h], x[:, h:]
    out = np.concatenate([_flat_add(low, high), high, low], axis=0)
    bank.put_spill(dst, np.ascontiguousarray(out.reshape(3 * g * h, nl)), reg.width, groups=3 * g)
    return _charge_lanes(bank, "kara_split", SPLIT_KINDS, g * h, reg.width, operands={"src": src, "dst": dst})


def kara_leaf(bank: CimBank, a: str, b: str, dst: str, bits: int, kinds: dict) -> TraceRecord:
    ra, rb = bank._spill(a), bank._spill(b)
    if ra.data.shape != rb.data.shape or ra.groups != rb.groups or ra.groups != len(ra.data):
        raise CimError("leaf operands must be single coefficients in matching registers")
    try:
        prod = W.shift_add_leaf(ra.data, rb.data, bits)
    except OverflowError as exc:
        raise CimError(str(exc)) from None
    bank.put_spill(dst, prod, ra.width, groups=ra.groups)
    return _charge_lanes(bank, "kara_leaf", kinds, len(prod), ra.width, operands={"a": a, "b": b, "dst": dst, "bits": bits})


def kara_combine(bank: CimBank, src: str, dst: str) -> TraceRecord:
    reg = bank._spill(src)
    p = _grouped(reg)
    g3, lp, nl = p.shape
    if g3 % 3 or lp % 2 == 0:
        raise CimError("combine expects 3G groups of odd-length partial products")
    g = g3 // 3
    h = (lp + 1) // 2
    r1, r2, r3 = p[:g], p[g:2 * g], p[2 * g:]
    mid = _flat_sub(_flat_sub(r1, r3), r2)
    out = np.zeros((g, 4 * h - 1, nl), dtype=np.uint64)
    out[:, :lp] = r3
    out[:, 2 * h:2 * h + lp] = r2
    out[:, h:h + lp] = _flat_add(out[:, h:h + lp], mid)
    bank.put_spill(dst, np.ascontiguousarray(out.reshape(g * (4 * h - 1), nl)), reg.width, groups=g)
    return _charge_lanes(bank, "kara_combine", COMBINE_KINDS, g * lp, reg.width, operands={"src": src, "dst": dst})


def kara_unstack(bank: CimBank, src: str, names: list[str]) -> TraceRecord:
    reg = bank._spill(src)
    x = _grouped(reg)
    if len(names) != len(x):
        raise CimError("unstack needs one name per group")
    for name, part in zip(names, x):
        bank.put_spill(name, np.ascontiguousarray(part), reg.width)
    return bank.record("kara_unstack", {}, 0, 0, operands={"src": src, "names": names})


def leaf_kinds(program) -> dict:
    return dict(Counter(program.kind_counts()))
