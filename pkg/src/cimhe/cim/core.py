"""The simulated CiM bank: bit-matrix arrays, peripherals and cost accounting.

Memory is held as one word register per row.  Lane ``a * C + s`` of a row
is slot ``s`` of array ``a``; unpacking a row's lanes for one array gives
that array's N-bit row.  Beyond the physical rows the bank keeps *spill*
registers: virtual rows of any lane count and width that model intermediate
storage the physical scratch cannot hold.  Work on spill registers is
charged in waves of ``num_arrays * C`` slots.
"""

from __future__ import annotations

import copy
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import words as W

STEP_KINDS = (
    "read",
    "bitwise-logic",
    "horizontal-or",
    "add",
    "shift-round",
    "ipcb-copy",
    "ipmb-move",
    "controller-flag-branch",
)

SHIFT_LEVELS = (64, 32, 16, 4, 1)


class CimError(RuntimeError):
    """Address, capacity or program violation inside the bank."""


# -- geometry ----------------------------------------------------------------

@dataclass(frozen=True)
class BankGeometry:
    num_arrays: int = 4096
    rows_M: int = 8
    data_rows_Mprime: int = 6
    cols_N: int = 1024
    word_bits: int = 256

    def __post_init__(self):
        if min(self.num_arrays, self.rows_M, self.data_rows_Mprime, self.cols_N, self.word_bits) <= 0:
            raise ValueError("geometry fields must be positive")
        if self.data_rows_Mprime > self.rows_M:
            raise ValueError("data rows exceed rows per array")
        if self.word_bits % 64:
            raise ValueError("word_bits must be a multiple of 64")
        if self.cols_N % self.word_bits:
            raise ValueError("cols_N must hold a whole number of words")

    @property
    def slots_per_row(self) -> int:
        return self.cols_N // self.word_bits

    C = slots_per_row

    @property
    def lanes(self) -> int:
        return self.num_arrays * self.slots_per_row

    @property
    def scratch_rows(self) -> tuple[int, ...]:
        return tuple(range(self.data_rows_Mprime, self.rows_M))

    @property
    def bank_bytes(self) -> int:
        return self.num_arrays * self.rows_M * self.cols_N // 8

    def check_k(self, k: int) -> None:
        if self.word_bits < k + 1:
            raise ValueError(f"word_bits={self.word_bits} cannot hold k={k} plus a carry bit")

    @classmethod
    def for_params(cls, k: int, n: int, rows_M: int = 8, data_rows: int = 6, cols_N: int = 1024) -> "BankGeometry":
        """Smallest geometry with c[0] and c[1] each in half of the arrays."""
        word_bits = 64 * -(-(k + 1) // 64)
        if cols_N % word_bits:
            cols_N = word_bits * max(1, cols_N // word_bits)
        c = cols_N // word_bits
        half = -(-n // c)
        return cls(num_arrays=2 * half, rows_M=rows_M, data_rows_Mprime=data_rows, cols_N=cols_N, word_bits=word_bits)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "BankGeometry":
        return cls(**{k: int(v) for k, v in doc.items() if k in cls.__dataclass_fields__})


# -- cost model --------------------------------------------------------------

@dataclass(frozen=True)
class StepCost:
    cycles: int
    energy: Fraction


@dataclass(frozen=True)
class CostModel:
    costs: Mapping[str, StepCost]

    def __post_init__(self):
        missing = set(STEP_KINDS) - set(self.costs)
        if missing:
            raise ValueError(f"cost model lacks step kinds {sorted(missing)}")
        for kind, c in self.costs.items():
            if c.cycles < 0 or c.energy < 0:
                raise ValueError(f"negative cost for {kind}")
        read = self.costs["read"]
        for kind in ("add", "shift-round"):
            if self.costs[kind].cycles < read.cycles or self.costs[kind].energy < read.energy:
                raise ValueError(f"{kind} must cost at least as much as a read")

    def __getitem__(self, kind: str) -> StepCost:
        try:
            return self.costs[kind]
        except KeyError:
            raise CimError(f"unknown step kind {kind!r}") from None

    @classmethod
    def default(cls) -> "CostModel":
        cyc = {k: 1 for k in STEP_KINDS}
        cyc["add"] = 2
        return cls({k: StepCost(v, Fraction(v)) for k, v in cyc.items()})

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CostModel":
        costs = {}
        for kind, entry in doc.items():
            if kind not in STEP_KINDS:
                raise ValueError(f"unknown step kind {kind!r} in cost model")
            costs[kind] = StepCost(int(entry["cycles"]), Fraction(str(entry["energy_units"])))
        return cls(costs)

    @classmethod
    def load(cls, path: str | Path) -> "CostModel":
        doc = json.loads(Path(path).read_text())
        return cls.from_dict(doc.get("cost_model", doc))

    def to_dict(self) -> dict:
        return {k: {"cycles": c.cycles, "energy_units": str(c.energy)} for k, c in self.costs.items()}


# -- shifter -----------------------------------------------------------------

@dataclass(frozen=True)
class ShiftMask:
    """One selection per level: 'left', 'right' or 'none'; magnitudes 64,32,16,4,1."""

    levels: tuple[str, ...] = ("none",) * 5

    def __post_init__(self):
        if len(self.levels) != len(SHIFT_LEVELS):
            raise ValueError("shift mask needs exactly 5 levels")
        for sel in self.levels:
            if sel not in ("left", "right", "none"):
                raise ValueError(f"level selection {sel!r} is not one of left/right/none")

    @classmethod
    def from_bits(cls, bits: int) -> "ShiftMask":
        """Decode the 15-bit mask S1..S15: 3 one-hot bits (left, right, none) per level."""
        levels = []
        for i in range(5):
            field_ = (bits >> (3 * i)) & 0b111
            if field_ not in (0b001, 0b010, 0b100):
                raise ValueError(f"level {i} of the shift mask selects {bin(field_)}, not exactly one transistor")
            levels.append({0b001: "left", 0b010: "right", 0b100: "none"}[field_])
        return cls(tuple(levels))

    def to_bits(self) -> int:
        code = {"left": 0b001, "right": 0b010, "none": 0b100}
        return sum(code[sel] << (3 * i) for i, sel in enumerate(self.levels))

    @classmethod
    def right(cls, amount: int) -> "ShiftMask":
        return cls._single(amount, "right")

    @classmethod
    def left(cls, amount: int) -> "ShiftMask":
        return cls._single(amount, "left")

    @classmethod
    def _single(cls, amount: int, way: str) -> "ShiftMask":
        levels, rest = [], amount
        for mag in SHIFT_LEVELS:
            if rest >= mag:
                levels.append(way)
                rest -= mag
            else:
                levels.append("none")
        if rest:
            raise ValueError(f"{amount} is not a single-round shift")
        return cls(tuple(levels))

    @property
    def signed_amount(self) -> int:
        """Net shift, positive meaning left."""
        total = 0
        for mag, sel in zip(SHIFT_LEVELS, self.levels):
            total += mag if sel == "left" else -mag if sel == "right" else 0
        return total

    def apply(self, x: np.ndarray) -> np.ndarray:
        # the levels act one after another, each truncating at the word edge
        out = x
        for mag, sel in zip(SHIFT_LEVELS, self.levels):
            if sel == "left":
                out = W.shift_left(out, mag)
            elif sel == "right":
                out = W.shift_right(out, mag)
        return out.copy() if out is x else out


def shift_rounds(total: int) -> list[int]:
    """Split a shift into rounds of the 5-level shifter.

    Each round starts with every level active and switches off the highest
    active level while the round would overshoot what is left.
    """
    if total < 0:
        raise ValueError("shift total must be non-negative")
    rounds = []
    rest = total
    while rest:
        active = list(SHIFT_LEVELS)
        while sum(active) > rest:
            active.pop(0)
        rounds.append(sum(active))
        rest -= rounds[-1]
    return rounds


# -- operands ----------------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    """Lanes [start, stop) of a physical row (int) or spill register (str)."""

    reg: int | str
    start: int = 0
    stop: int | None = None

    def to_json(self):
        return [self.reg, self.start, self.stop]

    @classmethod
    def from_json(cls, doc) -> "Ref":
        return cls(doc[0], doc[1], doc[2])


@dataclass
class SpillReg:
    data: np.ndarray
    width: int
    groups: int = 1


# -- trace -------------------------------------------------------------------

@dataclass
class TraceRecord:
    index: int
    op: str
    kinds: dict
    arrays: int
    waves: int
    cycles: int
    energy: Fraction
    operands: dict = field(default_factory=dict)
    flag: int | None = None
    value: list | None = None
    tag: str | None = None

    def to_dict(self) -> dict:
        d = {
            "step": self.index,
            "op": self.op,
            "kinds": self.kinds,
            "arrays": self.arrays,
            "waves": self.waves,
            "cycles": self.cycles,
            "energy": str(self.energy),
            "operands": self.operands,
        }
        if self.flag is not None:
            d["flag"] = self.flag
        if self.value is not None:
            d["value"] = self.value
        if self.tag is not None:
            d["tag"] = self.tag
        return d


@dataclass
class BankState:
    mem: np.ndarray
    spill: dict

    def copy(self) -> "BankState":
        return BankState(self.mem.copy(), {k: SpillReg(v.data.copy(), v.width, v.groups) for k, v in self.spill.items()})

    def same_as(self, other: "BankState") -> bool:
        if not np.array_equal(self.mem, other.mem) or set(self.spill) != set(other.spill):
            return False
        return all(
            np.array_equal(self.spill[k].data, other.spill[k].data) and self.spill[k].width == other.spill[k].width
            for k in self.spill
        )


@dataclass
class StepTrace:
    records: list[TraceRecord] = field(default_factory=list)
    initial: BankState | None = None
    steps: list = field(default_factory=list)

    @property
    def cycles(self) -> int:
        return sum(r.cycles for r in self.records)

    @property
    def energy(self) -> Fraction:
        return sum((r.energy for r in self.records), Fraction(0))

    def kind_counts(self) -> Counter:
        c = Counter()
        for r in self.records:
            for k, v in r.kinds.items():
                c[k] += v * r.waves
        return c

    def tagged(self, tag: str) -> list[TraceRecord]:
        return [r for r in self.records if r.tag == tag]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.records)

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    def extend(self, other: "StepTrace") -> None:
        base = len(self.records)
        for r in other.records:
            rec = copy.copy(r)
            rec.index = base + r.index
            self.records.append(rec)
        self.steps.extend(other.steps)


# -- the bank ----------------------------------------------------------------

class CimArray:
    """Read-only view of one array of a bank."""

    def __init__(self, bank: "CimBank", index: int):
        if not 0 <= index < bank.geometry.num_arrays:
            raise CimError(f"array {index} out of range")
        self.bank = bank
        self.index = index

    @property
    def bits(self) -> np.ndarray:
        g = self.bank.geometry
        c = g.slots_per_row
        rows = self.bank.state.mem[:, self.index * c:(self.index + 1) * c, :]
        # slot s occupies columns [s*word_bits, (s+1)*word_bits), LSB first
        raw = np.ascontiguousarray(rows.reshape(g.rows_M, -1), dtype="<u8").view(np.uint8)
        return np.unpackbits(raw, axis=1, bitorder="little").astype(bool)

    @property
    def flag(self) -> np.ndarray:
        c = self.bank.geometry.slots_per_row
        return self.bank.flags[self.index * c:(self.index + 1) * c].copy()

    @property
    def latch(self) -> np.ndarray | None:
        return self.bank.latch_slice(self.index)


class CimBank:
    """A bank of arrays plus spill registers, with a running trace."""

    def __init__(self, geometry: BankGeometry | None = None, cost_model: CostModel | None = None):
        self.geometry = geometry or BankGeometry()
        self.cost_model = cost_model or CostModel.default()
        g = self.geometry
        self.state = BankState(np.zeros((g.rows_M, g.lanes, g.word_bits // 64), dtype=np.uint64), {})
        self.flags = np.zeros(g.lanes, dtype=bool)
        self.latch: np.ndarray | None = None
        self.latch_ref: Ref | None = None
        self.flag_vec: np.ndarray | None = None
        self.trace = StepTrace()

    # -- host access (not charged) --------------------------------------

    def array(self, index: int) -> CimArray:
        return CimArray(self, index)

    def latch_slice(self, array: int) -> np.ndarray | None:
        if self.latch is None or self.latch_ref is None or not isinstance(self.latch_ref.reg, int):
            return None
        c = self.geometry.slots_per_row
        lo, hi = array * c, (array + 1) * c
        s = self.latch_ref.start
        rows = self.latch[max(lo - s, 0):max(hi - s, 0)]
        return rows.copy() if len(rows) else None

    def write(self, reg: int | str, start: int, values: Iterable[int], width: int | None = None) -> None:
        vals = list(values)
        if isinstance(reg, str):
            if reg not in self.state.spill:
                if width is None:
                    raise CimError(f"spill register {reg!r} needs a width on first write")
                self.state.spill[reg] = SpillReg(W.zeros(start + len(vals), width), width)
            sp = self.state.spill[reg]
            if start + len(vals) > len(sp.data):
                raise CimError(f"write past end of spill register {reg!r}")
            sp.data[start:start + len(vals)] = W.from_ints(vals, sp.width)
            return
        self._check_row(reg)
        if start < 0 or start + len(vals) > self.geometry.lanes:
            raise CimError("write outside the row")
        self.state.mem[reg, start:start + len(vals)] = W.from_ints(vals, self.geometry.word_bits)

    def read(self, reg: int | str, start: int = 0, stop: int | None = None, signed: bool = True) -> list[int]:
        return W.to_ints(self._view(Ref(reg, start, stop)), signed)

    def reg_width(self, reg: int | str) -> int:
        if isinstance(reg, str):
            return self._spill(reg).width
        return self.geometry.word_bits

    def snapshot(self) -> BankState:
        return self.state.copy()

    # -- address helpers --------------------------------------------------

    def _check_row(self, row: int) -> None:
        if not 0 <= row < self.geometry.rows_M:
            raise CimError(f"row {row} out of bounds (rows 0..{self.geometry.rows_M - 1})")

    def _spill(self, name: str) -> SpillReg:
        try:
            return self.state.spill[name]
        except KeyError:
            raise CimError(f"spill register {name!r} does not exist") from None

    def _bounds(self, ref: Ref) -> tuple[int, int]:
        if isinstance(ref.reg, str):
            total = len(self._spill(ref.reg).data)
        else:
            self._check_row(ref.reg)
            total = self.geometry.lanes
        stop = total if ref.stop is None else ref.stop
        if not 0 <= ref.start <= stop <= total:
            raise CimError(f"lanes [{ref.start}, {stop}) outside register {ref.reg!r} of {total} lanes")
        return ref.start, stop

    def _view(self, ref: Ref) -> np.ndarray:
        start, stop = self._bounds(ref)
        if isinstance(ref.reg, str):
            return self.state.spill[ref.reg].data[start:stop]
        return self.state.mem[ref.reg, start:stop]

    def _store(self, ref: Ref, values: np.ndarray, mask: np.ndarray | None = None) -> None:
        view = self._view(ref)
        if view.shape != values.shape:
            raise CimError(f"shape mismatch writing {ref.reg!r}: {view.shape} vs {values.shape}")
        if mask is None:
            view[...] = values
        else:
            view[mask] = values[mask]

    def _span(self, width: int) -> int:
        return max(1, -(-width // self.geometry.word_bits))

    def footprint(self, ref: Ref, width: int | None = None) -> tuple[int, int]:
        """(active array count, waves) for touching these lanes."""
        start, stop = self._bounds(ref)
        lanes = stop - start
        if lanes == 0:
            return 0, 0
        g = self.geometry
        c = g.slots_per_row
        if isinstance(ref.reg, int):
            return (stop - 1) // c - start // c + 1, 1
        slots = lanes * self._span(width or self.reg_width(ref.reg))
        return -(-slots // c), -(-slots // (g.num_arrays * c))

    # -- accounting -------------------------------------------------------

    def charge(self, kinds: Mapping[str, int], arrays: int = 1, waves: int = 1) -> tuple[int, Fraction]:
        """Cycles are paid once per wave (lockstep); energy once per active array."""
        cycles, energy = 0, Fraction(0)
        for kind, mult in kinds.items():
            cost = self.cost_model[kind]
            cycles += cost.cycles * mult * waves
            energy += cost.energy * mult * arrays
        return cycles, energy

    def record(self, op: str, kinds: Mapping[str, int], arrays: int, waves: int, **extra) -> TraceRecord:
        cycles, energy = self.charge(kinds, arrays, waves)
        rec = TraceRecord(len(self.trace.records), op, dict(kinds), arrays, waves, cycles, energy, **extra)
        self.trace.records.append(rec)
        return rec

    # -- peripheral operations (each returns the record) -------------------

    def op_read(self, src: Ref, tag: str | None = None) -> TraceRecord:
        self.latch = self._view(src).copy()
        self.latch_ref = src
        arrays, waves = self.footprint(src)
        return self.record("read", {"read": 1}, arrays, waves, operands={"src": src.to_json()}, tag=tag)

    def op_logic(self, op: str, a: Ref, b: Ref | None = None, tag: str | None = None) -> TraceRecord:
        x = self._view(a)
        y = None if op == "NOT" else self._view(b)
        if y is not None and self.reg_width(a.reg) != self.reg_width(b.reg):
            raise CimError("bitwise operands differ in width")
        try:
            self.latch = W.bitwise(op, x, y)
        except ValueError as exc:
            raise CimError(str(exc)) from None
        self.latch_ref = a
        arrays, waves = self.footprint(a)
        ops = {"a": a.to_json()} | ({} if b is None else {"b": b.to_json()})
        return self.record(f"logic.{op}", {"bitwise-logic": 1}, arrays, waves, operands=ops, tag=tag)

    def op_hor(self, tag: str | None = None) -> TraceRecord:
        if self.latch is None:
            raise CimError("horizontal OR with an empty latch")
        self.flag_vec = W.any_set(self.latch)
        if isinstance(self.latch_ref.reg, int):
            s = self.latch_ref.start
            self.flags[s:s + len(self.flag_vec)] = self.flag_vec
        arrays, waves = self.footprint(self.latch_ref)
        return self.record("hor", {"horizontal-or": 1}, arrays, waves, flag=int(self.flag_vec.sum()), tag=tag)

    def op_add(self, a: Ref, b: Ref, cin: int = 0, tag: str | None = None) -> TraceRecord:
        if cin not in (0, 1):
            raise CimError("carry-in must be a single bit")
        x, y = self._view(a), self._view(b)
        if x.shape != y.shape:
            raise CimError(f"add operands misaligned: {x.shape} vs {y.shape}")
        self.latch = W.add(x, y, cin)
        self.latch_ref = a
        arrays, waves = self.footprint(a)
        return self.record("add", {"add": 1}, arrays, waves, operands={"a": a.to_json(), "b": b.to_json(), "cin": cin}, tag=tag)

    def op_shift(self, src: Ref, mask: ShiftMask, tag: str | None = None) -> TraceRecord:
        self.latch = mask.apply(self._view(src))
        self.latch_ref = src
        arrays, waves = self.footprint(src)
        return self.record(
            "shift", {"shift-round": 1}, arrays, waves,
            operands={"src": src.to_json(), "mask": list(mask.levels), "amount": mask.signed_amount}, tag=tag,
        )

    def op_copy(self, dst: Ref, pred: bool = False, tag: str | None = None) -> TraceRecord:
        if self.latch is None:
            raise CimError("copy from an empty latch")
        if self.reg_width(dst.reg) != 64 * self.latch.shape[1]:
            raise CimError("latch and destination differ in width")
        mask = None
        if pred:
            if self.flag_vec is None or len(self.flag_vec) != len(self.latch):
                raise CimError("predicated copy without a matching flag vector")
            mask = self.flag_vec
        self._store(dst, self.latch, mask)
        arrays, waves = self.footprint(dst)
        value = None
        if tag is not None:
            value = [hex(v) for v in W.to_ints(self._view(dst), signed=False)[:8]]
        return self.record("copy", {"ipcb-copy": 1}, arrays, waves,
                           operands={"dst": dst.to_json(), "pred": pred}, tag=tag, value=value)

    def op_stage(self, dst: Ref, value: int, tag: str | None = None) -> TraceRecord:
        view = self._view(dst)
        self._store(dst, W.broadcast(value, len(view), self.reg_width(dst.reg)))
        arrays, waves = self.footprint(dst)
        return self.record("stage", {"ipcb-copy": 1}, arrays, waves, operands={"dst": dst.to_json(), "value": hex(value)}, tag=tag)

    def op_move(self, src: Ref, dst: Ref, tag: str | None = None) -> TraceRecord:
        """Relocate lanes (and re-width) through the move buffers; source is kept."""
        x = self._view(src)
        y = self._view(dst)
        if len(x) != len(y):
            raise CimError("move source and destination differ in lane count")
        self._store(dst, W.resize(x, self.reg_width(dst.reg)))
        arrays, waves = self.footprint(dst)
        return self.record("move", {"ipmb-move": 1}, arrays, waves, operands={"src": src.to_json(), "dst": dst.to_json()}, tag=tag)

    def op_move_bits(self, array: int, src_row: int, src_slot: int, dst_row: int, offset: int, tag: str | None = None) -> TraceRecord:
        """Move one slot's bits from column i to column i + offset within an array."""
        g = self.geometry
        self._check_row(src_row)
        self._check_row(dst_row)
        c, wb = g.slots_per_row, g.word_bits
        if not 0 <= array < g.num_arrays or not 0 <= src_slot < c:
            raise CimError("array or slot out of range")
        lo = src_slot * wb + offset
        if lo < 0 or lo + wb > g.cols_N:
            raise CimError(f"offset {offset} moves slot {src_slot} outside the array's {g.cols_N} columns")
        lanes = slice(array * c, (array + 1) * c)

        def row_int(row):
            return int.from_bytes(np.ascontiguousarray(self.state.mem[row, lanes], dtype="<u8").tobytes(), "little")

        word = (row_int(src_row) >> (src_slot * wb)) & ((1 << wb) - 1)
        window = ((1 << wb) - 1) << lo
        new = (row_int(dst_row) & ~window) | (word << lo)
        raw = new.to_bytes(g.cols_N // 8, "little")
        self.state.mem[dst_row, lanes] = np.frombuffer(raw, dtype="<u8").reshape(c, -1)
        value = None
        if tag is not None:
            value = [hex(v) for v in W.to_ints(self.state.mem[dst_row, lanes], signed=False)]
        return self.record(
            "move_bits", {"ipmb-move": 1}, 1, 1,
            operands={"array": array, "src_row": src_row, "src_slot": src_slot, "dst_row": dst_row, "offset": offset},
            tag=tag, value=value,
        )

    def op_branch(self, tag: str | None = None) -> tuple[TraceRecord, bool]:
        """Controller looks at the flags; returns whether any is set."""
        taken = bool(self.flag_vec is not None and self.flag_vec.any())
        rec = self.record("branch", {"controller-flag-branch": 1}, 1, 1, flag=int(taken), tag=tag)
        return rec, taken

    def op_control(self, bit: int, tag: str | None = None) -> TraceRecord:
        """Controller tests a bit of its own register (no memory access)."""
        return self.record("control", {"controller-flag-branch": 1}, 1, 1, flag=int(bit), tag=tag)

    # -- single-array views of the peripherals ----------------------------

    def _slots(self, array: int, slot: int | None = None) -> tuple[int, int]:
        c = self.geometry.slots_per_row
        if not 0 <= array < self.geometry.num_arrays:
            raise CimError(f"array {array} out of range")
        if slot is None:
            return array * c, (array + 1) * c
        if not 0 <= slot < c:
            raise CimError(f"slot {slot} out of range (C = {c})")
        return array * c + slot, array * c + slot + 1

    def sense_bitwise(self, array: int, row_a: int, row_b: int | None, op: str) -> np.ndarray:
        lo, hi = self._slots(array)
        self.op_logic(op, Ref(row_a, lo, hi), None if op == "NOT" else Ref(row_b, lo, hi))
        return self.latch

    def horizontal_or(self, array: int, slot: int) -> int:
        """Flag of one word of the latch, which must come from this array."""
        lo, _ = self._slots(array, slot)
        if self.latch is None or self.latch_ref is None:
            raise CimError("horizontal OR with an empty latch")
        i = lo - self.latch_ref.start
        if not 0 <= i < len(self.latch):
            raise CimError(f"latch does not hold slot {slot} of array {array}")
        self.op_hor()
        return int(self.flag_vec[i])

    def word_add(self, array: int, row_a: int, row_b: int, slot: int, carry_in: int = 0) -> int:
        lo, hi = self._slots(array, slot)
        self.op_add(Ref(row_a, lo, hi), Ref(row_b, lo, hi), carry_in)
        return W.to_ints(self.latch, signed=False)[0]

    def log_shift(self, array: int, row: int, slot: int, mask: ShiftMask) -> int:
        lo, hi = self._slots(array, slot)
        self.op_shift(Ref(row, lo, hi), mask)
        return W.to_ints(self.latch, signed=False)[0]

    def ipcb_copy(self, array: int, dest_row: int, slot: int) -> None:
        """Write the latched word for this slot back in the same columns."""
        lo, hi = self._slots(array, slot)
        if self.latch is None or self.latch_ref is None:
            raise CimError("copy from an empty latch")
        i = lo - self.latch_ref.start
        if not 0 <= i < len(self.latch):
            raise CimError(f"latch does not hold slot {slot} of array {array}")
        self.latch, self.latch_ref = self.latch[i:i + 1], Ref(self.latch_ref.reg, lo, hi)
        self.op_copy(Ref(dest_row, lo, hi))

    def ipmb_move(self, array: int, src_row: int, src_slot: int, dest_row: int, offset: int) -> None:
        self._slots(array, src_slot)
        self.op_move_bits(array, src_row, src_slot, dest_row, offset)

    # -- spill management ------------------------------------------------

    def op_alloc(self, name: str, lanes: int, width: int, groups: int = 1) -> TraceRecord:
        self.state.spill[name] = SpillReg(W.zeros(lanes, width), width, groups)
        return self.record("alloc", {}, 0, 0, operands={"name": name, "lanes": lanes, "width": width})

    def op_free(self, name: str) -> TraceRecord:
        self.state.spill.pop(name, None)
        return self.record("free", {}, 0, 0, operands={"name": name})

    def put_spill(self, name: str, data: np.ndarray, width: int, groups: int = 1) -> None:
        self.state.spill[name] = SpillReg(data, width, groups)


def charge(trace: StepTrace, kind: str, multiplicity: int = 1, arrays: int = 1,
           cost_model: CostModel | None = None) -> tuple[int, Fraction]:
    """Append a bare cost record; lockstep arrays share the cycles but each pays energy."""
    cost = (cost_model or CostModel.default())[kind]
    cycles, energy = cost.cycles * multiplicity, cost.energy * multiplicity * arrays
    trace.records.append(TraceRecord(len(trace.records), "charge", {kind: multiplicity}, arrays, 1, cycles, energy))
    return trace.cycles, trace.energy
