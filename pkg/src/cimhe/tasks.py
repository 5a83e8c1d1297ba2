"""Encrypted workloads run through the CiM executor, with cost reporting.

Every value is encrypted as a constant polynomial, so one ciphertext
carries one integer.  Divisions that belong to the client (the mean's 1/N,
the variance's 1/N^3) are left out of the encrypted computation.
"""

from __future__ import annotations

import json
import math
import struct
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bfv
from .bfv import Ciphertext, KeySet, Plaintext
from .cim import words as W
from .cim.compile import compile_affine, compile_linear_layer
from .cim.core import BankGeometry, CimBank, CimError, CostModel, Ref, StepTrace
from .cim.execute import execute, run_hom_op
from .cim.layout import capacity
from .cim.program import StepProgram
from .config import TransferCost
from .params import ParamSet
from .polyring import RingPoly, reduce_centered

TASK_KINDS = ("mean", "variance", "linreg", "mlp")
OP_NAMES = ("homadd", "homsub", "hommult", "mulplain")


@dataclass
class TaskSpec:
    kind: str
    input_path: str | Path | None
    preset: str
    banks: int = 1
    cost_model_path: str | Path | None = None
    transfer: TransferCost = field(default_factory=TransferCost)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task {self.kind!r}; expected one of {TASK_KINDS}")
        if self.banks < 1:
            raise ValueError("bank count must be at least 1")
        for p in (self.input_path, self.cost_model_path):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(p)


# -- cost reporting ----------------------------------------------------------

@dataclass
class BankTotals:
    trace_cycles: int = 0
    trace_energy: Fraction = Fraction(0)
    transfers: int = 0
    transfer_cycles: int = 0
    transfer_energy: Fraction = Fraction(0)

    @property
    def cycles(self) -> int:
        return self.trace_cycles + self.transfer_cycles

    @property
    def energy(self) -> Fraction:
        return self.trace_energy + self.transfer_energy


@dataclass
class CostReport:
    """Totals per bank, per HE primitive and per step kind.

    Banks run concurrently, so the reported cycle count is the slowest
    bank's; energy adds up over banks.
    """

    task: str
    params: str
    banks: int
    ops: Counter = field(default_factory=Counter)
    per_bank: list[BankTotals] = field(default_factory=list)
    per_primitive: dict = field(default_factory=dict)
    kind_counts: Counter = field(default_factory=Counter)
    traces: list = field(default_factory=list)

    def __post_init__(self):
        if not self.per_bank:
            self.per_bank = [BankTotals() for _ in range(self.banks)]

    def add_trace(self, bank: int, op: str, trace: StepTrace, count: int = 1) -> None:
        cyc, en = trace.cycles, trace.energy
        b = self.per_bank[bank]
        b.trace_cycles += cyc
        b.trace_energy += en
        self.ops[op] += count
        prim = self.per_primitive.setdefault(op, {"cycles": 0, "energy": Fraction(0), "runs": 0})
        prim["cycles"] += cyc
        prim["energy"] += en
        prim["runs"] += 1
        self.kind_counts.update(trace.kind_counts())
        self.traces.append((bank, op, cyc, en))

    def add_transfers(self, bank: int, count: int, cost: TransferCost) -> None:
        b = self.per_bank[bank]
        b.transfers += count
        b.transfer_cycles += count * cost.cycles
        b.transfer_energy += count * cost.energy

    @property
    def cycles(self) -> int:
        return max(b.cycles for b in self.per_bank)

    @property
    def energy(self) -> Fraction:
        return sum((b.energy for b in self.per_bank), Fraction(0))

    @property
    def transfers(self) -> int:
        return sum(b.transfers for b in self.per_bank)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "params": self.params,
            "banks": self.banks,
            "ops": {name: self.ops.get(name, 0) for name in OP_NAMES},
            "cycles": self.cycles,
            "energy": str(self.energy),
            "transfers": self.transfers,
            "transfer_cycles": sum(b.transfer_cycles for b in self.per_bank),
            "transfer_energy": str(sum((b.transfer_energy for b in self.per_bank), Fraction(0))),
            "per_bank": [
                {
                    "cycles": b.cycles,
                    "energy": str(b.energy),
                    "trace_cycles": b.trace_cycles,
                    "trace_energy": str(b.trace_energy),
                    "transfers": b.transfers,
                }
                for b in self.per_bank
            ],
            "per_primitive": {
                op: {"cycles": v["cycles"], "energy": str(v["energy"]), "runs": v["runs"]}
                for op, v in sorted(self.per_primitive.items())
            },
            "step_kinds": dict(sorted(self.kind_counts.items())),
        }


# -- evaluator ---------------------------------------------------------------

class Evaluator:
    """Runs HE operations on one or more CiM banks and books their cost.

    With ``check`` on, every CiM result is compared byte for byte with the
    software reference.
    """

    def __init__(
        self,
        keys: KeySet | None,
        params: ParamSet,
        preset: str = "",
        task: str = "",
        banks: int = 1,
        geometry: BankGeometry | None = None,
        cost_model: CostModel | None = None,
        transfer: TransferCost | None = None,
        check: bool = True,
    ):
        if banks < 1:
            raise ValueError("bank count must be at least 1")
        self.keys = keys
        self.params = params
        self.geometry = geometry or BankGeometry.for_params(params.k, params.n)
        self.geometry.check_k(params.k)
        self.cost_model = cost_model or CostModel.default()
        self.banks = [CimBank(self.geometry, self.cost_model) for _ in range(banks)]
        self.transfer = transfer or TransferCost()
        self.check = check
        self.report = CostReport(task, preset, banks)
        self._lock = threading.Lock()

    @property
    def resident_capacity(self) -> int:
        return capacity(self.geometry, self.params.n)

    def load_inputs(self, count: int) -> list[int]:
        """Spread ``count`` input ciphertexts over the banks; charge what does not fit."""
        nb = len(self.banks)
        share = [count // nb + (1 if b < count % nb else 0) for b in range(nb)]
        for b, m in enumerate(share):
            self.report.add_transfers(b, max(0, m - self.resident_capacity), self.transfer)
        return share

    def _run(self, op: str, c1: Ciphertext, c2: Ciphertext | None, bank: int, scalar: int | None = None) -> Ciphertext:
        res = run_hom_op(op, c1, c2, self.keys, bank=self.banks[bank], params=self.params, scalar=scalar)
        if self.check:
            if op == "add":
                ref = bfv.hom_add(c1, c2)
            elif op == "sub":
                ref = bfv.hom_sub(c1, c2)
            elif op == "mult":
                ref = bfv.hom_mult(c1, c2, self.keys)
            else:
                ref = bfv.mul_plain_scalar(c1, scalar)
            if res.ciphertext.to_bytes() != ref.to_bytes():
                raise CimError(f"CiM {op} result differs from the reference")
        with self._lock:
            self.report.add_trace(bank, {"add": "homadd", "sub": "homsub", "mult": "hommult"}.get(op, op), res.trace)
        return res.ciphertext

    def add(self, c1: Ciphertext, c2: Ciphertext, bank: int = 0) -> Ciphertext:
        return self._run("add", c1, c2, bank)

    def sub(self, c1: Ciphertext, c2: Ciphertext, bank: int = 0) -> Ciphertext:
        return self._run("sub", c1, c2, bank)

    def mult(self, c1: Ciphertext, c2: Ciphertext, bank: int = 0) -> Ciphertext:
        if self.keys is None:
            raise ValueError("HomMult needs the relinearization key")
        return self._run("mult", c1, c2, bank)

    def mul_plain(self, c: Ciphertext, scalar: int, bank: int = 0) -> Ciphertext:
        return self._run("mulplain", c, None, bank, scalar=scalar)

    def sum(self, cts: Sequence[Ciphertext], bank: int = 0) -> Ciphertext:
        if not cts:
            raise ValueError("nothing to add")
        acc = cts[0]
        for c in cts[1:]:
            acc = self.add(acc, c, bank)
        return acc

    def sum_across_banks(self, cts: Sequence[Ciphertext]) -> Ciphertext:
        """Fold each bank's share locally, then combine the partials on bank 0."""
        share = _split(len(cts), len(self.banks))
        parts = []
        start = 0
        jobs = []
        for b, m in enumerate(share):
            if m:
                jobs.append((b, cts[start:start + m]))
            start += m
        parts = self._parallel(lambda job: self.sum(job[1], job[0]), jobs)
        for b, _ in jobs[1:]:
            # partial sums leave their bank through main memory
            with self._lock:
                self.report.add_transfers(b, 1, self.transfer)
        return self.sum(parts, 0)

    def map_mult(self, pairs: Sequence[tuple[Ciphertext, Ciphertext]]) -> list[Ciphertext]:
        """Independent HomMults, pair j on bank j mod banks, banks in parallel."""
        nb = len(self.banks)
        buckets = [[(j, p) for j, p in enumerate(pairs) if j % nb == b] for b in range(nb)]

        def run(b):
            return [(j, self.mult(x, y, b)) for j, (x, y) in buckets[b]]

        out: list = [None] * len(pairs)
        for res in self._parallel(run, range(nb)):
            for j, c in res:
                out[j] = c
        return out

    def _parallel(self, fn, items):
        items = list(items)
        if len(self.banks) == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=len(self.banks)) as pool:
            return list(pool.map(fn, items))


def _split(count: int, parts: int) -> list[int]:
    return [count // parts + (1 if b < count % parts else 0) for b in range(parts)]


# -- client side helpers -----------------------------------------------------

def encrypt_values(values: Sequence[int], keys: KeySet, seed: str = "inputs") -> list[Ciphertext]:
    p = keys.params
    return [bfv.encrypt(Plaintext.constant(int(v), p), keys.pk, p, f"{seed}/{i}") for i, v in enumerate(values)]


def decrypt_value(c: Ciphertext, keys: KeySet) -> int:
    """Constant coefficient of the decrypted plaintext (centered mod t)."""
    return bfv.decrypt(c, keys.sk, keys.params)[0]


def plain_value(x: int, params: ParamSet) -> int:
    return reduce_centered(int(x), params.t_log2)


# -- tasks -------------------------------------------------------------------

def task_mean(inputs: Sequence[Ciphertext], ev: Evaluator) -> tuple[Ciphertext, CostReport]:
    """Encrypted sum; the client divides by N after decryption."""
    if not inputs:
        raise ValueError("mean of no inputs")
    ev.load_inputs(len(inputs))
    return ev.sum_across_banks(list(inputs)), ev.report


def task_variance(inputs: Sequence[Ciphertext], ev: Evaluator) -> tuple[Ciphertext, CostReport]:
    """sum_i (N x_i - sum_j x_j)^2; the client divides by N^3."""
    n = len(inputs)
    if n == 0:
        raise ValueError("variance of no inputs")
    ev.load_inputs(n)
    total = ev.sum_across_banks(list(inputs))
    diffs = []
    for x in inputs:
        # N * x_i by repeated addition of the public count
        nx = x
        for _ in range(n - 1):
            nx = ev.add(nx, x)
        diffs.append(ev.sub(nx, total))
    squares = ev.map_mult([(d, d) for d in diffs])
    return ev.sum_across_banks(squares), ev.report


def task_linreg(
    X: Sequence[Sequence[Ciphertext]], t: Sequence[Ciphertext], ev: Evaluator,
) -> tuple[tuple[list[list[Ciphertext]], list[Ciphertext]], CostReport]:
    """Encrypted X^T X and X^T t; inversion is left to the client."""
    rows = len(X)
    if rows == 0 or len(t) != rows:
        raise ValueError("X and t must have the same, non-zero, number of rows")
    d = len(X[0])
    if any(len(r) != d for r in X):
        raise ValueError("X rows differ in length")
    ev.load_inputs(rows * d + rows)
    # X^T X is symmetric: form the upper triangle and mirror it
    pairs, index = [], []
    for a in range(d):
        for b in range(a, d):
            for i in range(rows):
                pairs.append((X[i][a], X[i][b]))
            index.append(("xx", a, b))
    for a in range(d):
        for i in range(rows):
            pairs.append((X[i][a], t[i]))
        index.append(("xt", a, None))
    prods = ev.map_mult(pairs)
    xtx: list[list] = [[None] * d for _ in range(d)]
    xt: list = [None] * d
    for j, (kind, a, b) in enumerate(index):
        s = ev.sum_across_banks(prods[j * rows:(j + 1) * rows])
        if kind == "xx":
            xtx[a][b] = xtx[b][a] = s
        else:
            xt[a] = s
    return (xtx, xt), ev.report


# -- MLP ---------------------------------------------------------------------

@dataclass
class MlpModel:
    """Integer MLP: scores = W2 (slope * (W1 x + b1) + intercept) + b2."""

    w1: np.ndarray
    w2: np.ndarray
    b1: np.ndarray | None = None
    b2: np.ndarray | None = None
    weight_scale: int = 100
    activation_scale: int = 1800
    slope: int = 1
    intercept: int = 900

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.int64)
        self.w2 = np.asarray(self.w2, dtype=np.int64)
        if self.w1.ndim != 2 or self.w2.ndim != 2 or self.w2.shape[1] != self.w1.shape[0]:
            raise ValueError("weights must be (hidden, inputs) and (outputs, hidden)")
        self.b1 = np.zeros(self.hidden, np.int64) if self.b1 is None else np.asarray(self.b1, dtype=np.int64)
        self.b2 = np.zeros(self.outputs, np.int64) if self.b2 is None else np.asarray(self.b2, dtype=np.int64)
        if self.b1.shape != (self.hidden,) or self.b2.shape != (self.outputs,):
            raise ValueError("bias shapes do not match the layers")
        if self.weight_scale <= 0 or self.activation_scale <= 0:
            raise ValueError("scales must be positive")

    @property
    def inputs(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def outputs(self) -> int:
        return self.w2.shape[0]

    def forward(self, x: Sequence[int]) -> list[int]:
        """Plaintext integer forward pass in exact Python integers."""
        x = [int(v) for v in x]
        if len(x) != self.inputs:
            raise ValueError(f"expected {self.inputs} inputs, got {len(x)}")
        w1, w2 = self.w1.tolist(), self.w2.tolist()
        h = [self.slope * (sum(w * v for w, v in zip(row, x)) + int(b)) + self.intercept for row, b in zip(w1, self.b1)]
        return [sum(w * v for w, v in zip(row, h)) + int(b) for row, b in zip(w2, self.b2)]

    def max_abs_score(self, pixel_max: int = 255) -> int:
        """Bound on |score| over inputs in [0, pixel_max]."""
        h = np.abs(self.w1).sum(axis=1).astype(object) * pixel_max + np.abs(self.b1).astype(object)
        h = abs(self.slope) * h + abs(self.intercept)
        return int(max((np.abs(self.w2).astype(object) @ h) + np.abs(self.b2).astype(object)))

    @classmethod
    def random(cls, inputs: int, hidden: int, outputs: int, seed: int = 0, weight_range: int = 100) -> "MlpModel":
        rng = np.random.default_rng(seed)
        return cls(
            rng.integers(-weight_range, weight_range + 1, (hidden, inputs)),
            rng.integers(-weight_range, weight_range + 1, (outputs, hidden)),
            rng.integers(-weight_range, weight_range + 1, hidden),
            rng.integers(-weight_range, weight_range + 1, outputs),
        )

    def to_dict(self) -> dict:
        return {
            "layers": [self.inputs, self.hidden, self.outputs],
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "weight_scale": self.weight_scale,
            "activation_scale": self.activation_scale,
            "activation": {"slope": self.slope, "intercept": self.intercept},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        act = doc.get("activation", {})
        m = cls(
            doc["w1"], doc["w2"], doc.get("b1"), doc.get("b2"),
            int(doc.get("weight_scale", 100)), int(doc.get("activation_scale", 1800)),
            int(act.get("slope", 1)), int(act.get("intercept", 900)),
        )
        if "layers" in doc and list(doc["layers"]) != [m.inputs, m.hidden, m.outputs]:
            raise ValueError("declared layer sizes do not match the weights")
        return m

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _stack(cts: Sequence[Ciphertext], width: int) -> np.ndarray:
    """[ciphertext][c0 coefficients, c1 coefficients] as words."""
    vals = [v for c in cts for v in (*c.c0.coeffs, *c.c1.coeffs)]
    return W.from_ints(vals, width)


def _unstack(data: np.ndarray, count: int, k: int, n: int, level: int) -> list[Ciphertext]:
    vals = W.to_ints(data)
    out = []
    for j in range(count):
        block = vals[2 * n * j:2 * n * (j + 1)]
        out.append(Ciphertext(RingPoly(tuple(block[:n]), k, n), RingPoly(tuple(block[n:]), k, n), level))
    return out


def _trivial_stack(values: Sequence[int], params: ParamSet, width: int) -> np.ndarray:
    cts = [bfv.encrypt_trivial(Plaintext.constant(int(v), params), params) for v in values]
    return _stack(cts, width)


def _bits(values: np.ndarray) -> int:
    return max(1, int(np.abs(values).max(initial=0)).bit_length())


def _mlp_reference(cts: Sequence[Ciphertext], model: MlpModel, params: ParamSet) -> list[Ciphertext]:
    def triv(v):
        return bfv.encrypt_trivial(Plaintext.constant(int(v), params), params)

    def dense(xs, w, b):
        out = []
        for row, bias in zip(w.tolist(), b.tolist()):
            acc = triv(bias)
            for wi, x in zip(row, xs):
                acc = bfv.hom_add(acc, bfv.mul_plain_scalar(x, wi))
            out.append(acc)
        return out

    h = dense(cts, model.w1, model.b1)
    h = [bfv.hom_add(bfv.mul_plain_scalar(z, model.slope), triv(model.intercept)) for z in h]
    return dense(h, model.w2, model.b2)


def _mlp_cim(cts: Sequence[Ciphertext], model: MlpModel, ev: Evaluator) -> list[Ciphertext]:
    p = ev.params
    n2 = 2 * p.n
    bank = ev.banks[0]
    width = bank.geometry.word_bits
    level = max(c.level_hint for c in cts)
    I, H, O = model.inputs, model.hidden, model.outputs

    def run(prog: StepProgram, op: str, count: int) -> None:
        _, trace = execute(prog, bank)
        ev.report.add_trace(0, op, trace, count)

    # layer 1: inputs are written column-aligned with their weights
    x = _stack(cts, width).reshape(I, 1, n2, -1)
    bank.put_spill("mlp.x", np.ascontiguousarray(np.broadcast_to(x, (I, H, n2, x.shape[-1])).reshape(I * H * n2, -1)), width)
    w = np.broadcast_to(model.w1.T[:, :, None], (I, H, n2))
    bank.put_spill("mlp.w", W.from_int64(w, width), width)
    run(compile_linear_layer("mlp.x", "mlp.w", "mlp.h", I, H, n2, width, _bits(model.w1), p.k), "mulplain", I * H)
    ev.report.ops["homadd"] += (I - 1) * H
    for name in ("mlp.x", "mlp.w"):
        bank.state.spill.pop(name)
    # bias, then the affine activation
    bank.put_spill("mlp.b1", _trivial_stack(model.b1, p, width), width)
    run(compile_affine("mlp.h", H * n2, width, p.k, offset="mlp.b1"), "homadd", H)
    bank.put_spill("mlp.slope", W.from_int64(np.full(H * n2, model.slope), width), width)
    bank.put_spill("mlp.icpt", _trivial_stack([model.intercept] * H, p, width), width)
    run(compile_affine("mlp.h", H * n2, width, p.k, "mlp.slope", _bits(np.array([model.slope])), "mlp.icpt"), "mulplain", H)
    ev.report.ops["homadd"] += H
    # layer 2 gathers the hidden ciphertexts in-bank
    load = StepProgram(name="gather")
    srcs = [Ref("mlp.h", i * n2, (i + 1) * n2) for i in range(H) for _ in range(O)]
    load.emit("kara_load", dst="mlp.x2", srcs=srcs, width=width)
    run(load, "gather", 0)
    w = np.broadcast_to(model.w2.T[:, :, None], (H, O, n2))
    bank.put_spill("mlp.w2", W.from_int64(w, width), width)
    run(compile_linear_layer("mlp.x2", "mlp.w2", "mlp.o", H, O, n2, width, _bits(model.w2), p.k), "mulplain", H * O)
    ev.report.ops["homadd"] += (H - 1) * O
    bank.put_spill("mlp.b2", _trivial_stack(model.b2, p, width), width)
    run(compile_affine("mlp.o", O * n2, width, p.k, offset="mlp.b2"), "homadd", O)
    out = _unstack(bank.state.spill["mlp.o"].data, O, p.k, p.n, level)
    for name in list(bank.state.spill):
        if name.startswith("mlp."):
            bank.state.spill.pop(name)
    return out


def _mlp_hommult(cts: Sequence[Ciphertext], model: MlpModel, ev: Evaluator) -> list[Ciphertext]:
    """Every weight product as a full HomMult against a trivial encryption."""
    p = ev.params

    def triv(v):
        return bfv.encrypt_trivial(Plaintext.constant(int(v), p), p)

    def dense(xs, w, b):
        prods = ev.map_mult([(x, triv(wi)) for row in w.tolist() for wi, x in zip(row, xs)])
        out = []
        for j, bias in enumerate(b.tolist()):
            terms = prods[j * len(xs):(j + 1) * len(xs)]
            out.append(ev.add(ev.sum_across_banks(terms), triv(bias)))
        return out

    h = dense(cts, model.w1, model.b1)
    h = [ev.add(ev.mult(z, triv(model.slope)), triv(model.intercept)) for z in h]
    return dense(h, model.w2, model.b2)


def task_mlp_infer(
    image: Sequence[Ciphertext], model: MlpModel, ev: Evaluator, force_hommult: bool = False,
) -> tuple[list[Ciphertext], CostReport]:
    """Encrypted scores for one image; argmax is taken by the client."""
    if len(image) != model.inputs:
        raise ValueError(f"model expects {model.inputs} pixels, got {len(image)}")
    ev.load_inputs(len(image))
    if force_hommult:
        return _mlp_hommult(image, model, ev), ev.report
    scores = _mlp_cim(image, model, ev)
    if ev.check:
        ref = _mlp_reference(image, model, ev.params)
        if [c.to_bytes() for c in scores] != [c.to_bytes() for c in ref]:
            raise CimError("CiM MLP scores differ from the reference")
    return scores, ev.report


def argmax(values: Sequence[int]) -> int:
    return max(range(len(values)), key=lambda i: (values[i], -i))


# -- data files --------------------------------------------------------------

def read_idx(path: str | Path) -> np.ndarray:
    """IDX file (big-endian magic and dimensions) as an array."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    dtypes = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
    code, ndim = raw[2], raw[3]
    if code not in dtypes:
        raise ValueError(f"{path}: unknown IDX element type 0x{code:02x}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    dt = np.dtype(dtypes[code])
    body = raw[4 + 4 * ndim:]
    count = math.prod(dims)
    if len(body) != count * dt.itemsize:
        raise ValueError(f"{path}: expected {count} elements, found {len(body) // dt.itemsize}")
    return np.frombuffer(body, dtype=dt).reshape(dims)


def write_idx(path: str | Path, arr: np.ndarray) -> None:
    a = np.asarray(arr)
    if a.dtype == np.uint8:
        code, body = 0x08, a.tobytes()
    elif a.dtype.kind == "i":
        code, body = 0x0C, a.astype(">i4").tobytes()
    else:
        raise ValueError(f"unsupported dtype {a.dtype}")
    header = bytes([0, 0, code, a.ndim]) + struct.pack(f">{a.ndim}I", *a.shape)
    bfv.atomic_write(path, header + body)


def load_task_input(path: str | Path) -> dict:
    """JSON task input: {"values": [...]} or {"X": [[...]], "t": [...]}."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: task input must be a JSON object")
    return doc
