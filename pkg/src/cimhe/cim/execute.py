"""Run step programs on a bank and drive homomorphic operations end to end."""

from __future__ import annotations

from dataclasses import dataclass

from ..bfv import Ciphertext, KeySet
from ..params import ParamSet
from ..polyring import RingPoly
from . import karatsuba as K
from .compile import (
    compile_hom_add,
    compile_hom_mult,
    compile_mod_reduce,
    compile_mul_plain,
    compile_poly_add,
    compile_poly_mult,
    compile_poly_scale,
    compile_poly_sub,
    physical_scratch,
)
from .core import BankGeometry, BankState, CimBank, CimError, CostModel, Ref, ShiftMask, StepTrace
from .layout import LayoutPlan, plan_layout
from .program import Step, StepProgram


class ExecutionError(CimError):
    def __init__(self, index: int, step: Step, cause: Exception):
        self.index = index
        self.step = step
        super().__init__(f"step {index} ({step.op}): {cause}")


def _dispatch(bank: CimBank, step: Step) -> int:
    """Execute one step; returns how many following steps to skip."""
    a, op, tag = step.args, step.op, step.tag
    if op == "read":
        bank.op_read(a["src"], tag)
    elif op == "logic":
        bank.op_logic(a["op"], a["a"], a.get("b"), tag)
    elif op == "hor":
        bank.op_hor(tag)
    elif op == "add":
        bank.op_add(a["a"], a["b"], a.get("cin", 0), tag)
    elif op == "shift":
        mask = ShiftMask(tuple(a["levels"]))
        bank.op_shift(a["src"], mask, tag)
    elif op == "copy":
        bank.op_copy(a["dst"], a.get("pred", False), tag)
    elif op == "stage":
        bank.op_stage(a["dst"], int(a["value"]), tag)
    elif op == "move":
        bank.op_move(a["src"], a["dst"], tag)
    elif op == "move_bits":
        bank.op_move_bits(a["array"], a["src_row"], a["src_slot"], a["dst_row"], a["offset"], tag)
    elif op == "branch":
        _, taken = bank.op_branch(tag)
        return 0 if taken else a.get("skip", 0)
    elif op == "control":
        bank.op_control(a["bit"], tag)
        return 0 if a["bit"] else a.get("skip", 0)
    elif op == "alloc":
        bank.op_alloc(a["name"], a["lanes"], a["width"], a.get("groups", 1))
    elif op == "free":
        bank.op_free(a["name"])
    elif op == "regroup":
        bank._spill(a["name"]).groups = a["groups"]
    elif op == "kara_load":
        K.kara_load(bank, a["dst"], a["srcs"], a["width"])
    elif op == "kara_split":
        K.kara_split(bank, a["src"], a["dst"])
    elif op == "kara_leaf":
        K.kara_leaf(bank, a["a"], a["b"], a["dst"], a["bits"], a["kinds"])
    elif op == "kara_combine":
        K.kara_combine(bank, a["src"], a["dst"])
    elif op == "kara_unstack":
        K.kara_unstack(bank, a["src"], a["names"])
    else:
        raise CimError(f"unknown step op {op!r}")
    return 0


def execute(program: StepProgram, bank: CimBank, trace: StepTrace | None = None) -> tuple[BankState, StepTrace]:
    """Run a program; the returned trace holds the initial state for replay."""
    if trace is None:
        trace = StepTrace(initial=bank.snapshot())
    bank.trace = trace
    bank.latch = None
    bank.latch_ref = None
    bank.flag_vec = None
    steps = program.steps
    trace.steps.extend(steps)
    i = 0
    while i < len(steps):
        try:
            skip = _dispatch(bank, steps[i])
        except ExecutionError:
            raise
        except (CimError, ValueError, KeyError, IndexError) as exc:
            raise ExecutionError(i, steps[i], exc) from exc
        i += 1 + skip
    return bank.state, trace


def replay(trace: StepTrace, geometry: BankGeometry, cost_model: CostModel | None = None) -> BankState:
    """Re-run the recorded steps from the recorded initial state."""
    if trace.initial is None:
        raise CimError("trace has no initial state to replay from")
    bank = CimBank(geometry, cost_model)
    bank.state = trace.initial.copy()
    execute(StepProgram(list(trace.steps)), bank)
    return bank.state


# -- single primitives on polynomials ----------------------------------------

PRIMITIVES = ("modreduce", "polyadd", "polysub", "polyscale", "polymult")


@dataclass
class PrimitiveRun:
    result: RingPoly
    trace: StepTrace
    program: StepProgram
    bank: CimBank


def run_primitive(
    name: str,
    a: RingPoly | list[int],
    b: RingPoly | None = None,
    k: int | None = None,
    k_prime: int = 0,
    bank: CimBank | None = None,
    expand_leaf: bool | None = None,
) -> PrimitiveRun:
    """Run one primitive with a in row 0, b in row 1 and the result in row 2.

    ``modreduce`` takes raw integers (a list) that fit the word; the others
    take ring elements.
    """
    name = name.lower()
    if name not in PRIMITIVES:
        raise ValueError(f"unknown primitive {name!r}; expected one of {PRIMITIVES}")
    if isinstance(a, RingPoly):
        k, vals = a.k, list(a.coeffs)
    else:
        if k is None:
            raise ValueError("k is required for raw integer input")
        vals = [int(v) for v in a]
    n = len(vals)
    if bank is None:
        bank = CimBank(BankGeometry.for_params(k, n))
    bank.geometry.check_k(k)
    bank.write(0, 0, vals)
    if b is not None:
        if (b.k, b.n) != (k, n):
            raise ValueError("operands differ in (k, n)")
        bank.write(1, 0, b.coeffs)
    ra, rb, rd = Ref(0, 0, n), Ref(1, 0, n), Ref(2, 0, n)
    scratch = physical_scratch(bank.geometry)
    if name == "modreduce":
        prog = StepProgram([], "mod_reduce")
        prog.emit("read", src=ra)
        prog.emit("copy", dst=rd)
        prog.extend(compile_mod_reduce(rd, k, scratch))
    elif name == "polyadd":
        prog = compile_poly_add(ra, rb, rd, k, scratch)
    elif name == "polysub":
        prog = compile_poly_sub(ra, rb, rd, k, scratch)
    elif name == "polyscale":
        if not 0 <= k_prime <= k:
            raise ValueError(f"k_prime={k_prime} outside [0, {k}]")
        prog = StepProgram([], "poly_scale")
        prog.emit("read", src=ra)
        prog.emit("copy", dst=rd)
        prog.extend(compile_poly_scale(rd, k, k_prime, scratch))
    else:
        if b is None:
            raise ValueError("PolyMult needs two operands")
        prog = compile_poly_mult(ra, rb, rd, k, expand_leaf)
    if name in ("polyadd", "polysub") and b is None:
        raise ValueError(f"{name} needs two operands")
    _, trace = execute(prog, bank)
    out = RingPoly(tuple(bank.read(2, 0, n)), k, n)
    return PrimitiveRun(out, trace, prog, bank)


# -- homomorphic operations on a bank ----------------------------------------

def rlk_names(keys: KeySet) -> list[tuple[str, str]]:
    return [(f"rlk{i}.0", f"rlk{i}.1") for i in range(len(keys.rlk))]


def stage_ciphertext(bank: CimBank, plan: LayoutPlan, ct_index: int, c: Ciphertext) -> None:
    row = plan.row(ct_index)
    bank.write(row, 0, c.c0.coeffs)
    bank.write(row, plan.half, c.c1.coeffs)


def read_ciphertext(bank: CimBank, plan: LayoutPlan, ct_index: int, k: int, level: int = 0) -> Ciphertext:
    row = plan.row(ct_index)
    c0 = bank.read(row, 0, plan.n)
    c1 = bank.read(row, plan.half, plan.half + plan.n)
    return Ciphertext(RingPoly(tuple(c0), k, plan.n), RingPoly(tuple(c1), k, plan.n), level)


def stage_rlk(bank: CimBank, keys: KeySet) -> None:
    wb = bank.geometry.word_bits
    for (r0, r1), (n0, n1) in zip(keys.rlk, rlk_names(keys)):
        bank.write(n0, 0, r0.coeffs, width=wb)
        bank.write(n1, 0, r1.coeffs, width=wb)


@dataclass
class HomResult:
    ciphertext: Ciphertext
    trace: StepTrace
    program: StepProgram


def run_hom_op(
    op: str,
    c1: Ciphertext,
    c2: Ciphertext | None,
    keys: KeySet | None,
    bank: CimBank | None = None,
    params: ParamSet | None = None,
    scalar: int | None = None,
    expand_leaf: bool | None = None,
) -> HomResult:
    """HomAdd / HomSub / HomMult (or MulPlain by a public scalar) on a bank.

    Operands go to data rows 0 and 1 and the result to row 2.
    """
    params = params or (keys.params if keys else None)
    if params is None:
        raise ValueError("parameters are needed (pass keys or params)")
    if bank is None:
        bank = CimBank(BankGeometry.for_params(params.k, params.n))
    geometry = bank.geometry
    geometry.check_k(params.k)
    name = op.lower()
    operands = [c1] if name == "mulplain" else [c1, c2]
    # rows 0 and 1 hold operands, row 2 the result, even for a single operand
    plan = plan_layout([c1, c1, c1], geometry)
    for i, c in enumerate(operands):
        stage_ciphertext(bank, plan, i, c)
    rd = 2
    level = max(c.level_hint for c in operands)
    if name in ("homadd", "add"):
        prog = compile_hom_add(0, 1, rd, plan.span, params.k, geometry)
    elif name in ("homsub", "sub"):
        prog = compile_hom_add(0, 1, rd, plan.span, params.k, geometry, sub=True)
    elif name in ("hommult", "mult"):
        if keys is None:
            raise ValueError("HomMult needs the relinearization key")
        stage_rlk(bank, keys)
        prog = compile_hom_mult(
            0, 1, rd, params.n, plan.half, params.k, params.t_log2, keys.decomp_log2,
            geometry, rlk_names(keys), expand_leaf,
        )
        level += 1
    elif name == "mulplain":
        if scalar is None:
            raise ValueError("MulPlain needs a scalar")
        prog = compile_mul_plain(0, rd, plan.span, scalar, params.k, geometry)
    else:
        raise ValueError(f"unknown homomorphic op {op!r}")
    _, trace = execute(prog, bank)
    return HomResult(read_ciphertext(bank, plan, rd, params.k, level), trace, prog)
