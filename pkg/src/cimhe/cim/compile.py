"""Compile polynomial primitives into CiM step programs.

Every compiler takes operand references (a register plus a lane range) and
the two scratch registers it may clobber; it never inspects data.  Blocks
guarded by a ``branch`` run only when some lane's flag is set, and their
writes are predicated per lane.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import BankGeometry, CimError, Ref, ShiftMask, shift_rounds
from .program import StepProgram

LEAF_EXPAND_LIMIT = 4096


def word_width(bits: int) -> int:
    return 64 * -(-bits // 64)


def _lanes(ref: Ref) -> tuple[int, int]:
    if ref.stop is None:
        raise ValueError("compiled operands need explicit lane ranges")
    return ref.start, ref.stop


def _like(reg, ref: Ref) -> Ref:
    """Same lanes as ``ref`` on another register (column-aligned operand)."""
    return Ref(reg, ref.start, ref.stop)


@dataclass(frozen=True)
class Scratch:
    """Two scratch registers; refs are built column-aligned with the target."""

    s0: int | str
    s1: int | str
    spill: bool = False

    def at(self, ref: Ref) -> tuple[Ref, Ref]:
        if self.spill:
            n = ref.stop - ref.start
            return Ref(self.s0, 0, n), Ref(self.s1, 0, n)
        return _like(self.s0, ref), _like(self.s1, ref)


def physical_scratch(geometry: BankGeometry) -> Scratch:
    rows = geometry.scratch_rows
    if len(rows) < 2:
        raise CimError(f"scratch exhausted: need 2 scratch rows, geometry has {len(rows)}")
    return Scratch(rows[0], rows[1])


def _shift(p: StepProgram, src: Ref, mask: ShiftMask, tag: str | None = None) -> None:
    p.emit("shift", src=src, levels=list(mask.levels), amount=mask.signed_amount, tag=tag)


def _shift_left_into(p: StepProgram, src: Ref, dst: Ref, amount: int, tag: str | None = None) -> None:
    """Left shift by any amount, one shifter round at a time, ending in dst."""
    rounds = shift_rounds(amount)
    for i, r in enumerate(rounds):
        _shift(p, src if i == 0 else dst, ShiftMask.left(r))
        p.emit("copy", dst=dst, tag=tag if i == len(rounds) - 1 else None)


# -- reduction, add, sub -----------------------------------------------------

def compile_mod_reduce(target: Ref, k: int, scratch: Scratch) -> StepProgram:
    """Leave the centered residue of ``target`` mod 2**k in place."""
    _lanes(target)
    s0, s1 = scratch.at(target)
    p = StepProgram(name="mod_reduce")
    # drop everything at or above bit k: canonical pattern in [0, 2**k)
    p.emit("stage", dst=s0, value=(1 << k) - 1)
    p.emit("logic", op="AND", a=target, b=s0)
    p.emit("copy", dst=target)
    # step 1-2: single 1 at bit k-1, AND, horizontal OR
    p.emit("stage", dst=s0, value=1 << (k - 1))
    p.emit("logic", op="AND", a=target, b=s0)
    p.emit("hor")
    br = p.emit("branch")
    # step 3: subtract q where the flag is set
    p.emit("stage", dst=s0, value=1 << k)
    p.emit("logic", op="NOT", a=s0)
    p.emit("copy", dst=s1)
    p.emit("add", a=target, b=s1, cin=1)
    p.emit("copy", dst=target, pred=True)
    p.guard(br)
    return p


def compile_poly_add(a: Ref, b: Ref, dst: Ref, k: int, scratch: Scratch) -> StepProgram:
    if _lanes(a)[1] - a.start != _lanes(b)[1] - b.start or a.start != b.start:
        raise CimError("PolyAdd operands are not column-aligned")
    p = StepProgram(name="poly_add")
    p.emit("add", a=a, b=b, cin=0)
    p.emit("copy", dst=dst)
    return p.extend(compile_mod_reduce(dst, k, scratch))


def compile_poly_sub(a: Ref, b: Ref, dst: Ref, k: int, scratch: Scratch) -> StepProgram:
    if _lanes(a)[1] - a.start != _lanes(b)[1] - b.start or a.start != b.start:
        raise CimError("PolySub operands are not column-aligned")
    _, s1 = scratch.at(a)
    p = StepProgram(name="poly_sub")
    # two's complement of the subtrahend via NOT and carry-in 1
    p.emit("logic", op="NOT", a=b)
    p.emit("copy", dst=s1)
    p.emit("add", a=a, b=s1, cin=1)
    p.emit("copy", dst=dst)
    return p.extend(compile_mod_reduce(dst, k, scratch))


# -- scaling -----------------------------------------------------------------

def compile_poly_scale(
    target: Ref,
    k: int,
    k_prime: int,
    scratch: Scratch,
    out_k: int | None = None,
    pattern_bits: int | None = None,
) -> StepProgram:
    """Rounded division by 2**k_prime, in place.

    ``pattern_bits`` is the width of the unsigned pattern that is shifted
    (default k); the result is re-centered mod 2**out_k (default k).
    """
    if not 0 <= k_prime <= k:
        raise ValueError(f"k_prime={k_prime} outside [0, {k}]")
    pattern_bits = k if pattern_bits is None else pattern_bits
    out_k = k if out_k is None else out_k
    s0, s1 = scratch.at(target)
    p = StepProgram(name="poly_scale")
    p.emit("stage", dst=s0, value=(1 << pattern_bits) - 1)
    p.emit("logic", op="AND", a=target, b=s0)
    p.emit("copy", dst=target)
    if k_prime:
        # keep the dividend so the remainder bits survive the shifts
        p.emit("read", src=target)
        p.emit("copy", dst=s1)
        for amount in shift_rounds(k_prime):
            _shift(p, target, ShiftMask.right(amount))
            p.emit("copy", dst=target)
        p.emit("stage", dst=s0, value=1 << (k_prime - 1))
        p.emit("logic", op="AND", a=s1, b=s0)
        p.emit("hor")
        br = p.emit("branch")
        p.emit("stage", dst=s0, value=0)
        p.emit("add", a=target, b=s0, cin=1)
        p.emit("copy", dst=target, pred=True)
        p.guard(br)
    return p.extend(compile_mod_reduce(target, out_k, scratch))


def compile_shift_right(target: Ref, amount: int) -> StepProgram:
    p = StepProgram(name="shift_right")
    for r in shift_rounds(amount):
        _shift(p, target, ShiftMask.right(r))
        p.emit("copy", dst=target)
    return p


# -- Shift-Add ---------------------------------------------------------------

def compile_shift_add(a: Ref, b_value: int, out: Ref, scratch: Scratch, bits: int | None = None) -> StepProgram:
    """Multiply the slot(s) at ``a`` by a multiplier held in the controller.

    Bit i of |b| is tested by the controller: 0 shifts a', 1 adds a' into
    out and then shifts.  A negative multiplier is applied at the end by
    two's complement negation.
    """
    if a.reg == out.reg and not (a.stop <= out.start or out.stop <= a.start):
        raise CimError("accumulator slot collides with the multiplicand")
    mag = abs(b_value)
    bits = max(1, mag.bit_length()) if bits is None else bits
    if mag >> bits:
        raise ValueError(f"multiplier {b_value} needs more than {bits} bits")
    a_sh, tmp = scratch.at(a)
    p = StepProgram(name="shift_add")
    p.emit("stage", dst=out, value=0)
    p.emit("read", src=a)
    p.emit("copy", dst=a_sh)
    for i in range(bits):
        bit = (mag >> i) & 1
        br = p.emit("control", bit=bit)
        p.emit("add", a=out, b=a_sh, cin=0)
        p.emit("copy", dst=out)
        p.guard(br)
        _shift(p, a_sh, ShiftMask.left(1))
        p.emit("copy", dst=a_sh)
    if b_value < 0:
        p.emit("logic", op="NOT", a=out)
        p.emit("copy", dst=tmp)
        p.emit("stage", dst=out, value=0)
        p.emit("add", a=tmp, b=out, cin=1)
        p.emit("copy", dst=out)
    return p


def compile_leaf_expanded(a: str, b: str, dst: str, lanes: int, width: int, bits: int, prefix: str = "lf") -> StepProgram:
    """Lane-parallel Shift-Add with the multiplier in memory.

    The multiplier bit of each lane becomes that lane's flag (AND with a
    one-hot mask, horizontal OR) and the accumulate is a predicated copy.
    """
    t, am, bm, acc, sgn, s0 = (f"{prefix}.{x}" for x in ("t", "am", "bm", "acc", "sgn", "s0"))
    R = lambda name: Ref(name, 0, lanes)  # noqa: E731
    p = StepProgram(name="shift_add_leaf")
    for name in (t, am, bm, acc, sgn, s0):
        p.emit("alloc", name=name, lanes=lanes, width=width)
    top = 1 << (width - 1)
    # sign of the product
    p.emit("logic", op="XOR", a=R(a), b=R(b))
    p.emit("copy", dst=R(t))
    p.emit("stage", dst=R(s0), value=top)
    p.emit("logic", op="AND", a=R(t), b=R(s0))
    p.emit("copy", dst=R(sgn))
    # magnitudes
    for src, mag in ((a, am), (b, bm)):
        p.emit("stage", dst=R(s0), value=top)
        p.emit("read", src=R(src))
        p.emit("copy", dst=R(mag))
        p.emit("logic", op="AND", a=R(src), b=R(s0))
        p.emit("hor")
        p.emit("logic", op="NOT", a=R(src))
        p.emit("copy", dst=R(t))
        p.emit("stage", dst=R(s0), value=0)
        p.emit("add", a=R(t), b=R(s0), cin=1)
        p.emit("copy", dst=R(mag), pred=True)
    p.emit("stage", dst=R(acc), value=0)
    for i in range(bits):
        p.emit("stage", dst=R(s0), value=1 << i)
        p.emit("logic", op="AND", a=R(bm), b=R(s0))
        p.emit("hor")
        p.emit("add", a=R(acc), b=R(am), cin=0)
        p.emit("copy", dst=R(acc), pred=True)
        _shift(p, R(am), ShiftMask.left(1))
        p.emit("copy", dst=R(am))
    # conditional negate
    p.emit("stage", dst=R(s0), value=top)
    p.emit("logic", op="AND", a=R(sgn), b=R(s0))
    p.emit("hor")
    p.emit("logic", op="NOT", a=R(acc))
    p.emit("copy", dst=R(t))
    p.emit("stage", dst=R(s0), value=0)
    p.emit("add", a=R(t), b=R(s0), cin=1)
    p.emit("copy", dst=R(acc), pred=True)
    p.emit("alloc", name=dst, lanes=lanes, width=width)
    p.emit("move", src=R(acc), dst=R(dst))
    for name in (t, am, bm, acc, sgn, s0):
        p.emit("free", name=name)
    return p


def leaf_kind_counts(width: int, bits: int) -> dict:
    """Per-wave step kinds of one lane-parallel Shift-Add leaf."""
    return dict(compile_leaf_expanded("a", "b", "p", 1, width, bits).kind_counts())


# -- Karatsuba ---------------------------------------------------------------

@dataclass(frozen=True)
class KaratsubaPlan:
    n: int
    depth: int
    width: int
    leaf_bits: int
    leaf_lanes: int


def plan_karatsuba(n: int, a_bits: int, b_bits: int, groups: int = 1) -> KaratsubaPlan:
    """Word width and leaf size for products of |a| < 2**a_bits, |b| < 2**b_bits."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"Karatsuba needs a power-of-two length, got {n}")
    d = n.bit_length() - 1
    # leaves grow by d bits per operand; R1-R3 needs two more bits and a sign
    width = word_width(a_bits + b_bits + 2 * d + 3)
    return KaratsubaPlan(n, d, width, b_bits + d, groups * 3 ** d)


def compile_karatsuba(
    a_refs: list[Ref],
    b_refs: list[Ref],
    out_names: list[str],
    a_bits: int,
    b_bits: int,
    expand_leaf: bool | None = None,
    prefix: str = "k",
) -> tuple[StepProgram, KaratsubaPlan]:
    """Full products (length 2n-1) of column pairs, one output register each.

    Recursion is unrolled level by level: every split of a level runs in the
    same waves, so R1, R2 and R3 of all subproblems proceed in lockstep.
    """
    if not (len(a_refs) == len(b_refs) == len(out_names)) or not a_refs:
        raise ValueError("need matching, non-empty operand and output lists")
    n = a_refs[0].stop - a_refs[0].start
    plan = plan_karatsuba(n, a_bits, b_bits, len(a_refs))
    d, width = plan.depth, plan.width
    A = lambda j: f"{prefix}.A{j}"  # noqa: E731
    B = lambda j: f"{prefix}.B{j}"  # noqa: E731
    P = lambda j: f"{prefix}.P{j}"  # noqa: E731
    p = StepProgram(name="karatsuba")
    p.emit("kara_load", dst=A(0), srcs=list(a_refs), width=width)
    p.emit("kara_load", dst=B(0), srcs=list(b_refs), width=width)
    for j in range(d):
        p.emit("kara_split", src=A(j), dst=A(j + 1))
        p.emit("free", name=A(j))
        p.emit("kara_split", src=B(j), dst=B(j + 1))
        p.emit("free", name=B(j))
    if expand_leaf is None:
        expand_leaf = plan.leaf_lanes <= LEAF_EXPAND_LIMIT
    if expand_leaf:
        p.extend(compile_leaf_expanded(A(d), B(d), P(d), plan.leaf_lanes, width, plan.leaf_bits, prefix=f"{prefix}.lf"))
        p.emit("regroup", name=P(d), groups=plan.leaf_lanes)
    else:
        p.emit("kara_leaf", a=A(d), b=B(d), dst=P(d), bits=plan.leaf_bits,
               kinds=leaf_kind_counts(width, plan.leaf_bits))
    p.emit("free", name=A(d))
    p.emit("free", name=B(d))
    for j in range(d, 0, -1):
        p.emit("kara_combine", src=P(j), dst=P(j - 1))
        p.emit("free", name=P(j))
    p.emit("kara_unstack", src=P(0), names=list(out_names))
    p.emit("free", name=P(0))
    return p, plan


def compile_fold(prod: str, n: int, dst: str, width: int, k: int, scratch: Scratch) -> StepProgram:
    """Negacyclic wrap of a length-(2n-1) product: low half minus high half, then reduce."""
    p = StepProgram(name="fold")
    p.emit("alloc", name=dst, lanes=n, width=width)
    if n == 1:
        p.emit("move", src=Ref(prod, 0, 1), dst=Ref(dst, 0, 1))
        return p.extend(compile_mod_reduce(Ref(dst, 0, 1), k, scratch))
    hi = f"{dst}.hi"
    p.emit("alloc", name=hi, lanes=n, width=width)
    p.emit("move", src=Ref(prod, n, 2 * n - 1), dst=Ref(hi, 0, n - 1))
    p.emit("logic", op="NOT", a=Ref(hi, 0, n))
    p.emit("copy", dst=Ref(hi, 0, n))
    p.emit("add", a=Ref(prod, 0, n), b=Ref(hi, 0, n), cin=1)
    p.emit("copy", dst=Ref(dst, 0, n))
    p.emit("free", name=hi)
    return p.extend(compile_mod_reduce(Ref(dst, 0, n), k, scratch))


def _spill_scratch(p: StepProgram, n: int, width: int, tag: str) -> Scratch:
    s = Scratch(f"{tag}.s0", f"{tag}.s1", spill=True)
    p.emit("alloc", name=s.s0, lanes=n, width=width)
    p.emit("alloc", name=s.s1, lanes=n, width=width)
    return s


def _free_scratch(p: StepProgram, s: Scratch) -> None:
    p.emit("free", name=s.s0)
    p.emit("free", name=s.s1)


def compile_poly_mult(a: Ref, b: Ref, dst: Ref, k: int, expand_leaf: bool | None = None) -> StepProgram:
    """PolyMult: Karatsuba on centered k-bit operands, fold, reduce, write back."""
    n = a.stop - a.start
    p = StepProgram(name="poly_mult")
    kara, plan = compile_karatsuba([a], [b], ["pm.full"], k, k, expand_leaf, prefix="pm")
    p.extend(kara)
    s = _spill_scratch(p, n, plan.width, "pm")
    p.extend(compile_fold("pm.full", n, "pm.res", plan.width, k, s))
    p.emit("move", src=Ref("pm.res", 0, n), dst=dst)
    for name in ("pm.full", "pm.res"):
        p.emit("free", name=name)
    _free_scratch(p, s)
    return p


# -- public-weight layers ----------------------------------------------------

def compile_linear_layer(
    x: str, w: str, out: str, inputs: int, outputs: int, block_lanes: int, width: int, bits: int, k: int,
) -> StepProgram:
    """Dot products of many ciphertexts with public weights, all outputs at once.

    ``x`` and ``w`` are laid out [input][output][lane]: ``x`` repeats each
    input ciphertext once per output and ``w`` carries the matching weight
    on every lane.  The Shift-Add leaf forms all products in one pass, a
    halving tree of adds sums over the input axis, and the result is
    reduced mod 2**k into ``out`` ([output][lane]).
    """
    block = outputs * block_lanes
    total = inputs * block
    prod = f"{out}.prod"
    p = StepProgram(name="linear_layer")
    p.emit("regroup", name=x, groups=total)
    p.emit("regroup", name=w, groups=total)
    p.emit("kara_leaf", a=x, b=w, dst=prod, bits=bits, kinds=leaf_kind_counts(width, bits))
    m = inputs
    while m > 1:
        half, top = m // 2, m - m // 2
        p.emit("add", a=Ref(prod, 0, half * block), b=Ref(prod, top * block, m * block), cin=0)
        p.emit("copy", dst=Ref(prod, 0, half * block))
        m = top
    p.emit("alloc", name=out, lanes=block, width=width)
    p.emit("move", src=Ref(prod, 0, block), dst=Ref(out, 0, block))
    p.emit("free", name=prod)
    s = _spill_scratch(p, block, width, out)
    p.extend(compile_mod_reduce(Ref(out, 0, block), k, s))
    _free_scratch(p, s)
    return p


def compile_affine(
    target: str, lanes: int, width: int, k: int, scale: str | None = None, bits: int = 1, offset: str | None = None,
) -> StepProgram:
    """target := scale * target + offset lane by lane, reduced mod 2**k.

    ``scale`` holds a public multiplier per lane and ``offset`` a staged
    constant (for instance a trivial encryption); either may be omitted.
    """
    p = StepProgram(name="affine")
    if scale is not None:
        prod = f"{target}.scaled"
        p.emit("regroup", name=target, groups=lanes)
        p.emit("regroup", name=scale, groups=lanes)
        p.emit("kara_leaf", a=target, b=scale, dst=prod, bits=bits, kinds=leaf_kind_counts(width, bits))
        p.emit("move", src=Ref(prod, 0, lanes), dst=Ref(target, 0, lanes))
        p.emit("free", name=prod)
    if offset is not None:
        p.emit("add", a=Ref(target, 0, lanes), b=Ref(offset, 0, lanes), cin=0)
        p.emit("copy", dst=Ref(target, 0, lanes))
    s = _spill_scratch(p, lanes, width, target)
    p.extend(compile_mod_reduce(Ref(target, 0, lanes), k, s))
    _free_scratch(p, s)
    return p


# -- homomorphic operations --------------------------------------------------

def compile_hom_add(r1: int, r2: int, rd: int, lanes: tuple[int, int], k: int, geometry: BankGeometry, sub: bool = False) -> StepProgram:
    """Both ciphertext polynomials in one lockstep pass over the lane span."""
    s = physical_scratch(geometry)
    a, b, d = Ref(r1, *lanes), Ref(r2, *lanes), Ref(rd, *lanes)
    return (compile_poly_sub if sub else compile_poly_add)(a, b, d, k, s)


def compile_mul_plain(r1: int, rd: int, lanes: tuple[int, int], scalar: int, k: int, geometry: BankGeometry) -> StepProgram:
    """Ciphertext times a public integer: controller-held Shift-Add on every slot."""
    s = physical_scratch(geometry)
    src, dst = Ref(r1, *lanes), Ref(rd, *lanes)
    p = compile_shift_add(src, scalar, dst, s)
    return p.extend(compile_mod_reduce(dst, k, s))


def compile_hom_mult(
    r1: int,
    r2: int,
    rd: int,
    n: int,
    half: int,
    k: int,
    t_log2: int,
    decomp_log2: int,
    geometry: BankGeometry,
    rlk_names: list[tuple[str, str]],
    expand_leaf: bool | None = None,
) -> StepProgram:
    """Tensor (c_x, c_y, c_z) with t/q scaling, then relinearization of c_z."""
    phys = physical_scratch(geometry)
    kp = k - t_log2
    c0 = lambda row: Ref(row, 0, n)  # noqa: E731
    c1 = lambda row: Ref(row, half, half + n)  # noqa: E731
    p = StepProgram(name="hom_mult")

    # tensor products, two per lockstep batch
    kara, plan = compile_karatsuba([c0(r1), c0(r1)], [c0(r2), c1(r2)], ["hm.d0", "hm.x01"], k, k, expand_leaf, prefix="hm.t0")
    p.extend(kara)
    kara, _ = compile_karatsuba([c1(r1), c1(r1)], [c0(r2), c1(r2)], ["hm.x10", "hm.d2"], k, k, expand_leaf, prefix="hm.t1")
    p.extend(kara)
    full = 2 * n - 1
    wt = plan.width
    p.emit("add", a=Ref("hm.x01", 0, full), b=Ref("hm.x10", 0, full), cin=0)
    p.emit("alloc", name="hm.d1", lanes=full, width=wt)
    p.emit("copy", dst=Ref("hm.d1", 0, full))
    p.emit("free", name="hm.x01")
    p.emit("free", name="hm.x10")

    sfull = _spill_scratch(p, full, wt, "hm.sf")
    sn = _spill_scratch(p, n, wt, "hm.sn")
    outs = {"hm.d0": c0(rd), "hm.d1": c1(rd), "hm.d2": Ref("hm.cz", 0, n)}
    p.emit("alloc", name="hm.cz", lanes=n, width=geometry.word_bits)
    for name, dest in outs.items():
        # t/q scaling on the exact product, then wrap and reduce mod q
        p.extend(compile_poly_scale(Ref(name, 0, full), k, kp, sfull, out_k=k, pattern_bits=k + kp))
        p.extend(compile_fold(name, n, name + ".w", wt, k, sn))
        p.emit("move", src=Ref(name + ".w", 0, n), dst=dest)
        p.emit("free", name=name)
        p.emit("free", name=name + ".w")
    _free_scratch(p, sfull)
    _free_scratch(p, sn)

    # relinearization: digits of c_z times rlk, accumulated into the result
    w = decomp_log2
    cz = Ref("hm.cz", 0, n)
    sw = _spill_scratch(p, n, geometry.word_bits, "hm.sw")
    p.emit("alloc", name="hm.dig", lanes=n, width=geometry.word_bits)
    dig = Ref("hm.dig", 0, n)
    for i, (k0, k1) in enumerate(rlk_names):
        p.emit("stage", dst=Ref(sw.s0, 0, n), value=(1 << k) - 1)
        p.emit("logic", op="AND", a=cz, b=Ref(sw.s0, 0, n))
        p.emit("copy", dst=dig)
        p.extend(compile_shift_right(dig, w * i))
        p.emit("stage", dst=Ref(sw.s0, 0, n), value=(1 << w) - 1)
        p.emit("logic", op="AND", a=dig, b=Ref(sw.s0, 0, n))
        p.emit("copy", dst=dig)
        pre = f"hm.r{i}"
        kara, rplan = compile_karatsuba([Ref(k0, 0, n), Ref(k1, 0, n)], [dig, dig], [pre + ".p0", pre + ".p1"], k, w, expand_leaf, prefix=pre)
        p.extend(kara)
        sr = _spill_scratch(p, n, rplan.width, pre + ".s")
        for part, dest in ((".p0", c0(rd)), (".p1", c1(rd))):
            p.extend(compile_fold(pre + part, n, pre + part + ".w", rplan.width, k, sr))
            p.emit("alloc", name=pre + ".acc", lanes=n, width=geometry.word_bits)
            p.emit("move", src=Ref(pre + part + ".w", 0, n), dst=Ref(pre + ".acc", 0, n))
            p.extend(_accumulate(dest, Ref(pre + ".acc", 0, n), k, phys))
            for name in (pre + part, pre + part + ".w", pre + ".acc"):
                p.emit("free", name=name)
        _free_scratch(p, sr)
    p.emit("free", name="hm.dig")
    p.emit("free", name="hm.cz")
    _free_scratch(p, sw)
    return p


def _accumulate(dest: Ref, term: Ref, k: int, phys: Scratch) -> StepProgram:
    """dest := [dest + term]_q where term lives in a spill register."""
    p = StepProgram(name="accumulate")
    p.emit("add", a=dest, b=term, cin=0)
    p.emit("copy", dst=dest)
    return p.extend(compile_mod_reduce(dest, k, phys))


# -- the toy integer Karatsuba -----------------------------------------------

TOY_GEOMETRY = BankGeometry(num_arrays=1, rows_M=24, data_rows_Mprime=2, cols_N=128, word_bits=64)


def compile_int_karatsuba(bits: int = 4) -> StepProgram:
    """One Karatsuba level on two ``bits``-wide integers in one array.

    Operands sit in slot 1 of rows 0 (A) and 1 (B).  The high halves are
    aligned with the move buffers, R1 is computed alone, R2 and R3 side by
    side in slots 0 and 1, and the recombination shifts are by h and 2h bits
    with h = bits // 2.  Tags name the intermediate results.
    """
    h = bits // 2
    g = TOY_GEOMETRY
    A, B = 0, 1
    HA, HB, LA, LB, SA, SB, MASK, T, R1, ASH, PA, PB, R23, D13, D123, SH1, SH2, SUM, R3M, OUT = range(2, 22)
    s1 = lambda row: Ref(row, 1, 2)  # noqa: E731
    s0 = lambda row: Ref(row, 0, 1)  # noqa: E731
    both = lambda row: Ref(row, 0, 2)  # noqa: E731
    p = StepProgram(name="int_karatsuba")

    # (a) align high parts with low parts; mask off the low parts
    p.emit("move_bits", array=0, src_row=A, src_slot=1, dst_row=HA, offset=-h, tag="a:high_a")
    p.emit("move_bits", array=0, src_row=B, src_slot=1, dst_row=HB, offset=-h, tag="a:high_b")
    p.emit("stage", dst=s1(MASK), value=(1 << h) - 1)
    p.emit("logic", op="AND", a=s1(HA), b=s1(MASK))
    p.emit("copy", dst=s1(HA))
    p.emit("logic", op="AND", a=s1(HB), b=s1(MASK))
    p.emit("copy", dst=s1(HB))
    p.emit("logic", op="AND", a=s1(A), b=s1(MASK))
    p.emit("copy", dst=s1(LA), tag="a:low_a")
    p.emit("logic", op="AND", a=s1(B), b=s1(MASK))
    p.emit("copy", dst=s1(LB), tag="a:low_b")
    # (b) sums
    p.emit("add", a=s1(HA), b=s1(LA), cin=0)
    p.emit("copy", dst=s1(SA), tag="b:sum_a")
    p.emit("add", a=s1(HB), b=s1(LB), cin=0)
    p.emit("copy", dst=s1(SB), tag="b:sum_b")

    def shift_add(ref_a, ref_b, ref_out, nbits, tag):
        sh = Ref(ASH, ref_a.start, ref_a.stop)
        msk = Ref(MASK, ref_a.start, ref_a.stop)
        p.emit("stage", dst=ref_out, value=0)
        p.emit("read", src=ref_a)
        p.emit("copy", dst=sh)
        for i in range(nbits):
            p.emit("stage", dst=msk, value=1 << i)
            p.emit("logic", op="AND", a=ref_b, b=msk)
            p.emit("hor")
            br = p.emit("branch")
            p.emit("add", a=ref_out, b=sh, cin=0)
            p.emit("copy", dst=ref_out, pred=True)
            p.guard(br)
            _shift(p, sh, ShiftMask.left(1))
            p.emit("copy", dst=sh)
        p.emit("read", src=ref_out)
        p.emit("copy", dst=ref_out, tag=tag)

    # (c) R1 = (low_a + high_a)(low_b + high_b)
    shift_add(s1(SA), s1(SB), s1(R1), h + 1, "c:r1")
    # (d) R2 in slot 0 and R3 in slot 1, in parallel
    p.emit("move_bits", array=0, src_row=HA, src_slot=1, dst_row=PA, offset=-g.word_bits)
    p.emit("read", src=s1(LA))
    p.emit("copy", dst=s1(PA))
    p.emit("move_bits", array=0, src_row=HB, src_slot=1, dst_row=PB, offset=-g.word_bits)
    p.emit("read", src=s1(LB))
    p.emit("copy", dst=s1(PB))
    shift_add(both(PA), both(PB), both(R23), h, "d:r2_r3")
    # (e) R1 - R3, then move it next to R2
    p.emit("logic", op="NOT", a=s1(R23))
    p.emit("copy", dst=s1(T))
    p.emit("add", a=s1(R1), b=s1(T), cin=1)
    p.emit("copy", dst=s1(D13), tag="e:r1_minus_r3")
    p.emit("move_bits", array=0, src_row=D13, src_slot=1, dst_row=D13, offset=-g.word_bits)
    # (f) (R1 - R3) - R2
    p.emit("logic", op="NOT", a=s0(R23))
    p.emit("copy", dst=s0(T))
    p.emit("add", a=s0(D13), b=s0(T), cin=1)
    p.emit("copy", dst=s0(D123), tag="f:mid")
    # (g) shifts by h and 2h
    _shift_left_into(p, s0(D123), s0(SH1), h, "g:mid_shifted")
    _shift_left_into(p, s0(R23), s0(SH2), 2 * h, "g:r2_shifted")
    # (h) add the shifted terms
    p.emit("add", a=s0(SH1), b=s0(SH2), cin=0)
    p.emit("copy", dst=s0(SUM), tag="h:sum")
    # (i) bring R3 over and finish
    p.emit("move_bits", array=0, src_row=R23, src_slot=1, dst_row=R3M, offset=-g.word_bits)
    p.emit("add", a=s0(SUM), b=s0(R3M), cin=0)
    p.emit("copy", dst=s0(OUT), tag="i:product")
    return p
