"""How HomMult and HomAdd cycle counts move with the ring degree n.

Each pair (n, 2n) runs on one bank sized for 2n, so both degrees see the
same lanes.  HomAdd stays one lockstep pass; HomMult at 2n costs more than
twice HomMult at n.  With a bank sized separately for each n the spare
lanes absorb part of the growth, which the last column shows.
"""

import warnings

from cimhe import bfv
from cimhe.bfv import Plaintext
from cimhe.cim.core import BankGeometry, CimBank
from cimhe.cim.execute import run_hom_op
from cimhe.params import ParamSet


def cycles(op: str, n: int, geo: BankGeometry) -> int:
    p = ParamSet(40, n, 4)
    keys = bfv.keygen(p, f"scale{n}", decomp_log2=8)
    x = bfv.encrypt(Plaintext.constant(3, p), keys.pk, p, "x")
    y = bfv.encrypt(Plaintext.constant(-2, p), keys.pk, p, "y")
    return run_hom_op(op, x, y, keys, bank=CimBank(geo)).trace.cycles


def main() -> None:
    warnings.simplefilter("ignore", bfv.DepthWarning)
    print(f"{'n':>5} {'HomAdd n/2n':>12} {'HomMult n':>10} {'HomMult 2n':>11} {'ratio':>6} {'own-bank ratio':>15}")
    for n in (8, 16, 32, 64, 128):
        geo = BankGeometry.for_params(40, 2 * n)
        add = (cycles("add", n, geo), cycles("add", 2 * n, geo))
        m1, m2 = cycles("mult", n, geo), cycles("mult", 2 * n, geo)
        own = cycles("mult", 2 * n, geo) / cycles("mult", n, BankGeometry.for_params(40, n))
        print(f"{n:5d} {add[0]:5d}/{add[1]:<6d} {m1:10d} {m2:11d} {m2 / m1:6.2f} {own:15.2f}")


if __name__ == "__main__":
    main()
