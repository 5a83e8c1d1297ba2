"""Rounded division by 2^k' on the bank: shift rounds and the rounding flag.

For each k' the script prints how the shift is split into shifter rounds,
then checks the executed result against the integer oracle.
"""

import random

from cimhe.cim.execute import run_primitive
from cimhe.polyring import RingPoly, poly_scale_round


def main() -> None:
    rng = random.Random(1)
    k = 218
    a = RingPoly.from_ints([rng.randrange(1 << k) for _ in range(8)], k)
    for kp in (0, 5, 64, 117, 127, 208):
        run = run_primitive("polyscale", a, k_prime=kp)
        rounds = [-r.operands["amount"] for r in run.trace.records if r.op == "shift"]
        flags = [r.flag for r in run.trace.records if r.op == "hor"]
        ok = run.result == poly_scale_round(a, kp)
        print(f"k'={kp:3d}  rounds {rounds!s:18s}  lanes rounded up {flags[0] if kp else 0}/8  "
              f"cycles {run.trace.cycles:3d}  oracle {'ok' if ok else 'MISMATCH'}")


if __name__ == "__main__":
    main()
