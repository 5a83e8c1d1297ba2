"""Walk one Karatsuba level on 11 x 6 through a single simulated array.

Prints every tagged intermediate as the array's word value, then the cost of
the run under the default unit cost model.
"""

from cimhe.cim.compile import TOY_GEOMETRY, compile_int_karatsuba
from cimhe.cim.core import CimBank
from cimhe.cim.execute import execute


def main(a: int = 11, b: int = 6) -> None:
    bank = CimBank(TOY_GEOMETRY)
    bank.write(0, 1, [a])
    bank.write(1, 1, [b])
    _, trace = execute(compile_int_karatsuba(4), bank)
    print(f"{a} x {b} on one array ({TOY_GEOMETRY.slots_per_row} slots of {TOY_GEOMETRY.word_bits} bits)")
    for rec in trace.records:
        if rec.tag:
            vals = [int(v, 16) for v in rec.value]
            print(f"  step {rec.index:3d}  {rec.tag:16s} slots {vals}  ({', '.join(bin(v) for v in vals)})")
    print(f"{len(trace.records)} steps, {trace.cycles} cycles, energy {trace.energy}")


if __name__ == "__main__":
    main()
