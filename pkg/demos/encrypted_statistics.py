"""Encrypted mean, variance and X^T X on the simulated bank, with cost reports.

The client encrypts, the bank computes, and the client decrypts and does the
final division.  Every bank result is checked against the software scheme.
"""

import warnings
from fractions import Fraction

import numpy as np

from cimhe import bfv
from cimhe import tasks as T
from cimhe.cim.core import BankGeometry
from cimhe.params import get_preset


def show(name, rep):
    d = rep.to_dict()
    ops = {k: v for k, v in d["ops"].items() if v}
    print(f"  {name}: ops {ops}, cycles {d['cycles']}, transfers {d['transfers']}")


def main() -> None:
    warnings.simplefilter("ignore", bfv.DepthWarning)
    p = get_preset("desk-tasks")
    keys = bfv.keygen(p, b"demo", decomp_log2=16)
    geo = BankGeometry()

    vals = [4, 8, 15, 16, 23, 42, -5, 9]
    for banks in (1, 2):
        print(f"{banks} bank(s)")
        ev = T.Evaluator(keys, p, "desk-tasks", "mean", banks, geo)
        c, rep = T.task_mean(T.encrypt_values(vals, keys), ev)
        s = T.decrypt_value(c, keys)
        print(f"  mean = {s}/{len(vals)} = {Fraction(s, len(vals))}")
        show("mean", rep)

        ev = T.Evaluator(keys, p, "desk-tasks", "variance", banks, geo)
        c, rep = T.task_variance(T.encrypt_values(vals[:4], keys), ev)
        num = T.decrypt_value(c, keys)
        print(f"  variance = {num}/{4 ** 3} = {Fraction(num, 4 ** 3)}  (numpy: {np.var(vals[:4])})")
        show("variance", rep)

    X = np.array([[3, -1, 2], [1, 4, -2], [0, 2, 1]])
    t = np.array([7, -4, 2])
    ev = T.Evaluator(keys, p, "desk-tasks", "linreg", 2, geo)
    cx = [T.encrypt_values(r, keys, f"x{i}") for i, r in enumerate(X.tolist())]
    (xtx, xt), rep = T.task_linreg(cx, T.encrypt_values(t.tolist(), keys, "t"), ev)
    got = np.array([[T.decrypt_value(c, keys) for c in row] for row in xtx])
    print("X^T X =\n", got, "\nmatches numpy:", (got == X.T @ X).all())
    print("weights (client side):", np.linalg.solve(got, [T.decrypt_value(c, keys) for c in xt]))
    show("linreg", rep)


if __name__ == "__main__":
    main()
