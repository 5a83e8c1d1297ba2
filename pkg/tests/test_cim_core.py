from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimhe.cim import words as W
from cimhe.cim.core import (
    BankGeometry,
    CimBank,
    CimError,
    CostModel,
    Ref,
    ShiftMask,
    StepTrace,
    charge,
    shift_rounds,
)

SMALL = BankGeometry(num_arrays=4, rows_M=8, data_rows_Mprime=6, cols_N=256, word_bits=64)


def bank():
    return CimBank(SMALL)


def test_geometry_defaults():
    g = BankGeometry()
    assert g.slots_per_row == 4
    assert g.lanes == 16384
    assert g.bank_bytes == 4 * 1024 * 1024
    assert g.scratch_rows == (6, 7)


@pytest.mark.parametrize("kw", [dict(word_bits=100), dict(data_rows_Mprime=9), dict(cols_N=1000), dict(num_arrays=0)])
def test_geometry_rejects(kw):
    with pytest.raises(ValueError):
        BankGeometry(**kw)


def test_word_must_hold_k():
    with pytest.raises(ValueError):
        BankGeometry().check_k(256)
    BankGeometry().check_k(218)


def test_for_params_halves():
    g = BankGeometry.for_params(40, 16)
    assert g.word_bits == 64 and g.slots_per_row == 16 and g.num_arrays == 2


def test_sense_bitwise_truth_table():
    b = bank()
    b.write(0, 0, [0b1010])
    b.write(1, 0, [0b0110])
    assert W.to_ints(b.sense_bitwise(0, 0, 1, "AND")[:1])[0] == 0b0010
    b.write(2, 0, [0])
    assert W.to_ints(b.sense_bitwise(0, 2, None, "NOT")[:1], signed=False)[0] == (1 << 64) - 1
    row = [5, 9, 1, 0]
    b.write(0, 0, row)
    assert W.to_ints(b.sense_bitwise(0, 0, 2, "OR")) == row


def test_horizontal_or():
    b = bank()
    b.write(0, 0, [0, 1 << 40])
    b.op_read(Ref(0, 0, 4))
    assert b.horizontal_or(0, 0) == 0
    assert b.horizontal_or(0, 1) == 1
    # the reduction step: residue 8, mask at bit k-1 for k=4
    b.write(1, 0, [8])
    b.write(2, 0, [8])
    b.sense_bitwise(0, 1, 2, "AND")
    assert b.horizontal_or(0, 0) == 1


def test_word_add():
    b = bank()
    b.write(0, 0, [3])
    b.write(1, 0, [4])
    assert b.word_add(0, 0, 1, 0) == 7
    b.write(0, 0, [12345])
    b.write(1, 0, [~12345])
    assert b.word_add(0, 0, 1, 0, carry_in=1) == 0
    b.write(0, 0, [-1])
    b.write(1, 0, [0])
    assert b.word_add(0, 0, 1, 0, carry_in=1) == 0


def test_word_add_bad_carry():
    with pytest.raises(CimError):
        bank().op_add(Ref(0, 0, 1), Ref(1, 0, 1), cin=2)


def test_log_shift():
    g = BankGeometry(num_arrays=1, rows_M=8, data_rows_Mprime=6, cols_N=256, word_bits=256)
    b = CimBank(g)
    b.write(0, 0, [1 << 117])
    assert b.log_shift(0, 0, 0, ShiftMask(("right",) * 5)) == 1
    assert b.log_shift(0, 0, 0, ShiftMask()) == 1 << 117
    b.write(0, 0, [1])
    assert b.log_shift(0, 0, 0, ShiftMask(("none", "none", "none", "right", "right"))) == 0


def test_shift_mask_bits_round_trip():
    m = ShiftMask(("left", "none", "right", "none", "left"))
    assert ShiftMask.from_bits(m.to_bits()) == m
    assert m.signed_amount == 64 - 16 + 1
    with pytest.raises(ValueError):
        ShiftMask.from_bits(0)
    with pytest.raises(ValueError):
        ShiftMask.right(2)


@given(st.integers(0, 127))
def test_shift_rounds_cover(total):
    rounds = shift_rounds(total)
    assert sum(rounds) == total
    for r in rounds:
        ShiftMask.right(r)


def test_shift_rounds_127():
    assert shift_rounds(127) == [117, 5, 5]
    assert shift_rounds(0) == []


def test_ipcb_copy():
    b = bank()
    b.write(0, 0, [77])
    b.op_read(Ref(0, 0, 4))
    b.ipcb_copy(0, 6, 0)
    assert b.read(6, 0, 1) == [77]
    assert b.read(0, 0, 1) == [77]
    b.write(1, 0, [5])
    b.op_read(Ref(1, 0, 1))
    b.ipcb_copy(0, 6, 0)
    assert b.read(6, 0, 1) == [5]


def test_ipmb_move():
    b = bank()
    b.write(0, 0, [42])
    b.ipmb_move(0, 0, 0, 1, 64)
    assert b.read(1, 1, 2) == [42]
    b.ipmb_move(0, 1, 1, 2, 64)
    assert b.read(2, 2, 3) == [42]
    assert b.read(0, 0, 1) == [42]
    with pytest.raises(CimError):
        b.ipmb_move(0, 0, 3, 1, 64)


def test_predicated_copy():
    b = bank()
    b.write(0, 0, [0, 8, 0, 8])
    b.write(1, 0, [8] * 4)
    b.op_logic("AND", Ref(0, 0, 4), Ref(1, 0, 4))
    b.op_hor()
    b.write(2, 0, [1, 2, 3, 4])
    b.op_read(Ref(2, 0, 4))
    b.op_copy(Ref(3, 0, 4), pred=True)
    assert b.read(3, 0, 4) == [0, 2, 0, 4]


def test_lockstep_accounting():
    cm = CostModel.default()
    g = BankGeometry(num_arrays=2, rows_M=8, data_rows_Mprime=6, cols_N=64, word_bits=64)
    b = CimBank(g, cm)
    rec = b.op_add(Ref(0, 0, 2), Ref(1, 0, 2))
    assert rec.cycles == cm["add"].cycles
    assert rec.energy == 2 * cm["add"].energy


def test_trace_totals():
    t = StepTrace()
    assert t.cycles == 0 and t.energy == 0
    charge(t, "add", 3, arrays=4)
    cyc, en = charge(t, "read")
    assert cyc == sum(r.cycles for r in t.records) == 7
    assert en == Fraction(25)


def test_cost_model_rules(tmp_path):
    doc = CostModel.default().to_dict()
    assert CostModel.from_dict(doc) == CostModel.default()
    doc["add"]["cycles"] = 0
    with pytest.raises(ValueError):
        CostModel.from_dict(doc)
    with pytest.raises(ValueError):
        CostModel.from_dict({"read": {"cycles": 1, "energy_units": "1"}})


def test_out_of_bounds():
    b = bank()
    with pytest.raises(CimError):
        b.op_read(Ref(9, 0, 1))
    with pytest.raises(CimError):
        b.op_read(Ref(0, 0, 99))
    with pytest.raises(CimError):
        b.op_copy(Ref(0, 0, 1))


def test_words_round_trip():
    vals = [0, 1, -1, (1 << 127) - 1, -(1 << 127)]
    w = W.from_ints(vals, 128)
    assert W.to_ints(w) == vals
    x = np.array([5, -3, 0], dtype=np.int64)
    assert W.to_ints(W.from_int64(x, 192)) == [5, -3, 0]
