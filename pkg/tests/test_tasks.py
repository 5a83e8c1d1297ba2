import json
from fractions import Fraction
from importlib import resources

import numpy as np
import pytest

from cimhe import tasks as T
from cimhe.cim.core import BankGeometry
from cimhe.config import TransferCost, default_config, load_config

FIXTURES = resources.files("cimhe.data") / "fixtures"


def ev(keys, task="t", banks=1, geometry=None, **kw):
    return T.Evaluator(keys, keys.params, "desk-tasks", task, banks, geometry, **kw)


def values(c, keys):
    return [T.decrypt_value(x, keys) for x in c]


# -- mean ----------------------------------------------------------------------

def test_mean_fixture(tasks_keys):
    c, rep = T.task_mean(T.encrypt_values(range(1, 7), tasks_keys), ev(tasks_keys, "mean", geometry=BankGeometry()))
    assert T.decrypt_value(c, tasks_keys) == 21
    assert rep.ops["homadd"] == 5
    assert rep.transfers == 0


def test_mean_single(tasks_keys):
    c, rep = T.task_mean(T.encrypt_values([9], tasks_keys), ev(tasks_keys))
    assert T.decrypt_value(c, tasks_keys) == 9
    assert sum(rep.ops.values()) == 0


def test_mean_eight_fetches_two(tasks_keys):
    e = ev(tasks_keys, "mean", geometry=BankGeometry())
    _, rep = T.task_mean(T.encrypt_values(range(8), tasks_keys), e)
    assert rep.transfers == 2
    assert rep.cycles == sum(c for _, _, c, _ in rep.traces) + 2 * e.transfer.cycles


def test_mean_two_banks_partials(tasks_keys):
    e = ev(tasks_keys, "mean", banks=2, geometry=BankGeometry())
    c, rep = T.task_mean(T.encrypt_values(range(8), tasks_keys), e)
    assert T.decrypt_value(c, tasks_keys) == 28
    # each bank holds 4; one partial sum travels to bank 0
    assert rep.transfers == 1


def test_empty_inputs(tasks_keys):
    with pytest.raises(ValueError):
        T.task_mean([], ev(tasks_keys))
    with pytest.raises(ValueError):
        T.task_variance([], ev(tasks_keys))


# -- variance ------------------------------------------------------------------

@pytest.mark.parametrize("vals,want", [([1, 2, 3], 18), ([5, 5, 5], 0), ([7], 0), ([-2, 4, 1, 0], None)])
def test_variance(tasks_keys, vals, want, no_depth_warnings):
    n, s = len(vals), sum(vals)
    oracle = sum((n * x - s) ** 2 for x in vals)
    if want is not None:
        assert oracle == want
    c, _ = T.task_variance(T.encrypt_values(vals, tasks_keys), ev(tasks_keys))
    assert T.decrypt_value(c, tasks_keys) == oracle


# -- linear regression ---------------------------------------------------------

def linreg(keys, X, t, banks=1):
    cx = [T.encrypt_values(row, keys, f"x{i}") for i, row in enumerate(X)]
    (xtx, xt), rep = T.task_linreg(cx, T.encrypt_values(t, keys, "t"), ev(keys, banks=banks))
    return [values(r, keys) for r in xtx], values(xt, keys), rep


def test_linreg_scalar(tasks_keys, no_depth_warnings):
    xtx, xt, _ = linreg(tasks_keys, [[2]], [3])
    assert xtx == [[4]] and xt == [6]


def test_linreg_identity(tasks_keys, no_depth_warnings):
    t = [3, -1, 4]
    xtx, xt, _ = linreg(tasks_keys, np.eye(3, dtype=int).tolist(), t)
    assert xtx == np.eye(3, dtype=int).tolist() and xt == t


@pytest.mark.slow
def test_linreg_random_two_banks(tasks_keys, no_depth_warnings):
    rng = np.random.default_rng(1)
    X = rng.integers(-9, 10, (4, 4))
    t = rng.integers(-9, 10, 4)
    xtx, xt, rep = linreg(tasks_keys, X.tolist(), t.tolist(), banks=2)
    assert xtx == (X.T @ X).tolist() and xt == (X.T @ t).tolist()
    # upper triangle of X^T X (10 entries) plus X^T t (4), 4 rows each
    assert rep.ops["hommult"] == 56
    assert all(b.trace_cycles > 0 for b in rep.per_bank)


def test_linreg_shape_errors(tasks_keys):
    c = T.encrypt_values([1, 2], tasks_keys)
    with pytest.raises(ValueError):
        T.task_linreg([c], c, ev(tasks_keys))
    with pytest.raises(ValueError):
        T.task_linreg([c, c[:1]], c, ev(tasks_keys))


# -- MLP -----------------------------------------------------------------------

def test_mlp_zero_image(mlp_keys, no_depth_warnings):
    model = T.MlpModel.random(784, 8, 10, seed=3)
    e = T.Evaluator(mlp_keys, mlp_keys.params, "desk-mlp", "mlp")
    scores, _ = T.task_mlp_infer(T.encrypt_values([0] * 784, mlp_keys), model, e)
    assert values(scores, mlp_keys) == model.forward([0] * 784)


def test_mlp_force_hommult_small(mlp_keys, no_depth_warnings):
    model = T.MlpModel.random(6, 3, 2, seed=4, weight_range=5)
    img = [10, 0, 255, 3, 7, 1]
    e = T.Evaluator(mlp_keys, mlp_keys.params, "desk-mlp", "mlp")
    scores, rep = T.task_mlp_infer(T.encrypt_values(img, mlp_keys), model, e, force_hommult=True)
    assert values(scores, mlp_keys) == model.forward(img)
    assert rep.ops["hommult"] >= 6 * 3


def test_mlp_wrong_width(mlp_keys):
    model = T.MlpModel.random(6, 3, 2)
    with pytest.raises(ValueError):
        T.task_mlp_infer(T.encrypt_values([1] * 5, mlp_keys), model, T.Evaluator(mlp_keys, mlp_keys.params))


def test_model_round_trip():
    m = T.MlpModel.random(10, 4, 3, seed=5)
    back = T.MlpModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert back.forward(list(range(10))) == m.forward(list(range(10)))
    bad = m.to_dict() | {"layers": [9, 4, 3]}
    with pytest.raises(ValueError):
        T.MlpModel.from_dict(bad)


def test_bundled_model_fits_plaintext_space(mlp_keys):
    model = T.MlpModel.load(FIXTURES / "digits_mlp.json")
    assert (model.weight_scale, model.activation_scale) == (100, 1800)
    assert model.max_abs_score() < 1 << (mlp_keys.params.t_log2 - 1)


def test_bundled_images_predictions():
    model = T.MlpModel.load(FIXTURES / "digits_mlp.json")
    images = T.read_idx(FIXTURES / "digits-images.idx3-ubyte")
    labels = T.read_idx(FIXTURES / "digits-labels.idx1-ubyte")
    assert images.shape == (10, 28, 28) and labels.tolist() == list(range(10))
    preds = [T.argmax(model.forward(img.reshape(-1).tolist())) for img in images]
    assert sum(p == l for p, l in zip(preds, labels.tolist())) >= 8


def test_idx_round_trip(tmp_path):
    a = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    T.write_idx(tmp_path / "a.idx", a)
    assert np.array_equal(T.read_idx(tmp_path / "a.idx"), a)
    (tmp_path / "bad").write_bytes(b"\x01\x02")
    with pytest.raises(ValueError):
        T.read_idx(tmp_path / "bad")


def test_argmax_ties_first():
    assert T.argmax([1, 5, 5, 2]) == 1


# -- reports and config --------------------------------------------------------

def test_report_dict_keys(tasks_keys):
    _, rep = T.task_mean(T.encrypt_values([1, 2], tasks_keys), ev(tasks_keys, "mean"))
    d = rep.to_dict()
    assert set(d) >= {"task", "params", "banks", "ops", "cycles", "energy", "transfers", "per_bank",
                      "per_primitive", "step_kinds"}
    assert d["ops"] == {"homadd": 1, "homsub": 0, "hommult": 0, "mulplain": 0}


def test_custom_transfer_cost(tasks_keys):
    e = ev(tasks_keys, geometry=BankGeometry(), transfer=TransferCost(10, Fraction(3)))
    _, rep = T.task_mean(T.encrypt_values(range(9), tasks_keys), e)
    assert rep.transfers == 3
    assert sum(b.transfer_energy for b in rep.per_bank) == 9


def test_task_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        T.TaskSpec("median", str(tmp_path), "desk", 1)
    with pytest.raises(FileNotFoundError):
        T.TaskSpec("mean", str(tmp_path / "missing.json"), "desk", 1)


def test_evaluator_bank_count(tasks_keys):
    with pytest.raises(ValueError):
        ev(tasks_keys, banks=0)


def test_config_defaults_and_override(tmp_path):
    cfg = default_config()
    assert cfg.decomp_log2("desk") == 8
    assert cfg.transfer.cycles == 2048
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"transfer": {"cycles": 5, "energy_units": "1/2"}}))
    cfg2 = load_config(path)
    assert cfg2.transfer == TransferCost(5, Fraction(1, 2))
    assert cfg2.preset("seal-128") == cfg.preset("seal-128")
