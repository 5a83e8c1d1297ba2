import json

import pytest

from cimhe.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_depth(capsys):
    assert run(capsys, "depth", "--preset", "seal-128")[1].strip() == "5"
    doc = run_json(capsys, "depth", "--k", "60", "--n", "1024", "--t-log2", "10", "--verbose")
    assert doc["depth"] == 1 and doc["params"]["n"] == 1024


def test_sim_polyscale(capsys, tmp_path):
    trace = tmp_path / "t.jsonl"
    doc = run_json(capsys, "sim", "polyscale", "--kprime", "127", "--trace", str(trace))
    assert doc["shift_rounds"] == 3 and doc["matches_oracle"]
    shifts = [json.loads(line) for line in trace.read_text().splitlines() if '"shift"' in line]
    assert len(shifts) == 3


@pytest.mark.parametrize("prim", ["modreduce", "polyadd", "polysub", "polymult"])
def test_sim_primitives(capsys, prim):
    assert run_json(capsys, "sim", prim, "--k", "40", "--n", "16")["matches_oracle"]


def test_sim_int_karatsuba(capsys):
    doc = run_json(capsys, "sim", "int-karatsuba")
    assert doc["tags"]["i:product"] == [66]
    assert doc["tags"]["c:r1"] == [15]


def test_key_encrypt_eval_decrypt(capsys, tmp_path):
    keys, pub = tmp_path / "k.bin", tmp_path / "pub.bin"
    a, b, c = (tmp_path / f"{x}.ct" for x in "abc")
    assert run(capsys, "keygen", "--preset", "desk", "--seed", "s", "--out", str(keys), "--public-out", str(pub))[0] == 0
    assert run(capsys, "encrypt", "--keys", str(pub), "--values", "3", "--seed", "a", "--out", str(a))[0] == 0
    assert run(capsys, "encrypt", "--keys", str(keys), "--values", "-2", "--seed", "b", "--out", str(b))[0] == 0
    doc = run_json(capsys, "eval", "mult", "--keys", str(keys), "--a", str(a), "--b", str(b), "--out", str(c))
    assert doc["matches_reference"]
    out = run_json(capsys, "decrypt", "--keys", str(keys), str(c))
    assert out["value"] == -6 and out["level"] == 1
    code, _, err = run(capsys, "decrypt", "--keys", str(pub), str(c))
    assert code == 1 and "secret key" in err and err.startswith("cimhe: error:")


def test_task_mean(capsys):
    doc = run_json(capsys, "task", "mean")
    assert doc["ops"]["homadd"] == 5 and doc["transfers"] == 0
    assert doc["result"]["value"] == 21 and doc["result"]["exact"]


def test_task_variance(capsys):
    doc = run_json(capsys, "task", "variance")
    assert doc["result"]["value"] == 18
    assert doc["result"]["client"]["value"] == "2/3"


def test_bad_input_reports_error(capsys, tmp_path):
    code, _, err = run(capsys, "task", "mean", "--input", str(tmp_path / "none.json"))
    assert code == 1 and err.startswith("cimhe: error:")
    code, _, err = run(capsys, "depth", "--preset", "nope")
    assert code == 1 and "unknown preset" in err


@pytest.mark.slow
def test_task_mlp(capsys):
    doc = run_json(capsys, "task", "mlp", "--index", "3")
    r = doc["result"]
    assert r["exact"] and r["predicted"] == r["plaintext_predicted"]


@pytest.mark.slow
def test_bench_two_banks(capsys):
    doc = run_json(capsys, "bench", "--presets", "desk", "--mults", "4")
    one, two = doc["rows"]
    assert two["cycles"] <= 0.55 * one["cycles"]
