"""Command line: keys, encryption, CiM evaluation, simulation, tasks, depth, bench."""

from __future__ import annotations

import argparse
import json
import random
import sys
import warnings
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import bfv
from .bfv import Plaintext
from .cim.compile import TOY_GEOMETRY, compile_int_karatsuba
from .cim.core import CimBank, CostModel
from .cim.execute import PRIMITIVES, execute, run_hom_op, run_primitive
from .config import Config, load_config
from .params import ParamSet, multiplicative_depth
from .polyring import RingPoly, poly_add, poly_mult, poly_scale_round, poly_sub
from . import tasks as T


class CliError(Exception):
    pass


def _fixture(name: str) -> Path:
    return Path(str(resources.files("cimhe.data").joinpath("fixtures", name)))


def _emit(doc) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=False)
    sys.stdout.write("\n")


def _write_text(path: str | Path, text: str) -> None:
    bfv.atomic_write(path, text.encode())


def _params(cfg: Config, args) -> tuple[str, ParamSet]:
    if getattr(args, "k", None) is not None:
        if args.n is None or args.t_log2 is None:
            raise CliError("--k needs --n and --t-log2 as well")
        return "custom", ParamSet(args.k, args.n, args.t_log2, args.error_bound)
    return args.preset, cfg.preset(args.preset)


def _cost_model(cfg: Config, args) -> CostModel:
    path = getattr(args, "cost_model", None)
    return CostModel.load(path) if path else cfg.cost_model


def _geometry(cfg: Config, params: ParamSet, choice: str):
    return cfg.geometry_for(params, {"config": True, "fit": False, "auto": None}[choice])


# -- keys and ciphertexts ----------------------------------------------------

def cmd_keygen(args, cfg: Config) -> int:
    name, params = _params(cfg, args)
    w = args.decomp_log2 or cfg.decomp_log2(name)
    keys = bfv.keygen(params, args.seed, decomp_log2=w)
    bfv.save_keys(args.out, keys)
    if args.public_out:
        bfv.save_keys(args.public_out, keys, include_secret=False)
    _emit({"keys": str(args.out), "public": args.public_out, "preset": name, "params": params.to_dict(),
           "decomp_log2": w, "rlk_digits": len(keys.rlk)})
    return 0


def _parse_values(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def cmd_encrypt(args, cfg: Config) -> int:
    keys = bfv.load_keys(args.keys)
    p = keys.params
    vals = _parse_values(args.values)
    if len(vals) > p.n:
        raise CliError(f"{len(vals)} coefficients do not fit n={p.n}")
    m = Plaintext.from_ints(vals, p)
    c = bfv.encrypt(m, keys.pk, p, args.seed)
    bfv.save_ciphertext(args.out, c)
    _emit({"ciphertext": str(args.out), "coefficients": len(vals), "bytes": len(bfv.ciphertext_to_bytes(c))})
    return 0


def _client_value(v: int, divide_by: str | None):
    if not divide_by:
        return None
    d = Fraction(divide_by)
    if d == 0:
        raise CliError("cannot divide by zero")
    q = Fraction(v) / d
    return {"value": str(q), "divided_by": str(d), "client_side": True}


def cmd_decrypt(args, cfg: Config) -> int:
    keys = bfv.load_keys(args.keys)
    if keys.sk is None:
        raise CliError("decryption needs a key file with the secret key")
    c = bfv.load_ciphertext(args.ciphertext)
    m = bfv.decrypt(c, keys.sk, keys.params)
    doc = {"plaintext": list(m.poly.coeffs), "value": m[0], "level": c.level_hint}
    cv = _client_value(m[0], args.divide_by)
    if cv:
        doc["client"] = cv
    _emit(doc)
    return 0


def cmd_eval(args, cfg: Config) -> int:
    keys = bfv.load_keys(args.keys)
    p = keys.params
    c1 = bfv.load_ciphertext(args.a)
    c2 = bfv.load_ciphertext(args.b)
    bank = CimBank(_geometry(cfg, p, args.geometry), _cost_model(cfg, args))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", bfv.DepthWarning)
        res = run_hom_op(args.op, c1, c2, keys, bank=bank, params=p)
        ref = {"add": bfv.hom_add, "sub": bfv.hom_sub}.get(args.op)
        ref = ref(c1, c2) if ref else bfv.hom_mult(c1, c2, keys)
    same = res.ciphertext.to_bytes() == ref.to_bytes()
    if not same:
        raise CliError("CiM result differs from the reference implementation")
    bfv.save_ciphertext(args.out, res.ciphertext)
    if args.trace:
        _write_text(args.trace, res.trace.to_jsonl())
    _emit({
        "op": args.op,
        "out": str(args.out),
        "matches_reference": same,
        "level": res.ciphertext.level_hint,
        "cycles": res.trace.cycles,
        "energy": str(res.trace.energy),
        "steps": len(res.trace.records),
        "warnings": [str(w.message) for w in caught],
    })
    return 0


# -- simulation of single primitives ------------------------------------------

def _oracle(name: str, a, b, k_prime: int):
    if name == "polyadd":
        return poly_add(a, b)
    if name == "polysub":
        return poly_sub(a, b)
    if name == "polyscale":
        return poly_scale_round(a, k_prime)
    return poly_mult(a, b)


def cmd_sim(args, cfg: Config) -> int:
    if args.primitive == "int-karatsuba":
        bank = CimBank(TOY_GEOMETRY, _cost_model(cfg, args))
        bank.write(0, 1, [args.a_value])
        bank.write(1, 1, [args.b_value])
        _, trace = execute(compile_int_karatsuba(4), bank)
        if args.trace:
            _write_text(args.trace, trace.to_jsonl())
        tagged = {r.tag: [int(v, 16) for v in r.value or []] for r in trace.records if r.tag}
        _emit({"primitive": "int-karatsuba", "tags": tagged, "cycles": trace.cycles, "steps": len(trace.records)})
        return 0
    k = args.k
    if args.primitive == "polyscale" and args.kprime > k:
        raise CliError(f"--kprime {args.kprime} exceeds k={k}")
    rng = random.Random(args.seed)
    half = 1 << (k - 1)
    a = RingPoly.from_ints([rng.randrange(-half, half) for _ in range(args.n)], k)
    b = RingPoly.from_ints([rng.randrange(-half, half) for _ in range(args.n)], k)
    params = ParamSet(k, max(args.n, 2), 1)
    bank = CimBank(_geometry(cfg, params, args.geometry), _cost_model(cfg, args))
    if args.primitive == "modreduce":
        raw = [rng.randrange(-(1 << k), 1 << k) for _ in range(args.n)]
        run = run_primitive("modreduce", raw, k=k, bank=bank)
        expected = RingPoly.from_ints(raw, k)
    else:
        run = run_primitive(args.primitive, a, b, k_prime=args.kprime, bank=bank)
        expected = _oracle(args.primitive, a, b, args.kprime)
    if args.trace:
        _write_text(args.trace, run.trace.to_jsonl())
    shifts = [abs(r.operands["amount"]) for r in run.trace.records if r.op == "shift"]
    _emit({
        "primitive": args.primitive,
        "k": k,
        "n": args.n,
        "k_prime": args.kprime if args.primitive == "polyscale" else None,
        "matches_oracle": run.result == expected,
        "shift_rounds": len(shifts),
        "shift_amounts": shifts,
        "cycles": run.trace.cycles,
        "energy": str(run.trace.energy),
        "steps": len(run.trace.records),
        "step_kinds": dict(sorted(run.trace.kind_counts().items())),
        "trace": args.trace,
    })
    return 0


# -- tasks ---------------------------------------------------------------------

def _task_keys(args, params: ParamSet, w: int):
    if args.keys:
        keys = bfv.load_keys(args.keys)
        if keys.params != params:
            raise CliError("key file parameters differ from the task preset")
        return keys
    return bfv.keygen(params, args.seed, decomp_log2=w)


def cmd_task(args, cfg: Config) -> int:
    default_preset = "desk-mlp" if args.kind == "mlp" else "desk-tasks"
    args.preset = args.preset or default_preset
    name, params = _params(cfg, args)
    transfer = cfg.transfer
    if args.transfer_cycles is not None or args.transfer_energy is not None:
        transfer = T.TransferCost(
            transfer.cycles if args.transfer_cycles is None else args.transfer_cycles,
            transfer.energy if args.transfer_energy is None else Fraction(args.transfer_energy),
        )
    keys = _task_keys(args, params, args.decomp_log2 or cfg.decomp_log2(name))
    ev = T.Evaluator(keys, params, name, args.kind, args.banks, _geometry(cfg, params, args.geometry),
                     _cost_model(cfg, args), transfer, check=not args.no_check)
    doc: dict
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", bfv.DepthWarning)
        if args.kind == "mlp":
            doc = _run_mlp(args, keys, ev)
        else:
            doc = _run_arith(args, keys, ev)
    _emit(doc)
    return 0


def _run_arith(args, keys, ev: T.Evaluator) -> dict:
    path = args.input or _fixture({"mean": "mean.json", "variance": "variance.json", "linreg": "linreg.json"}[args.kind])
    T.TaskSpec(args.kind, path, ev.report.params, args.banks, args.cost_model)
    data = T.load_task_input(path)
    p = keys.params
    if args.kind in ("mean", "variance"):
        vals = [int(v) for v in data["values"]]
        cts = T.encrypt_values(vals, keys, args.seed)
        if args.kind == "mean":
            c, report = T.task_mean(cts, ev)
            oracle, divisor = sum(vals), len(vals)
        else:
            c, report = T.task_variance(cts, ev)
            n, s = len(vals), sum(vals)
            oracle, divisor = sum((n * x - s) ** 2 for x in vals), len(vals) ** 3
        value = T.decrypt_value(c, keys)
        if args.out:
            bfv.save_ciphertext(args.out, c)
        result = {"value": value, "oracle": T.plain_value(oracle, p), "exact": value == T.plain_value(oracle, p),
                  "client": {"value": str(Fraction(value, divisor)), "divided_by": divisor, "client_side": True}}
    else:
        X = [[int(v) for v in row] for row in data["X"]]
        t = [int(v) for v in data["t"]]
        cx = [T.encrypt_values(row, keys, f"{args.seed}/x{i}") for i, row in enumerate(X)]
        ct = T.encrypt_values(t, keys, f"{args.seed}/t")
        (xtx, xt), report = T.task_linreg(cx, ct, ev)
        got_xx = [[T.decrypt_value(c, keys) for c in row] for row in xtx]
        got_xt = [T.decrypt_value(c, keys) for c in xt]
        Xa, ta = np.array(X, dtype=object), np.array(t, dtype=object)
        want_xx = [[T.plain_value(v, p) for v in row] for row in (Xa.T @ Xa).tolist()]
        want_xt = [T.plain_value(v, p) for v in (Xa.T @ ta).tolist()]
        result = {"xtx": got_xx, "xt": got_xt, "exact": got_xx == want_xx and got_xt == want_xt}
    return {**report.to_dict(), "result": result}


def _run_mlp(args, keys, ev: T.Evaluator) -> dict:
    model = T.MlpModel.load(args.model or _fixture("digits_mlp.json"))
    images = T.read_idx(args.images or _fixture("digits-images.idx3-ubyte"))
    labels_path = args.labels or (None if args.images else _fixture("digits-labels.idx1-ubyte"))
    labels = T.read_idx(labels_path) if labels_path else None
    if not 0 <= args.index < len(images):
        raise CliError(f"image index {args.index} outside 0..{len(images) - 1}")
    img = images[args.index].reshape(-1).astype(np.int64)
    cts = T.encrypt_values(img.tolist(), keys, args.seed)
    scores, report = T.task_mlp_infer(cts, model, ev, force_hommult=args.force_hommult)
    got = [T.decrypt_value(c, keys) for c in scores]
    want = [T.plain_value(v, keys.params) for v in model.forward(img.tolist())]
    result = {
        "scores": got,
        "predicted": T.argmax(got),
        "plaintext_predicted": T.argmax(want),
        "exact": got == want,
        "label": None if labels is None else int(labels[args.index]),
    }
    return {**report.to_dict(), "result": result}


# -- depth and bench -------------------------------------------------------------

def cmd_depth(args, cfg: Config) -> int:
    _, params = _params(cfg, args)
    est = multiplicative_depth(params)
    if args.verbose:
        _emit({"depth": est.depth, "bound": est.bound, "expansion_factor": est.expansion_factor, "params": params.to_dict()})
    else:
        print(est.depth)
    return 0


def cmd_bench(args, cfg: Config) -> int:
    rows = []
    for name in args.presets:
        params = cfg.preset(name)
        keys = bfv.keygen(params, args.seed, decomp_log2=cfg.decomp_log2(name))
        rng = random.Random(args.seed)
        cts = T.encrypt_values([rng.randrange(-3, 4) for _ in range(2 * args.mults)], keys, args.seed)
        pairs = list(zip(cts[0::2], cts[1::2]))
        base = None
        for banks in args.banks:
            ev = T.Evaluator(keys, params, name, "bench", banks, _geometry(cfg, params, args.geometry),
                             _cost_model(cfg, args), cfg.transfer, check=not args.no_check)
            ev.load_inputs(2 * args.mults)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", bfv.DepthWarning)
                ev.map_mult(pairs)
            d = ev.report.to_dict()
            base = d["cycles"] if base is None else base
            rows.append({"preset": name, "banks": banks, "hommults": args.mults, "cycles": d["cycles"],
                         "energy": d["energy"], "transfers": d["transfers"],
                         "cycles_vs_first": str(Fraction(d["cycles"], base))})
    _emit({"workload": "independent HomMults", "rows": rows})
    return 0


# -- parser ----------------------------------------------------------------------

def _add_params(sp, preset_default: str | None = "desk") -> None:
    sp.add_argument("--preset", default=preset_default, help="parameter preset name")
    sp.add_argument("--k", type=int, help="custom modulus bits (with --n and --t-log2)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--t-log2", type=int)
    sp.add_argument("--error-bound", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cimhe", description="B/FV on a simulated computing-in-memory bank")
    ap.add_argument("--config", help="JSON config (presets, geometry, cost model, transfer cost)")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("keygen", help="generate a key set")
    _add_params(sp)
    sp.add_argument("--seed", required=True)
    sp.add_argument("--decomp-log2", type=int, help="relinearization digit width w")
    sp.add_argument("--out", required=True)
    sp.add_argument("--public-out", help="also write a key file without the secret key")
    sp.set_defaults(func=cmd_keygen)

    sp = sub.add_parser("encrypt", help="encrypt plaintext coefficients")
    sp.add_argument("--keys", required=True)
    sp.add_argument("--values", required=True, help="coefficients, comma or space separated")
    sp.add_argument("--seed", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encrypt)

    sp = sub.add_parser("decrypt", help="decrypt a ciphertext")
    sp.add_argument("--keys", required=True)
    sp.add_argument("ciphertext")
    sp.add_argument("--divide-by", help="client-side exact division of the constant coefficient")
    sp.set_defaults(func=cmd_decrypt)

    sp = sub.add_parser("eval", help="run HomAdd / HomSub / HomMult on the CiM bank")
    sp.add_argument("op", choices=("add", "sub", "mult"))
    sp.add_argument("--keys", required=True)
    sp.add_argument("--a", required=True)
    sp.add_argument("--b", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace", help="write the step trace (JSON lines)")
    sp.add_argument("--geometry", choices=("auto", "config", "fit"), default="auto")
    sp.add_argument("--cost-model")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sim", help="run one primitive on random operands and emit its trace")
    sp.add_argument("primitive", choices=(*PRIMITIVES, "int-karatsuba"))
    sp.add_argument("--k", type=int, default=218)
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--kprime", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--a-value", type=int, default=11, help="int-karatsuba multiplicand")
    sp.add_argument("--b-value", type=int, default=6, help="int-karatsuba multiplier")
    sp.add_argument("--trace", help="write the step trace (JSON lines)")
    sp.add_argument("--geometry", choices=("auto", "config", "fit"), default="auto")
    sp.add_argument("--cost-model")
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("task", help="run an encrypted task end to end")
    sp.add_argument("kind", choices=T.TASK_KINDS)
    _add_params(sp, None)
    sp.add_argument("--input", help="JSON input (default: bundled fixture)")
    sp.add_argument("--banks", type=int, default=1, choices=(1, 2))
    sp.add_argument("--keys", help="key file (default: generate from --seed)")
    sp.add_argument("--seed", default="task")
    sp.add_argument("--decomp-log2", type=int)
    sp.add_argument("--out", help="write the result ciphertext (mean, variance)")
    sp.add_argument("--model", help="MLP model JSON (default: bundled)")
    sp.add_argument("--images", help="IDX image file (default: bundled digits)")
    sp.add_argument("--labels", help="IDX label file")
    sp.add_argument("--index", type=int, default=0, help="which image to classify")
    sp.add_argument("--force-hommult", action="store_true", help="weights as ciphertexts: full HomMult per product")
    sp.add_argument("--transfer-cycles", type=int)
    sp.add_argument("--transfer-energy")
    sp.add_argument("--no-check", action="store_true", help="skip the byte-level reference comparison")
    sp.add_argument("--geometry", choices=("auto", "config", "fit"), default="fit")
    sp.add_argument("--cost-model")
    sp.set_defaults(func=cmd_task)

    sp = sub.add_parser("depth", help="multiplicative depth of a parameter set")
    _add_params(sp, "seal-128")
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_depth)

    sp = sub.add_parser("bench", help="cost table for independent HomMults across presets and bank counts")
    sp.add_argument("--presets", nargs="+", default=["desk", "desk-tasks", "desk-mlp"])
    sp.add_argument("--banks", nargs="+", type=int, default=[1, 2])
    sp.add_argument("--mults", type=int, default=4)
    sp.add_argument("--seed", default="bench")
    sp.add_argument("--no-check", action="store_true")
    sp.add_argument("--geometry", choices=("auto", "config", "fit"), default="fit")
    sp.add_argument("--cost-model")
    sp.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"cimhe: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
