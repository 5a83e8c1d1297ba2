import json

import mpmath
import pytest

from cimhe.params import (
    PRESETS,
    ParamSet,
    depth_bound,
    get_preset,
    load_params,
    multiplicative_depth,
    validate,
)


def independent_depth(k, n, t_log2, b=1, prec=200):
    # plain restatement of the inequality with natural logs converted to base 2
    with mpmath.workprec(prec):
        ln2 = mpmath.log(2)
        lg = lambda x: mpmath.log(x) / ln2  # noqa: E731
        d = mpmath.mpf(n)
        num = lg(mpmath.mpf(2) ** k / b / 4) + t_log2 - lg(d + mpmath.mpf(5) / 4)
        den = lg(d) + lg(d + mpmath.mpf(5) / 4) + t_log2
        rhs = num / den
        depth = int(mpmath.floor(rhs))
        return depth - 1 if depth == rhs else depth


def test_valid_reference_params():
    assert validate(ParamSet(218, 8192, 10, 1))


def test_non_power_of_two_degree():
    res = validate(ParamSet(218, 8191, 10, 1))
    assert not res
    assert any("power of two" in v for v in res.violations)


def test_k_not_above_t():
    res = validate(ParamSet(8, 16, 10, 1))
    assert any("q must exceed t" in v for v in res.violations)


def test_violations_are_itemized():
    res = validate(ParamSet(8, 15, 10, 0))
    assert len(res.violations) == 3


def test_seal_depth():
    assert multiplicative_depth(ParamSet(218, 8192, 10, 1)).depth == 5


@pytest.mark.parametrize("k,n,t", [(60, 1024, 10), (218, 8192, 10), (120, 16, 48), (300, 2048, 20)])
def test_depth_matches_independent_evaluation(k, n, t):
    assert multiplicative_depth(ParamSet(k, n, t)).depth == independent_depth(k, n, t)


def test_depth_is_monotone_in_k():
    depths = [multiplicative_depth(ParamSet(k, 4096, 10)).depth for k in range(100, 400, 20)]
    assert depths == sorted(depths)


def test_bound_positive_required():
    with pytest.raises(ValueError):
        multiplicative_depth(ParamSet(11, 8192, 1))


def test_invalid_params_rejected_by_depth():
    with pytest.raises(ValueError, match="power of two"):
        multiplicative_depth(ParamSet(218, 100, 10))


def test_bound_float_close_to_exact():
    p = ParamSet(218, 8192, 10)
    assert abs(multiplicative_depth(p).bound - float(depth_bound(p))) < 1e-12


def test_delta_exact():
    assert ParamSet(218, 8192, 10).delta == 1 << 208


def test_presets_known():
    assert get_preset("seal-128") == ParamSet(218, 8192, 10, 1, 128)
    with pytest.raises(KeyError):
        get_preset("nope")
    for p in PRESETS.values():
        assert validate(p)


def test_load_params(tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"params": {"k": 40, "n": 16, "t_log2": 4}}))
    assert load_params(path) == ParamSet(40, 16, 4)
    path.write_text(json.dumps({"k": 40}))
    with pytest.raises(ValueError, match="missing"):
        load_params(path)


def test_round_trip_dict():
    p = get_preset("compare-80")
    assert ParamSet.from_dict(p.to_dict()) == p
