"""HE parameter sets for power-of-two moduli and their multiplicative depth."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import mpmath


@dataclass(frozen=True)
class ParamSet:
    """B/FV parameters with q = 2**k and t = 2**t_log2."""

    k: int
    n: int
    t_log2: int
    error_bound: int = 1
    security_bits: int = 0

    @property
    def q(self) -> int:
        return 1 << self.k

    @property
    def t(self) -> int:
        return 1 << self.t_log2

    @property
    def delta(self) -> int:
        # floor(q / t), exact because both are powers of two
        return 1 << (self.k - self.t_log2)

    @property
    def log_n(self) -> int:
        return self.n.bit_length() - 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ParamSet":
        missing = {"k", "n", "t_log2"} - set(doc)
        if missing:
            raise ValueError(f"parameter document missing keys: {sorted(missing)}")
        return cls(
            k=int(doc["k"]),
            n=int(doc["n"]),
            t_log2=int(doc["t_log2"]),
            error_bound=int(doc.get("error_bound", 1)),
            security_bits=int(doc.get("security_bits", 0)),
        )


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class DepthEstimate:
    depth: int
    expansion_factor: int
    bound: float = 0.0


def validate(params: ParamSet) -> ValidationResult:
    """Itemize every invariant the parameter set breaks."""
    bad = []
    if params.n < 2 or params.n & (params.n - 1):
        bad.append(f"n={params.n} is not a power of two >= 2")
    if params.k < 1:
        bad.append(f"k={params.k} must be positive")
    if params.t_log2 < 1:
        bad.append(f"t_log2={params.t_log2} must be positive")
    if params.k < params.t_log2 + 1:
        bad.append(f"k={params.k} <= t_log2={params.t_log2}: q must exceed t")
    if params.error_bound < 1:
        bad.append(f"error_bound={params.error_bound} must be positive")
    if params.security_bits < 0:
        bad.append("security_bits must be non-negative")
    return ValidationResult(tuple(bad))


def depth_bound(params: ParamSet, precision: int = 256) -> mpmath.mpf:
    """Right-hand side of the B/FV depth inequality, base-2 logs, delta_R = n."""
    with mpmath.workprec(precision):
        log2 = lambda x: mpmath.log(x, 2)  # noqa: E731
        d = mpmath.mpf(params.n)
        q_over_b = mpmath.mpf(params.q // params.error_bound)
        num = log2(q_over_b / 4) + params.t_log2 - log2(d + mpmath.mpf("1.25"))
        den = log2(d) + log2(d + mpmath.mpf("1.25")) + params.t_log2
        return num / den


def multiplicative_depth(params: ParamSet) -> DepthEstimate:
    """Largest integer L strictly below the depth bound."""
    check = validate(params)
    if not check:
        raise ValueError("; ".join(check.violations))
    rhs = depth_bound(params)
    if rhs <= 0:
        raise ValueError(f"depth bound {mpmath.nstr(rhs, 8)} is not positive")
    depth = int(mpmath.floor(rhs))
    if depth == rhs:
        depth -= 1  # strict inequality
    return DepthEstimate(depth=depth, expansion_factor=params.n, bound=float(rhs))


PRESETS: dict[str, ParamSet] = {
    "seal-128": ParamSet(k=218, n=8192, t_log2=10, error_bound=1, security_bits=128),
    "compare-80": ParamSet(k=180, n=4096, t_log2=10, error_bound=1, security_bits=80),
    # desk-scale settings for tests and demos; no security claim
    "desk": ParamSet(k=40, n=16, t_log2=4, error_bound=1, security_bits=0),
    "desk-tasks": ParamSet(k=80, n=16, t_log2=20, error_bound=1, security_bits=0),
    "desk-mlp": ParamSet(k=120, n=16, t_log2=48, error_bound=1, security_bits=0),
}


def get_preset(name: str) -> ParamSet:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def load_params(path: str | Path) -> ParamSet:
    """Read a parameter set from a JSON document with keys k, n, t_log2, ..."""
    doc = json.loads(Path(path).read_text())
    if "params" in doc and isinstance(doc["params"], dict):
        doc = doc["params"]
    return ParamSet.from_dict(doc)
