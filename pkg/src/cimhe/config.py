"""Run configuration: presets, bank geometry, cost model and transfer cost."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .cim.core import BankGeometry, CostModel
from .params import ParamSet


@dataclass(frozen=True)
class TransferCost:
    """Charge for fetching one ciphertext from main memory into a bank."""

    cycles: int = 2048
    energy: Fraction = Fraction(4096)

    def to_dict(self) -> dict:
        return {"cycles": self.cycles, "energy_units": str(self.energy)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransferCost":
        c, e = int(doc["cycles"]), Fraction(str(doc["energy_units"]))
        if c < 0 or e < 0:
            raise ValueError("transfer cost must be non-negative")
        return cls(c, e)


@dataclass
class Config:
    presets: dict[str, ParamSet]
    decomp: dict[str, int]
    geometry: BankGeometry
    cost_model: CostModel
    transfer: TransferCost
    source: str = "<default>"
    raw: dict = field(default_factory=dict, repr=False)

    def preset(self, name: str) -> ParamSet:
        try:
            return self.presets[name]
        except KeyError:
            raise KeyError(f"unknown preset {name!r}; known: {sorted(self.presets)}") from None

    def decomp_log2(self, name: str, default: int = 30) -> int:
        return self.decomp.get(name, default)

    def geometry_for(self, params: ParamSet, full: bool | None = None) -> BankGeometry:
        """The configured geometry when it can hold the parameters, else the smallest one that can."""
        g = self.geometry
        fits = g.word_bits >= params.k + 1 and (g.num_arrays // 2) * g.slots_per_row >= params.n
        if full or (full is None and fits):
            return g
        return BankGeometry.for_params(params.k, params.n, g.rows_M, g.data_rows_Mprime, g.cols_N)


def _parse(doc: dict, source: str) -> Config:
    presets, decomp = {}, {}
    for name, entry in doc.get("presets", {}).items():
        presets[name] = ParamSet.from_dict(entry)
        if "decomp_log2" in entry:
            decomp[name] = int(entry["decomp_log2"])
    geometry = BankGeometry.from_dict(doc["geometry"]) if "geometry" in doc else BankGeometry()
    cost = CostModel.from_dict(doc["cost_model"]) if "cost_model" in doc else CostModel.default()
    transfer = TransferCost.from_dict(doc["transfer"]) if "transfer" in doc else TransferCost()
    return Config(presets, decomp, geometry, cost, transfer, source, doc)


def default_config() -> Config:
    text = resources.files("cimhe.data").joinpath("default_config.json").read_text()
    return _parse(json.loads(text), "<default>")


def load_config(path: str | Path | None = None) -> Config:
    """Read a config file; missing sections fall back to the shipped defaults."""
    base = default_config()
    if path is None:
        return base
    doc = json.loads(Path(path).read_text())
    merged = dict(base.raw)
    merged["presets"] = {**base.raw["presets"], **doc.get("presets", {})}
    for key in ("geometry", "cost_model", "transfer"):
        if key in doc:
            merged[key] = doc[key]
    return _parse(merged, str(path))
