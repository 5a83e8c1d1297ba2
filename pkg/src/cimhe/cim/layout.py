"""Column-aligned placement of ciphertexts in a bank.

Ciphertext y lives in data row y.  Coefficient z of c[0] goes to lane z
(array z // C, slot z % C) in the first half of the arrays; coefficient z
of c[1] goes to lane H + z with H = (num_arrays // 2) * C.  Equal degrees of
different ciphertexts therefore share (array, slot) and differ only in row.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from .core import BankGeometry, CimError


class CapacityError(CimError):
    def __init__(self, requested: int, fits: int, reason: str = ""):
        self.requested = requested
        self.fits = fits
        msg = f"{requested} ciphertexts requested but only {fits} fit"
        super().__init__(msg + (f" ({reason})" if reason else ""))


@dataclass(frozen=True)
class LayoutPlan:
    geometry: BankGeometry
    n: int
    count: int

    @property
    def half(self) -> int:
        """First lane of c[1]: the start of array n1 + 1."""
        return (self.geometry.num_arrays // 2) * self.geometry.slots_per_row

    @property
    def span(self) -> tuple[int, int]:
        """Lane range covering both polynomials of a ciphertext."""
        return 0, self.half + self.n

    def row(self, ct: int) -> int:
        if not 0 <= ct < self.count:
            raise IndexError(f"ciphertext {ct} not in plan of {self.count}")
        return ct

    def lane(self, poly: int, z: int) -> int:
        if poly not in (0, 1) or not 0 <= z < self.n:
            raise IndexError(f"no coefficient ({poly}, {z})")
        return z + (self.half if poly else 0)

    def locate(self, ct: int, poly: int, z: int) -> tuple[int, int, int]:
        """(array, row, slot) of coefficient z of polynomial ``poly`` of ciphertext ``ct``."""
        lane = self.lane(poly, z)
        c = self.geometry.slots_per_row
        return lane // c, self.row(ct), lane % c

    @cached_property
    def assignments(self) -> dict[tuple[int, int, int], tuple[int, int, int]]:
        return {
            (ct, poly, z): self.locate(ct, poly, z)
            for ct in range(self.count)
            for poly in (0, 1)
            for z in range(self.n)
        }

    @property
    def coefficient_pairs(self) -> int:
        """Coefficient slots one lockstep pass over a ciphertext covers."""
        return 2 * self.n


def capacity(geometry: BankGeometry, n: int) -> int:
    """How many ciphertexts of degree n fit in the data rows."""
    half = (geometry.num_arrays // 2) * geometry.slots_per_row
    if n > half:
        return 0
    return geometry.data_rows_Mprime


def plan_layout(ciphertexts, geometry: BankGeometry, n: int | None = None) -> LayoutPlan:
    """Place a list of ciphertexts (or a count, with n given)."""
    if isinstance(ciphertexts, int):
        count = ciphertexts
        if n is None:
            raise ValueError("n is required when planning by count")
    else:
        cts = list(ciphertexts)
        count = len(cts)
        ns = {c.n for c in cts}
        if len(ns) > 1:
            raise ValueError("ciphertexts of different degree cannot share a layout")
        n = n if n is not None else (ns.pop() if ns else 1)
        ks = {c.k for c in cts}
        for k in ks:
            geometry.check_k(k)
    fits = capacity(geometry, n)
    if fits == 0:
        raise CapacityError(count, 0, f"a degree-{n} polynomial does not fit in half the arrays")
    if count > fits:
        raise CapacityError(count, fits)
    return LayoutPlan(geometry, n, count)
