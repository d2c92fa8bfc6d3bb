"""Small exterior algebra over anticommuting generators.

Elements carry numpy-array (grid-sampled) or scalar coefficients keyed by
generator bitmask. Used by the full-grid quadrature path (generators are
the dx̄_i) and by the CFL factors (bundle frame vectors listed before the
dx̄_i, all odd).
"""

from __future__ import annotations

from typing import Mapping

import numpy as np


def wedge_sign(a: int, b: int) -> int:
    """Sign from moving basis mask b past mask a into ascending order.

    Counts pairs (i in a, j in b) with i > j; masks must be disjoint.
    """
    sign = 1
    rest = a
    while rest:
        low = rest & -rest
        # generators in b strictly below this generator of a
        if (b & (low - 1)).bit_count() & 1:
            sign = -sign
        rest ^= low
    return sign


class Grassmann:
    """Sum of coeff * e_mask; coefficients are scalars or same-shape arrays."""

    __slots__ = ("m", "data")

    def __init__(self, m: int, data: Mapping[int, object] | None = None):
        self.m = m
        self.data: dict[int, object] = dict(data or {})

    @staticmethod
    def scalar(m: int, value) -> "Grassmann":
        return Grassmann(m, {0: value})

    @staticmethod
    def gen(m: int, i: int, coeff=1.0) -> "Grassmann":
        if not 0 <= i < m:
            raise ValueError("generator index out of range")
        return Grassmann(m, {1 << i: coeff})

    def add(self, other: "Grassmann") -> "Grassmann":
        out = dict(self.data)
        for mask, c in other.data.items():
            out[mask] = out[mask] + c if mask in out else c
        return Grassmann(self.m, out)

    def scale(self, c) -> "Grassmann":
        return Grassmann(self.m, {mask: v * c for mask, v in self.data.items()})

    def wedge(self, other: "Grassmann") -> "Grassmann":
        out: dict[int, object] = {}
        for ma, ca in self.data.items():
            for mb, cb in other.data.items():
                if ma & mb:
                    continue
                mask = ma | mb
                term = ca * cb
                if wedge_sign(ma, mb) < 0:
                    term = -term
                out[mask] = out[mask] + term if mask in out else term
        return Grassmann(self.m, out)

    def component(self, mask: int):
        return self.data.get(mask, 0.0)

    def top(self):
        return self.component((1 << self.m) - 1)

    def degrees(self) -> set[int]:
        return {mask.bit_count() for mask, c in self.data.items() if not _is_zero(c)}


def _is_zero(c) -> bool:
    if isinstance(c, np.ndarray):
        return not np.any(c)
    return c == 0
