"""Test forms and radial machinery.

Polynomial coefficients times per-variable radial bump profiles with exact
rational moments, plus the cutoff profiles used by the epsilon
regularization. Profiles live on [0, 1] in the squared-radius variable t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Sequence, Union

import numpy as np

from .exactcore import (
    EngineError,
    GaussRational,
    UniRat,
    as_fraction,
    padd,
    pcompose_affine,
    peval,
    pmul,
    pscale,
    ptrim,
)


class DerivativeOfIndicator(EngineError):
    pass


@lru_cache(maxsize=None)
def smoothstep_poly(s: int) -> tuple[Fraction, ...]:
    """Coefficients of S_s(u), the C^s polynomial step with S(0)=0, S(1)=1.

    S_s(u) = (2s+1)!/(s!)^2 * int_0^u v^s (1-v)^s dv; odd symmetry about 1/2.
    """
    if s < 0:
        raise ValueError("smoothness order must be nonnegative")
    norm = Fraction(factorial(2 * s + 1), factorial(s) ** 2)
    coeffs = [Fraction(0)] * (2 * s + 2)
    for j in range(s + 1):
        coeffs[s + j + 1] = norm * comb(s, j) * (-1) ** j / (s + j + 1)
    return ptrim(coeffs)


def _poly_eval_any(coeffs: Sequence[Fraction], t):
    """Horner evaluation; exact on Fraction input, vectorized on arrays."""
    if isinstance(t, Fraction):
        return peval(coeffs, t)
    acc = 0.0 * t if isinstance(t, np.ndarray) else 0.0
    for c in reversed(coeffs):
        acc = acc * t + float(c)
    return acc


# ---------------------------------------------------------------------------
# Radial profiles


@dataclass(frozen=True)
class RadialProfile:
    kind: str  # "beta" | "plateau"
    d: int = 0
    s: int = 0

    def __post_init__(self):
        if self.kind == "beta":
            if self.d < 1:
                raise ValueError("beta profile needs d >= 1")
        elif self.kind == "plateau":
            if self.s < 0:
                raise ValueError("plateau smoothness must be nonnegative")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    @staticmethod
    def beta(d: int) -> "RadialProfile":
        return RadialProfile("beta", d=d)

    @staticmethod
    def plateau(s: int) -> "RadialProfile":
        return RadialProfile("plateau", s=s)

    @property
    def is_beta(self) -> bool:
        return self.kind == "beta"

    def descent_poly(self) -> tuple[Fraction, ...]:
        """Polynomial equal to the profile on [1/2, 1] (plateau only)."""
        step = pcompose_affine(smoothstep_poly(self.s), Fraction(-1), Fraction(2))
        return padd((Fraction(1),), pscale(step, Fraction(-1)))

    def to_json(self) -> dict:
        if self.is_beta:
            return {"kind": "beta", "d": self.d}
        return {"kind": "plateau", "s": self.s}

    @staticmethod
    def from_json(doc: dict) -> "RadialProfile":
        kind = doc.get("kind")
        if kind == "beta":
            return RadialProfile.beta(int(doc["d"]))
        if kind == "plateau":
            return RadialProfile.plateau(int(doc["s"]))
        raise EngineError(f"unknown profile kind {kind!r}")


def profile_eval(rho: RadialProfile, t):
    """Pointwise profile value; exact at Fraction t, vectorized on arrays."""
    if isinstance(t, Fraction):
        if t < 0:
            raise ValueError("radial argument must be nonnegative")
        if t >= 1:
            return Fraction(0)
        if rho.is_beta:
            return (1 - t) ** rho.d
        if t <= Fraction(1, 2):
            return Fraction(1)
        return _poly_eval_any(rho.descent_poly(), t)
    t = np.asarray(t, dtype=float)
    if rho.is_beta:
        return np.where(t < 1.0, np.maximum(1.0 - t, 0.0) ** rho.d, 0.0)
    mid = _poly_eval_any(rho.descent_poly(), t)
    return np.where(t <= 0.5, 1.0, np.where(t < 1.0, mid, 0.0))


def moment(rho: RadialProfile, m: int) -> Fraction:
    """Exact radial moment mu(m) = int_0^1 t^m rho(t) dt."""
    if m < 0:
        raise ValueError("moment index must be nonnegative")
    if rho.is_beta:
        d = rho.d
        return Fraction(factorial(m) * factorial(d), factorial(m + d + 1))
    # plateau: 1 on [0,1/2], polynomial descent on [1/2,1]
    half = Fraction(1, 2)
    head = half ** (m + 1) / (m + 1)
    tm = tuple([Fraction(0)] * m + [Fraction(1)])
    q = pmul(tm, rho.descent_poly())
    tail = Fraction(0)
    for i, c in enumerate(q):
        tail += c * (Fraction(1) ** (i + 1) - half ** (i + 1)) / (i + 1)
    return head + tail


def beta_mellin_moment(d: int, K: int) -> UniRat:
    """Meromorphic continuation of int_0^1 t^(K+l) (1-t)^d dt in l.

    Equals d! / prod_{r=0..d} (l + K + 1 + r); poles at l = -K-1-r.
    """
    if d < 0:
        raise ValueError("beta exponent must be nonnegative")
    return UniRat.make((factorial(d),), tuple(Fraction(K + 1 + r) for r in range(d + 1)))


# ---------------------------------------------------------------------------
# Cutoff profiles


@dataclass(frozen=True)
class CutoffProfile:
    kind: str  # "smoothstep" | "indicator"
    s: int = 0

    def __post_init__(self):
        if self.kind == "smoothstep":
            if self.s < 0:
                raise ValueError("smoothness order must be nonnegative")
        elif self.kind != "indicator":
            raise ValueError(f"unknown cutoff kind {self.kind!r}")

    @staticmethod
    def smoothstep(s: int) -> "CutoffProfile":
        return CutoffProfile("smoothstep", s=s)

    @staticmethod
    def indicator() -> "CutoffProfile":
        return CutoffProfile("indicator")

    @property
    def is_indicator(self) -> bool:
        return self.kind == "indicator"

    def rise_poly(self, deriv: int = 0) -> tuple[Fraction, ...]:
        """chi (or chi') on [1/2, 1] as a polynomial in t."""
        step = pcompose_affine(smoothstep_poly(self.s), Fraction(-1), Fraction(2))
        if deriv == 0:
            return step
        dstep = ptrim([i * c for i, c in enumerate(step)][1:])
        return dstep

    def to_json(self) -> dict:
        if self.is_indicator:
            return {"kind": "indicator"}
        return {"kind": "smoothstep", "s": self.s}

    @staticmethod
    def from_json(doc: dict) -> "CutoffProfile":
        kind = doc.get("kind")
        if kind == "indicator":
            return CutoffProfile.indicator()
        if kind == "smoothstep":
            return CutoffProfile.smoothstep(int(doc["s"]))
        raise EngineError(f"unknown cutoff kind {kind!r}")


def cutoff_eval(chi: CutoffProfile, t, deriv: int = 0):
    """chi or chi' at t >= 0; exact at Fraction t, vectorized on arrays."""
    if deriv not in (0, 1):
        raise ValueError("deriv must be 0 or 1")
    if chi.is_indicator:
        if deriv:
            raise DerivativeOfIndicator("indicator cutoff has no pointwise derivative")
        if isinstance(t, Fraction):
            return Fraction(1) if t >= 1 else Fraction(0)
        t = np.asarray(t, dtype=float)
        return np.where(t >= 1.0, 1.0, 0.0)
    poly = chi.rise_poly(deriv)
    if isinstance(t, Fraction):
        if t < 0:
            raise ValueError("cutoff argument must be nonnegative")
        if t <= Fraction(1, 2):
            return Fraction(0)
        if t >= 1:
            return Fraction(1) if deriv == 0 else Fraction(0)
        return _poly_eval_any(poly, t)
    t = np.asarray(t, dtype=float)
    mid = _poly_eval_any(poly, t)
    hi = 1.0 if deriv == 0 else 0.0
    return np.where(t <= 0.5, 0.0, np.where(t < 1.0, mid, hi))


# ---------------------------------------------------------------------------
# Test forms


Monomial = tuple[tuple[int, ...], tuple[int, ...], GaussRational]


@dataclass(frozen=True)
class TestForm:
    """coeff(x, xbar) * prod_i rho_i(|x_i|^2) * dxbar_M ^ dx_1..dx_n.

    M is a set of 0-based variable indices; dxbar_M is wedged in ascending
    order ahead of dx_1..dx_n.
    """

    n: int
    coeff: tuple[Monomial, ...]
    profiles: tuple[RadialProfile, ...]
    M: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if len(self.profiles) != self.n:
            raise ValueError("one radial profile per variable required")
        for k, m, _ in self.coeff:
            if len(k) != self.n or len(m) != self.n:
                raise ValueError("monomial arity mismatch")
            if any(v < 0 for v in k) or any(v < 0 for v in m):
                raise ValueError("monomial exponents must be nonnegative")
        if any(i < 0 or i >= self.n for i in self.M):
            raise ValueError("antiholomorphic index out of range")

    @staticmethod
    def make(
        n: int,
        coeff: Sequence[tuple[Sequence[int], Sequence[int], Union[GaussRational, int, str, Fraction]]],
        profiles: Union[RadialProfile, Sequence[RadialProfile]],
        M: Sequence[int] = (),
    ) -> "TestForm":
        if isinstance(profiles, RadialProfile):
            profiles = (profiles,) * n
        monos = []
        for k, m, c in coeff:
            if isinstance(c, GaussRational):
                g = c
            elif isinstance(c, str):
                g = GaussRational.parse(c)
            else:
                g = GaussRational.of(as_fraction(c))
            if not g.is_zero():
                monos.append((tuple(k), tuple(m), g))
        return TestForm(n, tuple(monos), tuple(profiles), frozenset(M))

    @property
    def M_sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.M))

    @property
    def M_complement(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.M)

    def all_beta(self) -> bool:
        return all(p.is_beta for p in self.profiles)

    def max_angular_degree(self) -> int:
        return max((max(max(k), max(m)) for k, m, _ in self.coeff), default=0)

    def to_json(self) -> dict:
        return {
            "coeff": [
                {"k": list(k), "m": list(m), "c": c.render().replace(" ", "")}
                for k, m, c in self.coeff
            ],
            "M": [i + 1 for i in self.M_sorted],
            "profiles": [p.to_json() for p in self.profiles],
        }

    @staticmethod
    def from_json(doc: dict, n: int) -> "TestForm":
        coeff = [(tuple(e["k"]), tuple(e["m"]), str(e["c"])) for e in doc.get("coeff", [])]
        if "profiles" in doc:
            profiles = tuple(RadialProfile.from_json(p) for p in doc["profiles"])
        else:
            profiles = RadialProfile.from_json(doc.get("profile", {"kind": "beta", "d": 8}))
        M = [int(i) - 1 for i in doc.get("M", [])]
        return TestForm.make(n, coeff, profiles, M)
