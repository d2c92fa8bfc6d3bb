"""Exact elementary currents on C^n and the sequential product engine.

An elementary term is coeff * (1/x^pv) * wedge of dbar(1/x_j^b_j) with
disjoint pv/res supports; residue factors are kept in ascending variable
order, which fixes every sign in the algebra. The sequential product folds
pv/res steps starting from the unit current, first step innermost.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .exactcore import (
    SCALAR_ONE,
    EngineError,
    ExactScalar,
    GaussRational,
    ScalarSum,
)
from .testforms import TestForm, moment, profile_eval


class OverlapError(EngineError):
    pass


class DimensionMismatch(EngineError):
    pass


class ZeroResidueStep(EngineError):
    pass


ResFactors = tuple[tuple[int, int], ...]  # ((variable, exponent), ...) ascending
TermKey = tuple[tuple[int, ...], ResFactors]


def _accumulate(acc: dict[TermKey, ExactScalar], key: TermKey, c: ExactScalar) -> None:
    prev = acc.get(key)
    if prev is None:
        acc[key] = c
    elif prev.is_zero():
        acc[key] = c
    elif c.is_zero():
        pass
    elif prev.s != c.s:
        raise EngineError("cannot merge coefficients with different scalar powers")
    else:
        acc[key] = ExactScalar(prev.g.add(c.g), prev.s)


def inversion_sign(seq: Sequence[int]) -> int:
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return -1 if inv % 2 else 1


def orientation_sign_sequence(first_block: Sequence[int], M: Iterable[int], n: int) -> int:
    """Parity of rearranging dxbar(first_block) ^ dxbar_M ^ dx_1..dx_n into
    the interleaved (dxbar_1^dx_1)..(dxbar_n^dx_n); variables 0-based."""
    seq = [2 * v + 1 for v in first_block]
    seq += [2 * v + 1 for v in sorted(M)]
    seq += [2 * v + 2 for v in range(n)]
    return inversion_sign(seq)


def orientation_sign(res: Iterable[int], M: Iterable[int], n: int) -> int:
    """Orientation sign sigma(res, M) with the dbar factors in ascending order."""
    return orientation_sign_sequence(sorted(res), M, n)


# ---------------------------------------------------------------------------
# Current sums


@dataclass(frozen=True)
class CurrentSum:
    n: int
    terms: tuple[tuple[tuple[int, ...], ResFactors, ExactScalar], ...] = ()

    @staticmethod
    def from_map(n: int, data: Mapping[TermKey, ExactScalar]) -> "CurrentSum":
        kept = tuple(
            (pv, res, c)
            for (pv, res), c in sorted(data.items())
            if not c.is_zero()
        )
        return CurrentSum(n, kept)

    def is_zero(self) -> bool:
        return not self.terms

    def scale(self, c: ExactScalar) -> "CurrentSum":
        return CurrentSum.from_map(
            self.n, {(pv, res): coeff.mul(c) for pv, res, coeff in self.terms}
        )

    def add(self, other: "CurrentSum") -> "CurrentSum":
        if self.n != other.n:
            raise DimensionMismatch("cannot add currents on different C^n")
        acc: dict[TermKey, ExactScalar] = {}
        for pv, res, c in self.terms + other.terms:
            _accumulate(acc, (pv, res), c)
        return CurrentSum.from_map(self.n, acc)

    def render(self) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for pv, res, c in self.terms:
            factors = []
            for i, a in enumerate(pv):
                if a:
                    factors.append(f"(1/x{i + 1}" + (f"^{a})" if a > 1 else ")"))
            for j, b in res:
                factors.append(f"∂̄(1/x{j + 1}" + (f"^{b})" if b > 1 else ")"))
            body = "∧".join(factors) if factors else "1"
            if c == SCALAR_ONE:
                chunks.append(body)
            elif c == SCALAR_ONE.neg():
                chunks.append(f"-{body}")
            else:
                chunks.append(f"{c.render()}·{body}")
        return " + ".join(chunks)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "terms": [
                {
                    "coeff": c.render(),
                    "pv": list(pv),
                    "res": {str(j + 1): b for j, b in res},
                }
                for pv, res, c in self.terms
            ],
        }


def unit_current(n: int) -> CurrentSum:
    return CurrentSum(n, (((0,) * n, (), SCALAR_ONE),))


def zero_current(n: int) -> CurrentSum:
    return CurrentSum(n, ())


def normalize(
    n: int,
    coeff: ExactScalar,
    pv: Sequence[int],
    res_factors: Sequence[tuple[int, int]],
) -> CurrentSum:
    """Build a single-term current from residue factors in arbitrary order.

    Sorting the dbar factors multiplies the coefficient by the permutation
    sign; a repeated residue variable makes the term vanish.
    """
    pv = tuple(pv)
    if len(pv) != n or any(a < 0 for a in pv):
        raise EngineError("bad principal value exponents")
    vars_listed = [j for j, _ in res_factors]
    if len(set(vars_listed)) != len(vars_listed):
        return zero_current(n)
    for j, b in res_factors:
        if not (0 <= j < n) or b < 1:
            raise EngineError("bad residue factor")
        if pv[j] > 0:
            raise OverlapError(f"variable x{j + 1} in both pv and res supports")
    sign = inversion_sign(vars_listed)
    res = tuple(sorted(res_factors))
    c = coeff if sign == 1 else coeff.neg()
    return CurrentSum.from_map(n, {(pv, res): c})


def dbar(T: CurrentSum) -> CurrentSum:
    """Leibniz dbar: move each pv_i to a residue factor with the insertion
    sign (-1)^(number of residue factors with smaller variable index)."""
    acc: dict[TermKey, ExactScalar] = {}
    for pv, res, c in T.terms:
        res_vars = [j for j, _ in res]
        for i, a in enumerate(pv):
            if a == 0:
                continue
            sign = -1 if sum(1 for j in res_vars if j < i) % 2 else 1
            new_pv = pv[:i] + (0,) + pv[i + 1:]
            new_res = tuple(sorted(res + ((i, a),)))
            _accumulate(acc, (new_pv, new_res), c if sign == 1 else c.neg())
    return CurrentSum.from_map(T.n, acc)


def pv_step(gamma: Sequence[int], T: CurrentSum) -> CurrentSum:
    """Multiply by the principal value of 1/x^gamma.

    Terms whose residue support meets supp(gamma) vanish identically in the
    regularized product and are dropped.
    """
    gamma = tuple(gamma)
    if len(gamma) != T.n:
        raise DimensionMismatch("step arity mismatch")
    if any(g < 0 for g in gamma):
        raise EngineError("negative step exponent")
    acc: dict[TermKey, ExactScalar] = {}
    for pv, res, c in T.terms:
        if any(gamma[j] > 0 for j, _ in res):
            continue
        new_pv = tuple(a + g for a, g in zip(pv, gamma))
        _accumulate(acc, (new_pv, res), c)
    return CurrentSum.from_map(T.n, acc)


def res_step(gamma: Sequence[int], T: CurrentSum) -> CurrentSum:
    """Wedge with dbar of the principal value of 1/x^gamma from the left,
    via the Leibniz identity dbar(pv(T)) - pv(dbar(T))."""
    gamma = tuple(gamma)
    if all(g == 0 for g in gamma):
        raise ZeroResidueStep("residue step needs a nonconstant monomial")
    left = dbar(pv_step(gamma, T))
    right = pv_step(gamma, dbar(T))
    return left.add(right.scale(ExactScalar.of(-1)))


@dataclass(frozen=True)
class ProductStep:
    kind: str  # "PV" | "RES"
    gamma: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("PV", "RES"):
            raise ValueError(f"unknown step kind {self.kind!r}")
        if any(g < 0 for g in self.gamma):
            raise ValueError("step exponents must be nonnegative")
        if self.kind == "RES" and all(g == 0 for g in self.gamma):
            raise ZeroResidueStep("residue step needs a nonconstant monomial")

    @property
    def n(self) -> int:
        return len(self.gamma)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, g in enumerate(self.gamma) if g > 0)

    def to_json(self) -> dict:
        doc = {"kind": self.kind, "gamma": list(self.gamma)}
        if self.label:
            doc["label"] = self.label
        return doc

    @staticmethod
    def from_json(doc: dict) -> "ProductStep":
        return ProductStep(
            str(doc["kind"]).upper(), tuple(int(g) for g in doc["gamma"]),
            str(doc.get("label", "")),
        )

    def render(self) -> str:
        mono = "·".join(
            f"x{i + 1}" + (f"^{g}" if g > 1 else "")
            for i, g in enumerate(self.gamma) if g > 0
        ) or "1"
        return f"{self.kind}({mono})"


def sequential_product(steps: Sequence[ProductStep]) -> CurrentSum:
    """Fold the steps left to right from the unit current; the first list
    element is the innermost factor."""
    if not steps:
        raise EngineError("empty step list has no canonical product")
    n = steps[0].n
    if any(st.n != n for st in steps):
        raise DimensionMismatch("steps disagree on the number of variables")
    T = unit_current(n)
    for st in steps:
        T = res_step(st.gamma, T) if st.kind == "RES" else pv_step(st.gamma, T)
        if T.is_zero():
            return zero_current(n)
    return T


def pair_with_testform(T: CurrentSum, phi: TestForm) -> ScalarSum:
    """Exact pairing <T, phi> via per-variable angular selection.

    A term contributes only when phi's antiholomorphic set M is the
    complement of its residue support; each non-residue variable then gives
    2*pi*i*mu(m_i) under k_i - pv_i = m_i, each residue variable gives
    2*pi*i*rho(0) under m_j = 0, k_j = b_j - 1.
    """
    if T.n != phi.n:
        raise DimensionMismatch("test form arity differs from the current")
    n = T.n
    out: list[ExactScalar] = []
    for pv, res, c in T.terms:
        res_map = dict(res)
        if phi.M != frozenset(i for i in range(n) if i not in res_map):
            continue
        sigma = orientation_sign(res_map.keys(), phi.M, n)
        for k, m, g in phi.coeff:
            fac = Fraction(1)
            ok = True
            for i in range(n):
                if i in res_map:
                    if m[i] != 0 or k[i] != res_map[i] - 1:
                        ok = False
                        break
                    fac *= profile_eval(phi.profiles[i], Fraction(0))
                else:
                    if k[i] - pv[i] != m[i]:
                        ok = False
                        break
                    fac *= moment(phi.profiles[i], m[i])
            if not ok or fac == 0:
                continue
            contrib = c.scale_gauss(g).scale(fac * sigma)
            out.append(ExactScalar(contrib.g, contrib.s + n))
    return ScalarSum.make(out)
