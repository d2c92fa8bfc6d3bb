"""Exact arithmetic substrate.

Gaussian rationals, scalars carrying symbolic powers of 2*pi*i, univariate
rational functions with factored linear denominators, and integer affine
forms in the lambda parameters. Everything here is immutable and exact;
floats appear only on explicit conversion.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Sequence, Union

import mpmath


class EngineError(Exception):
    """Base class for engine failures surfaced to the CLI as exit code 3."""


RatLike = Union[int, str, Fraction]


def as_fraction(x: RatLike) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    raise TypeError(f"not an exact rational: {x!r}")


def _render_frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# Gaussian rationals


_GAUSS_RE = re.compile(
    r"""^\s*(?P<re>[+-]?\d+(?:/\d+)?(?=\s*(?:[+-]|$)))?\s*
         (?P<im>[+-]?\s*(?:\d+(?:/\d+)?)?\s*i)?\s*$""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class GaussRational:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @staticmethod
    def of(re: RatLike = 0, im: RatLike = 0) -> "GaussRational":
        return GaussRational(as_fraction(re), as_fraction(im))

    @staticmethod
    def parse(text: str) -> "GaussRational":
        """Parse strings like "1", "-2/3", "i", "1/2-3/4i"."""
        m = _GAUSS_RE.match(text)
        if not m or (m.group("re") is None and m.group("im") is None):
            raise ValueError(f"cannot parse Gaussian rational: {text!r}")
        re_part = Fraction(m.group("re")) if m.group("re") else Fraction(0)
        im_part = Fraction(0)
        if m.group("im"):
            body = m.group("im").replace(" ", "")[:-1]  # strip trailing i
            if body in ("", "+"):
                im_part = Fraction(1)
            elif body == "-":
                im_part = Fraction(-1)
            else:
                im_part = Fraction(body)
        return GaussRational(re_part, im_part)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def add(self, o: "GaussRational") -> "GaussRational":
        return GaussRational(self.re + o.re, self.im + o.im)

    def sub(self, o: "GaussRational") -> "GaussRational":
        return GaussRational(self.re - o.re, self.im - o.im)

    def mul(self, o: "GaussRational") -> "GaussRational":
        return GaussRational(
            self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re
        )

    def neg(self) -> "GaussRational":
        return GaussRational(-self.re, -self.im)

    def conj(self) -> "GaussRational":
        return GaussRational(self.re, -self.im)

    def scale(self, c: RatLike) -> "GaussRational":
        c = as_fraction(c)
        return GaussRational(self.re * c, self.im * c)

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)

    def render(self) -> str:
        sign = "+" if self.im >= 0 else "-"
        return f"{_render_frac(self.re)} {sign} {_render_frac(abs(self.im))} i"


GAUSS_ZERO = GaussRational()
GAUSS_ONE = GaussRational(Fraction(1))


# ---------------------------------------------------------------------------
# Scalars g * (2*pi*i)^s


@dataclass(frozen=True)
class ExactScalar:
    g: GaussRational = GAUSS_ZERO
    s: int = 0

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("negative power of 2*pi*i")
        if self.g.is_zero() and self.s != 0:
            object.__setattr__(self, "s", 0)

    @staticmethod
    def of(re: RatLike = 0, im: RatLike = 0, s: int = 0) -> "ExactScalar":
        return ExactScalar(GaussRational.of(re, im), s)

    def is_zero(self) -> bool:
        return self.g.is_zero()

    def mul(self, o: "ExactScalar") -> "ExactScalar":
        return ExactScalar(self.g.mul(o.g), self.s + o.s)

    def neg(self) -> "ExactScalar":
        return ExactScalar(self.g.neg(), self.s)

    def scale(self, c: RatLike) -> "ExactScalar":
        return ExactScalar(self.g.scale(c), self.s)

    def scale_gauss(self, c: GaussRational) -> "ExactScalar":
        return ExactScalar(self.g.mul(c), self.s)

    def to_complex(self, prec: int = 80) -> complex:
        # pi at >= 64 bits of working precision, then rounded once
        with mpmath.workprec(max(prec, 64)):
            base = (2 * mpmath.pi * mpmath.mpc(0, 1)) ** self.s
            val = (mpmath.mpf(self.g.re.numerator) / self.g.re.denominator
                   + mpmath.mpc(0, 1) * mpmath.mpf(self.g.im.numerator) / self.g.im.denominator) * base
            return complex(val)

    def render(self) -> str:
        body = f"({self.g.render()})"
        return body if self.s == 0 else f"{body} * (2*pi*i)^{self.s}"


SCALAR_ZERO = ExactScalar()
SCALAR_ONE = ExactScalar(GAUSS_ONE, 0)


@dataclass(frozen=True)
class ScalarSum:
    """Sum of g*(2*pi*i)^s parts with pairwise distinct s, ascending."""

    parts: tuple[ExactScalar, ...] = ()

    @staticmethod
    def make(scalars: Sequence[ExactScalar]) -> "ScalarSum":
        by_s: dict[int, GaussRational] = {}
        for sc in scalars:
            if sc.is_zero():
                continue
            by_s[sc.s] = by_s.get(sc.s, GAUSS_ZERO).add(sc.g)
        parts = tuple(
            ExactScalar(g, s) for s, g in sorted(by_s.items()) if not g.is_zero()
        )
        return ScalarSum(parts)

    def is_zero(self) -> bool:
        return not self.parts

    def add(self, o: "ScalarSum") -> "ScalarSum":
        return ScalarSum.make(self.parts + o.parts)

    def to_exact(self) -> ExactScalar:
        if not self.parts:
            return SCALAR_ZERO
        if len(self.parts) == 1:
            return self.parts[0]
        raise EngineError("mixed powers of 2*pi*i cannot collapse to one scalar")

    def to_complex(self, prec: int = 80) -> complex:
        return sum((p.to_complex(prec) for p in self.parts), 0j)

    def render(self) -> str:
        if not self.parts:
            return "(0 + 0 i)"
        return " + ".join(p.render() for p in self.parts)


def scalar_arith(a: ExactScalar, b: ExactScalar, op: str):
    """add/mul on exact scalars; mixed-s add falls back to a ScalarSum."""
    if op == "mul":
        return a.mul(b)
    if op == "add":
        if a.is_zero():
            return b
        if b.is_zero():
            return a
        if a.s == b.s:
            return ExactScalar(a.g.add(b.g), a.s)
        return ScalarSum.make([a, b])
    raise ValueError(f"unknown op {op!r}")


# ---------------------------------------------------------------------------
# Dense univariate polynomials over Fraction, ascending coefficients


def ptrim(p: Sequence[Fraction]) -> tuple[Fraction, ...]:
    i = len(p)
    while i > 0 and p[i - 1] == 0:
        i -= 1
    return tuple(p[:i])


def padd(a: Sequence[Fraction], b: Sequence[Fraction]) -> tuple[Fraction, ...]:
    n = max(len(a), len(b))
    return ptrim([
        (a[i] if i < len(a) else Fraction(0)) + (b[i] if i < len(b) else Fraction(0))
        for i in range(n)
    ])


def pmul(a: Sequence[Fraction], b: Sequence[Fraction]) -> tuple[Fraction, ...]:
    if not a or not b:
        return ()
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
    return ptrim(out)

def pscale(a: Sequence[Fraction], c: Fraction) -> tuple[Fraction, ...]:
    return ptrim([ai * c for ai in a])


def peval(a: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


def pdiv_linear(a: Sequence[Fraction], c: Fraction) -> tuple[Fraction, ...]:
    """Exact quotient a(X)/(X+c); requires a(-c) = 0."""
    rev = list(reversed(a))
    out = []
    carry = Fraction(0)
    for coef in rev:
        carry = coef + carry * (-c)
        out.append(carry)
    if out and out[-1] != 0:
        raise ValueError("linear factor does not divide polynomial")
    return ptrim(tuple(reversed(out[:-1])))


def pcompose_affine(a: Sequence[Fraction], c0: Fraction, c1: Fraction) -> tuple[Fraction, ...]:
    """a(c0 + c1*X) as a polynomial in X."""
    acc: tuple[Fraction, ...] = ()
    for coef in reversed(a):
        acc = padd(pmul(acc, (c0, c1)), (coef,))
    return acc


# ---------------------------------------------------------------------------
# Univariate rationals with factored linear denominators


@dataclass(frozen=True)
class UniRat:
    """num(X) / prod (X + c) over the multiset of constants c in den."""

    num: tuple[Fraction, ...] = ()
    den: tuple[Fraction, ...] = ()

    @staticmethod
    def make(num: Sequence[RatLike], den: Sequence[RatLike] = ()) -> "UniRat":
        n = ptrim([as_fraction(x) for x in num])
        d = sorted(as_fraction(x) for x in den)
        if not n:
            return UniRat((), ())
        # cancel every denominator root against the numerator
        out_den: list[Fraction] = []
        for c in d:
            if n and peval(n, -c) == 0:
                n = pdiv_linear(n, c)
            else:
                out_den.append(c)
        return UniRat(n, tuple(out_den))

    @staticmethod
    def const(x: RatLike) -> "UniRat":
        x = as_fraction(x)
        return UniRat((x,), ()) if x else UniRat((), ())

    def is_zero(self) -> bool:
        return not self.num

    def mul(self, o: "UniRat") -> "UniRat":
        if self.is_zero() or o.is_zero():
            return UniRat((), ())
        return UniRat.make(pmul(self.num, o.num), self.den + o.den)

    def scale(self, c: RatLike) -> "UniRat":
        c = as_fraction(c)
        if c == 0:
            return UniRat((), ())
        return UniRat(pscale(self.num, c), self.den)

    def add(self, o: "UniRat") -> "UniRat":
        if self.is_zero():
            return o
        if o.is_zero():
            return self
        # common denominator: multiset max of the two factor lists
        ca, cb = Counter(self.den), Counter(o.den)
        common = ca | cb
        num_a, num_b = self.num, o.num
        for c, mult in (common - ca).items():
            for _ in range(mult):
                num_a = pmul(num_a, (c, Fraction(1)))
        for c, mult in (common - cb).items():
            for _ in range(mult):
                num_b = pmul(num_b, (c, Fraction(1)))
        den = tuple(sorted(common.elements()))
        return UniRat.make(padd(num_a, num_b), den)

    def neg(self) -> "UniRat":
        return UniRat(pscale(self.num, Fraction(-1)), self.den)

    def eval_at(self, x: RatLike) -> Fraction:
        x = as_fraction(x)
        d = Fraction(1)
        for c in self.den:
            f = x + c
            if f == 0:
                raise ZeroDivisionError(f"denominator factor (X + {c}) vanishes at {x}")
            d *= f
        return peval(self.num, x) / d if self.num else Fraction(0)

    def render(self, var: str = "X") -> str:
        if self.is_zero():
            return "0"
        def mono(i, c):
            if i == 0:
                return _render_frac(c)
            head = "" if c == 1 else ("-" if c == -1 else _render_frac(c) + "*")
            return f"{head}{var}" + ("" if i == 1 else f"^{i}")
        num = " + ".join(mono(i, c) for i, c in enumerate(self.num) if c != 0)
        if not self.den:
            return num
        den = "".join(
            f"({var})" if c == 0 else f"({var}+{_render_frac(c)})" if c > 0 else f"({var}{_render_frac(c)})"
            for c in self.den
        )
        return f"({num}) / ({den})"


UNIRAT_ZERO = UniRat()
UNIRAT_ONE = UniRat((Fraction(1),), ())


def unirat_limit_at_zero(r: UniRat) -> tuple[int, Fraction]:
    """Order of vanishing at X=0 (negative = pole order) and leading coefficient.

    The zero function reports (0, 0).
    """
    if r.is_zero():
        return 0, Fraction(0)
    v = 0
    while r.num[v] == 0:
        v += 1
    w = sum(1 for c in r.den if c == 0)
    lead = r.num[v]
    for c in r.den:
        if c != 0:
            lead /= c
    return v - w, lead


# ---------------------------------------------------------------------------
# Integer affine forms in lambda


@dataclass(frozen=True)
class AffineForm:
    coeffs: tuple[int, ...]
    const: int = 0

    @staticmethod
    def zero(q: int) -> "AffineForm":
        return AffineForm((0,) * q, 0)

    @staticmethod
    def unit(q: int, j: int, c: int = 1) -> "AffineForm":
        v = [0] * q
        v[j] = c
        return AffineForm(tuple(v), 0)

    @property
    def nvars(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return self.const == 0 and all(c == 0 for c in self.coeffs)

    def add(self, o: "AffineForm") -> "AffineForm":
        return AffineForm(
            tuple(a + b for a, b in zip(self.coeffs, o.coeffs)), self.const + o.const
        )

    def with_const(self, c: int) -> "AffineForm":
        return AffineForm(self.coeffs, c)

    def subs_zero(self, j: int) -> "AffineForm":
        v = list(self.coeffs)
        v[j] = 0
        return AffineForm(tuple(v), self.const)

    def eval(self, lam: Sequence[Fraction]) -> Fraction:
        return sum((c * l for c, l in zip(self.coeffs, lam)), Fraction(self.const))

    def lin_eval(self, vec: Sequence[Fraction]) -> Fraction:
        return sum((c * v for c, v in zip(self.coeffs, vec)), Fraction(0))

    def primitive(self) -> "AffineForm":
        vals = [Fraction(v) for v in (*self.coeffs, self.const) if v != 0]
        if not vals:
            return self
        num_g = 0
        den_l = 1
        for v in vals:
            num_g = gcd(num_g, abs(v.numerator))
            den_l = den_l * v.denominator // gcd(den_l, v.denominator)
        scale = Fraction(den_l, num_g)
        if scale == 1:
            return self
        return AffineForm(
            tuple(c * scale for c in self.coeffs), self.const * scale
        )

    def render(self, prefix: str = "λ") -> str:
        parts = []
        for j, c in enumerate(self.coeffs):
            if c == 0:
                continue
            name = f"{prefix}{j + 1}"
            if c == 1:
                parts.append(f"+{name}")
            elif c == -1:
                parts.append(f"-{name}")
            else:
                parts.append(f"{'+' if c > 0 else '-'}{abs(c)}{name}")
        if self.const or not parts:
            parts.append(f"{'+' if self.const >= 0 else '-'}{abs(self.const)}")
        out = "".join(parts)
        return out[1:] if out.startswith("+") else out


# ---------------------------------------------------------------------------
# Mellin expressions: sums of products of univariate factors


@dataclass(frozen=True)
class MellinProduct:
    scalar: ExactScalar
    lam: tuple[int, ...]
    factors: tuple[tuple[AffineForm, UniRat], ...]

    def key(self):
        return (
            self.scalar.s,
            self.lam,
            tuple(
                (f.coeffs, f.const, r.num, r.den) for f, r in self.factors
            ),
        )


@dataclass(frozen=True)
class MellinExpr:
    q: int
    products: tuple[MellinProduct, ...] = ()

    @staticmethod
    def make(q: int, products: Sequence[MellinProduct]) -> "MellinExpr":
        for p in products:
            if len(p.lam) != q:
                raise ValueError("lambda monomial arity mismatch")
            if any(v < 0 for v in p.lam):
                raise ValueError("lambda monomial must have nonnegative exponents")
            for form, _ in p.factors:
                if form.nvars != q:
                    raise ValueError("affine form references undeclared lambda")
        merged: dict = {}
        for p in products:
            if p.scalar.is_zero():
                continue
            k = p.key()
            if k in merged:
                prev = merged[k]
                g = prev.scalar.g.add(p.scalar.g)
                merged[k] = MellinProduct(ExactScalar(g, p.scalar.s), p.lam, p.factors)
            else:
                merged[k] = p
        kept = tuple(
            sorted(
                (p for p in merged.values() if not p.scalar.is_zero()),
                key=lambda p: p.key(),
            )
        )
        return MellinExpr(q, kept)

    def is_zero(self) -> bool:
        return not self.products

    def render(self) -> str:
        if not self.products:
            return "0"
        chunks = []
        for p in self.products:
            bits = [p.scalar.render()]
            for j, v in enumerate(p.lam):
                if v:
                    bits.append(f"λ{j + 1}" + ("" if v == 1 else f"^{v}"))
            for form, rat in p.factors:
                if form.is_zero() and rat == UNIRAT_ONE:
                    continue
                bits.append(rat.render(var=f"({form.render()})"))
            chunks.append(" * ".join(bits))
        return "  +  ".join(chunks)
