"""Exact Mellin-regularized products for monomial step data.

build_gamma produces the meromorphic function Gamma(lambda) attached to a
step list and a test form with beta profiles, as an exact sum of products
scalar * prod_j lambda_j^{v_j} * prod_i rat_i(ell_i(lambda)). Limits along
iterated orders, weighted curves lambda_j = t^{a_j}, straight lines and the
diagonal are evaluated exactly, and pole hyperplanes through the origin are
certified or discarded by restriction to seeded rational probe lines.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .currents import ProductStep, orientation_sign
from .exactcore import (
    UNIRAT_ZERO,
    AffineForm,
    EngineError,
    ExactScalar,
    GaussRational,
    MellinExpr,
    MellinProduct,
    ScalarSum,
    UniRat,
    pcompose_affine,
    peval,
    pmul,
    pscale,
    unirat_limit_at_zero,
)
from .testforms import TestForm, beta_mellin_moment


class NonBetaProfile(EngineError):
    pass


class NonMonomialStep(EngineError):
    pass


class DegenerateLine(EngineError):
    pass


@dataclass(frozen=True)
class PoleHit:
    """Evaluation point lies on a pole hyperplane of one factor."""

    form: AffineForm
    offset: Fraction

    def render(self) -> str:
        off = "" if self.offset == 0 else f"+{self.offset}"
        return f"pole hit on {self.form.render()}{off}=0"


class PoleReport(EngineError):
    """A limit diverges: some product has negative total order."""

    def __init__(self, where: str, order: int, detail: str = ""):
        self.where = where
        self.order = order
        self.detail = detail
        super().__init__(f"divergent limit at {where}: order {order} {detail}".rstrip())


def _det_int(rows: list[list[int]]) -> int:
    k = len(rows)
    if k == 0:
        return 1
    if k == 1:
        return rows[0][0]
    total = 0
    for c in range(k):
        if rows[0][c] == 0:
            continue
        minor = [r[:c] + r[c + 1:] for r in rows[1:]]
        total += (-1 if c % 2 else 1) * rows[0][c] * _det_int(minor)
    return total


def build_gamma(
    steps: Sequence[ProductStep],
    phi: TestForm,
    gamma_tilde: Sequence[Sequence[int]] | None = None,
) -> MellinExpr:
    """Closed form of the regularized product paired with phi.

    Each step j carries |x^gt_j|^(2*lambda_j); gt defaults to the step
    monomial and must keep its support. The result collects, per surviving
    monomial of phi, an orientation sign, the determinant of the residue
    incidence matrix, one beta moment factor per variable at ell_i =
    sum_j gt[j][i]*lambda_j, and lambda_j prefactors for residue steps.
    """
    if not steps:
        raise EngineError("empty step list has no canonical product")
    if any(not isinstance(st, ProductStep) for st in steps):
        raise NonMonomialStep("steps must be monomial product steps")
    n = steps[0].n
    q = len(steps)
    if any(st.n != n for st in steps):
        raise EngineError("steps disagree on the number of variables")
    if phi.n != n:
        raise EngineError("test form arity differs from the steps")
    if not phi.all_beta():
        raise NonBetaProfile("closed forms need beta radial profiles")
    if gamma_tilde is None:
        gt = [st.gamma for st in steps]
    else:
        gt = [tuple(int(g) for g in row) for row in gamma_tilde]
        if len(gt) != q or any(len(row) != n for row in gt):
            raise EngineError("gamma_tilde shape mismatch")
        for st, row in zip(steps, gt):
            if any(g < 0 for g in row):
                raise EngineError("gamma_tilde exponents must be nonnegative")
            if any((g > 0) != (h > 0) for g, h in zip(st.gamma, row)):
                raise EngineError("gamma_tilde must keep each step's support")

    G = [sum(st.gamma[i] for st in steps) for i in range(n)]
    res_steps = [j for j, st in enumerate(steps) if st.kind == "RES"]
    res_desc = sorted(res_steps, reverse=True)
    degrees = [p.d for p in phi.profiles]

    products: list[MellinProduct] = []
    for k, m, c in phi.coeff:
        delta = [m[i] - k[i] + G[i] for i in range(n)]
        if any(dv not in (0, 1) for dv in delta):
            continue
        mc = [i for i in range(n) if delta[i] == 1]
        if tuple(mc) != phi.M_complement or len(mc) != len(res_steps):
            continue
        A = [[gt[j][i] for i in mc] for j in res_desc]
        det = _det_int(A)
        if det == 0:
            continue
        sigma = orientation_sign(mc, phi.M, n)
        lam = tuple(1 if j in res_steps else 0 for j in range(q))
        factors = []
        for i in range(n):
            form = AffineForm(tuple(gt[j][i] for j in range(q)), 0)
            factors.append((form, beta_mellin_moment(degrees[i], k[i] - G[i])))
        scalar = ExactScalar(c.scale(Fraction(sigma * det)), n)
        products.append(
            _precancel(MellinProduct(scalar, lam, tuple(factors)))
        )
    return MellinExpr.make(q, products)


def _precancel(p: MellinProduct) -> MellinProduct:
    """Cancel lambda_j prefactors against zero roots of pure factors
    (form = c*lambda_j): lambda_j/(c*lambda_j) = 1/c exactly."""
    lam = list(p.lam)
    scalar = p.scalar
    factors = []
    for form, rat in p.factors:
        nz = [j for j, cj in enumerate(form.coeffs) if cj != 0]
        if form.const == 0 and len(nz) == 1:
            j = nz[0]
            cj = form.coeffs[j]
            num, den = rat.num, list(rat.den)
            while lam[j] >= 1 and Fraction(0) in den:
                den.remove(Fraction(0))
                lam[j] -= 1
                scalar = scalar.scale(Fraction(1, cj))
            rat = UniRat(num, tuple(sorted(den)))
        factors.append((form, rat))
    return MellinProduct(scalar, tuple(lam), tuple(factors))


def _finish_constant_factors(
    scalar: ExactScalar, factors: Sequence[tuple[AffineForm, UniRat]]
) -> ExactScalar:
    for form, rat in factors:
        if any(form.coeffs):
            raise EngineError("factor still depends on the parameters")
        try:
            scalar = scalar.scale(rat.eval_at(Fraction(form.const)))
        except ZeroDivisionError:
            raise PoleReport("constant factor", -1, form.render()) from None
    return scalar


def iterated_limit(e: MellinExpr, order: Sequence[int] | None = None) -> ScalarSum:
    """Iterated limit lambda_{order[0]} -> 0 first, the rest in list order,
    later variables held symbolic at each stage. Exact: each stage keeps
    the products of total order zero and drops positive ones; negative
    order raises PoleReport."""
    if order is None:
        order = range(e.q)
    order = [int(u) for u in order]
    if sorted(order) != list(range(e.q)):
        raise EngineError("order must be a permutation of the parameters")

    products = list(e.products)
    for u in order:
        stage: list[MellinProduct] = []
        for p in products:
            o = p.lam[u]
            value = Fraction(1)
            kept: list[tuple[AffineForm, UniRat]] = []
            for form, rat in p.factors:
                cu = form.coeffs[u]
                sub = form.subs_zero(u)
                if cu != 0 and sub.is_zero():
                    ordf, lead = unirat_limit_at_zero(rat)
                    o += ordf
                    value *= lead * Fraction(cu) ** ordf
                else:
                    kept.append((sub, rat))
            if o > 0:
                continue
            if o < 0:
                raise PoleReport(f"λ{u + 1}→0", o, p.scalar.render())
            lam = p.lam[:u] + (0,) + p.lam[u + 1:]
            stage.append(MellinProduct(p.scalar.scale(value), lam, tuple(kept)))
        products = list(MellinExpr.make(e.q, stage).products)

    parts = []
    for p in products:
        parts.append(_finish_constant_factors(p.scalar, p.factors))
    return ScalarSum.make(parts)


def aswy_limit(e: MellinExpr, a: Sequence[int]) -> ScalarSum:
    """Limit along lambda_j = t^(a_j), t -> 0+, for strictly decreasing
    positive weights a; each factor is dominated by its smallest active
    weight, making the t-order of every product well defined."""
    a = [int(v) for v in a]
    if len(a) != e.q:
        raise EngineError("one weight per parameter required")
    if any(v <= 0 for v in a) or any(x <= y for x, y in zip(a, a[1:])):
        raise EngineError("weights must be strictly decreasing positive integers")

    parts = []
    for p in e.products:
        o = sum(av * lv for av, lv in zip(a, p.lam))
        value = Fraction(1)
        scalar = p.scalar
        for form, rat in p.factors:
            nz = [j for j, cj in enumerate(form.coeffs) if cj != 0]
            if form.const != 0 or not nz:
                # the constant dominates every positive power of t
                try:
                    scalar = scalar.scale(rat.eval_at(Fraction(form.const)))
                except ZeroDivisionError:
                    raise PoleReport("t→0 curve", -1, form.render()) from None
                continue
            jstar = max(nz)  # a is decreasing: largest index has smallest weight
            ordf, lead = unirat_limit_at_zero(rat)
            o += a[jstar] * ordf
            value *= lead * Fraction(form.coeffs[jstar]) ** ordf
        if o > 0:
            continue
        if o < 0:
            raise PoleReport("t→0 curve", o, p.scalar.render())
        parts.append(scalar.scale(value))
    return ScalarSum.make(parts)


# ---------------------------------------------------------------------------
# Line restrictions


@dataclass(frozen=True)
class LineRestriction:
    """The expression restricted to lambda = mu + t*nu, split per power of
    2*pi*i into real and imaginary univariate rational parts in t."""

    q: int
    mu: tuple[Fraction, ...]
    nu: tuple[Fraction, ...]
    parts: tuple[tuple[int, UniRat, UniRat], ...]  # (s, real, imag)

    def order_at_zero(self) -> int:
        orders = []
        for _, re, im in self.parts:
            for r in (re, im):
                if not r.is_zero():
                    orders.append(unirat_limit_at_zero(r)[0])
        return min(orders) if orders else 0

    def value_at_zero(self) -> ScalarSum:
        parts = []
        for s, re, im in self.parts:
            vals = []
            for r in (re, im):
                o, lead = unirat_limit_at_zero(r)
                if o < 0:
                    raise PoleReport("t→0 on line", o, f"(2*pi*i)^{s} part")
                vals.append(lead if o == 0 else Fraction(0))
            parts.append(ExactScalar(GaussRational(vals[0], vals[1]), s))
        return ScalarSum.make(parts)


def substitute_line(
    e: MellinExpr, mu: Sequence[Fraction], nu: Sequence[Fraction]
) -> LineRestriction:
    mu = tuple(Fraction(v) for v in mu)
    nu = tuple(Fraction(v) for v in nu)
    if len(mu) != e.q or len(nu) != e.q:
        raise EngineError("line data must match the parameter count")
    if all(v == 0 for v in nu):
        raise DegenerateLine("direction vector is zero")

    acc: dict[int, tuple[UniRat, UniRat]] = {}
    for p in e.products:
        num_poly: tuple[Fraction, ...] = (Fraction(1),)
        for j, v in enumerate(p.lam):
            for _ in range(v):
                num_poly = pmul(num_poly, (mu[j], nu[j]))
        den_roots: list[Fraction] = []
        prefac = Fraction(1)
        for form, rat in p.factors:
            c0 = form.lin_eval(mu) + form.const
            c1 = form.lin_eval(nu)
            if c1 == 0:
                for d in rat.den:
                    if c0 + d == 0:
                        raise DegenerateLine(
                            f"line lies inside {form.render()}+{d}=0"
                        )
                    prefac /= c0 + d
                num_poly = pscale(num_poly, peval(rat.num, c0))
            else:
                num_poly = pmul(num_poly, pcompose_affine(rat.num, c0, c1))
                for d in rat.den:
                    den_roots.append((c0 + d) / c1)
                    prefac /= c1
        r = UniRat.make(pscale(num_poly, prefac), tuple(den_roots))
        g = p.scalar.g
        s = p.scalar.s
        re_old, im_old = acc.get(s, (UNIRAT_ZERO, UNIRAT_ZERO))
        acc[s] = (re_old.add(r.scale(g.re)), im_old.add(r.scale(g.im)))

    parts = tuple(
        (s, re, im)
        for s, (re, im) in sorted(acc.items())
        if not (re.is_zero() and im.is_zero())
    )
    return LineRestriction(e.q, mu, nu, parts)


def diagonal_limit(e: MellinExpr) -> ScalarSum:
    """Limit along lambda = (t, ..., t), t -> 0+."""
    line = substitute_line(e, (Fraction(0),) * e.q, (Fraction(1),) * e.q)
    return line.value_at_zero()


def eval_at_point(e: MellinExpr, lam: Sequence[Fraction]) -> ScalarSum | PoleHit:
    lam = tuple(Fraction(v) for v in lam)
    if len(lam) != e.q:
        raise EngineError("point must match the parameter count")
    parts = []
    for p in e.products:
        val = Fraction(1)
        for j, v in enumerate(p.lam):
            val *= lam[j] ** v
        for form, rat in p.factors:
            x = form.lin_eval(lam) + form.const
            for d in rat.den:
                if x + d == 0:
                    return PoleHit(form, d)
            val *= rat.eval_at(x)
        parts.append(p.scalar.scale(val))
    return ScalarSum.make(parts)


# ---------------------------------------------------------------------------
# Pole lines through the origin


@dataclass(frozen=True)
class PoleLine:
    form: AffineForm
    status: str  # "certified" | "cancelled"
    probe_orders: tuple[int, ...]

    def render(self) -> str:
        return f"{self.form.render()}=0: {self.status}"


def pole_lines_near_orthant(e: MellinExpr, seed: int = 0) -> tuple[PoleLine, ...]:
    """Classify the candidate pole hyperplanes through the origin.

    Candidates are the distinct primitive forms ell with a zero root in some
    denominator. Each is probed on three seeded rational lines mu + t*nu
    with mu generic on ell = 0 and nu positive; a strictly negative order of
    the restriction at t = 0 on any probe certifies a genuine pole, while
    order >= 0 on all probes reports the candidate as cancelled.
    """
    composites: set[tuple[tuple[int, ...], int, Fraction]] = set()
    candidates: dict[tuple[int, ...], AffineForm] = {}
    for p in e.products:
        for form, rat in p.factors:
            if form.const != 0 or any(c < 0 for c in form.coeffs):
                raise EngineError("near-orthant analysis needs conic factors")
            if any(d < 0 for d in rat.den):
                raise EngineError("near-orthant analysis needs nonnegative offsets")
            prim = form.primitive()
            for d in rat.den:
                composites.add((form.coeffs, form.const, Fraction(d)))
                if d == 0 and not prim.is_zero():
                    candidates[prim.coeffs] = prim

    out = []
    for key in sorted(candidates):
        ell = candidates[key]
        pivot = next(j for j, c in enumerate(ell.coeffs) if c != 0)
        orders = []
        for probe in range(3):
            rng = random.Random(f"poleline:{seed}:{key}:{probe}")
            mu = _generic_point_on(ell, pivot, composites, rng, e.q)
            nu = tuple(Fraction(rng.randint(1, 9)) for _ in range(e.q))
            orders.append(substitute_line(e, mu, nu).order_at_zero())
        status = "certified" if any(o < 0 for o in orders) else "cancelled"
        out.append(PoleLine(ell, status, tuple(orders)))
    return tuple(out)


def _generic_point_on(
    ell: AffineForm,
    pivot: int,
    composites: set[tuple[tuple[int, ...], int, Fraction]],
    rng: random.Random,
    q: int,
) -> tuple[Fraction, ...]:
    for _ in range(50):
        mu = [Fraction(0)] * q
        for j in range(q):
            if j != pivot:
                mu[j] = Fraction(rng.randint(-9, 9), rng.randint(1, 5))
        rest = sum(ell.coeffs[j] * mu[j] for j in range(q) if j != pivot)
        mu[pivot] = Fraction(-rest, ell.coeffs[pivot])
        ok = True
        for coeffs, const, d in composites:
            if d == 0 and AffineForm(coeffs, const).primitive().coeffs == ell.coeffs:
                continue  # the candidate itself vanishes on all of its hyperplane
            val = sum(c * v for c, v in zip(coeffs, mu)) + const + d
            if val == 0:
                ok = False
                break
        if ok:
            return tuple(mu)
    raise EngineError("could not find a generic probe base point")


def render_closed_form(e: MellinExpr) -> str:
    return e.render()
