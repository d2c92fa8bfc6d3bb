"""Cauchy-Fantappie-Leray currents for sections with monomial components.

The minimal section for the trivial metric is the componentwise conjugate,
u_k = s (dbar s)^(k-1) / |f|^(2k), and the regularized factors are
chi(|x^gt|^2/eps) u_k (U), dbar chi wedge u_k (R, k>0) and 1-chi (R_0).
Frame symbols anticommute among themselves but commute with form
generators (the algebra is Lambda(E) tensor Lambda(T*), no Koszul sign);
this is the convention under which the rank-1 R current reproduces the
scalar residue current with matching sign.  Products are paired with
test forms on a polar tensor grid and the scalar value is read off the
full ascending frame monomial's top form coefficient.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exactcore import EngineError, GaussRational
from .testforms import CutoffProfile, TestForm, cutoff_eval, profile_eval
from .quadrature import (
    EpsilonSchedule,
    GridSpec,
    NumericalResult,
    _BudgetHit,
    _extrapolate,
    _panelize,
)
from .wedge import Grassmann, wedge_sign


class ZeroSection(EngineError):
    pass


class OnZeroSet(EngineError):
    pass


class RankTooLarge(EngineError):
    pass


class DegreeMismatch(EngineError):
    pass


_FACTOR_RE = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def _parse_component(text: str, n: int) -> tuple[GaussRational, tuple[int, ...]]:
    coeff = GaussRational.of(1)
    exps = [0] * n
    for raw in str(text).replace("**", "^").split("*"):
        p = raw.strip()
        sign = 1
        while p[:1] in "+-":
            if p[0] == "-":
                sign = -sign
            p = p[1:].strip()
        if not p:
            raise EngineError(f"empty factor in component {text!r}")
        m = _FACTOR_RE.match(p)
        if m:
            idx = int(m.group(1)) - 1
            if not 0 <= idx < n:
                raise EngineError(f"variable x{idx + 1} out of range in {text!r}")
            exps[idx] += int(m.group(2) or 1)
        else:
            coeff = coeff.mul(GaussRational.parse(p))
        if sign < 0:
            coeff = coeff.neg()
    return coeff, tuple(exps)


def _render_component(coeff: GaussRational, exps: tuple[int, ...]) -> str:
    parts = []
    if not (coeff.re == 1 and coeff.im == 0) or not any(exps):
        parts.append(coeff.render().replace(" ", ""))
    for i, e in enumerate(exps):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    return "*".join(parts)


@dataclass(frozen=True)
class VectorSection:
    """Rank-e section with monomial components and a declared monomial
    support witness gt: {x^gt = 0} must contain the common zero set."""

    rank: int
    components: tuple[tuple[GaussRational, tuple[int, ...]], ...]
    support_witness: tuple[int, ...]

    def __post_init__(self):
        if self.rank != len(self.components) or self.rank < 1:
            raise EngineError("one component per rank required")
        if all(c.is_zero() for c, _ in self.components):
            raise ZeroSection("all components vanish identically")
        n = len(self.support_witness)
        if any(g < 0 for g in self.support_witness):
            raise EngineError("support witness exponents must be nonnegative")
        for _, exps in self.components:
            if len(exps) != n or any(e < 0 for e in exps):
                raise EngineError("component exponent arity mismatch")

    @staticmethod
    def make(
        components: Sequence[str], support_witness: Sequence[int]
    ) -> "VectorSection":
        n = len(support_witness)
        comps = tuple(_parse_component(c, n) for c in components)
        return VectorSection(
            len(comps), comps, tuple(int(g) for g in support_witness)
        )

    @property
    def n(self) -> int:
        return len(self.support_witness)

    def eval(self, x: Sequence[complex]) -> list:
        # complex * ndarray broadcasts, so grid columns work unchanged
        out = []
        for coeff, exps in self.components:
            v = complex(coeff.to_complex())
            for i, e in enumerate(exps):
                if e:
                    v = v * x[i] ** e
            out.append(v)
        return out

    def d_eval(self, ci: int, d: int, x: Sequence[complex]):
        """d component_ci / d x_d at x."""
        coeff, exps = self.components[ci]
        if exps[d] == 0:
            return 0.0
        v = complex(coeff.to_complex()) * exps[d]
        for i, e in enumerate(exps):
            p = e - 1 if i == d else e
            if p:
                v = v * x[i] ** p
        return v

    def norm_sq(self, x: Sequence[complex]):
        acc = 0.0
        for v in self.eval(x):
            acc = acc + np.abs(v) ** 2
        return acc

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "components": [_render_component(c, e) for c, e in self.components],
            "support_witness": list(self.support_witness),
        }

    @staticmethod
    def from_json(doc: dict) -> "VectorSection":
        sec = VectorSection.make(doc["components"], doc["support_witness"])
        if int(doc.get("rank", sec.rank)) != sec.rank:
            raise EngineError("declared rank disagrees with the component count")
        return sec


@dataclass(frozen=True)
class CFLFactorSpec:
    section: VectorSection
    k: int
    kind: str  # "U" | "R"
    cutoff: CutoffProfile = CutoffProfile.smoothstep(3)
    eps: float | None = None

    def __post_init__(self):
        if self.section.rank > 3:
            raise RankTooLarge("rank above 3 is out of scope")
        if self.kind == "U":
            if not 1 <= self.k <= self.section.rank:
                raise EngineError("U degree must lie in 1..rank")
        elif self.kind == "R":
            if not 0 <= self.k <= self.section.rank:
                raise EngineError("R degree must lie in 0..rank")
        else:
            raise EngineError(f"unknown factor kind {self.kind!r}")
        if self.eps is not None and self.eps <= 0:
            raise EngineError("epsilon must be positive")

    @property
    def dxbar_degree(self) -> int:
        if self.kind == "U":
            return self.k - 1
        return self.k if self.k else 0

    @property
    def frame_degree(self) -> int:
        return self.k

    def to_json(self) -> dict:
        doc = {
            "section": self.section.to_json(),
            "k": self.k,
            "kind": self.kind,
            "cutoff": self.cutoff.to_json(),
        }
        if self.eps is not None:
            doc["eps"] = self.eps
        return doc

    @staticmethod
    def from_json(doc: dict) -> "CFLFactorSpec":
        cut = doc.get("cutoff")
        return CFLFactorSpec(
            VectorSection.from_json(doc["section"]),
            int(doc["k"]),
            str(doc["kind"]),
            CutoffProfile.from_json(cut) if cut else CutoffProfile.smoothstep(3),
            float(doc["eps"]) if "eps" in doc else None,
        )


def minimal_section_eval(f: VectorSection, x: Sequence[complex]) -> tuple:
    """Minimal dual section at x for the trivial metric: the componentwise
    conjugate, so that f . s = |f|^2."""
    vals = f.eval([complex(v) for v in x])
    if all(v == 0 for v in vals):
        raise ZeroSection("section vanishes at the evaluation point")
    return tuple(v.conjugate() for v in vals)


class FrameForm:
    """Lambda(E) tensor Lambda(dxbar) element: map frame mask -> Grassmann
    form coefficient over the n dxbar generators.  Frame symbols commute
    with the form generators, so no Koszul sign enters the wedge."""

    __slots__ = ("E", "n", "data")

    def __init__(self, E: int, n: int, data: dict):
        self.E = E
        self.n = n
        self.data = data

    @staticmethod
    def scalar(E: int, n: int, value) -> "FrameForm":
        return FrameForm(E, n, {0: Grassmann.scalar(n, value)})

    def add(self, other: "FrameForm") -> "FrameForm":
        out = dict(self.data)
        for K, g in other.data.items():
            out[K] = out[K].add(g) if K in out else g
        return FrameForm(self.E, self.n, out)

    def scale(self, c) -> "FrameForm":
        return FrameForm(
            self.E, self.n, {K: g.scale(c) for K, g in self.data.items()}
        )

    def wedge(self, other: "FrameForm") -> "FrameForm":
        out: dict = {}
        for K, g in self.data.items():
            for K2, g2 in other.data.items():
                if K & K2:
                    continue
                w = g.wedge(g2).scale(wedge_sign(K, K2))
                key = K | K2
                out[key] = out[key].add(w) if key in out else w
        return FrameForm(self.E, self.n, out)

    def component(self, frame_mask: int) -> Grassmann:
        return self.data.get(frame_mask, Grassmann(self.n, {}))

    def coefficient(self, frame_mask: int, form_mask: int):
        return self.component(frame_mask).component(form_mask)


def _u_element(f: VectorSection, k: int, x: Sequence, E: int, base: int) -> FrameForm:
    """u_k = s (dbar s)^(k-1) / |f|^(2k); this bundle's frame bits start
    at base inside a total frame width E."""
    n = f.n
    vals = f.eval(x)
    norm2 = f.norm_sq(x)
    s_el = FrameForm(E, n, {})
    for i, v in enumerate(vals):
        vc = np.conjugate(v)
        s_el = s_el.add(FrameForm(E, n, {1 << (base + i): Grassmann.scalar(n, vc)}))
    acc = s_el
    if k > 1:
        ds = FrameForm(E, n, {})
        for i in range(f.rank):
            for d in range(n):
                c = f.d_eval(i, d, x)
                if isinstance(c, float) and c == 0.0:
                    continue
                ds = ds.add(FrameForm(
                    E, n, {1 << (base + i): Grassmann.gen(n, d, np.conjugate(c))}
                ))
        for _ in range(k - 1):
            acc = acc.wedge(ds)
    return acc.scale(norm2 ** float(-k))


def _witness_arg(f: VectorSection, tcols: Sequence):
    u = 1.0
    for i, g in enumerate(f.support_witness):
        if g:
            u = u * tcols[i] ** g
    return u


def _factor_element(
    spec: CFLFactorSpec,
    x: Sequence,
    tcols: Sequence,
    xb: Sequence,
    eps: float,
    E: int,
    base: int,
) -> FrameForm:
    f = spec.section
    n = f.n
    u = _witness_arg(f, tcols)
    if spec.kind == "R" and spec.k == 0:
        return FrameForm.scalar(E, n, 1.0 - cutoff_eval(spec.cutoff, u / eps))
    uk = _u_element(f, spec.k, x, E, base)
    if spec.kind == "U":
        return uk.scale(cutoff_eval(spec.cutoff, u / eps))
    dchi = cutoff_eval(spec.cutoff, u / eps, deriv=1) / eps
    dbar_chi = Grassmann(n, {})
    for d in range(n):
        g = f.support_witness[d]
        if g:
            dbar_chi = dbar_chi.add(Grassmann.gen(n, d, dchi * g * u / xb[d]))
    return FrameForm(E, n, {0: dbar_chi}).wedge(uk)


def cfl_factor_eval(
    spec: CFLFactorSpec, x: Sequence[complex], eps: float | None = None
) -> FrameForm:
    """Coefficients of the regularized factor at a point, as a FrameForm
    over this section's rank frame bits and n dxbar generators."""
    eps = spec.eps if eps is None else float(eps)
    if eps is None or eps <= 0:
        raise EngineError("a positive epsilon is required")
    f = spec.section
    xs = [complex(v) for v in x]
    if spec.k > 0 and all(v == 0 for v in f.eval(xs)):
        raise OnZeroSet("factor is evaluated on the zero set of the section")
    t = [abs(v) ** 2 for v in xs]
    xb = [v.conjugate() for v in xs]
    return _factor_element(spec, xs, t, xb, eps, f.rank, 0)


def _cfl_grid_eval(
    specs: Sequence[CFLFactorSpec],
    phi: TestForm,
    eps: Sequence[float],
    grid: GridSpec,
    level: int,
) -> complex:
    n = phi.n
    E = sum(sp.section.rank for sp in specs)

    deg = phi.max_angular_degree() + 1
    for sp in specs:
        comp_deg = max(
            (sum(e) for _, e in sp.section.components), default=0
        )
        deg += sp.k * (comp_deg + 1) + max(sp.section.support_witness, default=0)
    ang = grid.angular_order or (2 * deg + 6)
    if ang < deg + 2:
        raise EngineError("angular order below the exactness threshold")

    # radial axes: floors from chi/chi' supports, caps from (1-chi) factors
    axes = []
    for i in range(n):
        lo, hi = 0.0, 1.0
        anchors: set[float] = set()
        if not phi.profiles[i].is_beta:
            anchors.add(0.5)
        for sp, e in zip(specs, eps):
            g = sp.section.support_witness[i]
            if not g:
                continue
            for thresh in (e / 2.0, e):
                a = thresh ** (1.0 / g)
                if 0.0 < a < 1.0:
                    anchors.add(a)
            if sp.kind == "R" and sp.k == 0:
                hi = min(hi, min(1.0, e ** (1.0 / g)))
            else:
                lo = max(lo, min(1.0, (e / 2.0) ** (1.0 / g)))
            sup = [v for v, gg in enumerate(sp.section.support_witness) if gg]
            if sp.kind == "R" and sp.k > 0 and len(sup) == 1:
                hi = min(hi, min(1.0, e ** (1.0 / g)))
        if lo >= hi:
            return 0.0 + 0.0j
        edges = sorted({lo, hi} | {a for a in anchors if lo < a < hi})
        axes.append(_panelize(edges, grid.radial_panels * 2 ** level, grid.gauss_order))

    shape = tuple(len(nodes) for nodes, _ in axes) + (ang,) * n
    total = int(np.prod([np.int64(s) for s in shape]))
    if total > grid.budget:
        raise _BudgetHit()

    theta = 2.0 * math.pi * np.arange(ang) / ang
    wtheta = 2.0 * math.pi / ang
    phi_mask = 0
    for i in phi.M:
        phi_mask |= 1 << i

    def eval_block(nodes0, wts0) -> complex:
        blk = (len(nodes0),) + shape[1:]
        wrad = np.ones(blk[:n])
        T = []
        TH = []
        for d in range(n):
            nodes, wts = (nodes0, wts0) if d == 0 else axes[d]
            sl = [None] * n
            sl[d] = slice(None)
            wrad = wrad * wts[tuple(sl)]
            T.append(nodes.reshape(
                tuple(len(nodes) if k == d else 1 for k in range(n)) + (1,) * n
            ))
            sh = [1] * (2 * n)
            sh[n + d] = ang
            TH.append(theta.reshape(tuple(sh)))

        X = [np.sqrt(T[d]) * np.exp(1j * TH[d]) for d in range(n)]
        XB = [np.conjugate(x) for x in X]

        rho_all = 1.0
        for d in range(n):
            rho_all = rho_all * profile_eval(phi.profiles[d], T[d])
        phi_coef = 0.0
        for k, mm, c in phi.coeff:
            coefv = complex(c.to_complex()) * rho_all
            for d in range(n):
                if k[d]:
                    coefv = coefv * X[d] ** k[d]
                if mm[d]:
                    coefv = coefv * XB[d] ** mm[d]
            phi_coef = phi_coef + coefv
        elem = FrameForm(E, n, {0: Grassmann(n, {phi_mask: phi_coef})})

        # factors wedge from the left, so the last factor sits leftmost in
        # the product; giving it the lowest frame bits makes the ascending
        # full-frame monomial carry a plus sign
        base = E
        for sp, e in zip(specs, eps):
            base -= sp.section.rank
            elem = _factor_element(sp, X, T, XB, e, E, base).wedge(elem)

        top = elem.component((1 << E) - 1).top()
        if isinstance(top, float):
            return 0.0 + 0.0j
        integ = np.broadcast_to(top, blk) * wrad.reshape(wrad.shape + (1,) * n)
        return complex(np.sum(integ))

    nodes0, wts0 = axes[0]
    rest = max(1, total // max(1, len(nodes0)))
    block = max(1, min(len(nodes0), int(1_500_000 // rest) or 1))
    acc = 0.0 + 0.0j
    for start in range(0, len(nodes0), block):
        acc += eval_block(nodes0[start:start + block], wts0[start:start + block])
    s_n = -1.0 if (n * (n - 1) // 2) % 2 else 1.0
    return s_n * (1j ** n) * (wtheta ** n) * acc


def _check_product(specs: Sequence[CFLFactorSpec], phi: TestForm) -> None:
    if not specs:
        raise EngineError("empty factor list")
    n = phi.n
    if n > 2:
        raise EngineError("products with more than 2 variables are out of scope")
    if any(sp.section.n != n for sp in specs):
        raise EngineError("section arity differs from the test form")
    total = sum(sp.dxbar_degree for sp in specs) + len(phi.M)
    if total != n:
        raise DegreeMismatch(
            f"total antiholomorphic degree {total} differs from n={n}"
        )
    for sp in specs:
        if 0 < sp.frame_degree < sp.section.rank:
            raise DegreeMismatch(
                "factor degree must be 0 or the full rank for a scalar pairing"
            )


def cfl_regularized_eval(
    specs: Sequence[CFLFactorSpec],
    phi: TestForm,
    eps: Sequence[float],
    grid: GridSpec | None = None,
) -> NumericalResult:
    """Product of regularized factors (in list order, innermost first)
    paired with phi at fixed epsilon."""
    grid = grid or GridSpec()
    _check_product(specs, phi)
    eps = tuple(float(x) for x in eps)
    if len(eps) != len(specs) or any(x <= 0 for x in eps):
        raise EngineError("one positive epsilon per factor required")
    history: list[dict] = []
    best = None
    unc = math.inf
    flag = False
    for level in range(grid.max_level + 1):
        try:
            val = _cfl_grid_eval(specs, phi, eps, grid, level)
        except _BudgetHit:
            flag = True
            break
        history.append({"level": level, "value": val})
        if best is not None:
            unc = abs(val - best)
        best = val
        if unc <= grid.tol * max(1.0, abs(val)):
            break
    if best is None:
        return NumericalResult(0.0 + 0.0j, math.inf, {"history": history}, True, False)
    converged = not flag and unc <= grid.tol * max(1.0, abs(best))
    if unc is math.inf:
        unc = abs(best)
    return NumericalResult(best, float(unc), {"history": history}, flag, bool(converged))


def cfl_product_eval(
    specs: Sequence[CFLFactorSpec],
    phi: TestForm,
    schedule: EpsilonSchedule | None = None,
    grid: GridSpec | None = None,
) -> NumericalResult:
    """Iterated-limit value of the ordered factor product paired with phi;
    the first factor's epsilon is sent to zero first."""
    schedule = schedule or EpsilonSchedule()
    grid = grid or GridSpec()
    _check_product(specs, phi)
    q = len(specs)
    ladder = schedule.ladder()
    state = {"grid_unc": 0.0, "budget": False}

    def base(eps: tuple[float, ...]) -> complex:
        r = cfl_regularized_eval(specs, phi, eps, grid)
        state["grid_unc"] = max(state["grid_unc"], r.uncertainty)
        state["budget"] = state["budget"] or r.budget_exceeded
        return r.value

    if schedule.kind == "iterated":

        def est(j: int, tail: tuple[float, ...]) -> tuple[complex, float, bool]:
            if j == 0:
                return base(tail), 0.0, True
            scale = min(tail) if tail else 1.0
            vals = []
            child_unc = 0.0
            child_ok = True
            for ek in ladder:
                v, u, ok = est(j - 1, (scale * ek,) + tail)
                child_unc = max(child_unc, u)
                child_ok = child_ok and ok
                vals.append(v)
            v, u, ok = _extrapolate(vals)
            return v, u + child_unc, ok and child_ok

        history = []
        child_unc = 0.0
        child_ok = True
        for ek in ladder:
            v, u, ok = est(q - 1, (ek,))
            child_unc = max(child_unc, u)
            child_ok = child_ok and ok
            history.append(v)
        value, unc, ok = _extrapolate(history)
        unc += child_unc
        ok = ok and child_ok
    else:
        if schedule.kind == "tower":
            paths = [
                tuple(d ** (schedule.beta ** (q - 1 - j)) for j in range(q))
                for d in ladder
            ]
        elif schedule.kind == "diagonal":
            paths = [(d,) * q for d in ladder]
        else:
            paths = [tuple(e) for e in schedule.custom]
            ladder = [min(p) for p in paths]
        history = [base(p) for p in paths]
        value, unc, ok = _extrapolate(history)

    return NumericalResult(
        value=value,
        uncertainty=float(unc + state["grid_unc"]),
        diagnostics={"schedule": schedule.kind, "ladder": ladder,
                     "history": history},
        budget_exceeded=state["budget"],
        converged=bool(ok and not state["budget"]),
    )
