"""Numerical evaluation of regularized residue and tube integrals.

For monomial steps and monomial-coefficient test forms the angular integrals
are exact, leaving radial integrals over (0,1)^n that factor over the
variable-coupling components of the step list.  A full polar-grid path
handles positive radial weight polynomials (the |v|^2 freedom); indicator
cutoffs ride the reduced path, where the residue tube becomes an exact
change of variables.  Epsilon schedules and extrapolation estimate the
iterated limits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .currents import ProductStep, orientation_sign
from .exactcore import EngineError, ExactScalar, as_fraction
from .testforms import (
    CutoffProfile,
    DerivativeOfIndicator,
    RadialProfile,
    TestForm,
    cutoff_eval,
    moment,
    profile_eval,
)
from .wedge import Grassmann


class NotReducible(EngineError):
    pass


class NonPositiveWeight(EngineError):
    pass


class DegenerateFit(EngineError):
    pass


class _BudgetHit(Exception):
    pass


# ---------------------------------------------------------------------------
# Specs


@dataclass(frozen=True)
class Weight:
    """Radial polynomial w = sum c * prod t_i^{r_i} in t_i = |x_i|^2."""

    n: int
    terms: tuple[tuple[tuple[int, ...], Fraction], ...] = ()

    @staticmethod
    def one(n: int) -> "Weight":
        return Weight(n, (((0,) * n, Fraction(1)),))

    @staticmethod
    def make(n: int, terms: Sequence[tuple[Sequence[int], object]]) -> "Weight":
        out = tuple(
            (tuple(int(r) for r in rexp), as_fraction(c)) for rexp, c in terms
        )
        for rexp, _ in out:
            if len(rexp) != n or any(r < 0 for r in rexp):
                raise EngineError("bad weight exponents")
        w = Weight(n, out)
        w.check_positive()
        return w

    def is_one(self) -> bool:
        return len(self.terms) == 1 and all(
            r == 0 for r in self.terms[0][0]
        ) and self.terms[0][1] == 1

    def check_positive(self) -> None:
        """Positivity on the closed unit polydisc, by interval bound with a
        deterministic sample fallback.  The interval bound (each nonconstant
        term ranging over [min(c,0), max(c,0)]) is sufficient but not
        necessary; when it fails, a dense grid sample must stay positive."""
        lo = Fraction(0)
        for rexp, c in self.terms:
            lo += c if all(r == 0 for r in rexp) else min(c, Fraction(0))
        if lo > 0:
            return
        pts = 17 if self.n <= 2 else 7
        samples = [Fraction(k, pts - 1) for k in range(pts)]
        grid_min = None
        idx = [0] * self.n
        while True:
            t = [samples[idx[i]] for i in range(self.n)]
            v = Fraction(0)
            for rexp, c in self.terms:
                term = c
                for i, r in enumerate(rexp):
                    if r:
                        term *= t[i] ** r
                v += term
            grid_min = v if grid_min is None else min(grid_min, v)
            pos = self.n - 1
            while pos >= 0 and idx[pos] == pts - 1:
                idx[pos] = 0
                pos -= 1
            if pos < 0:
                break
            idx[pos] += 1
        if grid_min is None or grid_min <= 0:
            raise NonPositiveWeight(
                "weight is not positive on the closed polydisc"
            )

    def bounds(self) -> tuple[float, float]:
        lo = hi = 0.0
        for rexp, c in self.terms:
            cf = float(c)
            if all(r == 0 for r in rexp):
                lo += cf
                hi += cf
            else:
                lo += min(cf, 0.0)
                hi += max(cf, 0.0)
        return lo, hi

    def eval_t(self, tcols: Sequence[np.ndarray]) -> np.ndarray:
        acc = 0.0
        for rexp, c in self.terms:
            term = float(c)
            for i, r in enumerate(rexp):
                if r:
                    term = term * tcols[i] ** r
            acc = acc + term
        return acc if isinstance(acc, np.ndarray) else acc + np.zeros_like(tcols[0])

    def dt_eval(self, i: int, tcols: Sequence[np.ndarray]) -> np.ndarray:
        acc = 0.0
        for rexp, c in self.terms:
            if rexp[i] == 0:
                continue
            term = float(c) * rexp[i]
            for k, r in enumerate(rexp):
                p = r - 1 if k == i else r
                if p:
                    term = term * tcols[k] ** p
            acc = acc + term
        return acc if isinstance(acc, np.ndarray) else acc + np.zeros_like(tcols[0])

    def to_json(self) -> dict:
        return {
            "terms": [
                {"r": list(rexp), "c": str(c)} for rexp, c in self.terms
            ]
        }

    @staticmethod
    def from_json(doc: dict, n: int) -> "Weight":
        return Weight.make(
            n, [(t["r"], Fraction(t["c"])) for t in doc["terms"]]
        )


@dataclass(frozen=True)
class RegStep:
    kind: str
    gamma: tuple[int, ...]
    gamma_tilde: tuple[int, ...]
    cutoff: CutoffProfile
    weight: Weight

    def __post_init__(self):
        if self.kind not in ("PV", "RES"):
            raise EngineError(f"unknown step kind {self.kind!r}")
        if len(self.gamma_tilde) != len(self.gamma):
            raise EngineError("gamma_tilde arity mismatch")
        if any((g > 0) != (h > 0) for g, h in zip(self.gamma, self.gamma_tilde)):
            raise EngineError("gamma_tilde must keep the step's support")

    @property
    def n(self) -> int:
        return len(self.gamma)


@dataclass(frozen=True)
class RegularizedSpec:
    steps: tuple[RegStep, ...]
    testform: TestForm
    epsilon: tuple[float, ...] | None = None

    @staticmethod
    def make(
        steps: Sequence[ProductStep],
        testform: TestForm,
        cutoff: CutoffProfile | Sequence[CutoffProfile] | None = None,
        weights: Sequence[Weight | None] | None = None,
        gamma_tilde: Sequence[Sequence[int]] | None = None,
        epsilon: Sequence[float] | None = None,
    ) -> "RegularizedSpec":
        if not steps:
            raise EngineError("empty step list")
        n = steps[0].n
        if testform.n != n or any(st.n != n for st in steps):
            raise EngineError("arity mismatch between steps and test form")
        if n > 4:
            raise EngineError("more than 4 variables is out of scope")
        q = len(steps)
        if cutoff is None:
            cutoff = CutoffProfile.smoothstep(3)
        cuts = [cutoff] * q if isinstance(cutoff, CutoffProfile) else list(cutoff)
        gts = [st.gamma for st in steps] if gamma_tilde is None else [
            tuple(int(g) for g in row) for row in gamma_tilde
        ]
        ws = [None] * q if weights is None else list(weights)
        reg = tuple(
            RegStep(
                st.kind,
                st.gamma,
                gts[j],
                cuts[j],
                ws[j] if ws[j] is not None else Weight.one(n),
            )
            for j, st in enumerate(steps)
        )
        for w in (ws[j] for j in range(q)):
            if w is not None:
                w.check_positive()
        eps = None if epsilon is None else tuple(float(x) for x in epsilon)
        return RegularizedSpec(reg, testform, eps)

    @property
    def n(self) -> int:
        return self.steps[0].n

    @property
    def q(self) -> int:
        return len(self.steps)

    def all_weights_one(self) -> bool:
        return all(st.weight.is_one() for st in self.steps)


@dataclass(frozen=True)
class GridSpec:
    radial_panels: int = 6
    gauss_order: int = 8
    angular_order: int = 0  # 0 = automatic (degree-exact)
    max_level: int = 3
    tol: float = 1e-7
    budget: int = 4_000_000
    threads: int = 1

    def __post_init__(self):
        if self.radial_panels < 1 or self.gauss_order < 2:
            raise EngineError("grid too coarse")
        if self.tol <= 0 or self.budget < 1000:
            raise EngineError("bad grid tolerances")


@dataclass(frozen=True)
class EpsilonSchedule:
    kind: str = "iterated"  # iterated | tower | diagonal | custom
    start: float = 0.25
    ratio: float = 4.0
    length: int = 6
    beta: float = 2.0
    custom: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in ("iterated", "tower", "diagonal", "custom"):
            raise EngineError(f"unknown schedule kind {self.kind!r}")
        if self.ratio <= 1 or self.start <= 0 or self.length < 3:
            raise EngineError("bad ladder parameters")
        if self.kind == "tower" and self.beta <= 1:
            raise EngineError("tower base must exceed 1")
        if self.kind == "custom" and not self.custom:
            raise EngineError("custom schedule needs entries")
        for eps in self.custom:
            if any(e <= 0 for e in eps):
                raise EngineError("custom schedule entries must be positive")

    def ladder(self) -> list[float]:
        return [self.start * self.ratio ** (-k) for k in range(self.length)]


@dataclass
class NumericalResult:
    value: complex
    uncertainty: float
    diagnostics: dict = field(default_factory=dict)
    budget_exceeded: bool = False
    converged: bool = True


# ---------------------------------------------------------------------------
# Angular reduction


@dataclass(frozen=True)
class ReducedTerm:
    scalar: complex          # c * sigma * det * (2*pi*i)^n
    exact_scalar: ExactScalar
    e: tuple[int, ...]       # radial exponent of t_i
    mc: tuple[int, ...]      # variables carrying the residue differentials


@dataclass(frozen=True)
class ReducedIntegrand:
    spec: RegularizedSpec
    terms: tuple[ReducedTerm, ...]
    components: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]  # (vars, steps)
    untouched: tuple[int, ...]

    def eval(self, eps: Sequence[float], grid: GridSpec, level: int = 0) -> complex:
        return _eval_reduced(self, tuple(float(x) for x in eps), grid, level)


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


def _select_terms(spec: RegularizedSpec) -> tuple[ReducedTerm, ...]:
    """Angular selection shared by every monomial path.

    Identical bookkeeping to the exact Mellin expansion: per test form
    monomial, the residue differentials are forced onto mc = complement(M),
    the bijection sum collapses to sigma * det of the incidence matrix, and
    each variable keeps radial exponent e_i = k_i - G_i.
    """
    phi = spec.testform
    n = spec.n
    G = [sum(st.gamma[i] for st in spec.steps) for i in range(n)]
    res_steps = [j for j, st in enumerate(spec.steps) if st.kind == "RES"]
    res_desc = sorted(res_steps, reverse=True)
    out = []
    for k, m, c in phi.coeff:
        delta = [m[i] - k[i] + G[i] for i in range(n)]
        if any(dv not in (0, 1) for dv in delta):
            continue
        mc = tuple(i for i in range(n) if delta[i] == 1)
        if mc != phi.M_complement or len(mc) != len(res_steps):
            continue
        A = [[spec.steps[j].gamma_tilde[i] for i in mc] for j in res_desc]
        det = _det_int(A)
        if det == 0:
            continue
        sigma = orientation_sign(mc, phi.M, n)
        exact = ExactScalar(c.scale(Fraction(sigma * det)), n)
        e = tuple(k[i] - G[i] for i in range(n))
        out.append(ReducedTerm(exact.to_complex(), exact, e, mc))
    return tuple(out)


def _coupling_components(
    spec: RegularizedSpec,
) -> tuple[tuple[tuple[tuple[int, ...], tuple[int, ...]], ...], tuple[int, ...]]:
    n = spec.n
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for st in spec.steps:
        sup = [i for i, g in enumerate(st.gamma_tilde) if g > 0]
        for a, b in zip(sup, sup[1:]):
            parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    touched = set()
    for st in spec.steps:
        touched.update(i for i, g in enumerate(st.gamma_tilde) if g > 0)
    comps = []
    untouched = []
    for root in sorted(groups, key=lambda r: min(groups[r])):
        vars_c = tuple(sorted(groups[root]))
        if not any(v in touched for v in vars_c):
            untouched.extend(vars_c)
            continue
        step_idx = tuple(
            j
            for j, st in enumerate(spec.steps)
            if any(st.gamma_tilde[i] > 0 for i in vars_c)
        )
        comps.append((vars_c, step_idx))
    return tuple(comps), tuple(sorted(untouched))


def angular_reduce(spec: RegularizedSpec) -> ReducedIntegrand:
    """Exact angular integration for weight-free monomial specs."""
    if not spec.all_weights_one():
        raise NotReducible("nontrivial weights require the full polar grid")
    comps, untouched = _coupling_components(spec)
    return ReducedIntegrand(spec, _select_terms(spec), comps, untouched)


# ---------------------------------------------------------------------------
# Radial grids


def _gauss_cache(order: int):
    nodes, wts = np.polynomial.legendre.leggauss(order)
    return nodes, wts


def _panelize(
    edges: Sequence[float], n_sub_total: int, gauss_order: int
) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes over each interval between successive edges, each interval
    subdivided proportionally to its logarithmic (or linear near 0) width."""
    gx, gw = _gauss_cache(gauss_order)
    widths = []
    for lo, hi in zip(edges, edges[1:]):
        if lo > 0:
            widths.append(math.log(hi / lo))
        else:
            widths.append(4.0 * (hi - lo))  # linear stretch stands in for log
    total_w = sum(widths) or 1.0
    nodes = []
    weights = []
    for (lo, hi), wdt in zip(zip(edges, edges[1:]), widths):
        sub = max(1, round(n_sub_total * wdt / total_w))
        if lo > 0:
            cuts = [lo * (hi / lo) ** (k / sub) for k in range(sub + 1)]
        else:
            cuts = [lo + (hi - lo) * k / sub for k in range(sub + 1)]
        for a, b in zip(cuts, cuts[1:]):
            half = 0.5 * (b - a)
            nodes.append(half * gx + 0.5 * (a + b))
            weights.append(half * gw)
    return np.concatenate(nodes), np.concatenate(weights)


def _var_grid(
    i: int,
    steps: Sequence[tuple],
    profile: RadialProfile,
    grid: GridSpec,
    level: int,
    gauss_order: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Radial nodes/weights for t_i on its support, with panel edges anchored
    at every cutoff transition radius of the steps touching the variable.

    Entries are (step, eps) or (step, eps_lo, eps_hi); the window form covers
    weighted steps, whose transition zone spreads over [eps/w_max, eps/w_min].
    """
    lo, hi = 0.0, 1.0
    anchors: set[float] = set()
    if not profile.is_beta:
        anchors.add(0.5)
    for st, *window in steps:
        e_lo, e_hi = float(window[0]), float(window[-1])
        g = st.gamma_tilde[i]
        if g == 0:
            continue
        support_floor = e_lo if st.cutoff.is_indicator else e_lo / 2.0
        lo = max(lo, min(1.0, support_floor ** (1.0 / g)))
        for thresh in (e_lo / 2.0, e_lo, e_hi / 2.0, e_hi):
            a = thresh ** (1.0 / g)
            if 0.0 < a < 1.0:
                anchors.add(a)
        sup = [v for v, gg in enumerate(st.gamma_tilde) if gg > 0]
        if st.kind == "RES" and len(sup) == 1 and not st.cutoff.is_indicator:
            hi = min(hi, min(1.0, e_hi ** (1.0 / g)))
    if lo >= hi:
        lo = max(0.0, hi * 0.5)
    edges = sorted({lo, hi} | {a for a in anchors if lo < a < hi})
    n_sub = grid.radial_panels * (2 ** level)
    return _panelize(edges, n_sub, gauss_order or grid.gauss_order)


def _tree_sum(vals: Sequence[complex]) -> complex:
    items = list(vals)
    if not items:
        return 0.0 + 0.0j
    while len(items) > 1:
        items = [
            items[k] + items[k + 1] if k + 1 < len(items) else items[k]
            for k in range(0, len(items), 2)
        ]
    return items[0]


class _PointBudget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def charge(self, pts: int):
        self.used += pts
        if self.used > self.limit:
            raise _BudgetHit()


# ---------------------------------------------------------------------------
# Reduced-path evaluation


def _component_integral(
    vars_c: Sequence[int],
    steps_c: Sequence[tuple[RegStep, float]],
    e: Sequence[int],
    profiles: Sequence[RadialProfile],
    grid: GridSpec,
    level: int,
    budget: _PointBudget,
    lam: dict[int, int] | None = None,
    extra_prefactors: dict[int, float] | None = None,
) -> complex:
    """Integral over the t-variables of one coupling component:
    prod_steps F_j(u_j/eps_j) * prod_i t_i^{e_i} rho_i(t_i) dt."""
    gauss = None
    if lam is not None:
        deg = 0
        for i in vars_c:
            d = e[i] + profiles[i].d + sum(
                st.gamma_tilde[i] * lv for (st, _), lv in zip(steps_c, lam.values())
            )
            deg = max(deg, d)
        gauss = max(grid.gauss_order, deg // 2 + 2)
    axes = []
    for i in vars_c:
        if lam is None:
            nodes, wts = _var_grid(i, steps_c, profiles[i], grid, level, gauss)
        else:
            edges = [0.0, 1.0] if profiles[i].is_beta else [0.0, 0.5, 1.0]
            nodes, wts = _panelize(edges, grid.radial_panels * 2 ** level, gauss)
        axes.append((nodes, wts))
    shape = tuple(len(nodes) for nodes, _ in axes)
    budget.charge(int(np.prod(shape)))

    tcols = []
    wfull = np.ones(shape)
    for d, (nodes, wts) in enumerate(axes):
        sl = [None] * len(axes)
        sl[d] = slice(None)
        tcols.append(nodes[tuple(sl)])
        wfull = wfull * wts[tuple(sl)]

    integ = wfull
    for d, i in enumerate(vars_c):
        ti = tcols[d]
        integ = integ * ti ** e[i] * profile_eval(profiles[i], ti)
    for idx, (st, eps) in enumerate(steps_c):
        u = 1.0
        for d, i in enumerate(vars_c):
            g = st.gamma_tilde[i]
            if g:
                u = u * tcols[d] ** g
        if extra_prefactors and idx in extra_prefactors:
            u = u * extra_prefactors[idx]
        if lam is not None:
            lv = lam[idx]
            fac = u ** lv
            if st.kind == "RES":
                fac = fac * lv
        else:
            s = u / eps
            if st.kind == "RES":
                fac = s * cutoff_eval(st.cutoff, s, deriv=1)
            else:
                fac = cutoff_eval(st.cutoff, s)
        integ = integ * fac
    return complex(np.sum(integ))


def _eval_reduced(
    red: ReducedIntegrand,
    eps: tuple[float, ...],
    grid: GridSpec,
    level: int,
    lam: Sequence[int] | None = None,
) -> complex:
    spec = red.spec
    if lam is None and (len(eps) != spec.q or any(x <= 0 for x in eps)):
        raise EngineError("one positive epsilon per step required")
    budget = _PointBudget(grid.budget)
    profiles = spec.testform.profiles
    partials = []

    def component_job(args):
        vars_c, step_idx, term = args
        steps_c = [
            (spec.steps[j], eps[j] if lam is None else 1.0) for j in step_idx
        ]
        lam_c = None if lam is None else {
            k: lam[j] for k, j in enumerate(step_idx)
        }
        return _component_integral(
            vars_c, steps_c, term.e, profiles, grid, level, budget, lam_c
        )

    for term in red.terms:
        jobs = [(vars_c, step_idx, term) for vars_c, step_idx in red.components]
        if grid.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=grid.threads) as ex:
                factors = list(ex.map(component_job, jobs))
        else:
            factors = [component_job(j) for j in jobs]
        val = term.scalar
        for f in factors:
            val = val * f
        for i in red.untouched:
            val = val * float(moment(profiles[i], term.e[i]))
        partials.append(val)
    return _tree_sum(partials)


# ---------------------------------------------------------------------------
# Tube path (indicator residues)


def _frac_inverse(A: list[list[int]]) -> list[list[Fraction]]:
    k = len(A)
    M = [[Fraction(A[r][c]) for c in range(k)] + [
        Fraction(1 if c == r else 0) for c in range(k)
    ] for r in range(k)]
    for col in range(k):
        piv = next((r for r in range(col, k) if M[r][col] != 0), None)
        if piv is None:
            raise EngineError("singular residue incidence matrix")
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [x * inv for x in M[col]]
        for r in range(k):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [row[k:] for row in M]


def _eval_tube(
    red: ReducedIntegrand, eps: tuple[float, ...], grid: GridSpec, level: int
) -> tuple[complex, bool]:
    """Tube value at fixed epsilon; second return marks an exact (quadrature
    free) evaluation."""
    spec = red.spec
    n = spec.n
    res_idx = [j for j, st in enumerate(spec.steps) if st.kind == "RES"]
    res_desc = sorted(res_idx, reverse=True)
    pv_idx = [j for j, st in enumerate(spec.steps) if st.kind == "PV"]
    profiles = spec.testform.profiles
    budget = _PointBudget(grid.budget)
    partials = []
    exact = True
    for term in red.terms:
        mc = list(term.mc)
        A = [[spec.steps[j].gamma_tilde[i] for i in mc] for j in res_desc]
        det = _det_int(A)
        if det == 0:
            continue  # degenerate tube direction: no surface contribution
        B = _frac_inverse(A)
        partials.append(
            _tube_term(
                spec, term, mc, res_desc, pv_idx, B, det, eps, grid, level,
                budget, profiles,
            )
        )
        if term.mc != tuple(range(n)):
            exact = False
    return _tree_sum(partials), exact and not pv_idx


def _tube_term(
    spec, term, mc, res_desc, pv_idx, B, det, eps, grid, level, budget, profiles
) -> complex:
    n = spec.n
    M_vars = [i for i in range(n) if i not in mc]
    # term.scalar carries sigma*det; the log-linear change of variables
    # contributes the Jacobian 1/|det|, leaving sigma*sgn(det)
    scalar = term.scalar / abs(det)
    log_eps = [math.log(eps[j]) for j in res_desc]

    if not M_vars:
        tvals = []
        for r, i in enumerate(mc):
            lg = sum(float(B[r][c]) * log_eps[c] for c in range(len(mc)))
            tvals.append(math.exp(lg))
        val = 1.0
        for (i, tv) in zip(mc, tvals):
            if tv >= 1.0:
                return 0.0 + 0.0j
            val *= tv ** (term.e[i] + 1) * float(profile_eval(profiles[i], tv))
        for j in pv_idx:
            st = spec.steps[j]
            u = 1.0
            for r, i in enumerate(mc):
                if st.gamma_tilde[i]:
                    u *= tvals[r] ** st.gamma_tilde[i]
            val *= float(cutoff_eval(st.cutoff, u / eps[j]))
        return scalar * val

    # quadrature over the M variables
    axes = []
    pv_steps = [(spec.steps[j], eps[j]) for j in pv_idx]
    for i in M_vars:
        nodes, wts = _var_grid(i, pv_steps, profiles[i], grid, level)
        axes.append((nodes, wts))
    shape = tuple(len(nodes) for nodes, _ in axes)
    budget.charge(int(np.prod(shape)))
    tcols = []
    wfull = np.ones(shape)
    for d, (nodes, wts) in enumerate(axes):
        sl = [None] * len(axes)
        sl[d] = slice(None)
        tcols.append(nodes[tuple(sl)])
        wfull = wfull * wts[tuple(sl)]

    logeps = np.array([math.log(eps[j]) for j in res_desc])
    # rhs_c = log eps_c - sum_{i in M} gamma_tilde[c][i] log t_i
    rhs = []
    for c, j in enumerate(res_desc):
        st = spec.steps[j]
        r = logeps[c]
        for d, i in enumerate(M_vars):
            if st.gamma_tilde[i]:
                r = r - st.gamma_tilde[i] * np.log(tcols[d])
        rhs.append(r)
    integ = wfull
    tmc = []
    for r, i in enumerate(mc):
        lg = 0.0
        for c in range(len(mc)):
            b = float(B[r][c])
            if b:
                lg = lg + b * rhs[c]
        ti = np.exp(lg)
        tmc.append(ti)
        integ = integ * np.where(
            ti < 1.0, ti ** (term.e[i] + 1) * profile_eval(profiles[i], ti), 0.0
        )
    for d, i in enumerate(M_vars):
        ti = tcols[d]
        integ = integ * ti ** term.e[i] * profile_eval(profiles[i], ti)
    for j in pv_idx:
        st = spec.steps[j]
        u = 1.0
        for r, i in enumerate(mc):
            if st.gamma_tilde[i]:
                u = u * tmc[r] ** st.gamma_tilde[i]
        for d, i in enumerate(M_vars):
            if st.gamma_tilde[i]:
                u = u * tcols[d] ** st.gamma_tilde[i]
        integ = integ * cutoff_eval(st.cutoff, u / eps[j])
    return scalar * complex(np.sum(integ))


# ---------------------------------------------------------------------------
# Full polar-grid path (general weights)


def _angular_degree(spec: RegularizedSpec) -> int:
    deg = spec.testform.max_angular_degree()
    for st in spec.steps:
        deg += max(max(st.gamma), max(st.gamma_tilde))
    return deg + 1  # 1/xbar shifts


def _full_grid_eval(
    spec: RegularizedSpec, eps: tuple[float, ...], grid: GridSpec, level: int
) -> complex:
    n = spec.n
    for st in spec.steps:
        if st.cutoff.is_indicator:
            raise DerivativeOfIndicator(
                "indicator cutoffs are only supported on the reduced path"
            )
    ang = grid.angular_order or (2 * _angular_degree(spec) + 4)
    if ang < _angular_degree(spec) + 2:
        raise EngineError("angular order below the exactness threshold")

    axes = []
    for i in range(n):
        touching = []
        for j, st in enumerate(spec.steps):
            if st.gamma_tilde[i] > 0:
                w_lo, w_hi = st.weight.bounds()
                # the weight range turns each transition radius into a window
                touching.append((st, eps[j] / w_hi, eps[j] / max(w_lo, 1e-300)))
        nodes, wts = _var_grid(
            i, touching, spec.testform.profiles[i], grid, level
        )
        axes.append((nodes, wts))

    theta = 2.0 * math.pi * np.arange(ang) / ang
    wtheta = 2.0 * math.pi / ang

    shape = tuple(len(nodes) for nodes, _ in axes) + (ang,) * n
    total_pts = int(np.prod(shape))
    if total_pts > grid.budget:
        raise _BudgetHit()

    # radial tensor first, then angular tensor; flatten at the end
    tcols = []
    wrad = np.ones(tuple(len(nodes) for nodes, _ in axes))
    for d, (nodes, wts) in enumerate(axes):
        sl = [None] * n
        sl[d] = slice(None)
        tcols.append(nodes)
        wrad = wrad * wts[tuple(sl)]

    # broadcast helpers: radial index axes 0..n-1, angular axes n..2n-1
    T = []
    TH = []
    for d in range(n):
        T.append(np.asarray(tcols[d]).reshape(
            tuple(len(axes[d][0]) if k == d else 1 for k in range(n)) + (1,) * n
        ))
        sh = [1] * (2 * n)
        sh[n + d] = ang
        TH.append(theta.reshape(tuple(sh)))

    X = [np.sqrt(T[d]) * np.exp(1j * TH[d]) for d in range(n)]
    XB = [np.conjugate(x) for x in X]

    phi = spec.testform
    elem = Grassmann(n, {})
    rho_all = 1.0
    for d in range(n):
        rho_all = rho_all * profile_eval(phi.profiles[d], T[d])
    for k, m, c in phi.coeff:
        coefv = complex(c.to_complex()) * rho_all
        for d in range(n):
            if k[d]:
                coefv = coefv * X[d] ** k[d]
            if m[d]:
                coefv = coefv * XB[d] ** m[d]
        mask = 0
        for i in phi.M:
            mask |= 1 << i
        elem = elem.add(Grassmann(n, {mask: coefv}))

    for j, st in enumerate(spec.steps):
        u = 1.0
        for d in range(n):
            if st.gamma_tilde[d]:
                u = u * T[d] ** st.gamma_tilde[d]
        w = st.weight.eval_t(T)
        arg = u * w / eps[j]
        inv_xg = 1.0
        for d in range(n):
            if st.gamma[d]:
                inv_xg = inv_xg / X[d] ** st.gamma[d]
        if st.kind == "PV":
            fac = Grassmann.scalar(n, cutoff_eval(st.cutoff, arg) * inv_xg)
        else:
            dchi = cutoff_eval(st.cutoff, arg, deriv=1) / eps[j]
            data = {}
            for d in range(n):
                gi = st.gamma_tilde[d]
                w_touches = any(rexp[d] for rexp, _ in st.weight.terms)
                if not gi and not w_touches:
                    continue
                dw = st.weight.dt_eval(d, T) * X[d] if w_touches else 0.0
                coef = u * (gi * w / XB[d] + dw) if gi else u * dw
                data[1 << d] = dchi * coef * inv_xg
            fac = Grassmann(n, data)
        elem = fac.wedge(elem)

    top = elem.top()
    if isinstance(top, float):
        return 0.0 + 0.0j
    s_n = -1.0 if (n * (n - 1) // 2) % 2 else 1.0
    const = s_n * (1j ** n) * (wtheta ** n)
    # broadcast before summing: theta-independent axes still carry measure
    integ = np.broadcast_to(top, shape) * wrad.reshape(wrad.shape + (1,) * n)
    return const * complex(np.sum(integ))


# ---------------------------------------------------------------------------
# Public evaluators with refinement


def _refine(
    evaluator: Callable[[int], complex], grid: GridSpec
) -> NumericalResult:
    history: list[dict] = []
    best = None
    unc = math.inf
    flag_budget = False
    for level in range(grid.max_level + 1):
        try:
            val = evaluator(level)
        except _BudgetHit:
            flag_budget = True
            break
        history.append({"level": level, "value": val})
        if best is not None:
            unc = abs(val - best)
        best = val
        if unc <= grid.tol * max(1.0, abs(val)):
            break
    if best is None:
        return NumericalResult(
            value=0.0 + 0.0j,
            uncertainty=math.inf,
            diagnostics={"history": history},
            budget_exceeded=True,
            converged=False,
        )
    converged = (
        not flag_budget and unc <= grid.tol * max(1.0, abs(best))
    )
    if unc is math.inf:
        unc = abs(best)  # single level, no refinement estimate available
    return NumericalResult(
        value=best,
        uncertainty=float(unc),
        diagnostics={"history": history},
        budget_exceeded=flag_budget,
        converged=bool(converged),
    )


def eval_regularized_integral(
    spec: RegularizedSpec,
    grid: GridSpec | None = None,
    eps: Sequence[float] | None = None,
) -> NumericalResult:
    grid = grid or GridSpec()
    eps = spec.epsilon if eps is None else tuple(float(x) for x in eps)
    if eps is None or len(eps) != spec.q:
        raise EngineError("one epsilon per step required")
    if any(x <= 0 for x in eps):
        raise EngineError("epsilon entries must be positive")
    for st in spec.steps:
        st.weight.check_positive()

    if spec.all_weights_one():
        red = angular_reduce(spec)
        res_cut = [st.cutoff.is_indicator for st in spec.steps if st.kind == "RES"]
        if any(res_cut):
            if not all(res_cut):
                raise EngineError(
                    "mixed indicator and smooth residue cutoffs are not supported"
                )
            exact_box = {}

            def ev_tube(level: int) -> complex:
                v, exact = _eval_tube(red, tuple(eps), grid, level)
                exact_box["exact"] = exact
                return v

            out = _refine(ev_tube, grid)
            if exact_box.get("exact"):
                out.uncertainty = 0.0
                out.converged = True
            return out
        return _refine(lambda level: _eval_reduced(red, tuple(eps), grid, level), grid)

    return _refine(lambda level: _full_grid_eval(spec, tuple(eps), grid, level), grid)


def eval_tube_integral(
    spec: RegularizedSpec,
    eps: Sequence[float],
    grid: GridSpec | None = None,
) -> NumericalResult:
    grid = grid or GridSpec()
    if not spec.all_weights_one():
        raise NotReducible("tube integrals need trivial weights")
    for st in spec.steps:
        if st.kind == "RES" and not st.cutoff.is_indicator:
            raise EngineError("tube integrals need indicator residue cutoffs")
    red = angular_reduce(spec)
    eps = tuple(float(x) for x in eps)
    if len(eps) != spec.q or any(x <= 0 for x in eps):
        raise EngineError("one positive epsilon per step required")
    exact_box = {}

    def ev(level: int) -> complex:
        v, exact = _eval_tube(red, eps, grid, level)
        exact_box["exact"] = exact
        return v

    out = _refine(ev, grid)
    if exact_box.get("exact"):
        out.uncertainty = 0.0
        out.converged = True
    return out


def eval_lambda_integral(
    spec: RegularizedSpec,
    lam: Sequence[int],
    grid: GridSpec | None = None,
) -> NumericalResult:
    """Quadrature of the lambda-regularized integrand at positive integer
    lambda: residue steps carry lambda_j*u_j^lambda_j, PV steps u_j^lambda_j."""
    grid = grid or GridSpec()
    if not spec.all_weights_one():
        raise NotReducible("lambda quadrature is defined on the reduced path")
    lam = [int(v) for v in lam]
    if len(lam) != spec.q or any(v < 1 for v in lam):
        raise EngineError("lambda entries must be positive integers")
    red = angular_reduce(spec)
    return _refine(
        lambda level: _eval_reduced(red, (), grid, level, lam=lam), grid
    )


# ---------------------------------------------------------------------------
# Epsilon schedules and extrapolation


def _aitken_pass(vals: list[complex]) -> list[complex]:
    out = []
    for k in range(len(vals) - 2):
        d1 = vals[k + 1] - vals[k]
        d2 = vals[k + 2] - 2 * vals[k + 1] + vals[k]
        if abs(d2) < 1e-300:
            out.append(vals[k + 2])
        else:
            out.append(vals[k] - d1 * d1 / d2)
    return out


def _extrapolate(vals: list[complex]) -> tuple[complex, float, bool]:
    """Iterated Aitken; returns (limit, uncertainty, converged)."""
    if len(vals) < 3:
        v = vals[-1]
        unc = abs(vals[-1] - vals[-2]) if len(vals) > 1 else abs(v)
        return v, unc, False
    seq = list(vals)
    best = seq[-1]
    unc = abs(seq[-1] - seq[-2])
    while len(seq) >= 3:
        nxt = _aitken_pass(seq)
        step_unc = abs(nxt[-1] - seq[-1])
        if not all(np.isfinite([nxt[-1].real, nxt[-1].imag])):
            break
        best = nxt[-1]
        unc = max(abs(nxt[-1] - nxt[-2]), 1e-16 * abs(best)) if len(nxt) > 1 else step_unc
        seq = nxt
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    scale = max((abs(v) for v in vals), default=0.0)
    converged = bool(
        diffs and (diffs[-1] <= diffs[0] or diffs[-1] <= 1e-12 * max(scale, 1.0))
    )
    return best, unc, converged


def iterated_limit_estimate(
    spec: RegularizedSpec,
    schedule: EpsilonSchedule | None = None,
    grid: GridSpec | None = None,
) -> NumericalResult:
    """Numerical iterated limit of the regularized integral along the
    schedule; innermost (first) step's epsilon goes to zero first."""
    schedule = schedule or EpsilonSchedule()
    grid = grid or GridSpec()
    q = spec.q
    ladder = schedule.ladder()
    state = {"grid_unc": 0.0, "budget": False}

    def base(eps: tuple[float, ...]) -> complex:
        r = eval_regularized_integral(spec, grid, eps)
        state["grid_unc"] = max(state["grid_unc"], r.uncertainty)
        state["budget"] = state["budget"] or r.budget_exceeded
        return r.value

    if schedule.kind == "iterated":

        def est(j: int, tail: tuple[float, ...]) -> tuple[complex, float, bool]:
            if j == 0:
                return base(tail), 0.0, True
            # scale the rungs below the already-fixed epsilons so every
            # sample sits in the asymptotic regime of the inner limit
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


def rate_fit(samples: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """Power-law fit err = C * eps^omega by least squares in log-log.

    Returns (C, omega, R^2).
    """
    if len(samples) < 4:
        raise DegenerateFit("need at least 4 samples")
    if any(e <= 0 or err <= 0 for e, err in samples):
        raise DegenerateFit("epsilons and errors must be positive")
    lx = np.log([e for e, _ in samples])
    ly = np.log([err for _, err in samples])
    if np.ptp(lx) == 0 or np.ptp(ly) == 0:
        raise DegenerateFit("degenerate sample spread")
    A = np.vstack([np.ones_like(lx), lx]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    return float(math.exp(coef[0])), float(coef[1]), float(r2)
