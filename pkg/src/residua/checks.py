"""Self-contained pass/fail suites bundling the package's cross checks.

Each suite recomputes everything it asserts; nothing is read from disk.
The triangle suite runs the full randomized catalog through the three
exact evaluation routes, the numeric suites compare epsilon limits
against exact Mellin values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import mellin
from .catalog import disjoint_entries, quad_subcatalog, triangle_catalog
from .currents import ProductStep, pair_with_testform, sequential_product
from .exactcore import ExactScalar, GaussRational
from .quadrature import (
    EpsilonSchedule,
    GridSpec,
    RegularizedSpec,
    Weight,
    eval_regularized_integral,
    iterated_limit_estimate,
    rate_fit,
)
from .testforms import CutoffProfile, RadialProfile, TestForm

DEFAULT_SEED = 20260814

SUITES = ("golden", "triangle", "poles", "rates", "bridge")


@dataclass
class CheckResult:
    suite: str
    passed: bool
    details: list[str] = field(default_factory=list)
    duration: float = 0.0

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "details": list(self.details),
            "duration_seconds": round(self.duration, 3),
        }


def schedule_for_depth(q: int) -> EpsilonSchedule:
    """Ladder lengths tuned so iterated extrapolation reaches rel 1e-3
    even for cube-exponent steps (error terms down to eps^(1/3))."""
    return EpsilonSchedule(length=10 if q == 1 else 8)


def _check(details: list[str], ok: bool, text: str) -> bool:
    details.append(("pass " if ok else "FAIL ") + text)
    return ok


def _golden(seed: int, details: list[str]) -> bool:
    ok = True
    t_good = sequential_product(
        [ProductStep("RES", (1, 1)), ProductStep("RES", (1, 0))]
    )
    want = "∂̄(1/x1^2)∧∂̄(1/x2)"
    ok &= _check(details, t_good.render() == want,
                 f"sequential (x1*x2, x1) renders {t_good.render()!r}")
    t_zero = sequential_product(
        [ProductStep("RES", (1, 0)), ProductStep("RES", (1, 1))]
    )
    ok &= _check(details, t_zero.is_zero(), "sequential (x1, x1*x2) is zero")

    phi = TestForm.make(2, [((1, 0), (0, 0), 1)], RadialProfile.beta(1), M=[])
    steps_zzw = [ProductStep("RES", (1, 0)), ProductStep("RES", (1, 1))]
    steps_zwz = [ProductStep("RES", (1, 1)), ProductStep("RES", (1, 0))]
    it_a = mellin.iterated_limit(mellin.build_gamma(steps_zzw, phi))
    it_b = mellin.iterated_limit(mellin.build_gamma(steps_zwz, phi))
    ok &= _check(details, it_a.is_zero(),
                 "lambda limit for (x1, x1*x2) with x1 rho rho is 0")
    minus_2pii_sq = ExactScalar(GaussRational.of(-1), 2)
    ok &= _check(details, it_b.to_exact() == minus_2pii_sq,
                 f"lambda limit for (x1*x2, x1) is {it_b.render()}")

    phi0 = TestForm.make(2, [((0, 0), (0, 0), 1)], RadialProfile.beta(1), M=[])
    pair = pair_with_testform(
        sequential_product([ProductStep("RES", (1, 0)), ProductStep("RES", (0, 1))]),
        phi0,
    )
    ok &= _check(details, pair.to_exact() == ExactScalar(GaussRational.of(1), 2),
                 f"(x1, x2) against rho rho pairs to {pair.render()}")
    return bool(ok)


def _triangle(seed: int, details: list[str]) -> bool:
    entries = triangle_catalog(seed)
    good = 0
    first_bad = None
    for e in entries:
        exact = pair_with_testform(sequential_product(e.steps), e.phi)
        expr = mellin.build_gamma(list(e.steps), e.phi)
        ita = mellin.iterated_limit(expr)
        asw = mellin.aswy_limit(expr, (9, 3, 1)[: e.q])
        if exact == ita == asw:
            good += 1
        elif first_bad is None:
            first_bad = e.index
    ok = _check(details, good == len(entries),
                f"triangle identity {good}/{len(entries)} exact"
                + (f" (first failure index {first_bad})" if first_bad is not None else ""))
    return ok


def _poles(seed: int, details: list[str]) -> bool:
    ok = True
    for name, gam in (("(x1, x2)", ((1, 0), (0, 1))),
                      ("(x1^2, x2^3)", ((2, 0), (0, 3)))):
        steps = [ProductStep("RES", g) for g in gam]
        k = tuple(sum(g[i] for g in gam) - 1 for i in range(2))
        phi = TestForm.make(2, [(k, (0, 0), 1)], RadialProfile.beta(1), M=[])
        lines = mellin.pole_lines_near_orthant(mellin.build_gamma(steps, phi), seed=seed)
        ok &= _check(details, lines == (), f"no pole lines for {name}")

    steps = [ProductStep("RES", (1, 0)), ProductStep("RES", (1, 1))]
    phi = TestForm.make(2, [((1, 0), (0, 0), 1)], RadialProfile.beta(1), M=[])
    lines = mellin.pole_lines_near_orthant(mellin.build_gamma(steps, phi), seed=seed)
    shaped = (
        len(lines) == 1
        and lines[0].status == "certified"
        and lines[0].form.coeffs == (1, 1)
        and lines[0].form.const == 0
        and sum(1 for c in lines[0].form.coeffs if c > 0) >= 2
    )
    got = ", ".join(ln.render() for ln in lines) or "none"
    ok &= _check(details, shaped, f"(x1, x1*x2) pole lines: {got}")

    entries = disjoint_entries(triangle_catalog(seed))
    bad = 0
    for e in entries:
        lines = mellin.pole_lines_near_orthant(
            mellin.build_gamma(list(e.steps), e.phi), seed=seed
        )
        if lines:
            bad += 1
    ok &= _check(details, bad == 0,
                 f"disjoint-support entries without pole lines: {len(entries) - bad}/{len(entries)}")
    return bool(ok)


def _rate_samples(steps, phi, cutoff, ladder):
    spec = RegularizedSpec.make(steps, phi, cutoff=cutoff)
    exact = pair_with_testform(sequential_product(steps), phi).to_complex()
    samples = []
    for eps in ladder:
        r = eval_regularized_integral(spec, eps=(eps,) * len(steps))
        err = abs(r.value - exact)
        if err > 0:
            samples.append((eps, err))
    return samples


def _rates(seed: int, details: list[str]) -> bool:
    ok = True
    ladder = tuple(0.25 * 2.0 ** (-k) for k in range(8))
    cases = (
        ("(x1, x2)", [ProductStep("RES", (1, 0)), ProductStep("RES", (0, 1))],
         TestForm.make(2, [((0, 0), (0, 0), 1)], RadialProfile.beta(1), M=[])),
        ("(x1^2, x2)", [ProductStep("RES", (2, 0)), ProductStep("RES", (0, 1))],
         TestForm.make(2, [((1, 0), (0, 0), 1)], RadialProfile.beta(1), M=[])),
    )
    for name, steps, phi in cases:
        omegas = {}
        for s in (2, 3):
            samples = _rate_samples(steps, phi, CutoffProfile.smoothstep(s), ladder)
            _, omega, r2 = rate_fit(samples)
            omegas[s] = omega
            ok &= _check(details, omega > 0 and r2 > 0.9,
                         f"{name} s={s}: omega {omega:.3f}, R^2 {r2:.4f}")
        lo, hi = sorted(omegas.values())
        ok &= _check(details, hi <= 1.2 * lo,
                     f"{name}: omega stable across s (ratio {hi / lo:.3f})")
    return bool(ok)


def _bridge_specs(seed: int):
    """Ten deterministic single-step specs covering both kinds, one and
    two variables, exponents up to 3."""
    cases = []
    data = (
        ("RES", 1, (1,)), ("RES", 1, (2,)), ("RES", 1, (3,)),
        ("PV", 1, (1,)), ("PV", 1, (3,)),
        ("RES", 2, (1, 0)), ("RES", 2, (2, 1)), ("PV", 2, (1, 1)),
        ("PV", 2, (0, 2)), ("RES", 2, (1, 2)),
    )
    for kind, n, gamma in data:
        G = gamma
        k = [0] * n
        m = [0] * n
        if kind == "RES":
            sup = [i for i in range(n) if G[i]]
            lead = sup[0]
            for i in range(n):
                k[i] = G[i] - (1 if i == lead else 0) if i in sup else 0
            mc = (lead,)
        else:
            for i in range(n):
                k[i] = G[i]
            mc = ()
        M = [i for i in range(n) if i not in mc]
        phi = TestForm.make(n, [(tuple(k), tuple(m), 1)], RadialProfile.beta(2), M=M)
        cases.append((ProductStep(kind, gamma), phi))
    return cases


def _bridge(seed: int, details: list[str]) -> bool:
    ok = True
    sched = EpsilonSchedule(length=9)
    for step, phi in _bridge_specs(seed):
        exact = mellin.iterated_limit(mellin.build_gamma([step], phi)).to_complex()
        spec = RegularizedSpec.make([step], phi)
        est = iterated_limit_estimate(spec, sched, GridSpec())
        scale = max(abs(exact), 1e-12)
        rel = abs(est.value - exact) / scale
        ok &= _check(details, rel < 1e-3,
                     f"{step.render()} eps vs lambda rel {rel:.2e}")

        # Doubling the witness squares the cutoff argument, so square the
        # ladder to keep the effective truncation radii aligned.
        doubled = [tuple(2 * g for g in step.gamma)]
        sq = EpsilonSchedule(start=sched.start ** 2, ratio=sched.ratio ** 2,
                             length=sched.length)
        est2 = iterated_limit_estimate(
            RegularizedSpec.make([step], phi, gamma_tilde=doubled), sq, GridSpec()
        )
        tol = est.uncertainty + est2.uncertainty + 1e-3 * scale
        ok &= _check(details, abs(est2.value - est.value) <= tol,
                     f"{step.render()} doubled witness diff {abs(est2.value - est.value):.2e}")

        n = phi.n
        terms = [(tuple([0] * n), Fraction(1))]
        for i in range(n):
            r = [0] * n
            r[i] = 1
            terms.append((tuple(r), Fraction(1, 2)))
        w = Weight(n, tuple(terms))
        spec_w = RegularizedSpec.make([step], phi, weights=[w])
        est3 = iterated_limit_estimate(spec_w, EpsilonSchedule(length=8),
                                       GridSpec(max_level=2, tol=1e-6))
        tol = est.uncertainty + est3.uncertainty + 5e-3 * scale
        ok &= _check(details, abs(est3.value - est.value) <= tol,
                     f"{step.render()} weighted diff {abs(est3.value - est.value):.2e}")
    return bool(ok)


def _triangle_numeric(seed: int, details: list[str]) -> bool:
    entries = quad_subcatalog(triangle_catalog(seed))
    ok = True
    worst = 0.0
    for e in entries:
        tv = pair_with_testform(sequential_product(e.steps), e.phi).to_complex()
        spec = RegularizedSpec.make(list(e.steps), e.phi)
        r = iterated_limit_estimate(spec, schedule_for_depth(e.q), GridSpec())
        worst = max(worst, abs(r.value - tv) / abs(tv))
    ok &= _check(details, worst < 1e-3,
                 f"subcatalog of {len(entries)}: worst rel {worst:.2e}")
    return bool(ok)


def check_suite(name: str, seed: int = DEFAULT_SEED) -> CheckResult:
    runners = {
        "golden": (_golden,),
        "triangle": (_triangle, _triangle_numeric),
        "poles": (_poles,),
        "rates": (_rates,),
        "bridge": (_bridge,),
    }
    if name not in runners:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    details: list[str] = []
    t0 = time.time()
    passed = True
    for fn in runners[name]:
        passed = fn(seed, details) and passed
    return CheckResult(name, bool(passed), details, time.time() - t0)
