"""Cauchy-Fantappie-Leray style regularized factors for polynomial sections.

Point evaluations are cross-checked against finite differences and the
minimal-section identity f . s = |f|^2; product integrals are checked against
frozen exact values and the scalar monomial engine at fixed epsilon.
"""

import cmath

import pytest

from residua.cfl import (
    CFLFactorSpec,
    DegreeMismatch,
    FrameForm,
    OnZeroSet,
    RankTooLarge,
    VectorSection,
    ZeroSection,
    cfl_factor_eval,
    cfl_product_eval,
    cfl_regularized_eval,
    minimal_section_eval,
)
from residua.currents import ProductStep
from residua.exactcore import EngineError
from residua.quadrature import (
    EpsilonSchedule,
    GridSpec,
    RegularizedSpec,
    eval_regularized_integral,
)
from residua.testforms import RadialProfile, TestForm

TWO_PI_I = 2j * cmath.pi

POINTS = [
    [0.5 + 0.25j],
    [-0.3 + 0.7j],
    [0.1 - 0.9j],
]

POINTS2 = [
    [0.4 + 0.3j, -0.2 + 0.5j],
    [-0.6 + 0.1j, 0.3 - 0.4j],
    [0.2 + 0.2j, -0.5 - 0.5j],
]


# ---------------------------------------------------------------------------
# Vector sections


def test_section_eval_and_norm():
    sec = VectorSection.make(["x1"], [1])
    assert sec.n == 1 and sec.rank == 1
    z = 0.5 + 0.25j
    assert sec.eval([z]) == [z]
    assert sec.norm_sq([z]) == pytest.approx(abs(z) ** 2)
    assert VectorSection.from_json(sec.to_json()) == sec


def test_section_derivatives_match_finite_differences():
    sec = VectorSection.make(["2*x1^3", "x1*x2"], [1, 1])
    for x in POINTS2:
        for ci in range(2):
            for d in range(2):
                got = sec.d_eval(ci, d, x)
                h = 1e-6
                xp = list(x)
                xm = list(x)
                xp[d] += h
                xm[d] -= h
                fd = (sec.eval(xp)[ci] - sec.eval(xm)[ci]) / (2 * h)
                assert got == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_minimal_section_identity():
    # f . s equals |f|^2 pointwise
    for comps, wit, pts in [
        (["x1"], [1], POINTS),
        (["x1", "x2"], [1, 1], POINTS2),
        (["2*x1^3", "x1*x2"], [1, 1], POINTS2),
    ]:
        sec = VectorSection.make(comps, wit)
        for x in pts:
            s = minimal_section_eval(sec, x)
            f = sec.eval(x)
            dot = sum(fi * si for fi, si in zip(f, s))
            assert dot == pytest.approx(sec.norm_sq(x), rel=1e-13)


def test_zero_section_rejected():
    with pytest.raises(ZeroSection):
        VectorSection.make(["0"], [1])


# ---------------------------------------------------------------------------
# Factor specifications


def test_factor_spec_validation():
    sec = VectorSection.make(["x1"], [1])
    spec = CFLFactorSpec(section=sec, k=1, kind="R", eps=0.3)
    assert CFLFactorSpec.from_json(spec.to_json()) == spec
    assert spec.dxbar_degree == 1 and spec.frame_degree == 1
    specU = CFLFactorSpec(section=sec, k=1, kind="U")
    assert specU.dxbar_degree == 0 and specU.frame_degree == 1
    with pytest.raises(EngineError):
        CFLFactorSpec(section=sec, k=2, kind="R")
    with pytest.raises(EngineError):
        CFLFactorSpec(section=sec, k=1, kind="X")
    s4 = VectorSection.make(["x1", "x2", "x3", "x4"], [1, 0, 0, 0])
    with pytest.raises(RankTooLarge):
        CFLFactorSpec(section=s4, k=1, kind="R")


# ---------------------------------------------------------------------------
# Point evaluation


def test_point_eval_recovers_cauchy_kernel():
    # away from the transition zone U^1 is s/|f|^2 = 1/x for f = x
    sec = VectorSection.make(["x1"], [1])
    specU = CFLFactorSpec(section=sec, k=1, kind="U")
    ff = cfl_factor_eval(specU, [0.5], eps=0.125)
    assert ff.coefficient(1, 0) == pytest.approx(2.0, rel=1e-12)


def test_point_eval_errors():
    sec = VectorSection.make(["x1"], [1])
    specU = CFLFactorSpec(section=sec, k=1, kind="U")
    with pytest.raises(OnZeroSet):
        cfl_factor_eval(specU, [0.0], eps=0.1)
    with pytest.raises(EngineError):
        cfl_factor_eval(specU, [0.5])  # no epsilon anywhere


def test_frame_form_algebra():
    a = FrameForm.scalar(1, 1, 2.0)
    b = FrameForm.scalar(1, 1, 3.0)
    assert a.add(b).coefficient(0, 0) == 5.0
    assert a.scale(2.0).coefficient(0, 0) == 4.0
    w = a.wedge(b)
    assert w.coefficient(0, 0) == 6.0
    assert (w.E, w.n) == (1, 1)


# ---------------------------------------------------------------------------
# Product integrals


def test_residue_factor_integral():
    sec = VectorSection.make(["x1"], [1])
    spec = CFLFactorSpec(section=sec, k=1, kind="R")
    phi = TestForm.make(1, [((0,), (0,), 1)], RadialProfile.beta(1), M=[])
    r = cfl_product_eval(
        [spec], phi, EpsilonSchedule(length=5), GridSpec(max_level=2, tol=1e-4)
    )
    assert r.converged
    assert r.value == pytest.approx(TWO_PI_I, rel=1e-10)


def test_mixed_product_integral():
    # U^1(x1) wedged with R^1(x2) against x1 rho rho conj(dx1)
    secA = VectorSection.make(["x1"], [1, 0])
    secB = VectorSection.make(["x2"], [0, 1])
    phi = TestForm.make(2, [((1, 0), (0, 0), 1)], RadialProfile.beta(1), M=[0])
    r = cfl_product_eval(
        [
            CFLFactorSpec(section=secA, k=1, kind="U"),
            CFLFactorSpec(section=secB, k=1, kind="R"),
        ],
        phi,
        EpsilonSchedule(length=4),
        GridSpec(max_level=2, tol=1e-3, budget=20_000_000),
    )
    want = 0.5 * TWO_PI_I ** 2
    assert r.value == pytest.approx(want, rel=1e-6)


def test_fixed_epsilon_agrees_with_scalar_engine():
    sec = VectorSection.make(["x1"], [1])
    spec = CFLFactorSpec(section=sec, k=1, kind="R")
    phi = TestForm.make(1, [((0,), (0,), 1)], RadialProfile.beta(1), M=[])
    rf = cfl_regularized_eval([spec], phi, eps=(0.2,), grid=GridSpec(max_level=2, tol=1e-6))
    scalar = eval_regularized_integral(
        RegularizedSpec.make([ProductStep("RES", (1,))], phi), eps=(0.2,)
    )
    assert rf.value == pytest.approx(scalar.value, rel=1e-12, abs=1e-15)


def test_degree_zero_factor_vanishes():
    # with f nonvanishing near the support, the k=0 residue factor dies
    # once epsilon clears the transition zone
    sec0 = VectorSection.make(["1"], [0])
    spec0 = CFLFactorSpec(section=sec0, k=0, kind="R")
    phi = TestForm.make(1, [((0,), (0,), 1)], RadialProfile.beta(1), M=[0])
    r = cfl_regularized_eval([spec0], phi, eps=(0.25,))
    assert r.value == 0j
    assert r.uncertainty == 0.0


def test_degree_mismatch():
    sec = VectorSection.make(["x1"], [1])
    spec = CFLFactorSpec(section=sec, k=1, kind="R")
    phi = TestForm.make(1, [((0,), (0,), 1)], RadialProfile.beta(1), M=[0])
    with pytest.raises(DegreeMismatch):
        cfl_regularized_eval([spec], phi, eps=(0.2,))
