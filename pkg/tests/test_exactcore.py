"""Exact scalar arithmetic: Gaussian rationals, (2*pi*i)-graded scalars,
canonical sums, affine forms and univariate rational functions."""

from fractions import Fraction as F

import cmath
import pytest

from residua.exactcore import (
    AffineForm,
    EngineError,
    ExactScalar,
    GAUSS_ONE,
    GAUSS_ZERO,
    GaussRational,
    ScalarSum,
    UniRat,
    scalar_arith,
    unirat_limit_at_zero,
)


# ---------------------------------------------------------------------------
# GaussRational


@pytest.mark.parametrize(
    "text,re_,im_",
    [
        ("1", 1, 0),
        ("-1", -1, 0),
        ("1/2", F(1, 2), 0),
        ("i", 0, 1),
        ("-i", 0, -1),
        ("+i", 0, 1),
        ("2i", 0, 2),
        ("2 i", 0, 2),
        ("-2/5i", 0, F(-2, 5)),
        ("1+i", 1, 1),
        ("1-2i", 1, -2),
        ("3/4-2/5i", F(3, 4), F(-2, 5)),
        ("0", 0, 0),
    ],
)
def test_gauss_parse(text, re_, im_):
    g = GaussRational.parse(text)
    assert (g.re, g.im) == (F(re_), F(im_))


@pytest.mark.parametrize("bad", ["x", "1+", "ii", "1//2", "", "1.5", "i+1"])
def test_gauss_parse_rejects(bad):
    with pytest.raises(ValueError):
        GaussRational.parse(bad)


def test_gauss_render_roundtrip():
    vals = [
        GaussRational.of(0, 0),
        GaussRational.of(1, 0),
        GaussRational.of(F(-3, 7), F(2, 5)),
        GaussRational.of(0, -1),
        GaussRational.of(5, F(1, 3)),
    ]
    for g in vals:
        back = GaussRational.parse(g.render().replace(" ", ""))
        assert back == g


def test_gauss_arithmetic():
    a = GaussRational.of(F(1, 2), F(-3, 4))
    b = GaussRational.of(2, 5)
    assert a.add(b) == GaussRational.of(F(5, 2), F(17, 4))
    assert a.sub(b) == GaussRational.of(F(-3, 2), F(-23, 4))
    # (1/2 - 3/4 i)(2 + 5 i) = 1 + 5/2 i - 3/2 i + 15/4 = 19/4 + 1 i
    assert a.mul(b) == GaussRational.of(F(19, 4), 1)
    assert a.conj() == GaussRational.of(F(1, 2), F(3, 4))
    assert a.neg().add(a) == GAUSS_ZERO
    assert a.scale(F(2, 3)) == GaussRational.of(F(1, 3), F(-1, 2))
    assert GAUSS_ONE.mul(a) == a
    assert a.to_complex() == 0.5 - 0.75j


def test_gauss_mul_i_squared():
    i = GaussRational.of(0, 1)
    assert i.mul(i) == GaussRational.of(-1, 0)


# ---------------------------------------------------------------------------
# ExactScalar: g * (2*pi*i)^s


def test_exact_scalar_render():
    assert ExactScalar.of(1, 0, s=2).render() == "(1 + 0 i) * (2*pi*i)^2"
    assert ExactScalar.of(F(-1, 2), 0, s=1).render() == "(-1/2 + 0 i) * (2*pi*i)^1"
    assert ExactScalar.of(0, 1, s=0).render() == "(0 + 1 i)"


def test_exact_scalar_to_complex():
    two_pi_i = 2j * cmath.pi
    assert ExactScalar.of(1, 0, s=1).to_complex() == pytest.approx(two_pi_i)
    assert ExactScalar.of(0, 1, s=2).to_complex() == pytest.approx(1j * two_pi_i ** 2)
    assert ExactScalar.of(F(3, 4), 0, s=0).to_complex() == 0.75


def test_exact_scalar_mul_adds_powers():
    a = ExactScalar.of(2, 0, s=1)
    b = ExactScalar.of(3, 0, s=1)
    assert a.mul(b) == ExactScalar.of(6, 0, s=2)
    assert a.scale(F(1, 2)) == ExactScalar.of(1, 0, s=1)
    assert a.neg().mul(b) == ExactScalar.of(-6, 0, s=2)


def test_scalar_arith():
    a = ExactScalar.of(1, 0, s=1)
    b = ExactScalar.of(2, 0, s=1)
    assert scalar_arith(a, b, "add") == ExactScalar.of(3, 0, s=1)
    # mixed powers of 2*pi*i cannot merge into one scalar
    mixed = scalar_arith(a, ExactScalar.of(1, 0, s=2), "add")
    assert isinstance(mixed, ScalarSum)
    assert len(mixed.parts) == 2
    with pytest.raises(ValueError):
        scalar_arith(a, b, "sub")


# ---------------------------------------------------------------------------
# ScalarSum: canonical sum over powers of 2*pi*i


def test_scalar_sum_canonicalizes():
    s = ScalarSum.make(
        [
            ExactScalar.of(1, 0, s=2),
            ExactScalar.of(F(1, 2), 0, s=2),
            ExactScalar.of(1, 0, s=0),
        ]
    )
    assert len(s.parts) == 2
    assert s.render() == "(1 + 0 i) + (3/2 + 0 i) * (2*pi*i)^2"


def test_scalar_sum_exact_equality_and_cancellation():
    a = ScalarSum.make([ExactScalar.of(1, 0, 1), ExactScalar.of(F(1, 3), 0, 2)])
    b = ScalarSum.make([ExactScalar.of(F(1, 3), 0, 2), ExactScalar.of(1, 0, 1)])
    assert a == b
    z = ScalarSum.make([ExactScalar.of(1, 0, 1), ExactScalar.of(-1, 0, 1)])
    assert z.is_zero()
    assert a.add(z) == a


def test_scalar_sum_to_exact():
    one_part = ScalarSum.make([ExactScalar.of(2, 0, 1)])
    assert one_part.to_exact() == ExactScalar.of(2, 0, 1)
    mixed = ScalarSum.make([ExactScalar.of(1, 0, 1), ExactScalar.of(1, 0, 2)])
    with pytest.raises(EngineError):
        mixed.to_exact()


def test_scalar_sum_to_complex():
    s = ScalarSum.make([ExactScalar.of(1, 0, 0), ExactScalar.of(1, 0, 2)])
    expected = 1.0 + (2j * cmath.pi) ** 2
    assert s.to_complex() == pytest.approx(expected, rel=1e-14)


# ---------------------------------------------------------------------------
# AffineForm


def test_affine_render():
    assert AffineForm((F(1), F(1)), F(0)).render() == "λ1+λ2"
    assert AffineForm((F(2), F(-3)), F(1)).render() == "2λ1-3λ2+1"
    assert AffineForm((F(0), F(1, 2)), F(-1)).render() == "1/2λ2-1"
    assert AffineForm((F(0), F(0)), F(0)).render() == "0"
    assert AffineForm((F(-1), F(4)), F(-2)).render(prefix="s") == "-s1+4s2-2"


def test_affine_eval_and_unit():
    f = AffineForm.unit(3, 1, 2).add(AffineForm.zero(3).with_const(5))
    assert f.coeffs == (F(0), F(2), F(0))
    assert f.const == F(5)
    assert f.eval([F(1), F(1, 2), F(7)]) == F(6)
    assert f.lin_eval([F(1), F(1, 2), F(7)]) == F(1)


def test_affine_primitive_and_subs():
    f = AffineForm((F(2), F(4)), F(6))
    assert f.primitive() == AffineForm((F(1), F(2)), F(3))
    h = AffineForm((F(1, 2), F(1)), F(0)).primitive()
    assert h == AffineForm((F(1), F(2)), F(0))
    g = AffineForm((F(1), F(2)), F(0)).subs_zero(1)
    assert g.coeffs[1] == 0


# ---------------------------------------------------------------------------
# UniRat: polynomial over a product of monic linear factors (X + c)


def test_unirat_eval():
    u = UniRat.make([1, 2], [1, 1])  # (1 + 2X) / ((X+1)(X+1))
    assert u.eval_at(1) == F(3, 4)
    assert u.eval_at(0) == F(1)
    assert u.render() == "(1 + 2*X) / ((X+1)(X+1))"


def test_unirat_arithmetic():
    u = UniRat.make([1], [1])  # 1/(X+1)
    v = UniRat.make([2], [2])  # 2/(X+2)
    w = u.mul(v)
    assert w.eval_at(1) == F(1, 2) * F(2, 3)
    s = u.add(v)
    assert s.eval_at(0) == F(2)
    assert u.scale(3).eval_at(0) == F(3)
    assert u.neg().add(u).is_zero()
    assert UniRat.const(F(5, 2)).eval_at(9) == F(5, 2)


def test_unirat_limit_at_zero():
    u = UniRat.make([1, 2], [1, 1])
    assert unirat_limit_at_zero(u) == (0, F(1))
    # 3X^2 / (X (X+2)) = 3X/(X+2): vanishes to first order, slope 3/2
    v = UniRat.make([0, 0, 3], [0, 2])
    assert unirat_limit_at_zero(v) == (1, F(3, 2))


def test_unirat_pole_at_zero():
    # 1 / (X (X+1)) has a simple pole at 0
    v = UniRat.make([1], [0, 1])
    order, lead = unirat_limit_at_zero(v)
    assert order == -1
    assert lead == F(1)
