"""Elementary residue and principal value currents for monomial data.

Sequential products are exact; pairings against test forms reduce to radial
moments and a wedge orientation sign.  The orientation convention interleaves
conjugate and plain differentials variable by variable, so pairings here are
cross-checked against an independent sign oracle.
"""

from fractions import Fraction as F

import pytest

from oracles import beta_moment, wedge_parity
from residua.currents import (
    CurrentSum,
    DimensionMismatch,
    OverlapError,
    ProductStep,
    ZeroResidueStep,
    dbar,
    inversion_sign,
    normalize,
    orientation_sign,
    orientation_sign_sequence,
    pair_with_testform,
    pv_step,
    res_step,
    sequential_product,
    unit_current,
    zero_current,
)
from residua.exactcore import EngineError, ExactScalar, ScalarSum
from residua.testforms import RadialProfile, TestForm


def RES(*gamma):
    return ProductStep("RES", tuple(gamma))


def PV(*gamma):
    return ProductStep("PV", tuple(gamma))


def rho_form(n, coeff, M=None):
    M = tuple(range(n)) if M is None else M
    return TestForm.make(n, coeff, RadialProfile.beta(1), M=M)


# ---------------------------------------------------------------------------
# Renders and elementary steps


def test_sequential_product_golden_render():
    T = sequential_product([RES(1, 1), RES(1, 0)])
    assert T.render() == "∂̄(1/x1^2)∧∂̄(1/x2)"
    R = sequential_product([RES(1, 0), RES(1, 1)])
    assert R.is_zero()
    assert R.render() == "0"


def test_elementary_renders():
    u = unit_current(2)
    assert u.render() == "1"
    assert zero_current(2).render() == "0"
    assert pv_step((1, 0), u).render() == "(1/x1)"
    assert res_step((0, 1), u).render() == "∂̄(1/x2)"
    both = res_step((0, 1), pv_step((1, 0), u))
    assert both.render() == "(1/x1)∧∂̄(1/x2)"


def test_step_render_and_json():
    st = ProductStep("RES", (1, 2), label="inner")
    assert st.render() == "RES(x1·x2^2)"
    assert st.n == 2 and st.support == (0, 1)
    assert ProductStep.from_json(st.to_json()) == st
    with pytest.raises(ValueError):
        ProductStep("BAD", (1,))


# ---------------------------------------------------------------------------
# Algebraic laws


def test_dbar_of_pv_is_res_and_dbar_squares_to_zero():
    u = unit_current(2)
    P = pv_step((1, 0), u)
    assert dbar(P).render() == "∂̄(1/x1)"
    assert dbar(dbar(P)).is_zero()
    assert dbar(res_step((0, 1), u)).is_zero()


def test_pv_additivity():
    u = unit_current(2)
    assert pv_step((2, 0), pv_step((1, 0), u)) == pv_step((3, 0), u)
    # exponents add across both variables
    assert pv_step((1, 2), pv_step((2, 1), u)) == pv_step((3, 3), u)


def test_repeated_residue_variable_vanishes():
    u = unit_current(2)
    assert res_step((1, 0), res_step((1, 0), u)).is_zero()
    assert sequential_product([RES(1, 0), RES(2, 0)]).is_zero()


def test_res_steps_anticommute():
    T12 = sequential_product([RES(1, 0), RES(0, 1)])
    T21 = sequential_product([RES(0, 1), RES(1, 0)])
    assert T12.render() == "-∂̄(1/x1)∧∂̄(1/x2)"
    assert T21.render() == "∂̄(1/x1)∧∂̄(1/x2)"
    assert T12.add(T21).is_zero()


def test_cyclic_permutation_is_even():
    A = sequential_product([RES(1, 0, 0), RES(0, 1, 0), RES(0, 0, 1)])
    B = sequential_product([RES(0, 1, 0), RES(0, 0, 1), RES(1, 0, 0)])
    assert A == B
    assert A.render() == "-∂̄(1/x1)∧∂̄(1/x2)∧∂̄(1/x3)"


def test_pv_steps_commute():
    P = sequential_product([PV(1, 0), PV(0, 2)])
    Q = sequential_product([PV(0, 2), PV(1, 0)])
    assert P == Q
    assert P.render() == "(1/x1)∧(1/x2^2)"
    M1 = sequential_product([PV(1, 0), RES(0, 1)])
    M2 = sequential_product([RES(0, 1), PV(1, 0)])
    assert M1 == M2


def test_coupled_support_products():
    # an inner residue annihilates a later residue touching the same variable
    assert sequential_product([RES(1, 0), RES(1, 1)]).is_zero()
    D = sequential_product([RES(1, 1), RES(0, 1)])
    assert D.render() == "-∂̄(1/x1)∧∂̄(1/x2^2)"


# ---------------------------------------------------------------------------
# Pairing with test forms


def test_pairing_golden_value():
    T = sequential_product([RES(1, 0), RES(0, 1)])
    phi = rho_form(2, [((0, 0), (0, 0), 1)], M=[])
    v = pair_with_testform(T, phi)
    assert v.render() == "(1 + 0 i) * (2*pi*i)^2"


def test_pairing_linearity():
    T = sequential_product([RES(1, 0), RES(0, 1)])
    one = rho_form(2, [((0, 0), (0, 0), 1)], M=[])
    half = rho_form(2, [((0, 0), (0, 0), "1/2")], M=[])
    v1 = pair_with_testform(T, one)
    v2 = pair_with_testform(T, half)
    assert v2.to_complex() == pytest.approx(v1.to_complex() / 2, rel=1e-14)
    # scaling the current matches scaling the form
    sc = T.scale(ExactScalar.of(F(1, 2), 0, 0))
    assert pair_with_testform(sc, one) == v2
    # additivity in the current
    assert pair_with_testform(T.add(T), one).to_complex() == pytest.approx(
        2 * v1.to_complex(), rel=1e-14
    )


def test_pairing_angular_selection():
    # a pv factor x1^-1 pairs only terms with k1 - 1 == m1
    P = pv_step((1, 0), unit_current(2))
    full = tuple(range(2))
    miss = TestForm.make(2, [((0, 0), (0, 0), 1)], RadialProfile.beta(1), M=full)
    assert pair_with_testform(P, miss).is_zero()
    hit = TestForm.make(2, [((2, 0), (1, 0), 1)], RadialProfile.beta(1), M=full)
    v = pair_with_testform(P, hit)
    assert v.render() == "(-1/12 + 0 i) * (2*pi*i)^2"


def test_pairing_value_against_moment_oracle():
    # pv x1^-1 against x1^2 conj(x1) rho rho: radial part is
    # beta_moment(1, 1) * beta_moment(1, 0), sign from the wedge word
    m1 = beta_moment(1, F(1))
    m2 = beta_moment(1, F(0))
    sign, _ = wedge_parity([("b", 0), ("b", 1), ("a", 0), ("a", 1)])
    P = pv_step((1, 0), unit_current(2))
    hit = TestForm.make(
        2, [((2, 0), (1, 0), 1)], RadialProfile.beta(1), M=(0, 1)
    )
    v = pair_with_testform(P, hit).to_exact()
    assert v.g.re == sign * m1 * m2
    assert v.s == 2


def test_pairing_res_set_overlapping_M_vanishes():
    T = sequential_product([RES(1, 0), RES(0, 1)])
    phi = rho_form(2, [((0, 0), (0, 0), 1)], M=[0])
    assert pair_with_testform(T, phi).is_zero()


def test_pairing_dimension_mismatch():
    T = sequential_product([RES(1, 0), RES(0, 1)])
    phi1 = TestForm.make(1, [((0,), (0,), 1)], RadialProfile.beta(1))
    with pytest.raises(DimensionMismatch):
        pair_with_testform(T, phi1)


# ---------------------------------------------------------------------------
# Signs and normal form


def test_orientation_signs():
    assert orientation_sign((0, 1), (), 2) == -1
    assert orientation_sign((1, 0), (), 2) == -1
    assert orientation_sign((1,), (0,), 2) == 1
    assert orientation_sign_sequence([1, 0], (), 2) == 1
    assert orientation_sign_sequence([0, 1], (), 2) == -1
    assert inversion_sign([2, 1, 0]) == -1
    assert inversion_sign([0, 1, 2]) == 1


def test_orientation_sign_matches_wedge_oracle():
    # unordered variant: residue variables enter in ascending order
    for res, M in [((0, 1), ()), ((1, 0), ()), ((1,), (0,)), ((2, 0, 1), ())]:
        n = 3 if len(res) + len(M) > 2 else 2
        word = [("b", i) for i in sorted(res)]
        word += [("b", i) for i in sorted(M)]
        word += [("a", i) for i in range(n)]
        assert orientation_sign(res, M, n) == wedge_parity(word)[0]


def test_orientation_sign_sequence_matches_wedge_oracle():
    # ordered variant: the first block keeps its listed order
    for block, M, n in [
        ([1, 0], (), 2),
        ([0, 1], (), 2),
        ([2, 0], (1,), 3),
        ([1, 2, 0], (), 3),
    ]:
        word = [("b", i) for i in block]
        word += [("b", i) for i in sorted(M)]
        word += [("a", i) for i in range(n)]
        assert orientation_sign_sequence(block, M, n) == wedge_parity(word)[0]


def test_normalize():
    nm = normalize(2, ExactScalar.of(1, 0, 0), (1, 0), [(1, 2)])
    assert nm.render() == "(1/x1)∧∂̄(1/x2^2)"
    with pytest.raises(OverlapError):
        normalize(2, ExactScalar.of(1, 0, 0), (1, 0), [(0, 2)])


def test_step_errors():
    u = unit_current(2)
    with pytest.raises(ZeroResidueStep):
        res_step((0, 0), u)
    with pytest.raises(DimensionMismatch):
        pv_step((1,), u)
    with pytest.raises(EngineError):
        sequential_product([])


def test_current_sum_json_roundtrip():
    T = sequential_product([RES(1, 0), RES(0, 1)])
    doc = T.to_json()
    assert doc["n"] == 2
    assert len(doc["terms"]) == 1
