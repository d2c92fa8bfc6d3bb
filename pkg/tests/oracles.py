"""Independent oracles for cross-checking the engines.

Everything here is implemented directly from the defining integrals
with plain loops, exact rational arithmetic and scipy quadrature, on
purpose sharing no code with the package: term-by-term expansion of the
residue one-forms with an explicit wedge parity counter, binomial-sum
radial integrals, and one-dimensional adaptive quadrature for the
epsilon-regularized integrands.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct
from math import comb

from scipy.integrate import quad


@dataclass(frozen=True)
class CF:
    """Complex number with exact rational parts."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def add(self, o: "CF") -> "CF":
        return CF(self.re + o.re, self.im + o.im)

    def mul(self, o: "CF") -> "CF":
        return CF(self.re * o.re - self.im * o.im,
                  self.re * o.im + self.im * o.re)

    def scale(self, c: Fraction) -> "CF":
        return CF(self.re * c, self.im * c)

    def to_complex(self) -> complex:
        return complex(self.re) + 1j * complex(self.im)


def parse_cf(text) -> CF:
    """Tiny Gaussian-rational parser for the coefficients used in tests:
    accepts forms like '1', '-1', '1/2', 'i', '-i', '2i', '1+i', '1-2i'."""
    if isinstance(text, CF):
        return text
    if isinstance(text, (int, Fraction)):
        return CF(Fraction(text))
    s = str(text).replace(" ", "")
    if "i" not in s:
        return CF(Fraction(s))
    # split into real and imaginary chunks at the last +/- that is not leading
    for pos in range(len(s) - 1, 0, -1):
        if s[pos] in "+-" and s[pos - 1] not in "+-/*^":
            re_part, im_part = s[:pos], s[pos:]
            break
    else:
        re_part, im_part = "", s
    im_part = im_part.replace("i", "") or "1"
    if im_part in ("+", "-"):
        im_part += "1"
    return CF(Fraction(re_part) if re_part else Fraction(0), Fraction(im_part))


def beta_moment(d: int, e: Fraction) -> Fraction:
    """int_0^1 t^e (1-t)^d dt for rational e > -1 via the binomial sum."""
    e = Fraction(e)
    if e <= -1:
        raise ValueError("exponent must exceed -1")
    return sum(
        Fraction(comb(d, j) * (-1) ** j, 1) / (e + j + 1) for j in range(d + 1)
    )


def wedge_parity(word: list) -> tuple[int, list] | None:
    """Sign of sorting the anticommuting symbols into the canonical
    interleaved order conj(dx_1), dx_1, conj(dx_2), dx_2, ... by explicit
    adjacent transpositions; None when a symbol repeats."""
    if len(set(word)) != len(word):
        return None

    def rank(sym):
        typ, i = sym
        return 2 * i + (0 if typ == "b" else 1)

    w = list(word)
    sign = 1
    for i in range(len(w)):
        j = min(range(i, len(w)), key=lambda p: rank(w[p]))
        while j > i:
            w[j], w[j - 1] = w[j - 1], w[j]
            sign = -sign
            j -= 1
    return sign, w


def gamma_brute(steps, coeff, profiles, M, lam) -> complex:
    """Exact value of the parameter-regularized product integral.

    steps: list of (kind, gamma) with kind in {"PV", "RES"}; the first
    entry is the innermost factor. coeff: list of (k, m, c) monomials of
    the test coefficient, c anything parse_cf accepts. profiles: one
    ("beta", d) per variable. M: 0-based variables whose conjugate
    differential is supplied by the test form. lam: one Fraction per
    step, large enough that every term integral converges.

    Expands each residue one-form dbar|x^g|^(2 lam) into its per-variable
    terms, orients every surviving wedge word with the parity counter
    against conj(dx_1) dx_1 ... conj(dx_n) dx_n, selects the angular
    frequency-zero part, and integrates the radial factors exactly.
    """
    q = len(steps)
    n = len(steps[0][1])
    lam = [Fraction(v) for v in lam]
    if len(lam) != q:
        raise ValueError("one parameter per step")
    G = [sum(st[1][i] for st in steps) for i in range(n)]
    res_idx = [j for j, st in enumerate(steps) if st[0] == "RES"]
    choices = [
        [d for d in range(n) if steps[j][1][d] > 0] for j in res_idx
    ]
    total = CF()
    for k, m, c in coeff:
        c = parse_cf(c)
        for picks in iproduct(*choices):
            r = [0] * n
            for d in picks:
                r[d] += 1
            if any(k[i] - G[i] != m[i] - r[i] for i in range(n)):
                continue
            # later steps wedge from the left; then the form's own
            # conjugate differentials, then the holomorphic volume
            word = (
                [("b", picks[res_idx.index(j)]) for j in reversed(res_idx)]
                + [("b", i) for i in sorted(M)]
                + [("a", i) for i in range(n)]
            )
            par = wedge_parity(word)
            if par is None:
                continue
            sign, _ = par
            scal = Fraction(sign)
            for jj, d in zip(res_idx, picks):
                scal *= lam[jj] * steps[jj][1][d]
            rad = Fraction(1)
            for i in range(n):
                e = Fraction(k[i] - G[i]) + sum(
                    lam[j] * steps[j][1][i] for j in range(q)
                )
                kind, dpar = profiles[i]
                if kind != "beta":
                    raise ValueError("only beta profiles here")
                rad *= beta_moment(dpar, e)
            total = total.add(c.scale(scal * rad))
    return total.to_complex() * (2j * cmath.pi) ** n


def _chi(s: int, v: float) -> float:
    """Smoothstep cutoff: 0 below 1/2, C^s rise on [1/2, 1], 1 above."""
    if v <= 0.5:
        return 0.0
    if v >= 1.0:
        return 1.0
    u = 2.0 * v - 1.0
    norm = 1.0
    # S_s(u) = (2s+1)!/(s!)^2 int_0^u w^s(1-w)^s dw, evaluated term by term
    from math import factorial

    norm = factorial(2 * s + 1) / factorial(s) ** 2
    acc = 0.0
    for j in range(s + 1):
        acc += comb(s, j) * (-1) ** j / (s + j + 1) * u ** (s + j + 1)
    return norm * acc


def _chi_prime(s: int, v: float) -> float:
    if v <= 0.5 or v >= 1.0:
        return 0.0
    u = 2.0 * v - 1.0
    from math import factorial

    norm = factorial(2 * s + 1) / factorial(s) ** 2
    return 2.0 * norm * u ** s * (1.0 - u) ** s


def _rho(profile, t: float) -> float:
    kind, par = profile
    if t >= 1.0:
        return 0.0
    if kind == "beta":
        return (1.0 - t) ** par
    if t <= 0.5:
        return 1.0
    return 1.0 - _chi(par, t)


def reg1d_brute(kind, g, k, m, profile, cutoff_s, gt, eps,
                weight=None) -> complex:
    """One-variable epsilon-regularized pairing by adaptive quadrature.

    The witness is t^gt * w(t); a weight scales the cutoff argument, it is
    not a factor of the integrand.  weight, if given, is a pair (w, dw) of
    callables on t = |x|^2.

    kind "PV": chi(t^gt w / eps) t^(k-g) rho(t); requires k - g == m.
    kind "RES": chi'(t^gt w / eps) d/dt[t^gt w] / eps t^(1+k-g) rho(t);
    requires k - g == m - 1.
    """
    g = int(g)
    lo = (eps / 2.0) ** (1.0 / gt)
    hi = eps ** (1.0 / gt)
    w, dw = weight or ((lambda t: 1.0), (lambda t: 0.0))
    if kind == "PV":
        if k - g != m:
            return 0.0j
        f = lambda t: _chi(cutoff_s, t ** gt * w(t) / eps) * t ** (k - g) * \
            _rho(profile, t)
    else:
        if k - g != m - 1:
            return 0.0j
        e = 1 + k - g
        f = lambda t: _chi_prime(cutoff_s, t ** gt * w(t) / eps) * \
            ((gt * t ** (gt - 1) * w(t) + t ** gt * dw(t)) / eps) * \
            t ** e * _rho(profile, t)
    pts = sorted(p for p in (lo, hi, 0.5) if 0.0 < p < 1.0)
    val, err = quad(f, 0.0, 1.0, points=pts, limit=200, epsabs=1e-13,
                    epsrel=1e-12)
    return 2j * cmath.pi * val


def fd_derivative(fn, x: float, h: float = 1e-6) -> float:
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def fd_wirtinger_bar(fn, z: complex, h: float = 1e-6) -> complex:
    """Numerical d/d(conj z) via four first-order differences."""
    dre = (fn(z + h) - fn(z - h)) / (2.0 * h)
    dim = (fn(z + 1j * h) - fn(z - 1j * h)) / (2.0 * h)
    return 0.5 * (dre + 1j * dim)
