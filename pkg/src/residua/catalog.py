"""Deterministic randomized catalog of monomial product cases.

Entries carry an ordered step list plus a compatible test form and are
reproducible from (seed, index) alone.  Around seventy percent are
steered through the angular selection rule so their exact value is
typically nonzero; the rest are drawn freely.  Helper selectors pick
the entries used by the numerical consistency and pole checks.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .currents import ProductStep
from .testforms import RadialProfile, TestForm


@dataclass(frozen=True)
class CatalogEntry:
    index: int
    steps: tuple[ProductStep, ...]
    phi: TestForm
    targeted: bool

    @property
    def n(self) -> int:
        return self.phi.n

    @property
    def q(self) -> int:
        return len(self.steps)

    def disjoint_supports(self) -> bool:
        seen: set[int] = set()
        for st in self.steps:
            sup = set(st.support)
            if seen & sup:
                return False
            seen |= sup
        return True

    def coupling_dim(self) -> int:
        """Largest block of radial variables tied together by step supports."""
        parent = list(range(self.n))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for st in self.steps:
            sup = st.support
            for v in sup[1:]:
                parent[find(v)] = find(sup[0])
        sizes: dict[int, int] = {}
        for v in range(self.n):
            r = find(v)
            sizes[r] = sizes.get(r, 0) + 1
        return max(sizes.values(), default=0)


def _targeted_entry(rng: random.Random, index: int) -> CatalogEntry:
    """Steer an entry through the full selection rule so the exact value
    is nonzero: residue columns get a diagonal coefficient matrix, no
    principal-value step touches a residue variable (a later one would
    annihilate the product), residue variables take m_i = 0 and
    k_i = G_i - 1; per-variable totals stay G_i <= 3."""
    n = rng.randint(1, 3)
    q = rng.randint(1, 3)
    r = rng.randint(0, min(q, n))
    if r == n:
        q = r
    kinds = ["RES"] * r + ["PV"] * (q - r)
    rng.shuffle(kinds)
    res_vars = rng.sample(range(n), r)
    free_vars = [i for i in range(n) if i not in res_vars]
    res_iter = iter(res_vars)

    gammas = [[0] * n for _ in kinds]
    usage = [0] * n
    for v in res_vars:
        usage[v] += 1
    for s, kind in enumerate(kinds):
        if kind == "RES":
            v = next(res_iter)
        else:
            v = rng.choice([i for i in free_vars if usage[i] < 3] or free_vars)
            usage[v] += 1
        gammas[s][v] = 1
    for _ in range(rng.randint(0, 2 * q)):
        s = rng.randrange(q)
        pool = range(n) if kinds[s] == "RES" else free_vars
        v = rng.choice([i for i in pool if i in free_vars or gammas[s][i] > 0]
                       or [None])
        if v is None or usage[v] >= 3:
            continue
        if gammas[s][v] > 0 or rng.random() < 0.4:
            gammas[s][v] += 1
            usage[v] += 1
    steps = tuple(
        ProductStep(kind, tuple(g)) for kind, g in zip(kinds, gammas)
    )

    G = [sum(st.gamma[i] for st in steps) for i in range(n)]
    k = [0] * n
    m = [0] * n
    for i in range(n):
        if i in res_vars:
            k[i] = G[i] - 1
        else:
            m[i] = rng.randint(0, 3 - G[i])
            k[i] = m[i] + G[i]
    M = free_vars
    coeff = rng.choice(["1", "-1", "1/2", "2", "i", "1+i"])
    profiles = [RadialProfile.beta(rng.randint(1, 3)) for _ in range(n)]
    phi = TestForm.make(n, [(tuple(k), tuple(m), coeff)], profiles, M=M)
    return CatalogEntry(index, steps, phi, True)


def _free_entry(rng: random.Random, index: int) -> CatalogEntry:
    n = rng.randint(1, 3)
    q = rng.randint(1, 3)
    res_left = n
    steps = []
    for _ in range(q):
        kind = "RES" if res_left and rng.random() < 0.5 else "PV"
        if kind == "RES":
            res_left -= 1
        gamma = [0] * n
        for v in rng.sample(range(n), rng.randint(1, n)):
            gamma[v] = rng.randint(1, 3)
        steps.append(ProductStep(kind, tuple(gamma)))
    k = tuple(rng.randint(0, 3) for _ in range(n))
    m = tuple(rng.randint(0, 3) for _ in range(n))
    M = [i for i in range(n) if rng.random() < 0.5]
    coeff = rng.choice(["1", "-1", "1/3", "i"])
    profiles = [RadialProfile.beta(rng.randint(1, 3)) for _ in range(n)]
    phi = TestForm.make(n, [(k, m, coeff)], profiles, M=M)
    return CatalogEntry(index, tuple(steps), phi, False)


def triangle_catalog(seed: int, count: int = 200) -> tuple[CatalogEntry, ...]:
    out = []
    for index in range(count):
        rng = random.Random(f"catalog:{seed}:{index}")
        if rng.random() < 0.7:
            out.append(_targeted_entry(rng, index))
        else:
            out.append(_free_entry(rng, index))
    return tuple(out)


def disjoint_entries(
    entries: Sequence[CatalogEntry],
) -> tuple[CatalogEntry, ...]:
    return tuple(e for e in entries if e.disjoint_supports())


def quad_subcatalog(
    entries: Sequence[CatalogEntry], count: int = 30
) -> tuple[CatalogEntry, ...]:
    """First entries cheap enough for the epsilon-side consistency run:
    coupled radial blocks of dimension at most 2 and a nonzero exact value."""
    from . import mellin
    from .currents import pair_with_testform, sequential_product

    picked = []
    for e in entries:
        if e.coupling_dim() > 2:
            continue
        exact = pair_with_testform(sequential_product(e.steps), e.phi)
        if exact.is_zero():
            continue
        picked.append(e)
        if len(picked) >= count:
            break
    return tuple(picked)


def tube_entries(
    entries: Sequence[CatalogEntry], count: int = 8
) -> tuple[CatalogEntry, ...]:
    """Entries whose steps are all residue type, eligible for the exact
    tube evaluation path."""
    picked = []
    for e in entries:
        if all(st.kind == "RES" for st in e.steps) and e.coupling_dim() <= 2:
            picked.append(e)
            if len(picked) >= count:
                break
    return tuple(picked)
