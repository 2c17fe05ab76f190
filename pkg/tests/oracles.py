"""Independent reference computations used as test oracles.

Each oracle avoids the code path it checks: brute-force enumeration instead
of dynamic programming or double-factorial identities, and incomplete-gamma
closed forms or fixed-grid quadrature instead of adaptive quadrature.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict

import numpy as np
from scipy import integrate, special


# --- limit laws ------------------------------------------------------------

def monomial_tail_gamma(a: float, p: float, z: float) -> tuple[float, float]:
    """``(c1, P(Y >= z))`` for density ``c1 exp(-a|y|^q/q)`` with ``q = p + 1`` (z >= 0).

    Substituting ``t = a y^q / q`` turns the tail integral into
    ``(1/q) (q/a)^(1/q) Gamma(1/q, a z^q / q)``.
    """
    q = p + 1.0
    scale = (1.0 / q) * (q / a) ** (1.0 / q)
    full = scale * special.gamma(1.0 / q)
    c1 = 1.0 / (2.0 * full)
    upper = scale * special.gammaincc(1.0 / q, a * z**q / q) * special.gamma(1.0 / q)
    return c1, c1 * upper


def trapezoid_normalizer(G, radius: float, num: int = 400_001) -> float:
    y = np.linspace(-radius, radius, num)
    return 1.0 / integrate.trapezoid(np.exp(-G(y)), y)


def gaussian_tail(z: float, variance: float = 1.0) -> float:
    return 0.5 * special.erfc(z / math.sqrt(2.0 * variance))


# --- Curie-Weiss -------------------------------------------------------------

def cw_bruteforce(points, weights, n: int) -> dict[float, float]:
    """``{S: P(S_n = S)}`` by summing over every configuration in ``supp(rho)^n``."""
    mass: dict[float, float] = defaultdict(float)
    for combo in itertools.product(range(len(points)), repeat=n):
        s = sum(points[i] for i in combo)
        w = math.prod(weights[i] for i in combo) * math.exp(s * s / (2.0 * n))
        mass[round(s, 9)] += w
    z = sum(mass.values())
    return {s: v / z for s, v in mass.items()}


# --- matchings and monomer-dimer ---------------------------------------------

def matchings(vertices: tuple[int, ...]):
    """Every set of pairwise disjoint edges on ``vertices`` (complete graph)."""
    if not vertices:
        yield ()
        return
    first, rest = vertices[0], vertices[1:]
    # first vertex unmatched
    yield from matchings(rest)
    for i, v in enumerate(rest):
        remaining = rest[:i] + rest[i + 1:]
        for m in matchings(remaining):
            yield ((first, v),) + m


def perfect_matchings(vertices: tuple[int, ...]):
    if not vertices:
        yield ()
        return
    first, rest = vertices[0], vertices[1:]
    for i, v in enumerate(rest):
        for m in perfect_matchings(rest[:i] + rest[i + 1:]):
            yield ((first, v),) + m


def perfect_matching_count(m: int) -> int:
    return sum(1 for _ in perfect_matchings(tuple(range(m))))


def md_bruteforce(J: float, h: float, n: int) -> dict[int, float]:
    """``{M: P(#monomers = M)}`` from the Gibbs measure over all dimer configurations of K_n."""
    b = math.log(n) / 2.0 + h - J
    mass: dict[int, float] = defaultdict(float)
    for D in matchings(tuple(range(n))):
        M = n - 2 * len(D)
        m = M / n
        mass[M] += math.exp(n * (J * m * m + b * m))
    z = sum(mass.values())
    return {M: v / z for M, v in mass.items()}
