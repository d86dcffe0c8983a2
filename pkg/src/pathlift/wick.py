"""Exact Gaussian moments for the flat-space oracles, by brute-force Isserlis
pairing.

Every quantity appearing in the flat checks (coordinates of the Brownian path
at fixed times, Ito integrals of deterministic polynomial integrands) is a
centered jointly-Gaussian family of the form

    G = int_0^upto  t^power <c, dbeta_t>,

with covariance

    cov(G1, G2) = <c1, c2> * m^(p1+p2+1) / (p1+p2+1),    m = min(upto1, upto2).

Moments of products are summed over perfect matchings; expressions are
polynomials in such factors, represented as lists of (coefficient, [factors]).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class GaussianLinear:
    """int_0^upto t^power <c, dbeta_t>; slot coordinate <c, beta_s> is the
    special case power=0, upto=s."""

    c: tuple
    power: int = 0
    upto: float = 1.0


def slot(c, s: float) -> GaussianLinear:
    return GaussianLinear(tuple(float(x) for x in np.atleast_1d(c)), 0, float(s))


def ito_poly(c, power: int, upto: float = 1.0) -> GaussianLinear:
    return GaussianLinear(tuple(float(x) for x in np.atleast_1d(c)), int(power), float(upto))


def cov(a: GaussianLinear, b: GaussianLinear) -> float:
    m = min(a.upto, b.upto)
    p = a.power + b.power + 1
    return float(np.dot(a.c, b.c)) * m**p / p


def moment(factors: Sequence[GaussianLinear]) -> float:
    """E[prod factors] by Isserlis' theorem (0 for odd counts)."""
    k = len(factors)
    if k == 0:
        return 1.0
    if k % 2 == 1:
        return 0.0
    first, rest = factors[0], list(factors[1:])
    total = 0.0
    for i in range(len(rest)):
        total += cov(first, rest[i]) * moment(rest[:i] + rest[i + 1 :])
    return total


def expect(poly: Sequence[tuple]) -> float:
    """E of sum_k coeff_k * prod(factors_k)."""
    return sum(coeff * moment(fs) for coeff, fs in poly)


def poly_product(p1: Sequence[tuple], p2: Sequence[tuple]) -> list[tuple]:
    return [(c1 * c2, list(f1) + list(f2)) for c1, f1 in p1 for c2, f2 in p2]
