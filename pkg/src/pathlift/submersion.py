"""Finite-dimensional check of the divergence structure under a Riemannian
submersion: for the minimal (horizontal) lift X^ of a base field X through a
coordinate projection pi : (R^3, g) -> (R^2, h),

    div_g(X^) = div_h(X) o pi + rho,

where rho depends only on the value X^(m).  rho is verified, not constructed:
divergences come from the volume-density formula by 4th-order finite
differences, and the structure claim is tested through linearity/homogeneity
and locality of rho in the lifted value.

One warped-product case with hand-derived metrics is the committed golden
case: g = diag(c(z) h11, c(z) h22, b(x, y)) over h = diag(h11, h22) gives
rho(m, v) = (1/2) (v1 d_x log b + v2 d_y log b), independent of z.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

FD_STEP = 1e-4

_P = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])  # d(pi), coordinate projection


class SubmersionError(ValueError):
    pass


@dataclass(frozen=True)
class SubmersionCase:
    name: str
    g_diag: Callable[[np.ndarray], np.ndarray]  # (3,) -> diagonal of g
    h_diag: Callable[[np.ndarray], np.ndarray]  # (2,) -> diagonal of h
    rho_analytic: Callable[[np.ndarray, np.ndarray], float] | None = None


def product_case() -> SubmersionCase:
    def g_diag(p):
        x, y, _ = p
        return np.array([np.exp(0.2 * x), 1.0 + 0.1 * y**2, 1.0])

    def h_diag(q):
        x, y = q
        return np.array([np.exp(0.2 * x), 1.0 + 0.1 * y**2])

    return SubmersionCase("product", g_diag, h_diag, lambda p, v: 0.0)


def warped_case() -> SubmersionCase:
    def g_diag(p):
        x, y, z = p
        c = 1.0 + 0.2 * z**2
        return np.array(
            [c * np.exp(0.2 * x), c * (1.0 + 0.1 * y**2), np.exp(0.4 * x + 0.1 * x * y)]
        )

    def h_diag(q):
        x, y = q
        return np.array([np.exp(0.2 * x), 1.0 + 0.1 * y**2])

    def rho(p, v):
        x, y, _ = p
        return float(v[0] * (0.2 + 0.05 * y) + v[1] * (0.05 * x))

    return SubmersionCase("warped", g_diag, h_diag, rho)


def pseudo_lift(case: SubmersionCase, p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """v^ = G^{-1} P^T H (P G^{-1} P^T H)^{-1} v, the unique g-shortest vector
    over v; checks the submersion rank condition."""
    G = np.diag(case.g_diag(p))
    H = np.diag(case.h_diag(p[:2]))
    A = _P @ np.linalg.solve(G, _P.T @ H)
    sv = np.linalg.svd(_P @ np.linalg.inv(G) @ _P.T, compute_uv=False)
    if sv[-1] <= 1e-8:
        raise SubmersionError("projection differential lost full rank")
    return np.linalg.solve(G, _P.T @ (H @ np.linalg.solve(A, v)))


def divergence_volume(metric_diag, X, x: np.ndarray, step: float = FD_STEP) -> float:
    """(1 / sqrt(det g)) d_i (sqrt(det g) X^i) by 4th-order central
    differences; works in any dimension."""
    x = np.asarray(x, dtype=float)
    dim = x.size

    def dens_flux(y, i):
        return float(np.sqrt(np.prod(metric_diag(y))) * X(y)[i])

    acc = 0.0
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = step
        acc += (
            -dens_flux(x + 2 * e, i)
            + 8 * dens_flux(x + e, i)
            - 8 * dens_flux(x - e, i)
            + dens_flux(x - 2 * e, i)
        ) / (12 * step)
    return acc / float(np.sqrt(np.prod(metric_diag(x))))


def lifted_field(case: SubmersionCase, X_base: Callable) -> Callable:
    def xhat(p):
        return pseudo_lift(case, p, np.asarray(X_base(p[:2]), dtype=float))

    return xhat


def structure_residual(case: SubmersionCase, X_base: Callable, p: np.ndarray) -> dict:
    """rho(p) = div_g(X^)(p) - div_h(X)(pi(p)) with both divergences by FD."""
    p = np.asarray(p, dtype=float)
    div_g = divergence_volume(case.g_diag, lifted_field(case, X_base), p)
    div_h = divergence_volume(case.h_diag, lambda q: np.asarray(X_base(q), float), p[:2])
    out = {"point": p, "div_g_lift": div_g, "div_h_base": div_h, "rho": div_g - div_h}
    if case.rho_analytic is not None:
        out["rho_analytic"] = case.rho_analytic(p, np.asarray(X_base(p[:2]), float))
    return out


def linearity_report(case: SubmersionCase, X_base: Callable, Y_base: Callable,
                     p: np.ndarray, a: float = 2.0, b: float = -0.7) -> dict:
    """rho_{aX^ + bY^}(p) versus a rho_X(p) + b rho_Y(p) (the lift is linear in
    the base value, so this is homogeneity + additivity in X^(m))."""
    rx = structure_residual(case, X_base, p)["rho"]
    ry = structure_residual(case, Y_base, p)["rho"]
    combo = structure_residual(
        case, lambda q: a * np.asarray(X_base(q), float) + b * np.asarray(Y_base(q), float), p
    )["rho"]
    return {"rho_x": rx, "rho_y": ry, "rho_combo": combo,
            "defect": abs(combo - (a * rx + b * ry))}


def locality_report(case: SubmersionCase, X_base: Callable, p: np.ndarray) -> dict:
    """Two base fields agreeing in value at pi(p) (but not to first order)
    must produce the same rho(p)."""
    q0 = np.asarray(p[:2], dtype=float)
    x0 = np.asarray(X_base(q0), dtype=float)

    def X_perturbed(q):
        dq = np.asarray(q, float) - q0
        wiggle = np.array([np.sin(3.0 * dq[1]) + dq[0] ** 2, dq[0] - 0.5 * dq[1]])
        return np.asarray(X_base(q), float) + wiggle

    r1 = structure_residual(case, X_base, p)["rho"]
    r2 = structure_residual(case, X_perturbed, p)["rho"]
    drift = np.linalg.norm(np.asarray(X_perturbed(q0), float) - x0)
    return {"rho": r1, "rho_perturbed": r2, "defect": abs(r1 - r2),
            "value_agreement": float(drift)}


BASE_FIELDS = {
    "swirl": lambda q: np.array([np.sin(q[1]), q[0]]),
    "shear": lambda q: np.array([0.3 * q[0] + q[1] ** 2, np.cos(q[0])]),
    "const": lambda q: np.array([1.0, -0.5]),
}
