"""Deterministic Hilbert calculus for the alpha-inner product on H(R^d):

    <h, k>_alpha = int_0^1 (h' + alpha h) . (k' + alpha k) dt.

The fundamental solution S of S' + alpha S = 0, S(0) = I carries everything:

    endpoint adjoint   (E1* a)(t) = S(t) G(t) S(1)^T a,
    minimal-norm lift  h(t)       = S(t) G(t) G(1)^{-1} S(1)^{-1} a,

with G(t) = int_0^t [S^T S]^{-1} dr.  S is integrated by classical RK4 on the
node grid (stages at nodes and midpoints), midpoint values are recovered by
cubic Hermite interpolation, and G accumulates by Simpson's rule on the half
grid, so every route below is 4th-order except the midpoint quadrature of the
inner product itself, which is the O(dt^2) term the convergence tests measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CMVector, GridSpec, GridError

COND_LIMIT = 1e12


class SingularFundamentalError(RuntimeError):
    """S(t) became numerically singular: alpha is outside the intended regime."""


@dataclass(frozen=True)
class AlphaKernel:
    grid: GridSpec
    alpha_half: np.ndarray  # (2n+1, d, d)
    s_half: np.ndarray      # (2n+1, d, d) fundamental solution
    g_half: np.ndarray      # (2n+1, d, d) accumulated Gram integral
    cond_max: float

    @property
    def d(self) -> int:
        return self.alpha_half.shape[1]

    @property
    def s_nodes(self) -> np.ndarray:
        return self.s_half[0::2]

    @property
    def s_mids(self) -> np.ndarray:
        return self.s_half[1::2]

    @property
    def alpha_mids(self) -> np.ndarray:
        return self.alpha_half[1::2]

    @property
    def g_nodes(self) -> np.ndarray:
        return self.g_half[0::2]


def _alpha_samples(alpha, grid: GridSpec, d: int | None):
    """Normalize alpha input to half-grid samples (2n+1, d, d) for storage
    plus per-step stage triples (n, 3, d, d) for the RK4 stages.

    Accepted forms: callable t -> (d, d); per-step constants (n, d, d), in
    which case every stage of step k sees exactly the k-th value; node samples
    (n+1, d, d) with midpoints by averaging; half-grid samples (2n+1, d, d).
    """
    n = grid.n_steps
    per_step = None
    if callable(alpha):
        out = np.stack([np.asarray(alpha(t), dtype=float) for t in grid.half_nodes])
    else:
        arr = np.asarray(alpha, dtype=float)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise GridError("alpha samples must have shape (*, d, d)")
        if arr.shape[0] == 2 * n + 1:
            out = arr.copy()
        elif arr.shape[0] == n + 1:
            out = np.empty((2 * n + 1,) + arr.shape[1:])
            out[0::2] = arr
            out[1::2] = 0.5 * (arr[:-1] + arr[1:])
        elif arr.shape[0] == n:
            per_step = arr
            out = np.empty((2 * n + 1,) + arr.shape[1:])
            out[1::2] = arr
            out[0] = arr[0]
            out[2::2] = arr  # boundary nodes carry the right-continuous value
        else:
            raise GridError(
                f"alpha sample count {arr.shape[0]} fits neither n, n+1 nor 2n+1"
            )
    if d is not None and out.shape[1] != d:
        raise GridError("alpha dimension mismatch")
    if per_step is None:
        stages = np.stack([out[0:-1:2], out[1::2], out[2::2]], axis=1)
    else:
        stages = np.repeat(per_step[:, None], 3, axis=1)
    return out, stages


def solve_fundamental(alpha, grid: GridSpec, d: int | None = None) -> AlphaKernel:
    """Integrate S' = -alpha S with S(0) = I and accumulate G."""
    ah, stages = _alpha_samples(alpha, grid, d)
    n, dim = grid.n_steps, ah.shape[1]
    dt = grid.dt
    eye = np.eye(dim)

    s_half = np.empty_like(ah)
    s_half[0] = eye
    s = eye.copy()
    for k in range(n):
        a0, am, a1 = stages[k]
        k1 = -a0 @ s
        k2 = -am @ (s + 0.5 * dt * k1)
        k3 = -am @ (s + 0.5 * dt * k2)
        k4 = -a1 @ (s + dt * k3)
        s_new = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        # cubic Hermite midpoint from endpoint values and endpoint slopes
        s_half[2 * k + 1] = 0.5 * (s + s_new) + (dt / 8.0) * ((-a0 @ s) - (-a1 @ s_new))
        s_half[2 * k + 2] = s_new
        s = s_new

    conds = np.linalg.cond(s_half[0::2])
    cond_max = float(np.max(conds))
    if cond_max > COND_LIMIT:
        raise SingularFundamentalError(
            f"fundamental solution condition number {cond_max:.3e} exceeds {COND_LIMIT:.0e}"
        )

    w = np.linalg.inv(np.einsum("kji,kjl->kil", s_half, s_half))  # (S^T S)^{-1}
    g_half = np.empty_like(w)
    g_half[0] = 0.0
    for k in range(n):
        w0, wm, w1 = w[2 * k], w[2 * k + 1], w[2 * k + 2]
        # open Newton-Cotes for the first half, Simpson for the full step
        g_half[2 * k + 1] = g_half[2 * k] + (dt / 24.0) * (5 * w0 + 8 * wm - w1)
        g_half[2 * k + 2] = g_half[2 * k] + (dt / 6.0) * (w0 + 4 * wm + w1)

    return AlphaKernel(grid, ah, s_half, g_half, cond_max)


def alpha_inner(h: CMVector, k: CMVector, ker: AlphaKernel) -> float:
    """Midpoint-rule quadrature of (h' + alpha h) . (k' + alpha k)."""
    if h.grid.n_steps != ker.grid.n_steps or h.d != ker.d:
        raise GridError("CMVector and kernel grids do not match")
    if k.grid.n_steps != ker.grid.n_steps or k.d != ker.d:
        raise GridError("CMVector and kernel grids do not match")
    am = ker.alpha_mids
    vh = h.dmid + np.einsum("kij,kj->ki", am, h.mids())
    vk = k.dmid + np.einsum("kij,kj->ki", am, k.mids())
    return float(np.sum(vh * vk) * ker.grid.dt)


def alpha_norm(h: CMVector, ker: AlphaKernel) -> float:
    return float(np.sqrt(max(alpha_inner(h, h, ker), 0.0)))


def _adjoint_paths(ker: AlphaKernel, rhs: np.ndarray) -> CMVector:
    """Path t -> S(t) G(t) rhs with exact-order midpoint derivatives."""
    n = ker.grid.n_steps
    s_n, s_m = ker.s_nodes, ker.s_mids
    g_n = ker.g_nodes
    g_m = ker.g_half[1::2]
    a_m = ker.alpha_mids
    w_m = np.linalg.inv(np.einsum("kji,kjl->kil", s_m, s_m))

    vals = np.einsum("kij,kjl,l->ki", s_n, g_n, rhs)
    # h' = -alpha S G rhs + S (S^T S)^{-1} rhs, evaluated at midpoints
    sg = np.einsum("kij,kjl,l->ki", s_m, g_m, rhs)
    dmid = -np.einsum("kij,kj->ki", a_m, sg) + np.einsum(
        "kij,kjl,l->ki", s_m, w_m, rhs
    )
    vals[0] = 0.0
    return CMVector(ker.grid, vals, dmid)


def endpoint_adjoint(a: np.ndarray, ker: AlphaKernel) -> CMVector:
    """E1* a, the alpha-adjoint of endpoint evaluation: S(t) G(t) S(1)^T a."""
    a = np.asarray(a, dtype=float)
    return _adjoint_paths(ker, ker.s_nodes[-1].T @ a)


def minimal_lift(a: np.ndarray, ker: AlphaKernel) -> CMVector:
    """The minimum alpha-norm h with h(1) = a: S(t) G(t) G(1)^{-1} S(1)^{-1} a."""
    a = np.asarray(a, dtype=float)
    g1 = ker.g_nodes[-1]
    s1 = ker.s_nodes[-1]
    try:
        rhs = np.linalg.solve(g1, np.linalg.solve(s1, a))
    except np.linalg.LinAlgError as exc:  # cannot occur for finite alpha
        raise SingularFundamentalError("Gram integral G(1) is singular") from exc
    return _adjoint_paths(ker, rhs)


def endpoint_map_gram(ker: AlphaKernel) -> np.ndarray:
    """E1 E1* = S(1) G(1) S(1)^T, the d x d endpoint Gram matrix."""
    s1 = ker.s_nodes[-1]
    return s1 @ ker.g_nodes[-1] @ s1.T
