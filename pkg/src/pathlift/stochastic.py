"""Brownian driving noise and stochastic development.

Sampling is counter-based: path p of a run with seed s draws from a Philox
stream keyed by (s, p), so any path is reproducible in isolation and Monte
Carlo results do not depend on worker count or scheduling.  Gaussians come
from the inverse CDF of strictly-interior uniforms, so the k-th increment of
a path occupies a fixed counter offset and single steps can be regenerated
without replaying the stream (``increments_at_step``).

Scheme conventions, fixed here once for the whole package:

  * every integral against the Stratonovich differential (development itself,
    curvature integrals) uses midpoint/Heun evaluation;
  * every integral against the Ito differential uses left-point sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

from . import _kernels
from .grid import CMVector, GridSpec
from .manifolds import ManifoldModel
from .rolling import FramePath

REPAIR_LIMIT = 1e-3

# uniforms from Generator.random are k / 2^53; half a ulp recenters them into
# the open interval so ndtri never sees 0 or 1
_U_SHIFT = 0.5**54


class StepTooCoarseError(RuntimeError):
    """Per-step repair exceeded REPAIR_LIMIT: refine the grid."""


@dataclass(frozen=True)
class BrownianDraw:
    seed: int
    path_index: int
    grid: GridSpec
    increments: np.ndarray  # (n, d), variance dt per coordinate

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def betas(self) -> np.ndarray:
        """Accumulated samples of beta on the nodes, beta(0) = 0."""
        return np.concatenate(
            [np.zeros((1, self.d)), np.cumsum(self.increments, axis=0)]
        )


def _keyed_generator(seed: int, path_index: int) -> Generator:
    return Generator(Philox(key=np.array([seed, path_index], dtype=np.uint64)))


def sample_brownian(seed: int, path_index: int, grid: GridSpec, d: int) -> BrownianDraw:
    u = _keyed_generator(seed, path_index).random((grid.n_steps, d))
    inc = ndtri(u + _U_SHIFT) * np.sqrt(grid.dt)
    return BrownianDraw(seed, path_index, grid, inc)


def sample_increments_batch(seed: int, first_path: int, count: int,
                            grid: GridSpec, d: int) -> np.ndarray:
    """Increments for paths first_path .. first_path+count-1, shape (B, n, d)."""
    out = np.empty((count, grid.n_steps, d))
    for b in range(count):
        out[b] = _keyed_generator(seed, first_path + b).random((grid.n_steps, d))
    return ndtri(out + _U_SHIFT) * np.sqrt(grid.dt)


def increments_at_step(seed: int, path_index: int, grid: GridSpec, d: int,
                       step: int) -> np.ndarray:
    """Regenerate one step's increment by advancing the counter, without
    drawing the earlier steps.

    The step occupies double-precision draws [step*d, (step+1)*d); Philox
    advances in blocks of 4 doubles, so jump to the enclosing block and
    discard the within-block offset.
    """
    first = step * d
    bg = Philox(key=np.array([seed, path_index], dtype=np.uint64))
    bg.advance(first // 4)
    gen = Generator(bg)
    skip = first % 4
    u = gen.random(skip + d)[skip:]
    return ndtri(u + _U_SHIFT) * np.sqrt(grid.dt)


def stochastic_develop(b: BrownianDraw, m: ManifoldModel) -> FramePath:
    """Development of the Brownian draw: Heun predictor-corrector for the
    Stratonovich frame-bundle SDE with per-step repair."""
    if b.d != m.dim:
        raise ValueError("draw dimension does not match the manifold")
    xs, us, rep, tan = _kernels.develop_paths(
        m.kind_code, m.kappa, m.origin(), m.base_frame(), b.increments[None]
    )
    if rep[0] > REPAIR_LIMIT:
        raise StepTooCoarseError(
            f"per-step repair {rep[0]:.3e} exceeds {REPAIR_LIMIT:.0e}; "
            "increase n_steps"
        )
    return FramePath(m, b.grid, xs[0], us[0], "stochastic", float(rep[0]), float(tan[0]))


@dataclass(frozen=True)
class CurvatureIntegral:
    """A_s<k> = int_0^s R_u(k_r, . ) against the driving increments, with both
    scheme variants: Stratonovich midpoint (the defining one) and left-point.
    Values are so(d)-valued paths on the nodes, shape (n+1, d, d)."""

    strat: np.ndarray
    ito: np.ndarray

    @property
    def max_diff(self) -> float:
        return float(np.max(np.abs(self.strat - self.ito)))


def curvature_integral(fp: FramePath, k, b: BrownianDraw,
                       m: ManifoldModel, scheme_tol: float | None = None) -> CurvatureIntegral:
    """Accumulate R_{u_r}(k_r, db_r) along the path.

    k: node samples (n+1, d) or a CMVector.  The integrand has no martingale
    part for the damped solutions used here, so the two schemes must agree to
    O(dt); a gross mismatch (beyond scheme_tol, default 0.1*(1+sup|k|)) raises.
    """
    kv = k.values if isinstance(k, CMVector) else np.asarray(k, dtype=float)
    n = fp.grid.n_steps
    if kv.shape != (n + 1, m.dim):
        raise ValueError("integrand samples do not match the grid")
    db = b.increments
    r_left = m.curvature_pair(kv[:-1], db)       # R(k_j, db_j)
    r_right = m.curvature_pair(kv[1:], db)       # R(k_{j+1}, db_j)
    zero = np.zeros((1, m.dim, m.dim))
    strat = np.concatenate([zero, np.cumsum(0.5 * (r_left + r_right), axis=0)])
    ito = np.concatenate([zero, np.cumsum(r_left, axis=0)])
    out = CurvatureIntegral(strat, ito)
    tol = scheme_tol if scheme_tol is not None else 0.1 * (1.0 + np.max(np.abs(kv)))
    if out.max_diff > tol:
        raise RuntimeError(
            f"Stratonovich/Ito curvature integrals disagree by {out.max_diff:.3e}"
        )
    return out


def ito_integral(integrand: np.ndarray, b: BrownianDraw):
    """Left-point Riemann sums against the increments.

    integrand: node samples, shape (n+1,) scalar weights on all coordinates is
    not supported -- pass (n+1, d) for sum_a int f_a dbeta^a (scalar result) or
    (n+1, d, d) for a matrix integrand applied to dbeta (vector result).
    """
    f = np.asarray(integrand, dtype=float)
    db = b.increments
    if f.shape[0] != db.shape[0] + 1:
        raise ValueError("integrand must be sampled on the nodes")
    if f.ndim == 2:
        return float(np.sum(f[:-1] * db))
    if f.ndim == 3:
        return np.einsum("kij,kj->i", f[:-1], db)
    raise ValueError("integrand must be (n+1, d) or (n+1, d, d)")
