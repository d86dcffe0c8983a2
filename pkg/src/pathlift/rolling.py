"""Deterministic rolling: horizontal lift, development and anti-development
between flat paths and manifold paths, realized on the embedded frame bundle.

The connection form is never reified; horizontality is the embedded transport
equation (v' = -<sigma', v> sigma on the sphere, the sign-flipped Minkowski
analogue on the hyperboloid, constant frames in flat space), integrated by
Heun with per-step repair so the deterministic and stochastic pipelines share
one scheme order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import CMVector, GridSpec, cm_from_values
from .manifolds import ManifoldModel, GeometryError


@dataclass(frozen=True)
class FramePath:
    """A discretized path on M with an orthonormal frame along it."""

    manifold: ManifoldModel
    grid: GridSpec
    xs: np.ndarray  # (n+1, D)
    us: np.ndarray  # (n+1, D, d)
    provenance: str = "deterministic"  # or "stochastic"
    rep_max: float = 0.0
    tan_max: float = 0.0

    def __post_init__(self):
        n = self.grid.n_steps
        D, d = self.manifold.ambient_dim, self.manifold.dim
        if self.xs.shape != (n + 1, D) or self.us.shape != (n + 1, D, d):
            raise GeometryError("FramePath arrays do not match grid/manifold")

    @property
    def endpoint(self) -> np.ndarray:
        return self.xs[-1]

    @property
    def end_frame(self) -> np.ndarray:
        return self.us[-1]

    def frame_coords(self, k: int, w: np.ndarray) -> np.ndarray:
        """u_k^{-1} w for an ambient tangent vector w at x_k."""
        return self.manifold.frame_inverse_apply(self.us[k], w)

    def max_defect(self) -> float:
        m = self.manifold
        d_pt = float(np.max(m.point_defect(self.xs)))
        d_fr = max(m.frame_defect(self.xs[k], self.us[k]) for k in range(self.xs.shape[0]))
        return max(d_pt, d_fr)


def horizontal_lift(sigma: np.ndarray, m: ManifoldModel,
                    u0: np.ndarray | None = None) -> FramePath:
    """Parallel-transport the start frame along a given point path.

    sigma: (n+1, D) points starting at m.origin() (or anywhere; the frame u0
    must then be supplied and tangent at sigma[0]).
    """
    sigma = np.asarray(sigma, dtype=float)
    m.check_point(sigma, tol=1e-9)
    grid = GridSpec(sigma.shape[0] - 1)
    if u0 is None:
        if np.linalg.norm(sigma[0] - m.origin()) > 1e-9:
            raise GeometryError("path does not start at the base point; pass u0")
        u0 = m.base_frame()
    us, rep, tan = _kernels.transport_frames(m.kind_code, m.kappa, sigma, u0)
    return FramePath(m, grid, sigma, us, "deterministic", rep, tan)


def develop(w: CMVector, m: ManifoldModel, u0: np.ndarray | None = None) -> FramePath:
    """Roll the flat path w onto M: x' = u w' coupled with frame transport."""
    if w.d != m.dim:
        raise GeometryError("CMVector dimension does not match the manifold")
    u0 = m.base_frame() if u0 is None else u0
    dw = (w.dmid * w.grid.dt)[None, :, :]
    xs, us, rep, tan = _kernels.develop_paths(m.kind_code, m.kappa, m.origin(), u0, dw)
    return FramePath(m, w.grid, xs[0], us[0], "deterministic",
                     float(rep[0]), float(tan[0]))


def anti_develop(fp: FramePath) -> CMVector:
    """w(t) = int_0^t u^{-1} sigma' ds by the midpoint rule: chord increments
    paired with the average of the adjacent frame inverses."""
    m = fp.manifold
    g = m.metric_sign()
    delta = np.diff(fp.xs, axis=0)  # (n, D)
    gd = g[None, :, None] * fp.us  # G u, (n+1, D, d)
    inc0 = np.einsum("kDa,kD->ka", gd[:-1], delta)
    inc1 = np.einsum("kDa,kD->ka", gd[1:], delta)
    inc = 0.5 * (inc0 + inc1)
    vals = np.concatenate([np.zeros((1, m.dim)), np.cumsum(inc, axis=0)])
    return CMVector(fp.grid, vals, inc / fp.grid.dt)


def path_energy(fp: FramePath) -> float:
    """int |sigma'|_g^2 dt with chord-slope midpoint quadrature."""
    m = fp.manifold
    delta = np.diff(fp.xs, axis=0) / fp.grid.dt
    return float(np.sum(m.ambient_dot(delta, delta)) * fp.grid.dt)
