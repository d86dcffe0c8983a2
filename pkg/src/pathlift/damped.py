"""Damped parallel transport T, the Gram kernel K, and the minimal damped-norm
lift along a frame path.

T solves T' + (1/2) Ric_u T = 0, which is the fundamental-solution problem of
:mod:`pathlift.cmkernel` with alpha = Ric/2, so this module wraps that solver
twice: once for T and once for the inverse, integrated as its own ODE
U' = (1/2) U Ric (via the transposed system) with the product drift ||TU - I||
monitored instead of inverting per step.

The same formulas evaluated on a deterministic or a Brownian frame path give
the deterministic and the stochastic lift; nothing here depends on provenance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields
from .cmkernel import AlphaKernel, solve_fundamental
from .grid import CMVector, GridSpec, GridError
from .manifolds import ManifoldModel
from .rolling import FramePath

TU_DRIFT_LIMIT = 1e-6


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class DampedKernel:
    grid: GridSpec
    ric_half: np.ndarray     # (2n+1, d, d)
    t_half: np.ndarray       # (2n+1, d, d) damped transport T
    tinv_half: np.ndarray    # (2n+1, d, d) independently integrated inverse
    q_half: np.ndarray       # (2n+1, d, d) Q(s) = int T^{-1} T^{-T}
    tu_drift: float
    ric_bound: float         # (d-1) N

    @property
    def d(self) -> int:
        return self.ric_half.shape[1]

    @property
    def t_nodes(self) -> np.ndarray:
        return self.t_half[0::2]

    @property
    def tinv_nodes(self) -> np.ndarray:
        return self.tinv_half[0::2]

    @property
    def q_nodes(self) -> np.ndarray:
        return self.q_half[0::2]

    @property
    def t1(self) -> np.ndarray:
        return self.t_half[-1]

    @property
    def q1(self) -> np.ndarray:
        return self.q_half[-1]

    def k_nodes(self) -> np.ndarray:
        """K_s = T_s Q(s) T_1^T on the nodes."""
        return np.einsum("kij,kjl,ml->kim", self.t_nodes, self.q_nodes, self.t1)

    @property
    def k1(self) -> np.ndarray:
        return self.t1 @ self.q1 @ self.t1.T

    def k1_inverse(self) -> np.ndarray:
        """Inverse of K_1 by symmetric eigendecomposition, with the eigenvalue
        floor exp(-2 ric_bound)/2 (half the derivable lower bound) enforced."""
        k1 = 0.5 * (self.k1 + self.k1.T)
        w, v = np.linalg.eigh(k1)
        floor = 0.5 * np.exp(-2.0 * self.ric_bound)
        if np.min(w) < floor:
            raise TransportError(
                f"K_1 eigenvalue {np.min(w):.3e} fell below the floor {floor:.3e}"
            )
        return (v / w) @ v.T

    def ctilde(self) -> np.ndarray:
        """C~ = Q(1)^{-1} T_1^{-1}."""
        return np.linalg.solve(self.q1, self.tinv_half[-1])

    def sup_t_norm(self) -> float:
        return float(np.max(np.linalg.svd(self.t_half, compute_uv=False)))

    def sup_tinv_norm(self) -> float:
        return float(np.max(np.linalg.svd(self.tinv_half, compute_uv=False)))

    def phi_half(self, hvec: np.ndarray) -> np.ndarray:
        """(T_s^{-1})^T C~ h on the half grid, the driving term of the lift ODE."""
        return np.einsum("kji,j->ki", self.tinv_half, self.ctilde() @ hvec)


def damped_transport_from_ric(ric, grid: GridSpec, ric_bound: float,
                              d: int | None = None) -> DampedKernel:
    """Build the kernel from Ricci samples (same accepted forms as the
    fundamental-solution solver: callable, per-step, nodes, or half grid)."""
    tker: AlphaKernel = solve_fundamental(_half_ric(ric, grid, d), grid, d)
    ric_half = 2.0 * tker.alpha_half
    # U' = (1/2) U Ric  <=>  (U^T)' = -(-Ric^T/2) U^T
    uker = solve_fundamental(
        np.ascontiguousarray(-np.swapaxes(ric_half, 1, 2) / 2.0), grid
    )
    tinv_half = np.ascontiguousarray(np.swapaxes(uker.s_half, 1, 2))
    prod = np.einsum("kij,kjl->kil", tker.s_half, tinv_half)
    drift = float(np.max(np.abs(prod - np.eye(ric_half.shape[1]))))
    if drift > TU_DRIFT_LIMIT:
        raise TransportError(
            f"transport/inverse product drift {drift:.3e} exceeds {TU_DRIFT_LIMIT:.0e}"
        )
    return DampedKernel(grid, ric_half, tker.s_half, tinv_half, tker.g_half,
                        drift, float(ric_bound))


def _half_ric(ric, grid: GridSpec, d: int | None):
    if callable(ric):
        return lambda t: 0.5 * np.asarray(ric(t), dtype=float)
    return 0.5 * np.asarray(ric, dtype=float)


def damped_transport(fp: FramePath, m: ManifoldModel) -> DampedKernel:
    """Kernel along a frame path of one of the built-in models, where
    Ric_u = kappa (d-1) I for every frame."""
    ric = np.tile(m.ricci_endomorphism(fp.us[0]), (2 * fp.grid.n_steps + 1, 1, 1))
    return damped_transport_from_ric(ric, fp.grid, (m.dim - 1) * m.curvature_bound, m.dim)


# ---------------------------------------------------------------------------
# damped ODE solves and the lift
# ---------------------------------------------------------------------------


def _hermite_mid(y0, y1, f0, f1, dt):
    return 0.5 * (y0 + y1) + (dt / 8.0) * (f0 - f1)


def _solve_damped_stages(ker: DampedKernel, dh_half: np.ndarray) -> np.ndarray:
    """RK4 for Z' = -(1/2) Ric Z + dh with dh sampled on the half grid.
    dh_half may be (2n+1, d) or (2n+1, d, d); returns samples on the half grid
    (midpoints filled by cubic Hermite)."""
    n = ker.grid.n_steps
    dt = ker.grid.dt
    a = 0.5 * ker.ric_half
    z = np.zeros(dh_half.shape[1:])
    out = np.empty_like(dh_half)
    out[0] = 0.0
    for k in range(n):
        a0, am, a1 = a[2 * k], a[2 * k + 1], a[2 * k + 2]
        h0, hm, h1 = dh_half[2 * k], dh_half[2 * k + 1], dh_half[2 * k + 2]
        k1 = -a0 @ z + h0
        k2 = -am @ (z + 0.5 * dt * k1) + hm
        k3 = -am @ (z + 0.5 * dt * k2) + hm
        k4 = -a1 @ (z + dt * k3) + h1
        z_new = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[2 * k + 1] = _hermite_mid(z, z_new, -a0 @ z + h0, -a1 @ z_new + h1, dt)
        out[2 * k + 2] = z_new
        z = z_new
    return out


def solve_damped(h, ker: DampedKernel) -> CMVector:
    """Solve Z' = -(1/2) Ric Z + h', Z(0) = 0.

    h may be a CMVector (derivative samples interpolated from midpoints to the
    half grid, second-order) or derivative samples on the half grid (2n+1, d).
    """
    n = ker.grid.n_steps
    if isinstance(h, CMVector):
        dm = h.dmid
        dh = np.empty((2 * n + 1, ker.d))
        dh[1::2] = dm
        dh[0] = dm[0]
        dh[-1] = dm[-1]
        dh[2:-1:2] = 0.5 * (dm[:-1] + dm[1:])
    else:
        dh = np.asarray(h, dtype=float)
        if dh.shape != (2 * n + 1, ker.d):
            raise GridError("derivative samples must live on the half grid")
    zh = _solve_damped_stages(ker, dh)
    dmid = -0.5 * np.einsum("kij,kj->ki", ker.ric_half[1::2], zh[1::2]) + dh[1::2]
    return CMVector(ker.grid, zh[0::2], dmid)


def damped_unit_responses(ker: DampedKernel) -> np.ndarray:
    """All Z_alpha at once: the matrix solution of Z' = -(1/2) Ric Z + (T^{-1})^T
    whose alpha-th column is the response to e_alpha.  Half-grid samples."""
    drive = np.ascontiguousarray(np.swapaxes(ker.tinv_half, 1, 2))
    return _solve_damped_stages(ker, drive)


@dataclass(frozen=True)
class LiftResult:
    hvec: np.ndarray          # H = u_1^{-1} X(x_1)
    coeffs: np.ndarray        # C~ H, the expansion over the unit responses
    j_kform: CMVector         # K_s K_1^{-1} H
    z_phi: CMVector           # damped ODE route (Z of the Phi drive)
    lifted: np.ndarray        # (n+1, D) tangent field u_s J_s along the path
    kform_ode_gap: float


def orthogonal_lift(fp: FramePath, ker: DampedKernel, X: fields.VectorFieldSpec,
                    m: ManifoldModel) -> LiftResult:
    """The minimal damped-norm lift of X along fp, by both routes:
    J_s = K_s K_1^{-1} H and the damped ODE driven by phi = (T^{-1})^T C~ H."""
    if fp.grid.n_steps != ker.grid.n_steps:
        raise GridError("path and kernel grids do not match")
    hvec = m.frame_inverse_apply(fp.end_frame, fields.value(m, X, fp.endpoint))

    k1inv_h = ker.k1_inverse() @ hvec
    j_vals = np.einsum("kij,j->ki", ker.k_nodes(), k1inv_h)
    # J' = -(1/2) Ric J + phi at the midpoints
    phi = ker.phi_half(hvec)
    j_mid = np.einsum(
        "kij,kjl,ml,m->ki", ker.t_half[1::2], ker.q_half[1::2], ker.t1, k1inv_h
    )
    dmid = -0.5 * np.einsum("kij,kj->ki", ker.ric_half[1::2], j_mid) + phi[1::2]
    j_vals[0] = 0.0
    j_k = CMVector(fp.grid, j_vals, dmid)

    z_phi = solve_damped(phi, ker)
    lifted = np.einsum("kDa,ka->kD", fp.us, j_k.values)
    gap = float(np.max(np.abs(j_k.values - z_phi.values)))
    return LiftResult(hvec, ker.ctilde() @ hvec, j_k, z_phi, lifted, gap)


def verify_lift_ode(res: LiftResult, ker: DampedKernel) -> dict:
    """Max residual of J' = -(1/2) Ric J + phi over interior nodes, by central
    differences; O(dt^2) for a correct lift."""
    j = res.j_kform.values
    dt = ker.grid.dt
    dj = (j[2:] - j[:-2]) / (2.0 * dt)
    ric_n = ker.ric_half[0::2]
    phi = ker.phi_half(res.hvec)[0::2]
    rhs = -0.5 * np.einsum("kij,kj->ki", ric_n[1:-1], j[1:-1]) + phi[1:-1]
    resid = float(np.max(np.abs(dj - rhs))) if len(j) > 2 else 0.0
    return {"max_residual": resid, "n_steps": ker.grid.n_steps}
