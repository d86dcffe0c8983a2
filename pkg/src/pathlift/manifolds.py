"""Constant-curvature geometric backends: Euclidean R^d, the unit sphere S^d
embedded in R^{d+1}, and hyperbolic space H^d realized as the upper hyperboloid
in Minkowski space R^{1,d}.

All three have parallel curvature tensor, so the curvature operator pulled back
through any orthonormal frame has the closed form

    R_u(a, b) c = kappa * (<b, c> a - <a, c> b),        Ric_u = kappa * (d - 1) * I,

with kappa in {0, +1, -1}.  Points and frames are stored in ambient coordinates;
after every integration step callers are expected to re-project points and
re-orthonormalize frames (``repair_frame``) rather than trusting the integrator
to stay on the constraint manifold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POINT_TOL = 1e-12
FRAME_TOL = 1e-10

_KIND_CODES = {"euclidean": 0, "sphere": 1, "hyperbolic": 2}


class GeometryError(ValueError):
    """Raised when a point/frame violates the model constraints."""


@dataclass(frozen=True)
class ManifoldModel:
    """One of the built-in constant-curvature models.

    dim is the intrinsic dimension d; sphere and hyperbolic points live in
    ambient dimension d+1.  curvature_bound is N with ||R|| <= N as an
    order-4 tensor; for the built-ins N = |kappa|.
    """

    kind: str
    dim: int
    kappa: int = field(init=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise GeometryError(f"unknown manifold kind {self.kind!r}")
        if self.dim < 1:
            raise GeometryError("dim must be >= 1")
        object.__setattr__(
            self, "kappa", {"euclidean": 0, "sphere": 1, "hyperbolic": -1}[self.kind]
        )

    # -- basic layout -----------------------------------------------------

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def ambient_dim(self) -> int:
        return self.dim if self.kind == "euclidean" else self.dim + 1

    @property
    def curvature_bound(self) -> float:
        return float(abs(self.kappa))

    @property
    def ricci_scalar(self) -> float:
        """Ric_u = ricci_scalar * I for every frame u."""
        return float(self.kappa * (self.dim - 1))

    def origin(self) -> np.ndarray:
        """Base point o: 0 in R^d, the north pole (0,..,0,1) on S^d, and
        (1,0,..,0) on the hyperboloid (time coordinate first)."""
        x = np.zeros(self.ambient_dim)
        if self.kind == "sphere":
            x[-1] = 1.0
        elif self.kind == "hyperbolic":
            x[0] = 1.0
        return x

    def base_frame(self) -> np.ndarray:
        """Canonical orthonormal frame u0 at the origin, shape (D, d)."""
        u = np.zeros((self.ambient_dim, self.dim))
        if self.kind == "euclidean":
            np.fill_diagonal(u, 1.0)
        elif self.kind == "sphere":
            for i in range(self.dim):
                u[i, i] = 1.0
        else:  # hyperboloid: tangent space at (1,0,..,0) is spanned by e_1..e_d
            for i in range(self.dim):
                u[i + 1, i] = 1.0
        return u

    # -- ambient (pseudo-)metric ------------------------------------------

    def ambient_dot(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Ambient inner product; Minkowski signature (-,+,..,+) for H^d."""
        s = np.sum(a * b, axis=-1)
        if self.kind == "hyperbolic":
            s = s - 2.0 * a[..., 0] * b[..., 0]
        return s

    def metric_sign(self) -> np.ndarray:
        """Diagonal of the ambient metric as a vector."""
        g = np.ones(self.ambient_dim)
        if self.kind == "hyperbolic":
            g[0] = -1.0
        return g

    # -- point / frame validity -------------------------------------------

    def point_defect(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.kind == "sphere":
            return np.abs(self.ambient_dot(x, x) - 1.0)
        return np.abs(self.ambient_dot(x, x) + 1.0)

    def check_point(self, x: np.ndarray, tol: float = POINT_TOL) -> None:
        if x.shape[-1] != self.ambient_dim:
            raise GeometryError(
                f"point has ambient dim {x.shape[-1]}, expected {self.ambient_dim}"
            )
        if np.any(self.point_defect(x) > tol):
            raise GeometryError(f"point violates {self.kind} constraint beyond {tol}")
        if self.kind == "hyperbolic" and np.any(x[..., 0] <= 0):
            raise GeometryError("hyperboloid point has nonpositive time coordinate")

    def frame_defect(self, x: np.ndarray, u: np.ndarray) -> float:
        """Max violation of orthonormality and tangency of the frame columns."""
        g = self.metric_sign()
        gram = u.T @ (g[:, None] * u)
        d_orth = float(np.max(np.abs(gram - np.eye(self.dim))))
        if self.kind == "euclidean":
            return d_orth
        d_tan = float(np.max(np.abs(u.T @ (g * x))))
        return max(d_orth, d_tan)

    def check_frame(self, x: np.ndarray, u: np.ndarray, tol: float = FRAME_TOL) -> None:
        if u.shape != (self.ambient_dim, self.dim):
            raise GeometryError(
                f"frame has shape {u.shape}, expected {(self.ambient_dim, self.dim)}"
            )
        if self.frame_defect(x, u) > tol:
            raise GeometryError(f"frame violates orthonormality/tangency beyond {tol}")

    # -- projections and repair -------------------------------------------

    def project_point(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "euclidean":
            return x
        if self.kind == "sphere":
            return x / np.sqrt(self.ambient_dot(x, x))[..., None]
        return x / np.sqrt(-self.ambient_dot(x, x))[..., None]

    def project_tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of an ambient vector onto T_x M."""
        if self.kind == "euclidean":
            return v
        # <x, x> = +1 (sphere) or -1 (hyperboloid)
        return v - self.kappa * self.ambient_dot(x, v)[..., None] * x

    def repair_frame(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Tangent projection followed by modified Gram-Schmidt in the ambient
        metric.  Single point/frame only."""
        g = self.metric_sign()
        out = u.copy()
        for i in range(self.dim):
            col = self.project_tangent(x, out[:, i])
            for j in range(i):
                col = col - np.dot(out[:, j] * g, col) * out[:, j]
            out[:, i] = col / np.sqrt(np.dot(col * g, col))
        return out

    def frame_inverse_apply(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """u^{-1} w for a tangent vector w: the frame coordinates u^T G w."""
        g = self.metric_sign()
        return u.T @ (g * w)

    # -- curvature ----------------------------------------------------------

    def curvature_op(self, u: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """The pulled-back curvature operator u^{-1} R(ua, ub) u as a d x d
        matrix; for constant curvature it is kappa*(a b^T - b a^T) regardless
        of the frame."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (self.dim,) or b.shape != (self.dim,):
            raise GeometryError("curvature_op arguments must be d-vectors")
        return self.kappa * (np.outer(a, b) - np.outer(b, a))

    def curvature_pair(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Batched curvature_op: a, b of shape (..., d) -> (..., d, d)."""
        return self.kappa * (
            a[..., :, None] * b[..., None, :] - b[..., :, None] * a[..., None, :]
        )

    def ricci_endomorphism(self, u: np.ndarray) -> np.ndarray:
        return self.ricci_scalar * np.eye(self.dim)

    # -- exponential map ----------------------------------------------------

    def exp_map(self, x: np.ndarray, v: np.ndarray, tol: float = FRAME_TOL) -> np.ndarray:
        """Geodesic exponential; v must be tangent at x."""
        if self.kind != "euclidean":
            if abs(self.ambient_dot(x, v)) > tol * max(1.0, np.linalg.norm(v)):
                raise GeometryError("exp_map direction is not tangent at x")
        return self.geodesic_step(x[None, :], v[None, :])[0]

    def geodesic_step(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Batched exp_map without the tangency check, shape (B, D)."""
        if self.kind == "euclidean":
            return x + v
        r2 = self.ambient_dot(v, v)
        r = np.sqrt(np.maximum(r2, 0.0))
        small = r < 1e-12
        rs = np.where(small, 1.0, r)
        if self.kind == "sphere":
            ca, sa = np.cos(r), np.sin(r) / rs
        else:
            ca, sa = np.cosh(r), np.sinh(r) / rs
        sa = np.where(small, 1.0, sa)
        out = ca[:, None] * x + sa[:, None] * v
        return self.project_point(out)

    def geodesic_transport(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Parallel transport of tangent vectors w along the geodesic
        exp_x(t v), t in [0, 1].  Batched, closed-form.

        Transport only rotates the (x, v/|v|) plane; components orthogonal to
        the initial direction are carried unchanged.
        """
        if self.kind == "euclidean":
            return w
        r2 = self.ambient_dot(v, v)
        r = np.sqrt(np.maximum(r2, 0.0))
        small = r < 1e-14
        rs = np.where(small, 1.0, r)
        e = v / rs[..., None]
        coef = self.ambient_dot(e, w)
        if self.kind == "sphere":
            dirpart = (np.cos(r) - 1.0)[..., None] * e - np.sin(r)[..., None] * x
        else:
            dirpart = (np.cosh(r) - 1.0)[..., None] * e + np.sinh(r)[..., None] * x
        out = w + coef[..., None] * dirpart
        return np.where(small[..., None], w, out)


def euclidean(dim: int) -> ManifoldModel:
    return ManifoldModel("euclidean", dim)


def sphere(dim: int) -> ManifoldModel:
    return ManifoldModel("sphere", dim)


def hyperbolic(dim: int) -> ManifoldModel:
    return ManifoldModel("hyperbolic", dim)


def from_config(kind: str, dim: int) -> ManifoldModel:
    return ManifoldModel(kind, dim)
