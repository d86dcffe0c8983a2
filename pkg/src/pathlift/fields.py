"""Catalog of vector fields with analytic value, covariant derivative and
divergence on the built-in models.

Entries (usable by name from config files):

  identity      R^d      X(w) = w
  constant      R^d      X(w) = c
  rotational    S^2      X(x) = k x x           (Killing field, divergence-free)
  projected     S^d      X(x) = c - <c,x> x     (tangent projection of a constant)
  radial-tanh   H^d      X(x) = x - o / x_0     (gradient of log cosh of the
                                                 distance to the base point o;
                                                 |X| = tanh(dist))

The covariant derivative of an embedded field is the tangent projection of the
ambient directional derivative; all formulas below are that projection worked
out in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifolds import ManifoldModel


class FieldError(ValueError):
    """Unknown catalog entry or field/manifold mismatch."""


@dataclass(frozen=True)
class VectorFieldSpec:
    name: str
    param: tuple = ()

    def as_dict(self) -> dict:
        return {"name": self.name, "param": list(self.param)}


def field_from_config(cfg: dict) -> VectorFieldSpec:
    return VectorFieldSpec(cfg["name"], tuple(cfg.get("param", ())))


def _param_vec(X: VectorFieldSpec, m: ManifoldModel) -> np.ndarray:
    c = np.asarray(X.param, dtype=float)
    if c.shape != (m.ambient_dim,):
        raise FieldError(
            f"field {X.name!r} needs a parameter vector of length {m.ambient_dim}"
        )
    return c


def _check(X: VectorFieldSpec, m: ManifoldModel) -> None:
    kinds = {
        "identity": "euclidean",
        "constant": "euclidean",
        "rotational": "sphere",
        "projected": "sphere",
        "radial-tanh": "hyperbolic",
    }
    if X.name not in kinds:
        raise FieldError(f"unknown vector field {X.name!r}")
    if m.kind != kinds[X.name]:
        raise FieldError(f"field {X.name!r} is defined on {kinds[X.name]}, not {m.kind}")
    if X.name == "rotational" and m.dim != 2:
        raise FieldError("rotational field needs S^2")


def value(m: ManifoldModel, X: VectorFieldSpec, x: np.ndarray) -> np.ndarray:
    """X(x), batched over leading axes of x."""
    _check(X, m)
    if X.name == "identity":
        return x
    if X.name == "constant":
        return np.broadcast_to(_param_vec(X, m), x.shape).copy()
    if X.name == "rotational":
        k = _param_vec(X, m)
        return np.cross(np.broadcast_to(k, x.shape), x)
    if X.name == "projected":
        c = _param_vec(X, m)
        return c - m.ambient_dot(x, np.broadcast_to(c, x.shape))[..., None] * x
    # radial-tanh
    o = m.origin()
    return x - o / x[..., :1]


def covariant_derivative(
    m: ManifoldModel, X: VectorFieldSpec, x: np.ndarray, v: np.ndarray
) -> np.ndarray:
    """nabla_v X at x for tangent v, batched."""
    _check(X, m)
    if X.name == "identity":
        return v
    if X.name == "constant":
        return np.zeros_like(v)
    if X.name == "rotational":
        k = _param_vec(X, m)
        kv = np.cross(np.broadcast_to(k, v.shape), v)
        return kv - m.ambient_dot(kv, x)[..., None] * x
    if X.name == "projected":
        c = _param_vec(X, m)
        return -m.ambient_dot(np.broadcast_to(c, x.shape), x)[..., None] * v
    # radial-tanh: nabla_v X = v + (v_0 / x_0^2) o - (v_0 / x_0) x
    o = m.origin()
    x0 = x[..., :1]
    v0 = v[..., :1]
    return v + (v0 / x0**2) * o - (v0 / x0) * x


def divergence(m: ManifoldModel, X: VectorFieldSpec, x: np.ndarray) -> np.ndarray:
    """div X at x, batched."""
    _check(X, m)
    if X.name == "identity":
        return np.full(x.shape[:-1], float(m.dim))
    if X.name == "constant":
        return np.zeros(x.shape[:-1])
    if X.name == "rotational":
        return np.zeros(x.shape[:-1])
    if X.name == "projected":
        c = _param_vec(X, m)
        return -m.dim * m.ambient_dot(x, np.broadcast_to(c, x.shape))
    # radial-tanh: d - tanh^2(dist) = (d - 1) + 1 / x_0^2
    return (m.dim - 1) + 1.0 / x[..., 0] ** 2


def frame_divergence(
    m: ManifoldModel, X: VectorFieldSpec, x: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """sum_a <nabla_{u e_a} X, u e_a>_g computed from the catalog derivative,
    batched over paths: x (..., D), u (..., D, d).  Equals divergence(x) up to
    the orthonormality defect of u; kept separate so the literal frame-trace
    route can be cross-checked against the analytic divergence."""
    _check(X, m)
    out = np.zeros(x.shape[:-1])
    for a in range(m.dim):
        va = u[..., :, a]
        out = out + m.ambient_dot(covariant_derivative(m, X, x, va), va)
    return out


def divergence_fd(
    m: ManifoldModel, X: VectorFieldSpec, x: np.ndarray, step: float = 1e-5
) -> float:
    """Finite-difference divergence oracle: central differences of
    <X(exp_x(t v_a)), v_a> along an orthonormal tangent frame.  Single point."""
    u = m.repair_frame(x, _any_frame(m, x))
    acc = 0.0
    for a in range(m.dim):
        va = u[:, a]
        fp = m.ambient_dot(value(m, X, m.exp_map(x, step * va)), va)
        fm = m.ambient_dot(value(m, X, m.exp_map(x, -step * va)), va)
        acc += (fp - fm) / (2 * step)
    return float(acc)


def _any_frame(m: ManifoldModel, x: np.ndarray) -> np.ndarray:
    """Some orthonormal frame at x: greedy Gram-Schmidt over the projected
    canonical basis."""
    if m.kind == "euclidean":
        return np.eye(m.dim)
    D = m.ambient_dim
    g = m.metric_sign()
    cols: list[np.ndarray] = []
    for i in range(D):
        e = np.zeros(D)
        e[i] = 1.0
        t = m.project_tangent(x, e)
        for c in cols:
            t = t - np.dot(c * g, t) * c
        nrm2 = np.dot(t * g, t)
        if nrm2 > 1e-6:
            cols.append(t / np.sqrt(nrm2))
        if len(cols) == m.dim:
            break
    return np.stack(cols, axis=1)
