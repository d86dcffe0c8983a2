"""Cylinder functions F(Sigma_{s_1}, ..., Sigma_{s_m}) with per-slot ambient
gradients, built from a small catalog of bounded smooth primitives.

The primitives are ambient-linear coordinates composed with a smooth clamp
that is exactly the identity on [-level, level] and saturates outside, so
flat-space expectations of the clamped functions coincide with the polynomial
ones far below every tolerance used here, while F and all its slot gradients
stay bounded.  On the sphere ambient-linear coordinates are already bounded
and the clamp defaults to off.

Gradients returned by ``grads`` are ambient; consumers project to the tangent
space (pulling back through a tangent frame does this implicitly).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .manifolds import ManifoldModel


@dataclass(frozen=True)
class SmoothClamp:
    """psi(t) = t on [-level, level], saturating to +-(level+width) outside,
    C^2 at the joints (tanh blend has zero second derivative at 0)."""

    level: float = 12.0
    width: float = 6.0

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        a, w = self.level, self.width
        out = np.where(
            np.abs(t) <= a, t, np.sign(t) * (a + w * np.tanh((np.abs(t) - a) / w))
        )
        return out

    def deriv(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        a, w = self.level, self.width
        inner = np.abs(t) <= a
        s = 1.0 / np.cosh(np.clip((np.abs(t) - a) / w, 0.0, 50.0)) ** 2
        return np.where(inner, 1.0, s)


@dataclass(frozen=True)
class CylinderFunction:
    """times: partition points in (0, 1]; value maps stacked slot points
    (B, P, D) to (B,); grads maps them to ambient gradients (B, P, D)."""

    times: tuple
    value: Callable[[np.ndarray], np.ndarray]
    grads: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    @property
    def n_slots(self) -> int:
        return len(self.times)


def constant(val: float = 1.0) -> CylinderFunction:
    def value(pts):
        return np.full(pts.shape[0], float(val))

    def grads(pts):
        return np.zeros_like(pts)

    return CylinderFunction((1.0,), value, grads, name=f"const({val})")


def ambient_linear(c: np.ndarray, time: float,
                   clamp: SmoothClamp | None = None) -> CylinderFunction:
    """psi(<c, Sigma_time>)."""
    c = np.asarray(c, dtype=float)

    def value(pts):
        t = pts[:, 0, :] @ c
        return clamp(t) if clamp else t

    def grads(pts):
        out = np.zeros_like(pts)
        if clamp:
            out[:, 0, :] = clamp.deriv(pts[:, 0, :] @ c)[:, None] * c
        else:
            out[:, 0, :] = c
        return out

    return CylinderFunction((float(time),), value, grads, name=f"lin@{time}")


def ambient_product(terms: Sequence[tuple], clamp: SmoothClamp | None = None) -> CylinderFunction:
    """prod_i psi(<c_i, Sigma_{t_i}>) with strictly increasing distinct times."""
    cs = [np.asarray(c, dtype=float) for c, _ in terms]
    times = tuple(float(t) for _, t in terms)
    if sorted(set(times)) != list(times):
        raise ValueError("ambient_product needs strictly increasing distinct times")

    def factors(pts):
        raw = [pts[:, i, :] @ cs[i] for i in range(len(cs))]
        if clamp:
            return [clamp(r) for r in raw], raw
        return raw, raw

    def value(pts):
        fac, _ = factors(pts)
        return np.prod(np.stack(fac, axis=1), axis=1)

    def grads(pts):
        fac, raw = factors(pts)
        fac = np.stack(fac, axis=1)  # (B, P)
        out = np.zeros_like(pts)
        for i in range(len(cs)):
            others = np.prod(np.delete(fac, i, axis=1), axis=1)
            dpsi = clamp.deriv(raw[i]) if clamp else 1.0
            out[:, i, :] = (others * dpsi)[:, None] * cs[i]
        return out

    return CylinderFunction(times, value, grads, name="prod@" + ",".join(map(str, times)))


def square(c: np.ndarray, time: float, clamp: SmoothClamp | None = None) -> CylinderFunction:
    """psi(<c, Sigma_time>)^2."""
    base = ambient_linear(c, time, clamp)

    def value(pts):
        return base.value(pts) ** 2

    def grads(pts):
        return 2.0 * base.value(pts)[:, None, None] * base.grads(pts)

    return CylinderFunction(base.times, value, grads, name=f"sq@{time}")


def _merge_times(f: CylinderFunction, g: CylinderFunction):
    merged = tuple(sorted(set(f.times) | set(g.times)))
    fi = [merged.index(t) for t in f.times]
    gi = [merged.index(t) for t in g.times]
    return merged, fi, gi


def product(f: CylinderFunction, g: CylinderFunction) -> CylinderFunction:
    """Pointwise product f*g as a cylinder function on the merged partition."""
    merged, fi, gi = _merge_times(f, g)

    def value(pts):
        return f.value(pts[:, fi, :]) * g.value(pts[:, gi, :])

    def grads(pts):
        out = np.zeros_like(pts)
        fv = f.value(pts[:, fi, :])
        gv = g.value(pts[:, gi, :])
        fg = f.grads(pts[:, fi, :])
        gg = g.grads(pts[:, gi, :])
        for k, idx in enumerate(fi):
            out[:, idx, :] += gv[:, None] * fg[:, k, :]
        for k, idx in enumerate(gi):
            out[:, idx, :] += fv[:, None] * gg[:, k, :]
        return out

    return CylinderFunction(merged, value, grads, name=f"({f.name})*({g.name})")


def linear_combination(a: float, f: CylinderFunction,
                       b: float, g: CylinderFunction) -> CylinderFunction:
    merged, fi, gi = _merge_times(f, g)

    def value(pts):
        return a * f.value(pts[:, fi, :]) + b * g.value(pts[:, gi, :])

    def grads(pts):
        out = np.zeros_like(pts)
        fg = f.grads(pts[:, fi, :])
        gg = g.grads(pts[:, gi, :])
        for k, idx in enumerate(fi):
            out[:, idx, :] += a * fg[:, k, :]
        for k, idx in enumerate(gi):
            out[:, idx, :] += b * gg[:, k, :]
        return out

    return CylinderFunction(merged, value, grads, name=f"{a}*{f.name}+{b}*{g.name}")


def cylinder_from_config(cfg: dict) -> CylinderFunction:
    clamp = None
    if cfg.get("clamp"):
        clamp = SmoothClamp(cfg["clamp"].get("level", 12.0), cfg["clamp"].get("width", 6.0))
    kind = cfg["kind"]
    if kind == "constant":
        return constant(cfg.get("value", 1.0))
    if kind == "linear":
        return ambient_linear(np.asarray(cfg["c"], float), cfg["time"], clamp)
    if kind == "product":
        return ambient_product([(np.asarray(t["c"], float), t["time"]) for t in cfg["terms"]], clamp)
    if kind == "square":
        return square(np.asarray(cfg["c"], float), cfg["time"], clamp)
    raise ValueError(f"unknown cylinder function kind {kind!r}")


def validate_gradients(f: CylinderFunction, m: ManifoldModel, pts: np.ndarray,
                       step: float = 1e-6) -> float:
    """Max mismatch between <grad_i F, v> and the central finite difference of
    F along exp(t v) over random tangent directions; pts shape (B, P, D)."""
    rng = np.random.default_rng(0)
    B, P, D = pts.shape
    base_grads = f.grads(pts)
    worst = 0.0
    for i in range(P):
        v = rng.normal(size=(B, D))
        v = m.project_tangent(pts[:, i, :], v) if m.kind != "euclidean" else v
        v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12)
        up = pts.copy()
        dn = pts.copy()
        up[:, i, :] = m.geodesic_step(pts[:, i, :], step * v)
        dn[:, i, :] = m.geodesic_step(pts[:, i, :], -step * v)
        fd = (f.value(up) - f.value(dn)) / (2 * step)
        inner = m.ambient_dot(base_grads[:, i, :], v)
        worst = max(worst, float(np.max(np.abs(fd - inner))))
    return worst
