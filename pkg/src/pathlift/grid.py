"""Uniform grids on [0, 1] and discretized Cameron-Martin vectors.

Convention used throughout the package: path values live on the n+1 nodes
t_k = k/n, derivatives live on the n midpoints.  The half grid (2n+1 points,
nodes interleaved with midpoints) is where ODE solvers store their dense
output so that midpoint quadrature never needs to re-interpolate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise GridError("n_steps must be >= 1")

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_steps + 1)

    @property
    def mids(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    @property
    def half_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, 2 * self.n_steps + 1)

    def node_index(self, s: float) -> int:
        """Index of a grid-aligned time, rejecting off-grid values."""
        k = round(s * self.n_steps)
        if not (0 <= k <= self.n_steps) or abs(k * self.dt - s) > 1e-9:
            raise GridError(f"time {s} is not a node of the n={self.n_steps} grid")
        return int(k)


@dataclass(frozen=True)
class CMVector:
    """Finite-energy path h with h(0) = 0: node samples plus midpoint
    derivative samples."""

    grid: GridSpec
    values: np.ndarray  # (n+1, d)
    dmid: np.ndarray    # (n, d), derivative at midpoints

    def __post_init__(self):
        n = self.grid.n_steps
        if self.values.shape[0] != n + 1 or self.dmid.shape != (n, self.values.shape[1]):
            raise GridError("CMVector arrays do not match the grid")
        if np.max(np.abs(self.values[0])) > 1e-14:
            raise GridError("CMVector must start at 0")

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def endpoint(self) -> np.ndarray:
        return self.values[-1]

    def mids(self) -> np.ndarray:
        """Values at midpoints by averaging adjacent nodes."""
        return 0.5 * (self.values[:-1] + self.values[1:])

    def __add__(self, other: "CMVector") -> "CMVector":
        _same_grid(self, other)
        return CMVector(self.grid, self.values + other.values, self.dmid + other.dmid)

    def __sub__(self, other: "CMVector") -> "CMVector":
        _same_grid(self, other)
        return CMVector(self.grid, self.values - other.values, self.dmid - other.dmid)

    def __mul__(self, a: float) -> "CMVector":
        return CMVector(self.grid, a * self.values, a * self.dmid)

    __rmul__ = __mul__


def _same_grid(h: CMVector, k: CMVector) -> None:
    if h.grid.n_steps != k.grid.n_steps or h.d != k.d:
        raise GridError("CMVectors live on different grids")


def cm_from_values(grid: GridSpec, values: np.ndarray) -> CMVector:
    """Midpoint derivative from node differences (exact for the convention
    that dmid holds the mean slope of each step)."""
    values = np.asarray(values, dtype=float)
    return CMVector(grid, values, np.diff(values, axis=0) / grid.dt)


def cm_from_callable(grid: GridSpec, fn, dfn=None, d: int | None = None) -> CMVector:
    vals = _sample_path(fn, grid.nodes, d)
    if dfn is None:
        return cm_from_values(grid, vals)
    return CMVector(grid, vals, _sample_path(dfn, grid.mids, d))


def _sample_path(fn, ts: np.ndarray, d: int | None) -> np.ndarray:
    """Evaluate fn on all times, vectorized when fn supports array input."""
    if d is not None:
        try:
            vals = np.asarray(fn(ts), dtype=float)
            if vals.shape == (ts.size, d):
                return vals
        except (TypeError, ValueError):
            pass
    return np.stack([np.atleast_1d(np.asarray(fn(t), dtype=float)) for t in ts])


def cm_zero(grid: GridSpec, d: int) -> CMVector:
    return CMVector(grid, np.zeros((grid.n_steps + 1, d)), np.zeros((grid.n_steps, d)))


def cm_line(grid: GridSpec, a: np.ndarray) -> CMVector:
    """h(t) = t * a."""
    a = np.asarray(a, dtype=float)
    return CMVector(
        grid,
        grid.nodes[:, None] * a[None, :],
        np.tile(a, (grid.n_steps, 1)),
    )


def energy(h: CMVector) -> float:
    """int_0^1 |h'|^2 dt by the midpoint rule."""
    return float(np.sum(h.dmid**2) * h.grid.dt)
