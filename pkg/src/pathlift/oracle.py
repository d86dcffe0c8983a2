"""Coarse-partition ground truth for the integration-by-parts identity.

Wiener measure is replaced by an n-step chain (n in {2, 3}): increments are
Gaussian in the frame coordinates (optionally reweighted by the curvature
correction of the short-time heat kernel), and paths interpolate by exact
geodesic steps with closed-form frame transport (or by the engine's Heun step,
for matching-n cross-validation).

On that finite-dimensional model everything is honest brute force:

  * the lifted derivative is a finite difference of f along the developed
    shift of the increments (no gradient formulas),
  * the exact transpose comes from Gaussian integration by parts in the
    increments, with the Jacobian trace of the shift field also by finite
    differences,
  * expectations are tensor Gauss-Hermite quadrature (or plain Monte Carlo
    as a fallback for n = 3).

Evaluating the candidate transpose formulas on the same model and comparing
against the exact transpose selects the sign convention of the divergence
term; the selected pair is written to data/sign_convention.json.
"""

from __future__ import annotations

import itertools
import json
import time

import numpy as np

from . import fields
from .cylinder import CylinderFunction
from .grid import GridSpec
from .ibp import SIGN_COMBOS, build_partition, ensemble_arrays
from .manifolds import ManifoldModel
from ._kernels import scalar_damped_path, _step_np

MAX_COARSE_STEPS = 3


class OracleCostError(ValueError):
    pass


def gauss_hermite_grid(ndim: int, q: int):
    """Tensor Gauss-Hermite nodes/weights for the standard normal on R^ndim."""
    x, w = np.polynomial.hermite.hermgauss(q)
    xi = np.sqrt(2.0) * x
    wi = w / np.sqrt(np.pi)
    nodes = np.array(list(itertools.product(xi, repeat=ndim)))
    weights = np.prod(
        np.array(list(itertools.product(wi, repeat=ndim))), axis=1
    )
    return nodes, weights


def geodesic_develop(m: ManifoldModel, db: np.ndarray):
    """Piecewise-geodesic development of increments db (B, n, d): exact
    geodesic steps with closed-form parallel transport of the frame."""
    B, n, d = db.shape
    D = m.ambient_dim
    xs = np.empty((B, n + 1, D))
    us = np.empty((B, n + 1, D, d))
    xs[:, 0] = m.origin()
    us[:, 0] = m.base_frame()
    for k in range(n):
        x = xs[:, k]
        u = us[:, k]
        v = np.einsum("bDa,ba->bD", u, db[:, k])
        xs[:, k + 1] = m.geodesic_step(x, v)
        for a in range(d):
            us[:, k + 1, :, a] = m.geodesic_transport(x, v, u[:, :, a])
    return xs, us


def heun_develop(m: ManifoldModel, db: np.ndarray):
    """The engine's Heun step on the same increments (matching-n mode)."""
    B, n, d = db.shape
    D = m.ambient_dim
    xs = np.empty((B, n + 1, D))
    us = np.empty((B, n + 1, D, d))
    x = np.tile(m.origin(), (B, 1))
    F = np.tile(m.base_frame().T, (B, 1, 1))
    xs[:, 0] = x
    us[:, 0] = F.transpose(0, 2, 1)
    for k in range(n):
        x, F, _, _ = _step_np(m.kind_code, m.kappa, x, F, db[:, k])
        xs[:, k + 1] = x
        us[:, k + 1] = F.transpose(0, 2, 1)
    return xs, us


def summaries_from_paths(m: ManifoldModel, xs: np.ndarray, us: np.ndarray,
                         db: np.ndarray, part_idx: np.ndarray, dt: float) -> dict:
    """The path_summaries contract computed from stored full paths; also used
    to cross-check the streaming kernels."""
    n = db.shape[1]
    sc = scalar_damped_path(m.ricci_scalar, n, dt)
    z, ti = sc["z"], sc["tauinv"]
    return {
        "xs": xs[:, part_idx], "us": us[:, part_idx],
        "ito_v": np.einsum("j,bjd->bd", ti[:-1], db),
        "ito_ric": 0.5 * m.ricci_scalar * np.einsum("j,bjd->bd", z[:-1], db),
        "ito_zb": np.einsum("j,bjd->bd", z[:-1], db),
        "strat_zb": np.einsum("j,bjd->bd", 0.5 * (z[:-1] + z[1:]), db),
        "beta1": db.sum(axis=1),
        "rep_max": np.zeros(xs.shape[0]), "tan_max": np.zeros(xs.shape[0]),
        "part_idx": part_idx, "scalars": sc,
        "z_part": z[part_idx], "q_part": sc["q"][part_idx],
        "tau_part": sc["tau"][part_idx],
        "backend": "oracle",
    }


# the Gaussian-in-normal-coordinates surrogate is only meaningful inside the
# injectivity radius; on the sphere the correction is frozen shortly before
# the conjugate point at pi (the clamped region carries ~e^{-pi^2/dt} weight)
_SPHERE_R_CLAMP = np.pi * 0.98


def _log_corr_dr(m: ManifoldModel, r: np.ndarray) -> np.ndarray:
    """d/dr log of the heat-kernel density correction (r / sin r)^{(d-1)/2}
    (sinh for hyperbolic): ((d-1)/2) (1/r - cot r) resp. (1/r - coth r)."""
    half = 0.5 * (m.dim - 1)
    clamped = None
    if m.kind == "sphere":
        clamped = r > _SPHERE_R_CLAMP
        r = np.minimum(r, _SPHERE_R_CLAMP)
    small = r < 1e-4
    rs = np.where(small, 1.0, r)
    if m.kind == "sphere":
        out = half * (1.0 / rs - 1.0 / np.tan(rs))
        ser = half * (r / 3.0 + r**3 / 45.0)
    else:
        out = half * (1.0 / rs - 1.0 / np.tanh(rs))
        ser = half * (-r / 3.0 + r**3 / 45.0)
    out = np.where(small, ser, out)
    if clamped is not None:
        out = np.where(clamped, 0.0, out)  # frozen weight has zero slope
    return out


def _log_corr(m: ManifoldModel, r: np.ndarray) -> np.ndarray:
    half = 0.5 * (m.dim - 1)
    if m.kind == "sphere":
        r = np.minimum(r, _SPHERE_R_CLAMP)
    small = r < 1e-6
    rs = np.where(small, 1.0, r)
    if m.kind == "sphere":
        val = half * (np.log(rs) - np.log(np.sin(rs)))
        ser = half * (r**2 / 6.0)
    else:
        val = half * (np.log(rs) - np.log(np.sinh(rs)))
        ser = half * (-(r**2) / 6.0)
    return np.where(small, ser, val)


def geodesic_oracle_ibp(m: ManifoldModel, X: fields.VectorFieldSpec,
                        f: CylinderFunction, g: CylinderFunction,
                        n_small: int = 2, quad: str = "gh", q: int = 20,
                        n_mc: int = 200_000, mc_seed: int = 1234,
                        stepper: str = "geodesic", weight: str = "corrected",
                        fd_step: float = 1e-5) -> dict:
    """Run the coarse-model two-sided computation and rank the sign
    conventions.  Returns a plain dict report."""
    t0 = time.time()
    if n_small > MAX_COARSE_STEPS:
        raise OracleCostError(f"n_small capped at {MAX_COARSE_STEPS}")
    if m.kind == "euclidean":
        weight = "none"
    grid = GridSpec(n_small)
    d = m.dim
    dt = grid.dt
    nd = n_small * d

    if quad == "gh":
        xi, wq = gauss_hermite_grid(nd, q)
    elif quad == "mc":
        rng = np.random.default_rng(mc_seed)
        xi = rng.standard_normal((n_mc, nd))
        wq = np.full(n_mc, 1.0 / n_mc)
    else:
        raise ValueError("quad must be 'gh' or 'mc'")
    b = (xi * np.sqrt(dt)).reshape(-1, n_small, d)

    develop = geodesic_develop if stepper == "geodesic" else heun_develop
    part_idx, f_pos, g_pos = build_partition(grid, f, g)
    sc = scalar_damped_path(m.ricci_scalar, n_small, dt)
    z = sc["z"]
    ctil = 1.0 / (sc["q"][-1] * sc["tau"][-1])

    def model_eval(bb):
        xs, us = develop(m, bb)
        return summaries_from_paths(m, xs, us, bb, part_idx, dt)

    def hvec_of(bb):
        summ = model_eval(bb)
        x1 = summ["xs"][:, -1]
        u1 = summ["us"][:, -1]
        return np.einsum("bDa,bD->ba", u1, fields.value(m, X, x1) * m.metric_sign())

    def fg_values(bb):
        summ = model_eval(bb)
        return f.value(summ["xs"][:, f_pos]), g.value(summ["xs"][:, g_pos])

    summ0 = model_eval(b)
    arr = ensemble_arrays(m, X, f, g, summ0, f_pos, g_pos)

    # density weight
    if weight == "corrected":
        rr = np.linalg.norm(b, axis=2)  # (B, n) step lengths
        wdens = np.exp(np.sum(_log_corr(m, rr), axis=1))
    else:
        wdens = np.ones(b.shape[0])
    wtot = wq * wdens
    mass = float(np.sum(wtot))

    def ew(vals):
        return float(np.sum(wtot * vals) / mass)

    # shift field in increment space: V_k = (z_{k+1} - z_k) * C~ H
    coeffs = ctil * np.einsum(
        "bDa,bD->ba", summ0["us"][:, -1], fields.value(m, X, summ0["xs"][:, -1]) * m.metric_sign()
    )
    dz = np.diff(z)
    V = dz[None, :, None] * coeffs[:, None, :]  # (B, n, d)

    # LHS and X~g by finite differences of the developed shift
    t = fd_step
    f_up, g_up = fg_values(b + t * V)
    f_dn, g_dn = fg_values(b - t * V)
    xtf_fd = (f_up - f_dn) / (2 * t)
    xtg_fd = (g_up - g_dn) / (2 * t)

    # exact Gaussian IBP: delta*(V) = <V, b>/dt - div_b V - d_V log W
    term1 = np.einsum("bkd,bkd->b", V, b) / dt
    div_v = np.zeros(b.shape[0])
    eps = 1e-6
    for k in range(n_small):
        for i in range(d):
            bp = b.copy()
            bp[:, k, i] += eps
            bm = b.copy()
            bm[:, k, i] -= eps
            hp = hvec_of(bp)
            hm = hvec_of(bm)
            dv = dz[k] * ctil * (hp[:, i] - hm[:, i]) / (2 * eps)
            div_v += dv
    if weight == "corrected":
        rr = np.linalg.norm(b, axis=2)
        rr_safe = np.maximum(rr, 1e-300)
        dlw = np.sum(
            _log_corr_dr(m, rr) * np.einsum("bkd,bkd->bk", b, V) / rr_safe, axis=1
        )
    else:
        dlw = np.zeros(b.shape[0])
    delta_star = term1 - div_v - dlw

    lhs = ew(xtf_fd * arr["g"])
    rhs_exact = ew(arr["f"] * (-xtg_fd + arr["g"] * delta_star))

    rhs_by = {}
    resid = {}
    for ds, cs in SIGN_COMBOS:
        rhs = ew(
            arr["f"] * (
                -arr["xtg"]
                + arr["g"] * (arr["ito"] + ds * arr["div_nabla"] + cs * arr["div_curv"])
            )
        )
        key = f"{ds:+d}{cs:+d}"
        rhs_by[key] = rhs
        resid[key] = abs(lhs - rhs)

    ranked = sorted(resid, key=resid.get)
    best, second = ranked[0], ranked[1]
    sel = {"div_sign": int(best[0:2]), "curv_sign": int(best[2:4])}
    flip_div = f"{-sel['div_sign']:+d}{sel['curv_sign']:+d}"
    flip_curv = f"{sel['div_sign']:+d}{-sel['curv_sign']:+d}"
    floor = max(resid[best], 1e-300)
    # 1.0 on an axis the field cannot see (e.g. div for a divergence-free field)
    axis_margins = {"div": resid[flip_div] / floor, "curv": resid[flip_curv] / floor}

    report = {
        "n_small": n_small, "quad": quad, "q": q, "stepper": stepper,
        "weight": weight, "points": int(b.shape[0]), "mass": mass,
        "manifold": {"kind": m.kind, "dim": m.dim}, "field": X.as_dict(),
        "lhs": lhs, "rhs_exact": rhs_exact,
        "self_gap": abs(lhs - rhs_exact),
        "rhs_by_convention": rhs_by, "residuals": resid,
        "selected": sel, "axis_margins": axis_margins,
        "margin_ratio": resid[second] / max(resid[best], 1e-300),
        "formula_lhs": ew(arr["xtf"] * arr["g"]),
        "formula_derivative_gap": float(np.max(np.abs(xtf_fd - arr["xtf"]))),
        "wall_s": time.time() - t0,
    }
    return report


def write_sign_convention(path: str, reports: list[dict]) -> dict:
    """Commit the selection implied by the curved oracle reports (they must
    agree) together with provenance."""
    sels = {(r["selected"]["div_sign"], r["selected"]["curv_sign"]) for r in reports}
    if len(sels) != 1:
        raise RuntimeError(f"oracle runs disagree on the sign convention: {sels}")
    ds, cs = sels.pop()
    data = {
        "div_sign": ds, "curv_sign": cs, "ito_convention": "damped",
        "resolved_by": [
            {k: r[k] for k in ("manifold", "field", "n_small", "quad", "q",
                               "stepper", "weight", "residuals", "axis_margins",
                               "margin_ratio")}
            for r in reports
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
    return data
