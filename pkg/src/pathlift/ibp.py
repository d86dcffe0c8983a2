"""The lifted derivative on cylinder functions, its transpose under the Wiener
measure, and the Monte Carlo two-sided checks.

For the lift expanded over the unit damped responses Z_a, the transpose acting
on g is

    -X~g  +  g * sum_a <C~ H, e_a> int <(T^{-1})^T e_a, dbeta>
          +  g * [ div_sign * (nabla-X part)  +  curv_sign * (curvature part) ],

where the nabla-X part is sum_a <C~ u1^{-1} nabla_{u1 Z_a(1)} X, e_a> (equal to
div X at the endpoint by trace conjugation, since Z_a(1) = C~^{-1} e_a) and the
curvature part is sum_a <C~ A_1<Z_a> H, e_a> built from the Stratonovich
curvature integrals.  The two signs are not taken on faith: the flat Skorokhod
oracle pins div_sign and the coarse-partition quadrature oracle pins
curv_sign; the resolved pair ships in data/sign_convention.json.

The Ito integrand for the adapted building blocks is the damped one,
(T^{-1})^T e_a = Z_a' + (1/2) Ric Z_a; reports also carry the bare-derivative
variant (integrand Z_a') so the failing convention stays visible.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, fields
from .cylinder import CylinderFunction, cylinder_from_config
from .damped import DampedKernel, damped_unit_responses
from .grid import CMVector, GridSpec
from .manifolds import ManifoldModel, from_config
from .rolling import FramePath
from .stochastic import BrownianDraw, curvature_integral, ito_integral, \
    sample_increments_batch

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
SIGN_FILE = os.path.join(_DATA_DIR, "sign_convention.json")
DEFAULT_SIGNS = {"div_sign": -1, "curv_sign": -1, "ito_convention": "damped"}
SIGN_COMBOS = ((-1, -1), (-1, 1), (1, -1), (1, 1))


def load_sign_convention() -> dict:
    if os.path.exists(SIGN_FILE):
        with open(SIGN_FILE) as fh:
            data = json.load(fh)
        return {k: data[k] for k in DEFAULT_SIGNS}
    return dict(DEFAULT_SIGNS)


# ---------------------------------------------------------------------------
# single-path operations (general matrix route; used by tests and the
# per-path invariants, cross-checked against the batched scalar route)
# ---------------------------------------------------------------------------


def _grad_pullbacks(f: CylinderFunction, fp: FramePath):
    """Slot node indices and the frame-coordinates u^{-1} grad_i F."""
    m = fp.manifold
    idx = [fp.grid.node_index(t) for t in f.times]
    pts = fp.xs[idx][None]
    grads = f.grads(pts)[0] * m.metric_sign()
    gh = np.einsum("pDa,pD->pa", fp.us[idx], grads)
    return idx, gh


def cylinder_value(f: CylinderFunction, fp: FramePath) -> float:
    idx = [fp.grid.node_index(t) for t in f.times]
    return float(f.value(fp.xs[idx][None])[0])


def directional_derivative(f: CylinderFunction, fp: FramePath, h) -> float:
    """X^h f = sum_i <u_{s_i}^{-1} grad_i F, h(s_i)>."""
    idx, gh = _grad_pullbacks(f, fp)
    hv = h.values if isinstance(h, CMVector) else np.asarray(h, dtype=float)
    return float(sum(gh[p] @ hv[idx[p]] for p in range(len(idx))))


def xtilde_apply(f: CylinderFunction, fp: FramePath, ker: DampedKernel,
                 X: fields.VectorFieldSpec):
    """X~f = sum_a <C~ H, e_a> X^{Z_a} f, with the superposition cross-check
    against the directional derivative along Z_Phi."""
    m = fp.manifold
    zmat = damped_unit_responses(ker)
    idx, gh = _grad_pullbacks(f, fp)
    vf = np.zeros(ker.d)
    for p, k in enumerate(idx):
        vf += zmat[2 * k].T @ gh[p]
    hvec = m.frame_inverse_apply(fp.end_frame, fields.value(m, X, fp.endpoint))
    coeffs = ker.ctilde() @ hvec
    val = float(coeffs @ vf)
    z_phi = zmat[0::2] @ coeffs
    gap = abs(val - directional_derivative(f, fp, z_phi))
    return val, {
        "per_alpha": vf, "coeffs": coeffs, "hvec": hvec, "zmat": zmat,
        "superposition_gap": gap,
    }


def divergence_term(fp: FramePath, ker: DampedKernel, b: BrownianDraw,
                    X: fields.VectorFieldSpec, signs: dict | None = None):
    """sum_a <-X^{Z_a}(C~ H), e_a> under the resolved sign convention, split
    into its nabla-X and curvature pieces."""
    m = fp.manifold
    signs = signs or load_sign_convention()
    zmat = damped_unit_responses(ker)
    ct = ker.ctilde()
    hvec = m.frame_inverse_apply(fp.end_frame, fields.value(m, X, fp.endpoint))

    dirs = (fp.end_frame @ zmat[-1]).T            # (d, D): u1 Z_a(1)
    x1 = np.broadcast_to(fp.endpoint, dirs.shape)
    nab = fields.covariant_derivative(m, X, x1, dirs)  # (d, D)
    pull = np.einsum("Da,bD->ab", fp.end_frame * m.metric_sign()[:, None], nab)
    nabla_part = float(np.trace(ct @ pull))

    curv_part = 0.0
    for a in range(ker.d):
        a1 = curvature_integral(fp, zmat[0::2, :, a], b, m).strat[-1]
        curv_part += float((ct @ (a1 @ hvec))[a])

    total = signs["div_sign"] * nabla_part + signs["curv_sign"] * curv_part
    return total, {"nabla_part": nabla_part, "curv_part": curv_part,
                   "div_x": float(fields.divergence(m, X, fp.endpoint))}


def transpose_apply(g: CylinderFunction, fp: FramePath, ker: DampedKernel,
                    b: BrownianDraw, X: fields.VectorFieldSpec,
                    signs: dict | None = None) -> float:
    """(X~^{tr} g) evaluated on one path."""
    signs = signs or load_sign_convention()
    xg, parts = xtilde_apply(g, fp, ker, X)
    integrand = np.einsum("kji,j->ki", ker.tinv_nodes, parts["coeffs"])
    ito = ito_integral(integrand, b)
    dv, _ = divergence_term(fp, ker, b, X, signs)
    return -xg + cylinder_value(g, fp) * (ito + dv)


# ---------------------------------------------------------------------------
# batched ensemble engine
# ---------------------------------------------------------------------------


def build_partition(grid: GridSpec, f: CylinderFunction, g: CylinderFunction):
    times = sorted(set(f.times) | set(g.times) | {1.0})
    part_idx = np.array([grid.node_index(t) for t in times], dtype=np.int64)
    f_pos = [times.index(t) for t in f.times]
    g_pos = [times.index(t) for t in g.times]
    return part_idx, f_pos, g_pos


def ensemble_arrays(m: ManifoldModel, X: fields.VectorFieldSpec,
                    f: CylinderFunction, g: CylinderFunction,
                    summ: dict, f_pos, g_pos) -> dict:
    """Per-path scalars for both sides of the identity, from one batch of
    path summaries."""
    gsign = m.metric_sign()
    xs, us = summ["xs"], summ["us"]
    z_part, q_part, tau_part = summ["z_part"], summ["q_part"], summ["tau_part"]
    ctil = 1.0 / (q_part[-1] * tau_part[-1])

    def side(fn, pos):
        pts = xs[:, pos, :]
        vals = fn.value(pts)
        gr = fn.grads(pts) * gsign
        gh = np.einsum("bpDa,bpD->bpa", us[:, pos, :, :], gr)
        v = np.einsum("p,bpa->ba", z_part[pos], gh)
        return vals, v

    f_vals, vf = side(f, f_pos)
    g_vals, vg = side(g, g_pos)

    x1 = xs[:, -1, :]
    u1 = us[:, -1, :, :]
    xval = fields.value(m, X, x1)
    hvec = np.einsum("bDa,bD->ba", u1, xval * gsign)
    coeffs = ctil * hvec

    out = {
        "f": f_vals, "g": g_vals,
        "xtf": np.einsum("ba,ba->b", coeffs, vf),
        "xtg": np.einsum("ba,ba->b", coeffs, vg),
        "ito": np.einsum("ba,ba->b", coeffs, summ["ito_v"]),
        "div_nabla": ctil * z_part[-1] * fields.frame_divergence(m, X, x1, u1),
        "div_curv": ctil * m.kappa * (m.dim - 1)
        * np.einsum("ba,ba->b", summ["strat_zb"], hvec),
        "vf": vf, "vg": vg,
        "ito_v": summ["ito_v"], "ito_alt": summ["ito_v"] - summ["ito_ric"],
        "rep": summ["rep_max"], "tan": summ["tan_max"],
    }
    return out


def _put(stats: dict, key: str, x: np.ndarray) -> None:
    stats[key] = (float(x.size), float(np.sum(x)), float(np.sum(x * x)))


def chunk_stats(arr: dict, d: int) -> dict:
    lhs = arr["xtf"] * arr["g"]
    stats: dict = {}
    _put(stats, "lhs", lhs)
    for ds, cs in SIGN_COMBOS:
        rhs = arr["f"] * (
            -arr["xtg"]
            + arr["g"] * (arr["ito"] + ds * arr["div_nabla"] + cs * arr["div_curv"])
        )
        key = f"{ds:+d}{cs:+d}"
        _put(stats, "rhs" + key, rhs)
        _put(stats, "diff" + key, lhs - rhs)
    _put(stats, "term_mxtg", -arr["f"] * arr["xtg"])
    _put(stats, "term_ito", arr["f"] * arr["g"] * arr["ito"])
    _put(stats, "term_div_nabla", arr["f"] * arr["g"] * arr["div_nabla"])
    _put(stats, "term_div_curv", arr["f"] * arr["g"] * arr["div_curv"])
    for a in range(d):
        la = arr["vf"][:, a] * arr["g"]
        _put(stats, f"alhs{a}", la)
        for tag, itv in (("", arr["ito_v"]), ("_alt", arr["ito_alt"])):
            ra = arr["f"] * (-arr["vg"][:, a] + arr["g"] * itv[:, a])
            _put(stats, f"arhs{tag}{a}", ra)
            _put(stats, f"adiff{tag}{a}", la - ra)
    stats["_max"] = {"rep": float(arr["rep"].max()), "tan": float(arr["tan"].max())}
    return stats


def _combine(s1: dict, s2: dict) -> dict:
    out = {}
    for k in s1:
        if k == "_max":
            out[k] = {kk: max(s1[k][kk], s2[k][kk]) for kk in s1[k]}
        else:
            out[k] = tuple(a + b for a, b in zip(s1[k], s2[k]))
    return out


def _pairwise(items: list[dict]) -> dict:
    while len(items) > 1:
        items = [
            _combine(items[i], items[i + 1]) if i + 1 < len(items) else items[i]
            for i in range(0, len(items), 2)
        ]
    return items[0]


def mean_se(stats: dict, key: str) -> tuple[float, float]:
    n, s, s2 = stats[key]
    mean = s / n
    var = max(s2 / n - mean * mean, 0.0)
    return mean, float(np.sqrt(var / n))


@dataclass(frozen=True)
class EnsembleSpec:
    """JSON-serializable description of one Monte Carlo ensemble."""

    manifold: dict
    field_cfg: dict
    f_cfg: dict
    g_cfg: dict
    n_steps: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "manifold": self.manifold, "field": self.field_cfg,
            "f": self.f_cfg, "g": self.g_cfg,
            "n_steps": self.n_steps, "seed": self.seed,
        }


def _spec_objects(spec: EnsembleSpec):
    m = from_config(spec.manifold["kind"], spec.manifold["dim"])
    X = fields.field_from_config(spec.field_cfg)
    f = cylinder_from_config(spec.f_cfg)
    g = cylinder_from_config(spec.g_cfg)
    return m, X, f, g


def _mc_chunk(spec: EnsembleSpec, first: int, count: int) -> dict:
    m, X, f, g = _spec_objects(spec)
    grid = GridSpec(spec.n_steps)
    part_idx, f_pos, g_pos = build_partition(grid, f, g)
    dw = sample_increments_batch(spec.seed, first, count, grid, m.dim)
    summ = _kernels.path_summaries(
        m.kind_code, m.kappa, m.ricci_scalar, grid.dt,
        m.origin(), m.base_frame(), dw, part_idx,
    )
    arr = ensemble_arrays(m, X, f, g, summ, f_pos, g_pos)
    st = chunk_stats(arr, m.dim)
    st["_max"]["tu_drift"] = summ["scalars"]["tu_drift"]
    return st


def run_ensemble(spec: EnsembleSpec, n_paths: int, chunk_size: int = 20000,
                 workers: int = 1) -> dict:
    """Path-parallel evaluation; chunking is independent of worker count and
    results are reduced pairwise in chunk order, so the numbers depend only on
    (spec, n_paths, chunk_size)."""
    chunks = [(k, min(chunk_size, n_paths - k)) for k in range(0, n_paths, chunk_size)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_mc_chunk_star, [(spec, a, b) for a, b in chunks]))
    else:
        parts = [_mc_chunk(spec, a, b) for a, b in chunks]
    return _pairwise(parts)


def _mc_chunk_star(args):
    return _mc_chunk(*args)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class IBPReport:
    kind: str
    spec: dict
    n_paths: int
    signs: dict
    lhs_mean: float
    lhs_se: float
    rhs_mean: float
    rhs_se: float
    diff_mean: float
    diff_se_coupled: float
    tol: float
    bias_allowance: float
    scale: float
    verdict: bool
    terms: dict
    convention_scan: dict
    diagnostics: dict
    adapted: dict | None = None
    exact: dict | None = None
    backend: str = ""
    workers: int = 1
    wall_s: float = 0.0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _mc_tolerance(m: ManifoldModel, n_steps: int, lhs: float, rhs: float,
                  se_l: float, se_r: float, extra: float = 0.0):
    scale = max(1.0, abs(lhs), abs(rhs))
    bias = 5.0 * (1.0 / n_steps) * scale if m.kind != "euclidean" else 0.0
    tol = 3.0 * float(np.hypot(se_l, se_r)) + bias + extra
    return tol, bias, scale


def mc_ibp_check(spec: EnsembleSpec, n_paths: int, signs: dict | None = None,
                 chunk_size: int = 20000, workers: int = 1,
                 exact: dict | None = None, extra_tol: float = 0.0) -> IBPReport:
    """Two-sided Monte Carlo check of E[X~f g] = E[f X~^{tr} g]."""
    t0 = time.time()
    signs = signs or load_sign_convention()
    m, _, _, _ = _spec_objects(spec)
    stats = run_ensemble(spec, n_paths, chunk_size, workers)

    key = f"{signs['div_sign']:+d}{signs['curv_sign']:+d}"
    lhs, se_l = mean_se(stats, "lhs")
    rhs, se_r = mean_se(stats, "rhs" + key)
    dmean, dse = mean_se(stats, "diff" + key)
    tol, bias, scale = _mc_tolerance(m, spec.n_steps, lhs, rhs, se_l, se_r, extra_tol)

    scan = {}
    for ds, cs in SIGN_COMBOS:
        k = f"{ds:+d}{cs:+d}"
        rm, rs = mean_se(stats, "rhs" + k)
        dm, _ = mean_se(stats, "diff" + k)
        comb = float(np.hypot(se_l, rs))
        scan[k] = {
            "rhs_mean": rm, "rhs_se": rs, "diff_mean": dm,
            "gap_sigmas": abs(dm) / comb if comb > 0 else float("inf"),
            "pass": abs(lhs - rm) <= 3.0 * comb + bias + extra_tol,
        }

    terms = {
        name: dict(zip(("mean", "se"), mean_se(stats, name)))
        for name in ("term_mxtg", "term_ito", "term_div_nabla", "term_div_curv")
    }
    rep = IBPReport(
        kind="nonadapted", spec=spec.to_dict(), n_paths=n_paths, signs=dict(signs),
        lhs_mean=lhs, lhs_se=se_l, rhs_mean=rhs, rhs_se=se_r,
        diff_mean=dmean, diff_se_coupled=dse,
        tol=tol, bias_allowance=bias, scale=scale,
        verdict=bool(abs(lhs - rhs) <= tol),
        terms=terms, convention_scan=scan, diagnostics=dict(stats["_max"]),
        exact=exact, backend=_kernels.get_backend(), workers=workers,
        wall_s=time.time() - t0,
    )
    return rep


def adapted_ibp_check(spec: EnsembleSpec, n_paths: int, chunk_size: int = 20000,
                      workers: int = 1, exact: dict | None = None,
                      extra_tol: float = 0.0) -> IBPReport:
    """Per-direction check E[X^{Z_a}f g] = E[f(-X^{Z_a}g + g int <(T^{-1})^T
    e_a, dbeta>)] for every a, with the bare-derivative integrand variant
    recorded alongside."""
    t0 = time.time()
    m, _, _, _ = _spec_objects(spec)
    stats = run_ensemble(spec, n_paths, chunk_size, workers)

    per_alpha = {}
    all_pass = True
    worst = 0.0
    agg = {"lhs": 0.0, "rhs": 0.0, "se_l": 0.0, "se_r": 0.0}
    for a in range(m.dim):
        la, sla = mean_se(stats, f"alhs{a}")
        ra, sra = mean_se(stats, f"arhs{a}")
        rb, srb = mean_se(stats, f"arhs_alt{a}")
        tol, bias, scale = _mc_tolerance(m, spec.n_steps, la, ra, sla, sra, extra_tol)
        ok = abs(la - ra) <= tol
        all_pass &= ok
        comb_alt = float(np.hypot(sla, srb))
        per_alpha[str(a)] = {
            "lhs_mean": la, "lhs_se": sla, "rhs_mean": ra, "rhs_se": sra,
            "tol": tol, "pass": bool(ok),
            "alt_rhs_mean": rb, "alt_rhs_se": srb,
            "alt_gap_sigmas": abs(la - rb) / comb_alt if comb_alt else float("inf"),
            "alt_pass": bool(abs(la - rb) <= 3.0 * comb_alt + bias + extra_tol),
        }
        if abs(la - ra) > worst:
            worst = abs(la - ra)
            agg = {"lhs": la, "rhs": ra, "se_l": sla, "se_r": sra,
                   "tol": tol, "bias": bias, "scale": scale}

    dm, dse = mean_se(stats, "adiff0")
    rep = IBPReport(
        kind="adapted", spec=spec.to_dict(), n_paths=n_paths,
        signs={"ito_convention": "damped"},
        lhs_mean=agg["lhs"], lhs_se=agg["se_l"], rhs_mean=agg["rhs"],
        rhs_se=agg["se_r"], diff_mean=dm, diff_se_coupled=dse,
        tol=agg.get("tol", 0.0), bias_allowance=agg.get("bias", 0.0),
        scale=agg.get("scale", 1.0), verdict=bool(all_pass),
        terms={}, convention_scan={}, adapted=per_alpha,
        diagnostics=dict(stats["_max"]), exact=exact,
        backend=_kernels.get_backend(), workers=workers, wall_s=time.time() - t0,
    )
    return rep
