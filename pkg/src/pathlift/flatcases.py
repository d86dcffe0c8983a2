"""Exact flat-space expectations for the catalog checks, by translating the
cylinder/field configs into Gaussian polynomials and evaluating them with the
Wick engine.

Clamps are ignored here: catalog clamps are the identity out to 12 standard
deviations, so the polynomial expectations agree with the clamped ones far
beyond every tolerance in use.
"""

from __future__ import annotations

import numpy as np

from . import wick


def _slot_terms(cfg: dict) -> list[tuple]:
    """(c, s) pairs of the ambient-linear factors of a catalog cylinder fn."""
    kind = cfg["kind"]
    if kind == "constant":
        return []
    if kind == "linear":
        return [(np.asarray(cfg["c"], float), float(cfg["time"]))]
    if kind == "product":
        return [(np.asarray(t["c"], float), float(t["time"])) for t in cfg["terms"]]
    if kind == "square":
        c = np.asarray(cfg["c"], float)
        return [(c, float(cfg["time"])), (c, float(cfg["time"]))]
    raise ValueError(f"no flat oracle for cylinder kind {kind!r}")


def cylinder_poly(cfg: dict) -> list[tuple]:
    """The function as [(coeff, [GaussianLinear factors])]."""
    if cfg["kind"] == "constant":
        return [(float(cfg.get("value", 1.0)), [])]
    return [(1.0, [wick.slot(c, s) for c, s in _slot_terms(cfg)])]


def _field_dot_poly(field_cfg: dict, c: np.ndarray) -> list[tuple]:
    """<c, X(beta_1)> as a polynomial."""
    if field_cfg["name"] == "identity":
        return [(1.0, [wick.slot(c, 1.0)])]
    if field_cfg["name"] == "constant":
        v0 = np.asarray(field_cfg["param"], float)
        return [(float(c @ v0), [])]
    raise ValueError(f"no flat oracle for field {field_cfg['name']!r}")


def field_pairing_poly(field_cfg: dict, d: int) -> list[tuple]:
    """<X(beta_1), beta_1> as a polynomial (the Ito term for t X(beta_1))."""
    if field_cfg["name"] == "identity":
        return [(1.0, [wick.slot(np.eye(d)[a], 1.0), wick.slot(np.eye(d)[a], 1.0)])
                for a in range(d)]
    if field_cfg["name"] == "constant":
        v0 = np.asarray(field_cfg["param"], float)
        return [(1.0, [wick.slot(v0, 1.0)])]
    raise ValueError(f"no flat oracle for field {field_cfg['name']!r}")


def field_divergence(field_cfg: dict, d: int) -> float:
    if field_cfg["name"] == "identity":
        return float(d)
    if field_cfg["name"] == "constant":
        return 0.0
    raise ValueError(f"no flat oracle for field {field_cfg['name']!r}")


def xtilde_poly(f_cfg: dict, field_cfg: dict) -> list[tuple]:
    """X~f = sum_i s_i <c_i, X(beta_1)> prod_{j != i} <c_j, beta_{s_j}>."""
    terms = _slot_terms(f_cfg)
    out: list[tuple] = []
    for i, (ci, si) in enumerate(terms):
        rest = [(1.0, [wick.slot(cj, sj) for j, (cj, sj) in enumerate(terms) if j != i])]
        pair = _field_dot_poly(field_cfg, ci)
        out.extend(wick.poly_product([(si, [])], wick.poly_product(pair, rest)))
    return out


def directional_poly(f_cfg: dict, h_value) -> list[tuple]:
    """X^h f for a deterministic h given as a callable s -> h(s)."""
    terms = _slot_terms(f_cfg)
    out: list[tuple] = []
    for i, (ci, si) in enumerate(terms):
        coeff = float(ci @ np.asarray(h_value(si), float))
        rest = [wick.slot(cj, sj) for j, (cj, sj) in enumerate(terms) if j != i]
        out.append((coeff, rest))
    return out


def exact_nonadapted(f_cfg: dict, g_cfg: dict, field_cfg: dict, d: int) -> dict:
    """Both sides of the flat identity with the Skorokhod transpose
    X~^{tr} g = -X~g + g(<X(beta_1), beta_1> - div X)."""
    fp = cylinder_poly(f_cfg)
    gp = cylinder_poly(g_cfg)
    lhs = wick.expect(wick.poly_product(xtilde_poly(f_cfg, field_cfg), gp))
    xtg = xtilde_poly(g_cfg, field_cfg)
    ito = field_pairing_poly(field_cfg, d)
    rhs_poly = wick.poly_product(fp, [(-c, fs) for c, fs in xtg])
    rhs_poly += wick.poly_product(wick.poly_product(fp, gp), ito)
    rhs_poly += wick.poly_product(
        wick.poly_product(fp, gp), [(-field_divergence(field_cfg, d), [])]
    )
    rhs = wick.expect(rhs_poly)
    return {"lhs": lhs, "rhs": rhs}


def exact_adapted(f_cfg: dict, g_cfg: dict, h_value, h_ito: wick.GaussianLinear) -> dict:
    """Both sides of E[X^h f g] = E[f(-X^h g + g int <h', dbeta>)] for a
    deterministic h; h_ito is int <h', dbeta> as a Gaussian factor."""
    fp = cylinder_poly(f_cfg)
    gp = cylinder_poly(g_cfg)
    lhs = wick.expect(wick.poly_product(directional_poly(f_cfg, h_value), gp))
    rhs_poly = wick.poly_product(fp, [(-c, fs) for c, fs in directional_poly(g_cfg, h_value)])
    rhs_poly += wick.poly_product(wick.poly_product(fp, gp), [(1.0, [h_ito])])
    rhs = wick.expect(rhs_poly)
    return {"lhs": lhs, "rhs": rhs}


def adapted_flat_catalog(d: int = 2) -> list[dict]:
    """Five flat adapted cases with exact two-sided values; h is deterministic
    so both Ito-integrand conventions coincide (Ric = 0)."""
    c = np.array([1.0, 0.5])[:d]
    cp = np.array([-0.3, 1.0])[:d]
    e = np.array([0.8, -0.6])[:d]
    a = np.array([0.6, 1.1])[:d]

    def line(vec):
        return {"h_value": (lambda s, v=vec: s * v),
                "h_ito": wick.ito_poly(vec, 0, 1.0),
                "h_cfg": {"form": "line", "a": vec.tolist()}}

    def quad(vec):
        return {"h_value": (lambda s, v=vec: s**2 * v),
                "h_ito": wick.ito_poly(2.0 * vec, 1, 1.0),
                "h_cfg": {"form": "t^2", "a": vec.tolist()}}

    cases = [
        {"f": {"kind": "linear", "c": c.tolist(), "time": 1.0},
         "g": {"kind": "constant", "value": 1.0}, **line(a)},
        {"f": {"kind": "product", "terms": [
            {"c": c.tolist(), "time": 0.5}, {"c": cp.tolist(), "time": 1.0}]},
         "g": {"kind": "linear", "c": e.tolist(), "time": 0.75}, **line(a)},
        {"f": {"kind": "linear", "c": c.tolist(), "time": 1.0},
         "g": {"kind": "linear", "c": cp.tolist(), "time": 1.0}, **line(a)},
        {"f": {"kind": "linear", "c": c.tolist(), "time": 1.0 / 4},
         "g": {"kind": "linear", "c": cp.tolist(), "time": 3.0 / 4}, **quad(a)},
        {"f": {"kind": "square", "c": c.tolist(), "time": 1.0},
         "g": {"kind": "linear", "c": cp.tolist(), "time": 0.5}, **line(e)},
    ]
    for case in cases:
        case["exact"] = exact_adapted(case["f"], case["g"], case["h_value"], case["h_ito"])
    return cases


def nonadapted_flat_catalog(d: int = 2) -> list[dict]:
    """Flat non-adapted cases with Skorokhod-oracle exact values."""
    c = np.array([1.0, 0.5])[:d]
    cp = np.array([-0.3, 1.0])[:d]
    cases = [
        {"field": {"name": "identity", "param": []},
         "f": {"kind": "product", "terms": [
             {"c": c.tolist(), "time": 0.5}, {"c": cp.tolist(), "time": 1.0}]},
         "g": {"kind": "constant", "value": 1.0}},
        {"field": {"name": "identity", "param": []},
         "f": {"kind": "linear", "c": c.tolist(), "time": 1.0},
         "g": {"kind": "linear", "c": cp.tolist(), "time": 1.0}},
        {"field": {"name": "constant", "param": [0.7, -0.2][:d]},
         "f": {"kind": "square", "c": c.tolist(), "time": 0.5},
         "g": {"kind": "linear", "c": cp.tolist(), "time": 1.0}},
    ]
    for case in cases:
        case["exact"] = exact_nonadapted(case["f"], case["g"], case["field"], d)
    return cases
