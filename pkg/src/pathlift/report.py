"""Run results, CSV tables, and dependency-free SVG convergence plots."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field


@dataclass
class RunResult:
    experiment: str
    config: dict
    verdict: bool
    payload: dict
    seed: int
    workers: int
    backend: str
    wall_s: float
    version: str

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "verdict": self.verdict,
            "payload": self.payload,
            "seed": self.seed,
            "workers": self.workers,
            "backend": self.backend,
            "wall_s": self.wall_s,
            "version": self.version,
        }

    def to_json(self, drop_wallclock: bool = False) -> str:
        data = self.to_dict()
        if drop_wallclock:
            data = _strip_keys(data, {"wall_s"})
        return json.dumps(data, indent=2, sort_keys=True, default=_jsonify)


def _jsonify(x):
    try:
        import numpy as np

        if isinstance(x, (np.floating, np.integer)):
            return x.item()
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, np.bool_):
            return bool(x)
    except ImportError:  # pragma: no cover
        pass
    raise TypeError(f"not JSON serializable: {type(x)}")


def _strip_keys(obj, names: set):
    if isinstance(obj, dict):
        return {k: _strip_keys(v, names) for k, v in obj.items() if k not in names}
    if isinstance(obj, list):
        return [_strip_keys(v, names) for v in obj]
    return obj


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def fit_slope(xs, ys) -> float:
    """Least-squares slope of log10(y) against log10(x)."""
    lx = [math.log10(x) for x in xs]
    ly = [math.log10(max(y, 1e-300)) for y in ys]
    n = len(lx)
    mx, my = sum(lx) / n, sum(ly) / n
    num = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    den = sum((a - mx) ** 2 for a in lx)
    return num / den if den else float("nan")


def svg_loglog(path: str, xs, ys, title: str, xlabel: str = "h",
               ylabel: str = "error") -> float:
    """Write a log-log scatter/line plot with the fitted slope annotated.
    Returns the slope."""
    slope = fit_slope(xs, ys)
    W, H, M = 560, 400, 60
    lx = [math.log10(x) for x in xs]
    ly = [math.log10(max(y, 1e-300)) for y in ys]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(v):
        return M + (v - x0) / (x1 - x0) * (W - 2 * M)

    def py(v):
        return H - M - (v - y0) / (y1 - y0) * (H - 2 * M)

    pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(lx, ly))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{M}" y1="{H-M}" x2="{W-M}" y2="{H-M}" stroke="black"/>',
        f'<line x1="{M}" y1="{M}" x2="{M}" y2="{H-M}" stroke="black"/>',
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>',
    ]
    for a, b in zip(lx, ly):
        parts.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="4" fill="#1f77b4"/>')
    for v in sorted(set(round(t) for t in lx)):
        if x0 <= v <= x1:
            parts.append(
                f'<text x="{px(v):.1f}" y="{H-M+18}" text-anchor="middle" '
                f'font-size="11">1e{v:d}</text>'
            )
    for v in sorted(set(round(t) for t in ly)):
        if y0 <= v <= y1:
            parts.append(
                f'<text x="{M-6}" y="{py(v):.1f}" text-anchor="end" '
                f'font-size="11">1e{v:d}</text>'
            )
    parts.append(
        f'<text x="{W-M}" y="{M}" text-anchor="end" font-size="13">'
        f"fitted slope {slope:.2f}</text>"
    )
    parts.append(
        f'<text x="{W/2}" y="{H-12}" text-anchor="middle" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{H/2}" font-size="12" transform="rotate(-90 16 {H/2})" '
        f'text-anchor="middle">{ylabel}</text>'
    )
    parts.append("</svg>")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
    return slope
