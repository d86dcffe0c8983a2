"""Configuration-driven command line: ``pathlift run config.json``.

Exit codes: 0 on a passing run, 1 on experiment failure (failing verdict or a
runtime error, with a diagnostic JSON on stderr), 2 on an invalid config
(nothing is written).  ``PATHLIFT_SEED`` overrides the seed and nothing else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import jsonschema

from . import __version__
from ._kernels import get_backend
from .experiments import EXPERIMENTS
from .report import RunResult

_NUM_VEC = {"type": "array", "items": {"type": "number"}}
_FIELD = {
    "type": "object", "additionalProperties": False,
    "required": ["name"],
    "properties": {"name": {"type": "string"}, "param": _NUM_VEC},
}
_CLAMP = {
    "type": "object", "additionalProperties": False,
    "properties": {"level": {"type": "number"}, "width": {"type": "number"}},
}
_CYLINDER = {
    "type": "object", "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "linear", "product", "square"]},
        "value": {"type": "number"},
        "c": _NUM_VEC,
        "time": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "terms": {
            "type": "array",
            "items": {
                "type": "object", "additionalProperties": False,
                "required": ["c", "time"],
                "properties": {"c": _NUM_VEC,
                               "time": {"type": "number", "exclusiveMinimum": 0,
                                        "maximum": 1}},
            },
        },
        "clamp": _CLAMP,
    },
}

CONFIG_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": sorted(EXPERIMENTS)},
        "manifold": {
            "type": "object", "additionalProperties": False,
            "required": ["kind", "dim"],
            "properties": {
                "kind": {"enum": ["euclidean", "sphere", "hyperbolic"]},
                "dim": {"type": "integer", "minimum": 1},
            },
        },
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {"n_steps": {"type": "integer", "minimum": 1}},
        },
        "mc": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_paths": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "chunk_size": {"type": "integer", "minimum": 1},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "vector_field": _FIELD,
        "vector_fields": {"type": "array", "items": _FIELD, "minItems": 1},
        "cylinder_f": _CYLINDER,
        "cylinder_g": _CYLINDER,
        "oracle": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_small": {"type": "integer", "minimum": 1, "maximum": 3},
                "q": {"type": "integer", "minimum": 4},
                "quad": {"enum": ["gh", "mc"]},
                "stepper": {"enum": ["geodesic", "heun"]},
                "weight": {"enum": ["corrected", "none"]},
            },
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "n_steps_list": {"type": "array",
                                 "items": {"type": "integer", "minimum": 1}},
                "n_paths": {"type": "integer", "minimum": 1},
            },
        },
        "flat_catalog": {"type": "boolean"},
        "dim": {"type": "integer", "minimum": 1},
        "n_cases": {"type": "integer", "minimum": 1},
        "minimality_cases": {"type": "integer", "minimum": 1},
        "competitors": {"type": "integer", "minimum": 1},
        "n_points": {"type": "integer", "minimum": 1},
        "linearity_points": {"type": "integer", "minimum": 1},
        "signs": {
            "type": "object", "additionalProperties": False,
            "properties": {"div_sign": {"enum": [-1, 1]},
                           "curv_sign": {"enum": [-1, 1]}},
        },
        "tolerances": {"type": "object",
                       "additionalProperties": {"type": "number"}},
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {k: {"type": "string"}
                           for k in ("json", "csv", "svg", "golden")},
        },
    },
}


def validate_config(cfg: dict) -> None:
    jsonschema.validate(cfg, CONFIG_SCHEMA)


def run_config(cfg: dict, workers: int | None = None,
               outdir: str | None = None) -> RunResult:
    validate_config(cfg)
    seed_env = os.environ.get("PATHLIFT_SEED")
    if seed_env is not None:
        cfg = json.loads(json.dumps(cfg))
        cfg.setdefault("mc", {})["seed"] = int(seed_env)
    w = workers if workers is not None else cfg.get("mc", {}).get("workers", 1)
    t0 = time.time()
    verdict, payload = EXPERIMENTS[cfg["experiment"]](cfg, w, outdir)
    return RunResult(
        experiment=cfg["experiment"], config=cfg, verdict=bool(verdict),
        payload=payload, seed=cfg.get("mc", {}).get("seed", 0), workers=w,
        backend=get_backend(), wall_s=time.time() - t0, version=__version__,
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pathlift")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    runp = sub.add_parser("run", help="run one experiment from a JSON config")
    runp.add_argument("config")
    runp.add_argument("--workers", type=int, default=None)
    runp.add_argument("--out", default=None,
                      help="directory for result/CSV/SVG outputs")
    args = ap.parse_args(argv)

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
        validate_config(cfg)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        result = run_config(cfg, workers=args.workers, outdir=args.out)
    except Exception as exc:  # experiment failure with diagnostic JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1

    name = cfg.get("output", {}).get("json", "result.json")
    path = os.path.join(args.out, name) if args.out else name
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(result.to_json())
    print(f"{cfg['experiment']}: {'PASS' if result.verdict else 'FAIL'} "
          f"({result.wall_s:.1f}s) -> {path}")
    return 0 if result.verdict else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
