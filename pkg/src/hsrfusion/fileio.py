"""File formats: CSV matrices and JSON sidecars.

Matrices are plain CSV, one row per line, '.' decimal separator, no
header; dimensions are inferred. Values are written with 17 significant
digits so a write/read round trip is bit exact for float64.
"""

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .experiment import ExperimentConfig
from .model import SpatialResponse, Window
from .scenegen import SceneConfig
from .solver import SolverConfig


def write_matrix(path, matrix):
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", encoding="utf-8") as handle:
        for row in m:
            handle.write(",".join(f"{v:.17g}" for v in row))
            handle.write("\n")


def read_matrix(path):
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ValueError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(cells)}"
                )
            parsed = []
            for col, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno}, column {col}: cannot parse {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValueError(f"{path}: zero rows")
    return np.asarray(rows, dtype=float)


def write_spatial_response(path, spatial):
    payload = {
        "L": spatial.sr_pixel_count,
        "Lh": spatial.hs_pixel_count,
        "windows": [
            {"pixels": w.pixels.tolist(), "weights": w.weights.tolist()}
            for w in spatial.windows
        ],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def read_spatial_response(path):
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    windows = [
        Window(pixels=np.asarray(w["pixels"], dtype=int),
               weights=np.asarray(w["weights"], dtype=float))
        for w in payload["windows"]
    ]
    spatial = SpatialResponse(sr_pixel_count=int(payload["L"]), windows=windows)
    if "Lh" in payload and int(payload["Lh"]) != spatial.hs_pixel_count:
        raise ValueError(
            f"{path}: declared Lh {payload['Lh']} does not match "
            f"{spatial.hs_pixel_count} windows"
        )
    return spatial


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, default=_json_default)
        handle.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


# ---------------------------------------------------------------------------
# Config round trips
# ---------------------------------------------------------------------------

def scene_config_from_dict(payload):
    return SceneConfig(**payload)


def solver_config_from_dict(payload):
    return SolverConfig(**payload)


def experiment_config_from_dict(payload):
    payload = dict(payload)
    payload["scene"] = scene_config_from_dict(payload["scene"])
    payload["solver"] = solver_config_from_dict(payload["solver"])
    payload["snr_db"] = [_parse_snr(v) for v in payload["snr_db"]]
    return ExperimentConfig(**payload)


def _parse_snr(value):
    if value is None:
        return math.inf
    if isinstance(value, str):
        return float(value)
    return float(value)


def format_snr(value):
    return "inf" if math.isinf(value) else f"{value:g}"


def scene_config_to_dict(config):
    return asdict(config)


def read_scene_config(path):
    return scene_config_from_dict(read_json(path))


def read_solver_config(path):
    return solver_config_from_dict(read_json(path))


def read_experiment_config(path):
    return experiment_config_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Scene and solution bundles
# ---------------------------------------------------------------------------

def save_generated_scene(out_dir, generated):
    """Write a generated scene as CSV matrices plus a JSON sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "endmembers.csv", generated.scene.endmembers)
    write_matrix(out / "abundances.csv", generated.scene.abundances)
    write_matrix(out / "image.csv", generated.scene.image)
    write_matrix(out / "spectral.csv", generated.spectral)
    write_spatial_response(out / "spatial.json", generated.spatial)
    write_json(out / "scene.json", {
        "seed": generated.seed,
        "pure_windows": list(generated.pure_windows),
        "cell_supports": {str(k): list(v) for k, v in generated.cell_supports.items()},
        "draws": generated.draws,
        "acceptance_rate": generated.acceptance_rate,
    })
    return out


def save_solution(out_dir, solution):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "endmembers_est.csv", solution.endmembers)
    write_matrix(out / "abundances_est.csv", solution.abundances)
    write_json(out / "solution.json", {
        "iterations": solution.iterations,
        "termination": solution.termination,
        "objective_trace": solution.objective_trace.tolist(),
        "objective": float(solution.objective_trace[-1]),
    })
    return out
