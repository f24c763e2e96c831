"""Flat ``key = value`` configuration files with typed schemas.

Blank lines and ``#`` comments are ignored. Every key must appear in the
schema of the file kind being read; unknown or repeated keys are errors, so a
typo can never silently fall back to a default.

World keys (``featslam simulate``)::

    seed                     int     required
    n_frames                 int     100
    trajectory_pattern       str     xyz | rpy | half | static
    n_static_points          int     400
    n_static_lines           int     60
    n_dynamic_objects        int     2
    points_per_object        int     40
    lines_per_object         int     4
    dynamic_speed            float   0.02   scene units per frame, peak
    scene_extent             float   1.0
    observation_noise_sigma  float   0.3    pixels
    depth_noise_sigma        float   0.0
    line_response_noise      float   0.02
    mask_dropout             float   0.0    probability a box is missed
    mask_margin              float   4.0    pixels
    fps                      float   30
    fx fy cx cy              float   525 525 319.5 239.5
    width height             int     640 480
    degrade_region           4 floats u0 v0 u1 v1 (optional)
    degrade_start            int     first degraded frame
    degrade_end              int     last degraded frame (inclusive)
    degrade_keep             int     0

Pipeline keys (``featslam run``; ``featslam calibrate`` writes the first four)::

    c_base th                float  from calibration
    grid_rows grid_cols      int    3 3
    d_th                     float  1.0
    line_max_dist line_ratio line_window        float 0.25 0.7 20
    point_huber line_huber line_weight          float
    window_size keyframe_stride                 int   5 5
    max_iters ba_iters                          int   20 10
    tol                                         float 1e-8
    min_parallax_deg min_keyframe_rows cull_strikes
    init_from_gt oracle_relocalize global_refine  bool
"""

from __future__ import annotations

import math
from dataclasses import fields

from .awareness import AwarenessConfig
from .errors import InvalidConfig
from .geometry import CameraIntrinsics
from .pipeline import PipelineConfig
from .sim import PATTERNS, WorldConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _bool(text):
    t = text.lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"not finite: {text!r}")
    return v


def _rect(text):
    vals = [_float(x) for x in text.replace(",", " ").split()]
    if len(vals) != 4:
        raise ValueError("expected four numbers u0 v0 u1 v1")
    return tuple(vals)


WORLD_SCHEMA = {
    "seed": _int,
    "n_frames": _int,
    "trajectory_pattern": str,
    "n_static_points": _int,
    "n_static_lines": _int,
    "n_dynamic_objects": _int,
    "points_per_object": _int,
    "lines_per_object": _int,
    "dynamic_speed": _float,
    "scene_extent": _float,
    "observation_noise_sigma": _float,
    "depth_noise_sigma": _float,
    "line_response_noise": _float,
    "mask_dropout": _float,
    "mask_margin": _float,
    "fps": _float,
    "fx": _float,
    "fy": _float,
    "cx": _float,
    "cy": _float,
    "width": _int,
    "height": _int,
    "degrade_region": _rect,
    "degrade_start": _int,
    "degrade_end": _int,
    "degrade_keep": _int,
}

PIPELINE_SCHEMA = {
    "c_base": _float,
    "th": _float,
    "grid_rows": _int,
    "grid_cols": _int,
    "d_th": _float,
    "line_max_dist": _float,
    "line_ratio": _float,
    "line_window": _float,
    "point_huber": _float,
    "line_huber": _float,
    "line_weight": _float,
    "window_size": _int,
    "keyframe_stride": _int,
    "max_iters": _int,
    "ba_iters": _int,
    "tol": _float,
    "min_parallax_deg": _float,
    "min_keyframe_rows": _int,
    "cull_strikes": _int,
    "init_from_gt": _bool,
    "oracle_relocalize": _bool,
    "global_refine": _bool,
}

_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height")
_DEGRADE_KEYS = ("degrade_region", "degrade_start", "degrade_end", "degrade_keep")


def parse_config(text: str, schema: dict) -> dict:
    """Parse ``key = value`` lines into typed values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in schema:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}", key=key)
        if key in out:
            raise InvalidConfig(f"line {lineno}: duplicate key {key!r}", key=key)
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key!r}: {exc}", key=key) from exc
    return out


def read_config(path, schema: dict) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, schema)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def format_config(values: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in values.items())


# --- world -------------------------------------------------------------------


def world_config(values: dict) -> WorldConfig:
    if "seed" not in values:
        raise InvalidConfig("missing required key 'seed'", key="seed")
    pattern = values.get("trajectory_pattern", "xyz")
    if pattern not in PATTERNS:
        raise InvalidConfig(f"trajectory_pattern must be one of {PATTERNS}", key="trajectory_pattern")
    kw = {k: v for k, v in values.items() if k not in _CAMERA_KEYS and k not in _DEGRADE_KEYS}
    if any(k in values for k in _CAMERA_KEYS):
        base = CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)
        cam = {k: values.get(k, getattr(base, k)) for k in _CAMERA_KEYS}
        try:
            kw["camera"] = CameraIntrinsics(**cam)
        except ValueError as exc:
            raise InvalidConfig(str(exc), key="fx") from exc
    if not 0 <= values.get("mask_dropout", 0.0) <= 1:
        raise InvalidConfig("mask_dropout must be in [0, 1]", key="mask_dropout")
    return WorldConfig(**kw)


def degradation(values: dict):
    """``(region, start, end, keep)`` or ``None`` when no degradation is set."""
    present = [k for k in _DEGRADE_KEYS if k in values]
    if not present:
        return None
    for k in ("degrade_region", "degrade_start", "degrade_end"):
        if k not in values:
            raise InvalidConfig(f"{k} is required when degrading texture", key=k)
    if values["degrade_end"] < values["degrade_start"]:
        raise InvalidConfig("degrade_end must be >= degrade_start", key="degrade_end")
    if values.get("degrade_keep", 0) < 0:
        raise InvalidConfig("degrade_keep must be >= 0", key="degrade_keep")
    return values["degrade_region"], values["degrade_start"], values["degrade_end"], values.get("degrade_keep", 0)


def world_values(cfg: WorldConfig, degrade=None) -> dict:
    """Flat snapshot of a world config, inverse of :func:`world_config`."""
    out = {}
    for f in fields(WorldConfig):
        if f.name == "camera":
            continue
        out[f.name] = getattr(cfg, f.name)
    for k in _CAMERA_KEYS:
        out[k] = getattr(cfg.camera, k)
    if degrade is not None:
        region, start, end, keep = degrade
        out.update(degrade_region=tuple(float(x) for x in region), degrade_start=start, degrade_end=end,
                   degrade_keep=keep)
    return out


# --- pipeline ------------------------------------------------------------------

_PIPE_RENAMES = {"global_refine": "run_global_refine"}


def pipeline_config(values: dict, **overrides) -> PipelineConfig:
    """Build a :class:`PipelineConfig`; ``c_base`` and ``th`` are required."""
    for k in ("c_base", "th"):
        if k not in values:
            raise InvalidConfig(f"missing required key {k!r} (run 'featslam calibrate' first)", key=k)
    try:
        aw = AwarenessConfig(
            c_base=values["c_base"],
            th=values["th"],
            grid_rows=values.get("grid_rows", 3),
            grid_cols=values.get("grid_cols", 3),
        )
    except ValueError as exc:
        key = str(exc).split(" ", 1)[0]
        raise InvalidConfig(str(exc), key=key if key in PIPELINE_SCHEMA else "grid_rows") from exc
    kw = {
        _PIPE_RENAMES.get(k, k): v
        for k, v in values.items()
        if k not in ("c_base", "th", "grid_rows", "grid_cols")
    }
    kw.update(overrides)
    return PipelineConfig(awareness=aw, **kw)


def awareness_values(aw: AwarenessConfig) -> dict:
    return {"c_base": float(aw.c_base), "th": float(aw.th), "grid_rows": aw.grid_rows, "grid_cols": aw.grid_cols}
