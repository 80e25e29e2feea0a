"""Experiment configuration: JSON schema, defaults and semantic checks.

A config is a single JSON object; unknown keys are rejected at every level.
Relative paths inside it resolve against the config file's directory.
"""
import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_bool = {"type": "boolean"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_matrix = {"type": "array", "items": _vec, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


COEFFICIENT_PRESETS = ("constant", "smooth", "piecewise", "holder", "singular", "csv")
DATA_PRESETS = ("bump", "ring", "hole")
SYMMETRIZER_SOURCES = ("identity", "build_strict", "file")
CHECKS = ("symmetrizer", "cone", "dod", "pw", "energy", "lemma33")

SCHEMA = _obj({
    "name": {"type": "string"},
    "n": {"type": "integer", "minimum": 1, "maximum": 3},
    "m": {"type": "integer", "minimum": 1},
    "T": _pos,
    "seed": {"type": "integer", "minimum": 0},
    "output": {"type": "string"},
    "coefficients": _obj({
        "preset": {"enum": list(COEFFICIENT_PRESETS)},
        "B": {"type": "array", "items": _matrix, "minItems": 1},
        "path": {"type": "string"},
        "params": {"type": "object"},
    }, required=["preset"]),
    "symmetrizer": _obj({
        "source": {"enum": list(SYMMETRIZER_SOURCES)},
        "path": {"type": "string"},
        "validation_samples": {"type": "integer", "minimum": 1},
    }, required=["source"]),
    "data": _obj({
        "preset": {"enum": list(DATA_PRESETS)},
        "x0": _vec,
        "r0": _pos,
        "radius": _pos,
        "hole_radius": _pos,
        "width": _pos,
        "power": {"type": "integer", "minimum": 2},
        "amplitude": _num,
        "components": _vec,
    }, required=["preset"]),
    "grid": _obj({
        "N": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "L": _pos,
    }, required=["N", "L"]),
    "time": _obj({
        "Nt": {"type": "integer", "minimum": 8},
        "output_times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    }, required=["Nt"]),
    "checks": _obj({k: _bool for k in CHECKS}),
    "options": _obj({
        "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "dod_times": {"type": "array", "items": _num, "minItems": 1},
        "pw_times": {"type": "array", "items": _num, "minItems": 1},
        "pw_delta": _pos,
        "pw_directions": {"type": "integer", "minimum": 1},
        "pw_magnitudes": {"type": "integer", "minimum": 4},
        "energy_min_abs": _pos,
        "lemma33_eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                   "maximum": 1}, "minItems": 1},
        "lemma33_directions": {"type": "integer", "minimum": 1},
        "bound_samples": {"type": "integer", "minimum": 1},
    }),
}, required=["n", "m", "T", "coefficients", "symmetrizer", "data", "grid", "time"])

DEFAULT_CHECKS = {"symmetrizer": True, "cone": True, "dod": False, "pw": False,
                  "energy": False, "lemma33": False}
DEFAULT_OPTIONS = {"theta": 1e-8, "pw_delta": 0.05, "pw_directions": 8, "pw_magnitudes": 12,
                   "energy_min_abs": 1.0, "lemma33_eps": [0.2, 0.1, 0.05, 0.02],
                   "lemma33_directions": 4, "bound_samples": 1000}


def _fail(msg):
    raise ConfigError(msg)


def _semantic(cfg):
    n, m = cfg["n"], cfg["m"]
    co = cfg["coefficients"]
    if co["preset"] == "csv":
        if "path" not in co:
            _fail("coefficients: preset 'csv' needs 'path'")
    else:
        if "B" not in co:
            _fail(f"coefficients: preset '{co['preset']}' needs 'B' (n matrices of size m x m)")
        B = co["B"]
        if len(B) != n or any(len(row) != m or any(len(r) != m for r in row) for row in B):
            _fail(f"coefficients.B must hold n = {n} matrices of shape {m} x {m}")
    sym = cfg["symmetrizer"]
    if sym["source"] == "file" and "path" not in sym:
        _fail("symmetrizer: source 'file' needs 'path'")
    d = cfg["data"]
    if "x0" in d and len(d["x0"]) != n:
        _fail(f"data.x0 must have n = {n} entries")
    if "components" in d and len(d["components"]) != m:
        _fail(f"data.components must have m = {m} entries")
    need = {"bump": ("r0",), "ring": ("radius", "width"), "hole": ("hole_radius", "width")}
    for key in need[d["preset"]]:
        if key not in d:
            _fail(f"data: preset '{d['preset']}' needs '{key}'")
    if d["preset"] == "ring" and not d["width"] < d["radius"]:
        _fail("data: ring needs width < radius")
    T, Nt = cfg["T"], cfg["time"]["Nt"]
    dt = T / Nt
    opts = cfg["options"]
    for key, times in (("time.output_times", cfg["time"].get("output_times", [])),
                       ("options.dod_times", opts.get("dod_times", [])),
                       ("options.pw_times", opts.get("pw_times", []))):
        for t in times:
            if not 0 <= t <= T:
                _fail(f"{key}: {t} outside [0, T = {T}]")
            if abs(t / dt - round(t / dt)) > 1e-9 * Nt:
                _fail(f"{key}: {t} is not a multiple of the step T/Nt = {dt:.6g}")
    if cfg["checks"]["dod"] and d["preset"] == "bump":
        _fail("checks.dod needs data vanishing on a ball: use the 'hole' or 'ring' preset")
    L = cfg["grid"]["L"]
    r0 = support_radius_of(d)
    if not r0 < L / 2:
        _fail(f"data support radius {r0} must be < L/2 = {L / 2}")


def support_radius_of(data):
    """Radius of the ball about ``x0`` holding the data."""
    p = data["preset"]
    if p == "bump":
        return data["r0"]
    if p == "ring":
        return data["radius"] + data["width"]
    return data["hole_radius"] + 2 * data["width"]


def validate(cfg):
    """Schema-check ``cfg`` and return a normalised copy with defaults filled in."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = copy.deepcopy(cfg)
    cfg.setdefault("name", "experiment")
    cfg.setdefault("seed", 0)
    cfg.setdefault("output", "out")
    cfg["checks"] = {**DEFAULT_CHECKS, **cfg.get("checks", {})}
    cfg["options"] = {**DEFAULT_OPTIONS, **cfg.get("options", {})}
    cfg["data"].setdefault("x0", [0.0] * cfg["n"])
    _semantic(cfg)
    return cfg


def resolve(cfg, section, base_dir):
    """Absolute form of ``cfg[section]['path']`` relative to ``base_dir``."""
    return str((Path(base_dir) / cfg[section]["path"]).resolve())


def load(path):
    """``(config, base_dir)``; relative paths in the config resolve against ``base_dir``."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return validate(raw), path.parent


def bundled(name):
    """Path of a config shipped with the package, e.g. ``bundled('transport-1d')``."""
    p = Path(__file__).parent / "configs" / f"{name}.json"
    if not p.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return p
