"""Experiment configuration: YAML documents validated against a fixed schema.

Every section has defaults; unknown keys anywhere are rejected.  Values can
be overridden from the command line with ``section.key=value`` where the
value is parsed as YAML (``phantom.n=32``, ``noise.snr_db=.inf``).
"""

from __future__ import annotations

import copy
import dataclasses
import math
from pathlib import Path
from typing import Any

import yaml

from .baselines import BaselineConfig
from .dss import ExtensionConfig, ReconConfig
from .errors import ConfigError, GeometryError
from .phantoms import Ball, NonRigidSpec, RigidBallSpec
from .projector import AngleSchedule, DetectorArray, ImageGrid

__all__ = ["DEFAULTS", "METHODS", "load_config", "apply_overrides", "validate", "Experiment"]

METHODS = ("static", "css", "boxl2", "dss", "dss-atten", "dss-multilevel", "dss-perim")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output-dir": "out",
    "phantom": {
        "kind": "rigid",
        "n": 64,
        "T": 64,
        "balls": None,
        "random": False,
        "frequency": 10.0,
        "amplitude": 2.0,
        "radius": None,
    },
    "geometry": {
        "theta1": 0.0,
        "delta_theta": 5.0,
        "n_det": None,
        "det_spacing": None,
        "pixel_size": 1.0,
    },
    "noise": {"snr_db": 40.0},
    "method": "dss",
    "method-params": {},
    "study": {"fractions": [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 1.0], "heaviside_width": 0.1},
    "export": {"format": "pgm", "stride": 1},
    "inputs": {"phantom": None, "sinogram": None, "recon": None},
}

# sections whose keys are free-form and checked per method instead
_OPEN = {"method-params"}

_RECON_FIELDS = {f.name for f in dataclasses.fields(ReconConfig)}
_EXT_FIELDS = {f.name for f in dataclasses.fields(ExtensionConfig)}
_BASE_FIELDS = {f.name for f in dataclasses.fields(BaselineConfig)}
# annealing constants that css shares with the dynamic solver
_CSS_SOLVER = {"M", "N", "kappa0", "kappa_decay", "ls_shrink", "ls_c", "ls_max", "projection"}


def _merge(defaults: dict, given: dict, where: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{where}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(defaults[key], dict) and key not in _OPEN:
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            out[key] = _merge(defaults[key], value, path + ".")
        elif key in _OPEN:
            if value is None:
                value = {}
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            out[key] = dict(value)
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    """Read a YAML config and fill in defaults; raises :class:`ConfigError` on bad structure."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _merge(DEFAULTS, doc)


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; the value is parsed as YAML."""
    given: dict = {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        parts = key.strip().split(".")
        node = given
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return _merge(DEFAULTS, _deep_update(copy.deepcopy(config), given))


def _deep_update(base: dict, upd: dict) -> dict:
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _number(value, name, kind=float):
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a number")
    if isinstance(value, str) and kind is float and value.strip().lower() in ("inf", "+inf", ".inf", "infinity"):
        return math.inf
    try:
        out = kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number, got {value!r}") from exc
    if kind is int and out != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return out


@dataclasses.dataclass
class Experiment:
    """Typed view of a validated config."""

    raw: dict
    seed: int
    output_dir: Path
    grid: ImageGrid
    schedule: AngleSchedule
    detector: DetectorArray
    snr_db: float
    method: str
    phantom_spec: object
    recon: ReconConfig | None
    extension: ExtensionConfig | None
    baseline: BaselineConfig | None


def _phantom_spec(p: dict, T: int, seed: int):
    kind = p["kind"]
    n = _number(p["n"], "phantom.n", int)
    if kind == "rigid":
        balls = []
        for k, b in enumerate(p["balls"] or []):
            if not isinstance(b, dict) or set(b) != {"radius", "position", "velocity"}:
                raise ConfigError(f"phantom.balls[{k}] needs exactly radius, position and velocity")
            balls.append(Ball(float(b["radius"]), tuple(map(float, b["position"])), tuple(map(float, b["velocity"]))))
        return RigidBallSpec(n=n, T=T, balls=balls, seed=seed if p["random"] else None)
    if kind == "nonrigid":
        return NonRigidSpec(n=n, T=T, frequency=_number(p["frequency"], "phantom.frequency"),
                            amplitude=_number(p["amplitude"], "phantom.amplitude"),
                            seed=seed if p["random"] else None)
    if kind == "disk":
        radius = n / 4.0 if p["radius"] is None else _number(p["radius"], "phantom.radius")
        if not 0 < radius < n / 2:
            raise ConfigError(f"phantom.radius must lie in (0, n/2), got {radius}")
        return ("disk", n, T, radius)
    raise ConfigError(f"unknown phantom kind {kind!r}")


def _method_configs(method: str, params: dict):
    keys = set(params)
    if method in ("static", "boxl2"):
        allowed = _BASE_FIELDS
    elif method == "css":
        allowed = _BASE_FIELDS | _CSS_SOLVER
    else:
        allowed = _RECON_FIELDS | _EXT_FIELDS
    extra = sorted(keys - allowed)
    if extra:
        raise ConfigError(f"method-params for {method!r} do not accept {extra}")
    recon = ext = base = None
    if method in ("static", "boxl2", "css"):
        base = BaselineConfig(**{k: v for k, v in params.items() if k in _BASE_FIELDS})
        if method == "css":
            recon = ReconConfig(**{k: v for k, v in params.items() if k in _CSS_SOLVER})
    else:
        recon = ReconConfig(**{k: v for k, v in params.items() if k in _RECON_FIELDS})
        ext = ExtensionConfig(**{k: v for k, v in params.items() if k in _EXT_FIELDS})
        if method == "dss-multilevel" and ext.gray_levels is None:
            raise ConfigError("dss-multilevel needs method-params.gray_levels")
        if method == "dss-perim" and not ext.perimeter_lambda > 0:
            raise ConfigError("dss-perim needs method-params.perimeter_lambda > 0")
    return recon, ext, base


def validate(config: dict) -> Experiment:
    """Check every value and build the typed objects; nothing is computed or written."""
    try:
        seed = _number(config["seed"], "seed", int)
        if seed < 0:
            raise ConfigError("seed must be >= 0")
        p, g = config["phantom"], config["geometry"]
        n = _number(p["n"], "phantom.n", int)
        T = _number(p["T"], "phantom.T", int)
        grid = ImageGrid(n, n, _number(g["pixel_size"], "geometry.pixel_size"))
        schedule = AngleSchedule(_number(g["theta1"], "geometry.theta1"),
                                 _number(g["delta_theta"], "geometry.delta_theta"), T)
        n_det = max(n, n) if g["n_det"] is None else _number(g["n_det"], "geometry.n_det", int)
        spacing = grid.pixel_size if g["det_spacing"] is None else _number(g["det_spacing"], "geometry.det_spacing")
        detector = DetectorArray(n_det, spacing)
        snr = config["noise"]["snr_db"]
        snr = math.inf if snr is None else _number(snr, "noise.snr_db")
        if math.isnan(snr) or snr == -math.inf:
            raise ConfigError("noise.snr_db must be a finite number or +inf")
        method = config["method"]
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        recon, ext, base = _method_configs(method, config["method-params"])
        spec = _phantom_spec(p, T, seed)

        study = config["study"]
        fractions = study["fractions"]
        if not isinstance(fractions, list) or not fractions:
            raise ConfigError("study.fractions must be a non-empty list")
        for f in fractions:
            if not 0 < _number(f, "study.fractions[]") <= 1:
                raise ConfigError(f"study fraction {f} outside (0, 1]")
        if not _number(study["heaviside_width"], "study.heaviside_width") > 0:
            raise ConfigError("study.heaviside_width must be > 0")
        ex = config["export"]
        if ex["format"] not in ("pgm", "png"):
            raise ConfigError(f"export.format must be pgm or png, got {ex['format']!r}")
        if _number(ex["stride"], "export.stride", int) < 1:
            raise ConfigError("export.stride must be >= 1")
        for k, v in config["inputs"].items():
            if v is not None and not isinstance(v, str):
                raise ConfigError(f"inputs.{k} must be a path")
        if not isinstance(config["output-dir"], str) or not config["output-dir"]:
            raise ConfigError("output-dir must be a non-empty path")
    except (ValueError, TypeError, GeometryError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return Experiment(config, seed, Path(config["output-dir"]), grid, schedule, detector, snr, method,
                      spec, recon, ext, base)
