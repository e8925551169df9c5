"""Run configuration: an INI document with six flat sections.

::

    [grid]        dims = 128            (one integer, or one per axis)
                  lower = -0.5          (scalar or one per axis)
                  upper = 0.5
    [params]      any SolverParams field; omitted ones get the standard defaults
    [geometry]    shape = <JSON shape tree, see geometry.shape_from_dict>
    [constraint]  sites = <JSON list of points>      (steiner)
                  curve = <JSON curve>               (plateau)
    [obstacle]    sites, weights, kind, amplitude    (fixed-obstacle)
    [output]      directory, sample_every, checkpoint_every, sigmas

Geometry, sites and curves are JSON values so a whole run fits in one
archivable text file.  ``emit_config`` writes every resolved value back out;
``parse_config(emit_config(cfg)) == cfg``.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evolver import MODES, SolverParams
from .geometry import CurveSpec, ShapeSpec, shape_from_dict, shape_to_dict
from .grid import Grid, make_grid
from .skeleton import ObstacleSpec

__all__ = ["ConfigError", "RunConfig", "ObstacleBlock", "OutputBlock", "parse_config", "emit_config", "load_config"]

SECTIONS = ("grid", "params", "geometry", "constraint", "obstacle", "output")
_PARAM_FIELDS = {f.name: f for f in dataclasses.fields(SolverParams)}
_INT_PARAMS = {"steps", "forcing_cadence", "inner_steps", "cg_maxiter"}
_STR_PARAMS = {"mode", "stabilization", "gradient", "forcing_units"}
DEFAULT_SIGMAS = (0.02, 0.01, 0.005)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass(frozen=True)
class ObstacleBlock:
    sites: tuple[tuple[float, ...], ...]
    weights: tuple[float, ...] | None = None
    kind: str = "points"
    amplitude: float = 1.0
    sigma: float | None = None  # kernel width; None means params.sigma

    def spec(self) -> ObstacleSpec:
        return ObstacleSpec(np.asarray(self.sites, dtype=float), None if self.weights is None else np.asarray(self.weights), self.kind)


@dataclass(frozen=True)
class OutputBlock:
    directory: str | None = None
    sample_every: int = 1
    checkpoint_every: int = 0
    sigmas: tuple[float, ...] = DEFAULT_SIGMAS


@dataclass
class RunConfig:
    dims: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    params: SolverParams
    geometry: ShapeSpec | None = None
    sites: tuple[tuple[float, ...], ...] | None = None
    curve: CurveSpec | None = None
    obstacle: ObstacleBlock | None = None
    output: OutputBlock = field(default_factory=OutputBlock)

    @property
    def grid(self) -> Grid:
        return make_grid(self.dims, (self.lower, self.upper))

    @property
    def mode(self) -> str:
        return self.params.mode


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _json(path: str, text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(path, f"invalid JSON ({exc.msg})")


def _floats(path: str, text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        _fail(path, f"expected numbers, got {text!r}")
    if not vals or not all(np.isfinite(vals)):
        _fail(path, f"expected finite numbers, got {text!r}")
    return vals


def _int(path: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        _fail(path, f"expected an integer, got {text!r}")


def _check_keys(sec, name: str, allowed) -> None:
    for key in sec:
        if key not in allowed:
            _fail(f"{name}.{key}", "unknown key")


def _points(path: str, value, ndim: int) -> tuple[tuple[float, ...], ...]:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        _fail(path, "expected a list of points")
    if arr.ndim != 2 or arr.shape[1] != ndim or len(arr) == 0:
        _fail(path, f"expected a non-empty list of {ndim}-D points")
    if not np.all(np.isfinite(arr)):
        _fail(path, "points must be finite")
    return tuple(tuple(float(x) for x in p) for p in arr)


def parse_config(text: str, default_mode: str = "skeletal-mcf") -> RunConfig:
    """Parse and validate; ``default_mode`` applies when ``params.mode`` is absent."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    for name in cp.sections():
        if name not in SECTIONS:
            _fail(name, "unknown section")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in SECTIONS}

    # grid
    g = sec["grid"]
    _check_keys(g, "grid", ("dims", "lower", "upper"))
    dims_raw = g.get("dims", "128").replace(",", " ").split()
    dims = tuple(_int("grid.dims", d) for d in dims_raw)
    if len(dims) == 1:
        dims = dims * 3
    lower = _floats("grid.lower", g.get("lower", "-0.5"))
    upper = _floats("grid.upper", g.get("upper", "0.5"))
    nd = len(dims)
    if len(lower) == 1:
        lower = lower * nd
    if len(upper) == 1:
        upper = upper * nd
    if len(lower) != nd or len(upper) != nd:
        _fail("grid.lower", f"need 1 or {nd} values")
    try:
        grid = make_grid(dims, (lower, upper))
    except ValueError as exc:
        _fail("grid.dims", str(exc))

    # params
    p = sec["params"]
    _check_keys(p, "params", _PARAM_FIELDS)
    overrides = {}
    for key, raw in p.items():
        path = f"params.{key}"
        if key in _STR_PARAMS:
            overrides[key] = raw.strip()
        elif key in _INT_PARAMS:
            overrides[key] = _int(path, raw)
        else:
            vals = _floats(path, raw)
            if len(vals) != 1:
                _fail(path, "expected one number")
            overrides[key] = vals[0]
    mode = overrides.pop("mode", default_mode)
    if mode not in MODES:
        _fail("params.mode", f"must be one of {', '.join(MODES)}")
    # the standard formulas follow the first axis and the first box edge
    n = dims[0]
    eps = float(overrides.pop("eps", 2.0 / n * float(grid.lengths[0])))
    try:
        params = SolverParams.defaults(n, mode, eps=eps, **overrides)
    except ValueError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("params.") else f"params: {msg}") from None

    # geometry
    geo = sec["geometry"]
    _check_keys(geo, "geometry", ("shape",))
    shape = None
    if "shape" in geo:
        body = _json("geometry.shape", geo["shape"])
        try:
            shape = shape_from_dict(body)
        except (KeyError, TypeError, ValueError) as exc:
            _fail("geometry.shape", str(exc))

    # constraint
    con = sec["constraint"]
    _check_keys(con, "constraint", ("sites", "curve"))
    sites = _points("constraint.sites", _json("constraint.sites", con["sites"]), nd) if "sites" in con else None
    if sites is not None and not np.all(grid.contains(sites)):
        _fail("constraint.sites", "sites must lie inside the box")
    curve = None
    if "curve" in con:
        body = _json("constraint.curve", con["curve"])
        if isinstance(body, dict) and "file" in body and not Path(body["file"]).is_file():
            _fail("constraint.curve", f"file {body['file']!r} does not exist")
        try:
            curve = CurveSpec.from_dict(body)
        except (KeyError, TypeError, ValueError) as exc:
            _fail("constraint.curve", str(exc))
        if curve.ndim != nd:
            _fail("constraint.curve", f"curve is {curve.ndim}-D but the grid is {nd}-D")

    # obstacle
    ob = sec["obstacle"]
    _check_keys(ob, "obstacle", ("sites", "weights", "kind", "amplitude", "sigma"))
    obstacle = None
    if ob:
        if "sites" not in ob:
            _fail("obstacle.sites", "required when an obstacle block is given")
        osites = _points("obstacle.sites", _json("obstacle.sites", ob["sites"]), nd)
        weights = None
        if "weights" in ob:
            weights = tuple(float(w) for w in _json("obstacle.weights", ob["weights"]))
        amp = _floats("obstacle.amplitude", ob.get("amplitude", "1.0"))[0]
        if amp < 0:
            _fail("obstacle.amplitude", "must be nonnegative")
        osigma = None
        if "sigma" in ob:
            osigma = _floats("obstacle.sigma", ob["sigma"])[0]
            if osigma <= 0:
                _fail("obstacle.sigma", "must be positive")
        obstacle = ObstacleBlock(osites, weights, ob.get("kind", "points").strip(), amp, osigma)
        try:
            obstacle.spec()
        except ValueError as exc:
            _fail("obstacle", str(exc))
        if not np.all(grid.contains(osites)):
            _fail("obstacle.sites", "sites must lie inside the box")

    # output
    out = sec["output"]
    _check_keys(out, "output", ("directory", "sample_every", "checkpoint_every", "sigmas"))
    sample_every = _int("output.sample_every", out.get("sample_every", "1"))
    checkpoint_every = _int("output.checkpoint_every", out.get("checkpoint_every", "0"))
    if sample_every < 1:
        _fail("output.sample_every", "must be >= 1")
    if checkpoint_every < 0:
        _fail("output.checkpoint_every", "must be >= 0")
    sigmas = _floats("output.sigmas", out["sigmas"]) if "sigmas" in out else DEFAULT_SIGMAS
    if any(s <= 0 for s in sigmas):
        _fail("output.sigmas", "must be positive")
    output = OutputBlock(out.get("directory") or None, sample_every, checkpoint_every, sigmas)

    # mode-specific requirements
    if mode == "steiner" and sites is None:
        _fail("constraint.sites", "required in steiner mode")
    if mode == "plateau" and curve is None:
        _fail("constraint.curve", "required in plateau mode")
    if mode == "fixed-obstacle" and obstacle is None:
        _fail("obstacle.sites", "required in fixed-obstacle mode")

    return RunConfig(dims, tuple(lower), tuple(upper), params, shape, sites, curve, obstacle, output)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Fully resolved text form; every default is written out."""
    lines = ["[grid]", f"dims = {' '.join(map(str, cfg.dims))}"]
    lines.append(f"lower = {' '.join(map(repr, map(float, cfg.lower)))}")
    lines.append(f"upper = {' '.join(map(repr, map(float, cfg.upper)))}")
    lines += ["", "[params]"]
    for name in _PARAM_FIELDS:
        lines.append(f"{name} = {_fmt(getattr(cfg.params, name))}")
    if cfg.geometry is not None:
        lines += ["", "[geometry]", f"shape = {json.dumps(shape_to_dict(cfg.geometry))}"]
    if cfg.sites is not None or cfg.curve is not None:
        lines += ["", "[constraint]"]
        if cfg.sites is not None:
            lines.append(f"sites = {json.dumps([list(s) for s in cfg.sites])}")
        if cfg.curve is not None:
            lines.append(f"curve = {json.dumps(cfg.curve.to_dict())}")
    if cfg.obstacle is not None:
        ob = cfg.obstacle
        lines += ["", "[obstacle]", f"sites = {json.dumps([list(s) for s in ob.sites])}"]
        if ob.weights is not None:
            lines.append(f"weights = {json.dumps(list(ob.weights))}")
        lines += [f"kind = {ob.kind}", f"amplitude = {ob.amplitude!r}"]
        if ob.sigma is not None:
            lines.append(f"sigma = {ob.sigma!r}")
    out = cfg.output
    lines += ["", "[output]"]
    if out.directory:
        lines.append(f"directory = {out.directory}")
    lines += [
        f"sample_every = {out.sample_every}",
        f"checkpoint_every = {out.checkpoint_every}",
        f"sigmas = {' '.join(map(repr, out.sigmas))}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file {str(path)!r} does not exist")
    return parse_config(path.read_text())
