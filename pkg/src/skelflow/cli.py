"""Command line entry point: ``skelflow {mcf,steiner,plateau,skeleton-analyze}``.

Every subcommand reads one configuration file (see :mod:`skelflow.config`).
The output directory comes from ``--output``, else from the
``SKELFLOW_OUTPUT`` environment variable, else from ``[output] directory``.

Exit codes: 0 success, 1 bad configuration or I/O failure, 2 usage error,
3 the run produced non-finite values.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, emit_config, parse_config
from .diagnostics import DiagnosticsSeries
from .evolver import NonFiniteFieldError, PhaseState, _alpha_for, run
from .geometry import Slab, inclusion_field_plateau, inclusion_field_steiner, profile_field, signed_distance
from .io import read_field, read_sidecar, write_field, write_sidecar
from .skeleton import jump_density_oracle, mollify, obstacle_forcing, skeletal_pairing, skeletal_term, unit_field

log = logging.getLogger("skelflow")

ENV_OUTPUT = "SKELFLOW_OUTPUT"
SUBCOMMAND_MODES = {
    "mcf": ("skeletal-mcf", ("plain-mcf", "skeletal-mcf", "fixed-obstacle")),
    "steiner": ("steiner", ("steiner",)),
    "plateau": ("plateau", ("plateau",)),
    "skeleton-analyze": ("skeletal-mcf", None),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skelflow", description="Skeleton-forced Allen-Cahn flows on periodic grids.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_MODES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="run configuration (INI)")
        p.add_argument("--output", type=Path, help=f"output directory (overrides ${ENV_OUTPUT} and the config)")
        p.add_argument("--steps", type=int, help="total number of steps (overrides params.steps)")
        p.add_argument("--resume", type=Path, help="checkpoint field file to continue from")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args) -> RunConfig:
    default_mode, allowed = SUBCOMMAND_MODES[args.command]
    if not args.config.is_file():
        raise ConfigError(f"--config: file {str(args.config)!r} does not exist")
    cfg = parse_config(args.config.read_text(), default_mode=default_mode)
    if allowed is not None and cfg.mode not in allowed:
        raise ConfigError(f"params.mode: {cfg.mode!r} cannot run under '{args.command}' (use one of {', '.join(allowed)})")
    if args.steps is not None:
        if args.steps < 0:
            raise ConfigError("--steps: must be >= 0")
        cfg.params = cfg.params.replace(steps=args.steps)
    if cfg.geometry is None:
        raise ConfigError("geometry.shape: required")
    return cfg


def _output_dir(args, cfg: RunConfig) -> Path:
    out = args.output or os.environ.get(ENV_OUTPUT) or cfg.output.directory
    if not out:
        raise ConfigError(f"output.directory: not set (use --output, ${ENV_OUTPUT} or [output] directory)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _constraint(cfg: RunConfig, grid):
    p = cfg.params
    if p.mode == "steiner":
        return inclusion_field_steiner(cfg.sites, p.sigma_tilde, p.eps, grid)
    if p.mode == "plateau":
        return inclusion_field_plateau(cfg.curve, p.sigma_tilde, p.eps, grid)
    return None


def _static_forcing(cfg: RunConfig, grid):
    if cfg.obstacle is None or cfg.mode != "fixed-obstacle":
        return None
    sigma = cfg.obstacle.sigma or cfg.params.sigma
    return obstacle_forcing(grid, cfg.obstacle.spec(), sigma, cfg.obstacle.amplitude)


def _checkpoint_name(step: int) -> str:
    return f"checkpoint_{step:08d}.tfld"


def run_evolution(args, cfg: RunConfig) -> int:
    out = _output_dir(args, cfg)
    (out / "config.ini").write_text(emit_config(cfg))
    grid = cfg.grid
    p = cfg.params
    u_in = _constraint(cfg, grid)
    f_static = _static_forcing(cfg, grid)
    csv_path = out / "diagnostics.csv"
    sidecar = {"mode": p.mode, "eps": p.eps, "dt": p.dt, "sigma": p.sigma, "c": p.c}

    state = series = None
    if args.resume is not None:
        state, series = _resume(args.resume, cfg, csv_path)
        u0 = state.u
    else:
        u0 = profile_field(signed_distance(cfg.geometry, grid), p.eps)
        write_field(out / "u_initial.tfld", grid, np.maximum(u0, u_in) if u_in is not None else u0)
        write_sidecar(out / "u_initial.tfld", {**sidecar, "step_index": 0})
    if u_in is not None:
        write_field(out / "u_in.tfld", grid, u_in)

    def on_checkpoint(st: PhaseState, rows: DiagnosticsSeries):
        rows.to_csv(csv_path)
        path = out / _checkpoint_name(st.step_index)
        write_field(path, grid, st.u, itemsize=8)
        if st.f is not None:
            write_field(path.with_name(path.stem + ".f.tfld"), grid, st.f, itemsize=8)
        write_sidecar(path, {**sidecar, "step_index": st.step_index})

    try:
        state, series = run(
            grid,
            u0,
            p,
            u_in=u_in,
            f_static=f_static,
            sample_every=cfg.output.sample_every,
            checkpoint_every=cfg.output.checkpoint_every,
            on_checkpoint=on_checkpoint,
            state=state,
            series=series,
        )
    except NonFiniteFieldError as exc:
        exc.series.to_csv(csv_path)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    series.to_csv(csv_path)
    write_field(out / "u_final.tfld", grid, state.u)
    write_sidecar(out / "u_final.tfld", {**sidecar, "step_index": state.step_index})
    if state.f is not None:
        write_field(out / "f_final.tfld", grid, state.f)
    last = series.rows[-1]
    log.info("done: step %d, components %d, volume %.6g", last[0], last[5], last[4])
    return 0


def _resume(path: Path, cfg: RunConfig, csv_path: Path):
    if not path.is_file():
        raise ConfigError(f"--resume: file {str(path)!r} does not exist")
    grid, u = read_field(path)
    if grid != cfg.grid:
        raise ConfigError("--resume: checkpoint grid does not match grid block")
    meta = read_sidecar(path)
    step_index = int(meta["step_index"])
    f = None
    f_path = path.with_name(path.stem + ".f.tfld")
    if f_path.is_file():
        f = read_field(f_path)[1]
    alpha = None if f is None else _alpha_for(cfg.params, f)
    state = PhaseState(u, f, step_index, cfg.params.dt, alpha)
    series = DiagnosticsSeries(cfg.output.sample_every)
    if csv_path.is_file():
        old = DiagnosticsSeries.from_csv(csv_path.read_text(), cfg.output.sample_every)
        # a leg that stopped off the sampling grid logged an extra final row
        every = cfg.output.sample_every
        series.rows = [r for r in old.rows if r[0] <= step_index and (r[0] % every == 0 or r[0] == step_index)]
        if series.rows and series.rows[-1][0] == step_index and step_index % every:
            series.rows.pop()
    return state, series


# -- skeleton-analyze -----------------------------------------------------


def _bump(mesh, half_width: float = 0.2):
    """Tensor ``cos^2`` bump centred at the origin."""
    out = 1.0
    for x in mesh:
        out = out * np.where(np.abs(x) < half_width, np.cos(np.pi * x / (2 * half_width)) ** 2, 0.0)
    return out


def _slab_oracle(shape, grid, half_width: float = 0.2):
    """``(2/3) int_midplane phi`` when the shape is an axis-aligned slab through the origin."""
    if not isinstance(shape, Slab) or shape.offset != 0.0:
        return None
    nrm = np.asarray(shape.normal) / np.linalg.norm(shape.normal)
    axis = int(np.argmax(np.abs(nrm)))
    if not np.isclose(abs(nrm[axis]), 1.0):
        return None
    e = np.zeros(grid.ndim)
    e[axis] = 1.0
    density = jump_density_oracle(e, -e, e)
    # each tangential axis contributes int cos^2(pi x / 2w) dx = w
    return density * half_width ** (grid.ndim - 1)


def analyze(args, cfg: RunConfig) -> int:
    out = _output_dir(args, cfg)
    (out / "config.ini").write_text(emit_config(cfg))
    grid = cfg.grid
    dist = signed_distance(cfg.geometry, grid)
    m, degenerate = unit_field(grid, dist, cfg.params.eta, "central")
    if degenerate:
        raise ConfigError("geometry.shape: distance field is constant on the grid")
    refine = 8 if grid.ndim == 2 else 1
    oracle = _slab_oracle(cfg.geometry, grid)
    rows = []
    for sigma in cfg.output.sigmas:
        value = skeletal_pairing(grid, m, sigma, lambda *mesh: _bump(mesh), refine=refine)
        s = skeletal_term(mollify(grid, m, sigma), "spectral")
        name = f"S_sigma_{sigma:g}.tfld"
        write_field(out / name, grid, s)
        write_sidecar(out / name, {"sigma": sigma, "refine": refine, "test_function": "cos2 bump, half-width 0.2"})
        err = (value - oracle) / oracle if oracle else float("nan")
        rows.append((sigma, value, float("nan") if oracle is None else oracle, err))
        log.info("sigma=%g pairing=%.6g", sigma, value)
    with open(out / "pairings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sigma", "pairing", "oracle", "relative_error"))
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "skeleton-analyze":
            return analyze(args, cfg)
        return run_evolution(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
