"""Semi-implicit stepping of the forced Allen-Cahn equation.

One outer step freezes the forcing ``f`` at the current state and advances

    u_t = Laplace(u) - (1 + f) W'(u) / eps^2  [- c_vol/(eps sigma) sqrt(2 W(u))]

by a stabilized convex-concave split: the Laplacian and the stabilizer
``alpha u / eps^2`` are implicit, everything else explicit.  With
``alpha >= (1 + f) max W''`` the frozen-forcing energy cannot increase.

``alpha`` may be a single number (taken from ``max f``) or the pointwise
field ``alpha(x) = 1.66 (1 + f(x))``.  The former is inverted by one Fourier
multiplier; the latter needs a short preconditioned CG solve but leaves
the interface speed untouched wherever ``f`` is negligible.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid, forward, helmholtz_inverse, integrate, inverse, laplacian
from .skeleton import DEFAULT_ETA, skeletal_forcing

__all__ = [
    "MODES",
    "W",
    "W_prime",
    "W_second",
    "W_SECOND_MAX",
    "SolverParams",
    "PhaseState",
    "NonFiniteFieldError",
    "stabilization_alpha",
    "compute_forcing",
    "step",
    "energy",
    "run",
]

log = logging.getLogger(__name__)

MODES = ("plain-mcf", "skeletal-mcf", "steiner", "plateau", "fixed-obstacle")

# max of W''(s) = 6 s^2 - 6 s + 1 over the working range [-0.1, 1.1]
W_SECOND_MAX = 1.66


def W(s):
    return 0.5 * s * s * (1.0 - s) ** 2


def W_prime(s):
    return s * (2.0 * s * s - 3.0 * s + 1.0)


def W_second(s):
    return 6.0 * s * s - 6.0 * s + 1.0


def stabilization_alpha(f_max):
    """Smallest ``alpha`` making ``(1 + f) W(v) - alpha v^2 / 2`` concave on [-0.1, 1.1].

    Works elementwise on arrays.
    """
    f_max = np.asarray(f_max, dtype=float)
    if np.any(f_max < 0):
        raise ValueError("forcing must be nonnegative")
    out = (1.0 + f_max) * W_SECOND_MAX
    return float(out) if out.ndim == 0 else out


class NonFiniteFieldError(FloatingPointError):
    def __init__(self, step_index: int, what: str = "u"):
        super().__init__(f"non-finite values in {what} at step {step_index}")
        self.step_index = step_index


@dataclass
class SolverParams:
    eps: float
    dt: float
    sigma: float
    c: float
    mode: str = "skeletal-mcf"
    alpha: float = 0.0
    c_volume: float = 0.0
    sigma_tilde: float = 0.02
    steps: int = 0
    forcing_cadence: int = 1
    inner_steps: int = 1
    stabilization: str = "local"
    volume_sign: float = -1.0
    eta: float = DEFAULT_ETA
    gradient: str = "central"
    forcing_units: str = "grid"
    cg_tol: float = 1e-9
    cg_maxiter: int = 500

    def __post_init__(self):
        self.validate()

    @classmethod
    def defaults(cls, n: int, mode: str = "skeletal-mcf", **overrides) -> "SolverParams":
        """Standard constants for an ``n``-point axis on the unit box.

        ``dt``, ``sigma`` and ``c`` follow ``eps`` when only ``eps`` is overridden.
        """
        eps = float(overrides.get("eps", 2.0 / n))
        base = dict(
            eps=eps,
            dt=eps**2,
            sigma=float(np.sqrt(0.1) * eps),
            c=0.35 * eps * n**3,
            mode=mode,
            sigma_tilde=0.02,
            c_volume=1.0 if mode == "plateau" else 0.0,
        )
        base.update(overrides)
        return cls(**base)

    def validate(self):
        for name in ("eps", "dt", "sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"params.{name} must be positive, got {v}")
        for name in ("c", "alpha", "c_volume", "sigma_tilde"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"params.{name} must be nonnegative, got {v}")
        if self.mode not in MODES:
            raise ValueError(f"params.mode must be one of {MODES}, got {self.mode!r}")
        if self.stabilization not in ("local", "uniform"):
            raise ValueError(f"params.stabilization must be 'local' or 'uniform', got {self.stabilization!r}")
        if self.volume_sign not in (-1.0, 1.0):
            raise ValueError(f"params.volume_sign must be -1 or +1, got {self.volume_sign}")
        if self.forcing_units not in ("grid", "physical"):
            raise ValueError(f"params.forcing_units must be 'grid' or 'physical', got {self.forcing_units!r}")
        if self.gradient not in ("central", "spectral"):
            raise ValueError(f"params.gradient must be 'central' or 'spectral', got {self.gradient!r}")
        for name in ("steps",):
            if int(getattr(self, name)) < 0:
                raise ValueError(f"params.{name} must be >= 0")
        for name in ("forcing_cadence", "inner_steps", "cg_maxiter"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"params.{name} must be >= 1")

    @property
    def skeletal(self) -> bool:
        return self.mode in ("skeletal-mcf", "steiner", "plateau") and self.c > 0

    def replace(self, **changes) -> "SolverParams":
        return dataclasses.replace(self, **changes)


@dataclass
class PhaseState:
    u: np.ndarray
    f: np.ndarray | None = None
    step_index: int = 0
    dt: float = 0.0
    alpha: np.ndarray | float | None = field(default=None, repr=False)
    cg_iterations: int = 0

    @property
    def time(self) -> float:
        return self.step_index * self.dt


def compute_forcing(grid: Grid, u: np.ndarray, params: SolverParams, f_static: np.ndarray | None = None) -> np.ndarray:
    if params.skeletal:
        f = skeletal_forcing(grid, u, params.sigma, params.c, params.eta, params.gradient, params.forcing_units)
    else:
        f = np.zeros(grid.dims)
    if f_static is not None:
        f = f + f_static
    return f


def _alpha_for(params: SolverParams, f: np.ndarray):
    if params.stabilization == "uniform":
        return max(params.alpha, stabilization_alpha(float(f.max())))
    return np.maximum(params.alpha, stabilization_alpha(f))


def _pcg_solve(grid: Grid, b: np.ndarray, diag: np.ndarray, dt: float, tol: float, maxiter: int, x0=None):
    """Solve ``(diag - dt Laplace) x = b`` by preconditioned CG.

    The preconditioner blends the exact constant-coefficient inverse (where
    ``diag`` sits at its minimum) with a Jacobi sweep (where it is large).
    Reductions use numpy's pairwise sums so the result does not depend on
    the thread count.
    """
    d0 = float(diag.min())
    sym = 1.0 / (d0 + dt * 4.0 * np.pi**2 * grid.xi_squared)
    s = np.sqrt(d0 / diag)
    t = (1.0 - s * s) / diag

    def apply_a(x):
        return diag * x - dt * laplacian(grid, x)

    def precond(r):
        return s * inverse(grid, sym * forward(grid, s * r)) + t * r

    bnorm = np.sqrt(np.sum(b * b))
    if bnorm == 0:
        return np.zeros_like(b), 0
    if x0 is None:
        x = precond(b)
        r = b - apply_a(x)
    else:
        x = np.array(x0, dtype=float)
        r = b - apply_a(x)
        x += precond(r)
        r = b - apply_a(x)
    z = precond(r)
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(1, maxiter + 1):
        if np.sqrt(np.sum(r * r)) <= tol * bnorm:
            return x, it - 1
        ap = apply_a(p)
        a = rz / np.sum(p * ap)
        x += a * p
        r -= a * ap
        z = precond(r)
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.sqrt(np.sum(r * r)) > tol * bnorm * 1e3:
        log.warning("CG stopped after %d iterations, residual %.3g", maxiter, np.sqrt(np.sum(r * r)) / bnorm)
    return x, maxiter


def _implicit_solve(grid, rhs, dt, alpha, eps, params, guess=None):
    if np.ndim(alpha) == 0:
        return helmholtz_inverse(grid, rhs, dt, float(alpha), eps), 0
    diag = 1.0 + dt * alpha / eps**2
    if float(diag.max() - diag.min()) <= 1e-14 * float(diag.min()):
        return helmholtz_inverse(grid, rhs, dt, float(alpha.flat[0]), eps), 0
    return _pcg_solve(grid, rhs, diag, dt, params.cg_tol, params.cg_maxiter, guess)


def step(
    grid: Grid,
    state: PhaseState,
    params: SolverParams,
    u_in: np.ndarray | None = None,
    f_static: np.ndarray | None = None,
) -> PhaseState:
    """Advance one outer step; returns a new state (the input is untouched)."""
    u = state.u
    f, alpha = state.f, state.alpha
    if f is None or alpha is None or state.step_index % params.forcing_cadence == 0:
        f = compute_forcing(grid, u, params, f_static)
        if not np.all(np.isfinite(f)):
            raise NonFiniteFieldError(state.step_index, "forcing")
        alpha = _alpha_for(params, f)

    eps, k = params.eps, params.inner_steps
    dt = params.dt / k
    use_volume = params.mode == "plateau" and params.c_volume > 0
    iters = 0
    v = u
    for _ in range(k):
        explicit = v - dt * ((1.0 + f) * W_prime(v) - alpha * v) / eps**2
        if use_volume:
            w = np.maximum(W(v), 0.0)
            explicit = explicit + params.volume_sign * dt * params.c_volume / (eps * params.sigma) * np.sqrt(2.0 * w)
        v, n_it = _implicit_solve(grid, explicit, dt, alpha, eps, params, v)
        iters += n_it
    if u_in is not None:
        v = np.maximum(v, u_in)
    if not np.all(np.isfinite(v)):
        raise NonFiniteFieldError(state.step_index + 1)
    return PhaseState(v, f, state.step_index + 1, params.dt, alpha, iters)


def energy(grid: Grid, u: np.ndarray, f: np.ndarray | None, eps: float) -> float:
    """``int eps/2 |grad u|^2 + W(u) (1 + f) / eps`` with the spectral gradient.

    The Dirichlet part is evaluated as ``-int u Laplace(u)`` so it is the
    exact quadratic form the implicit solve works with.
    """
    grad2 = -integrate(grid, u * laplacian(grid, u))
    pot = W(u) if f is None else W(u) * (1.0 + f)
    return 0.5 * eps * grad2 + integrate(grid, pot) / eps


def run(
    grid: Grid,
    u0: np.ndarray,
    params: SolverParams,
    u_in: np.ndarray | None = None,
    f_static: np.ndarray | None = None,
    sample_every: int = 1,
    checkpoint_every: int = 0,
    on_checkpoint: Callable[[PhaseState, object], None] | None = None,
    state: PhaseState | None = None,
    series=None,
    on_sample: Callable[[PhaseState], None] | None = None,
):
    """Step from ``u0`` (or from ``state`` when resuming) up to step ``params.steps``.

    Returns ``(state, series)``.  Rows are appended to ``series`` every
    ``sample_every`` steps; on a failure the series collected so far is
    attached to the exception as ``exc.series``.
    """
    from .diagnostics import DiagnosticsSeries, sample

    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    if state is None:
        u0 = np.array(u0, dtype=float)
        if u_in is not None:
            u0 = np.maximum(u0, u_in)
        state = PhaseState(u0, None, 0, params.dt)
    if not np.all(np.isfinite(state.u)):
        raise NonFiniteFieldError(state.step_index, "initial u")
    if series is None:
        series = DiagnosticsSeries(sample_every)
    target = params.steps

    def record(st):
        row = sample(grid, st, params)
        if not all(np.isfinite(v) for v in row):
            raise NonFiniteFieldError(st.step_index, "diagnostics")
        series.append(row)

    if state.step_index == 0 and not series.rows:
        record(state)
    try:
        while state.step_index < target:
            state = step(grid, state, params, u_in, f_static)
            if state.step_index % sample_every == 0 or state.step_index == target:
                record(state)
                if on_sample is not None:
                    on_sample(state)
            if checkpoint_every and on_checkpoint is not None and state.step_index % checkpoint_every == 0:
                on_checkpoint(state, series)
    except Exception as exc:
        exc.series = series
        raise
    return state, series
