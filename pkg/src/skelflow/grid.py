"""Periodic Cartesian grids and the spectral primitives used by the solver.

Fields are plain ``numpy`` arrays of shape ``grid.dims`` in C (row-major)
order; array axis ``i`` is spatial coordinate ``x_{i+1}``.  Vector fields
carry the component index first, shape ``(ndim, *dims)``.

Frequencies are continuous: a mode ``cos(2 pi k.x / L)`` has frequency
``xi = k / L``, so on the unit box ``xi`` is the integer wave vector.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "make_grid",
    "forward",
    "inverse",
    "gaussian_multiplier",
    "gaussian_convolve",
    "gradient",
    "divergence",
    "laplacian",
    "helmholtz_inverse",
    "integrate",
    "mean",
]


@dataclass(frozen=True, eq=True)
class Grid:
    """Cell-centred periodic grid on an axis-aligned box."""

    dims: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @cached_property
    def spacing(self) -> np.ndarray:
        return self.lengths / np.asarray(self.dims)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self) -> list[np.ndarray]:
        """1-D node coordinates ``lower + (j + 1/2) h`` per axis."""
        return [
            lo + (np.arange(n) + 0.5) * h
            for lo, n, h in zip(self.lower, self.dims, self.spacing)
        ]

    def mesh(self, sparse: bool = True) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij", sparse=sparse)

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(size, ndim)`` array, row-major."""
        return np.stack([m.ravel() for m in self.mesh(sparse=False)], axis=-1)

    def contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.all((pts >= np.asarray(self.lower)) & (pts <= np.asarray(self.upper)), axis=-1)

    # -- spectral metadata (rfftn layout: last axis halved) --------------

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return self.dims[:-1] + (self.dims[-1] // 2 + 1,)

    @cached_property
    def frequencies(self) -> tuple[np.ndarray, ...]:
        """Broadcastable continuous frequencies ``xi_i = k_i / L_i``."""
        freqs = []
        for ax, (n, h) in enumerate(zip(self.dims, self.spacing)):
            if ax == self.ndim - 1:
                k = sfft.rfftfreq(n, d=h)
            else:
                k = sfft.fftfreq(n, d=h)
            shape = [1] * self.ndim
            shape[ax] = k.size
            freqs.append(k.reshape(shape))
        return tuple(freqs)

    @cached_property
    def xi_squared(self) -> np.ndarray:
        out = np.zeros(self.spectral_shape)
        for k in self.frequencies:
            out = out + k * k
        return out

    @cached_property
    def _kernel_cache(self) -> dict:
        return {}

    @cached_property
    def _kernel_lock(self) -> threading.Lock:
        return threading.Lock()


def make_grid(dims: Sequence[int] | int, box=None, ndim: int | None = None) -> Grid:
    """Build a grid; ``box`` is ``(lower, upper)``, default ``[-0.5, 0.5]^d``.

    An integer ``dims`` is repeated ``ndim`` times (default 3).
    """
    if np.isscalar(dims):
        dims = (int(dims),) * (ndim or 3)
    dims = tuple(int(n) for n in dims)
    if len(dims) not in (1, 2, 3):
        raise ValueError(f"grid must be 1-, 2- or 3-dimensional, got {len(dims)} axes")
    if any(n <= 0 for n in dims):
        raise ValueError(f"dims must be positive, got {dims}")
    if any(n < 8 for n in dims):
        raise ValueError(f"dims must be >= 8 per axis, got {dims}")
    if box is None:
        lower = (-0.5,) * len(dims)
        upper = (0.5,) * len(dims)
    else:
        lower, upper = box
        lower = tuple(float(v) for v in np.broadcast_to(lower, (len(dims),)))
        upper = tuple(float(v) for v in np.broadcast_to(upper, (len(dims),)))
    if not all(np.isfinite(lower + upper)):
        raise ValueError("box corners must be finite")
    if any(u <= lo for lo, u in zip(lower, upper)):
        raise ValueError(f"degenerate box {lower} -> {upper}")
    return Grid(dims, lower, upper)


def forward(grid: Grid, f: np.ndarray) -> np.ndarray:
    return sfft.rfftn(f, s=grid.dims)


def inverse(grid: Grid, fh: np.ndarray) -> np.ndarray:
    return sfft.irfftn(fh, s=grid.dims)


def gaussian_multiplier(grid: Grid, sigma: float) -> np.ndarray:
    """Fourier symbol ``exp(-pi sigma^2 |xi|^2)`` of ``sigma^-d exp(-pi|x|^2/sigma^2)``."""
    key = ("gauss", float(sigma))
    cache = grid._kernel_cache
    mult = cache.get(key)
    if mult is None:
        with grid._kernel_lock:
            mult = cache.get(key)
            if mult is None:
                mult = np.exp(-np.pi * sigma**2 * grid.xi_squared)
                mult.setflags(write=False)
                cache[key] = mult
    return mult


def gaussian_convolve(grid: Grid, f: np.ndarray, sigma: float) -> np.ndarray:
    """Periodic convolution with the unit-mass Gaussian of width ``sigma``.

    Accepts scalar fields or stacks of fields (leading axes are batched).
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if sigma < grid.spacing.min():
        warnings.warn(
            f"sigma={sigma:g} is below the grid spacing {grid.spacing.min():g}",
            stacklevel=2,
        )
    mult = gaussian_multiplier(grid, sigma)
    axes = tuple(range(-grid.ndim, 0))
    fh = sfft.rfftn(f, s=grid.dims, axes=axes)
    return sfft.irfftn(fh * mult, s=grid.dims, axes=axes)


def _spectral_derivative(grid: Grid, fh: np.ndarray, axis: int) -> np.ndarray:
    k = grid.frequencies[axis]
    n = grid.dims[axis]
    ik = 2j * np.pi * k
    if n % 2 == 0:
        # Nyquist mode has no odd derivative on a real grid
        nyq = np.isclose(np.abs(k), n / (2 * grid.lengths[axis]))
        ik = np.where(nyq, 0.0, ik)
    return ik * fh


def gradient(grid: Grid, f: np.ndarray, method: str = "central") -> np.ndarray:
    """Gradient of a scalar field, shape ``(ndim, *dims)``.

    ``central`` uses periodic second-order differences; ``spectral``
    differentiates the trigonometric interpolant.
    """
    if method == "central":
        out = np.empty((grid.ndim,) + f.shape)
        for ax, h in enumerate(grid.spacing):
            out[ax] = (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2.0 * h)
        return out
    if method == "spectral":
        fh = forward(grid, f)
        return np.stack([inverse(grid, _spectral_derivative(grid, fh, ax)) for ax in range(grid.ndim)])
    raise ValueError(f"unknown gradient method {method!r}")


def divergence(grid: Grid, v: np.ndarray, method: str = "central") -> np.ndarray:
    out = np.zeros(v.shape[1:])
    for ax in range(grid.ndim):
        out += gradient_axis(grid, v[ax], ax, method)
    return out


def gradient_axis(grid: Grid, f: np.ndarray, axis: int, method: str = "central") -> np.ndarray:
    """Single partial derivative ``d f / d x_axis``."""
    if method == "central":
        h = grid.spacing[axis]
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
    if method == "spectral":
        return inverse(grid, _spectral_derivative(grid, forward(grid, f), axis))
    raise ValueError(f"unknown gradient method {method!r}")


def laplacian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Spectral Laplacian with the continuous symbol ``-4 pi^2 |xi|^2``."""
    return inverse(grid, -4.0 * np.pi**2 * grid.xi_squared * forward(grid, f))


def helmholtz_symbol(grid: Grid, dt: float, alpha: float, eps: float) -> np.ndarray:
    key = ("helm", float(dt), float(alpha), float(eps))
    cache = grid._kernel_cache
    sym = cache.get(key)
    if sym is None:
        with grid._kernel_lock:
            sym = cache.get(key)
            if sym is None:
                sym = 1.0 / (1.0 + dt * (4.0 * np.pi**2 * grid.xi_squared + alpha / eps**2))
                sym.setflags(write=False)
                if len(cache) > 64:
                    cache.clear()
                cache[key] = sym
    return sym


def helmholtz_inverse(grid: Grid, f: np.ndarray, dt: float, alpha: float, eps: float) -> np.ndarray:
    """Solve ``(I - dt (Delta - alpha/eps^2)) g = f`` with periodic boundaries."""
    if dt < 0 or alpha < 0 or not eps > 0:
        raise ValueError(f"need dt >= 0, alpha >= 0, eps > 0 (got {dt}, {alpha}, {eps})")
    if dt == 0:
        return np.array(f, dtype=float, copy=True)
    return inverse(grid, helmholtz_symbol(grid, dt, alpha, eps) * forward(grid, f))


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Midpoint-rule integral over the box."""
    return float(np.sum(f, dtype=np.float64)) * grid.cell_volume


def mean(grid: Grid, f: np.ndarray) -> float:
    return float(np.mean(f))
