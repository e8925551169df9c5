"""Skeleton detection: smoothed normals, the skeletal term and forcing fields.

For a unit vector field ``n`` the skeletal term ``S n = <n, (grad n)^T n>``
vanishes wherever ``n`` is smooth (``|n| = 1`` there) and concentrates on
its jump set once ``n`` is mollified.  Applied to the normalised gradient of
a phase field it lights up the medial axis of the phase, which is then
turned into a nonnegative forcing ``f = c * (h_sigma * |S n_sigma|)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, gaussian_convolve, gradient, gradient_axis, integrate

__all__ = [
    "NormalField",
    "ObstacleSpec",
    "smoothed_normal",
    "skeletal_term",
    "skeletal_forcing",
    "obstacle_forcing",
    "jump_density_oracle",
    "pair_with_test",
    "skeletal_pairing",
    "refine_cells",
    "mollify",
    "gaussian_kernel",
]

DEFAULT_ETA = 1e-12


@dataclass
class NormalField:
    """Mollified unit normal ``n_sigma = h_sigma * (grad u / |grad u|)``."""

    grid: Grid
    n: np.ndarray
    sigma: float
    magnitude_floor: float = DEFAULT_ETA
    degenerate: bool = False


@dataclass
class ObstacleSpec:
    """Fixed obstacle: weighted point sites (or samples along a curve)."""

    sites: np.ndarray
    weights: np.ndarray | None = None
    kind: str = "points"

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float)
        self.sites = sites.reshape(0, 0) if sites.size == 0 else np.atleast_2d(sites)
        if not np.all(np.isfinite(self.sites)):
            raise ValueError("obstacle sites must be finite")
        if self.weights is None:
            self.weights = np.ones(len(self.sites))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.kind not in ("points", "curve-samples"):
            raise ValueError(f"unknown obstacle kind {self.kind!r}")
        if len(self.weights) != len(self.sites):
            raise ValueError("one weight per site is required")
        if np.any(self.weights < 0):
            raise ValueError("obstacle weights must be nonnegative")


def unit_field(grid: Grid, u: np.ndarray, eta: float = DEFAULT_ETA, method: str = "central"):
    """Normalised gradient ``grad u / |grad u|``, zeroed where ``|grad u| < eta max|grad u|``.

    Returns ``(m, degenerate)``.
    """
    g = gradient(grid, u, method)
    mag = np.sqrt(np.sum(g * g, axis=0))
    gmax = float(mag.max())
    if gmax == 0.0:
        return np.zeros_like(g), True
    keep = mag >= eta * gmax
    m = np.zeros_like(g)
    np.divide(g, mag, out=m, where=keep)
    return m, False


def smoothed_normal(
    grid: Grid,
    u: np.ndarray,
    sigma: float,
    eta: float = DEFAULT_ETA,
    method: str = "central",
) -> NormalField:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    m, degenerate = unit_field(grid, u, eta, method)
    if degenerate:
        return NormalField(grid, m, sigma, eta, degenerate=True)
    return NormalField(grid, gaussian_convolve(grid, m, sigma), sigma, eta)


def mollify(grid: Grid, n: np.ndarray, sigma: float) -> NormalField:
    """Wrap ``h_sigma * n`` for an arbitrary vector field ``n`` (e.g. a sampled sign field)."""
    return NormalField(grid, gaussian_convolve(grid, np.asarray(n, dtype=float), sigma), sigma)


def skeletal_term(nf: NormalField, method: str = "central") -> np.ndarray:
    """``S = sum_ij n_i (d_j n_i) n_j`` evaluated on the grid."""
    grid, n = nf.grid, nf.n
    if nf.degenerate:
        return np.zeros(grid.dims)
    s = np.zeros(grid.dims)
    for j in range(grid.ndim):
        dj = np.zeros(grid.dims)
        for i in range(grid.ndim):
            dj += n[i] * gradient_axis(grid, n[i], j, method)
        s += dj * n[j]
    return s


def refine_cells(grid: Grid, a: np.ndarray, factor: int) -> tuple[Grid, np.ndarray]:
    """Repeat every cell ``factor`` times per axis (piecewise-constant reconstruction).

    Leading (component) axes of ``a`` are left alone.
    """
    if factor < 1:
        raise ValueError(f"refinement factor must be >= 1, got {factor}")
    fine = Grid(tuple(factor * n for n in grid.dims), grid.lower, grid.upper)
    if factor == 1:
        return fine, np.asarray(a, dtype=float)
    out = np.asarray(a, dtype=float)
    for ax in range(out.ndim - grid.ndim, out.ndim):
        out = np.repeat(out, factor, axis=ax)
    return fine, out


def skeletal_pairing(
    grid: Grid,
    n: np.ndarray,
    sigma: float,
    phi,
    refine: int = 1,
    method: str = "spectral",
) -> float:
    """``<S n_sigma, phi>`` for a sampled unit field ``n``.

    ``n`` is read as constant on each cell and, when ``refine > 1``, the
    mollification, the skeletal term and the quadrature are carried out on a
    ``refine`` times finer grid.  This keeps the pairing accurate when sigma
    approaches the cell size, where on-grid differences of ``n_sigma`` alias.
    ``phi`` is a callable ``phi(*mesh)`` evaluated on the quadrature grid, or
    an array already sampled there.
    """
    fine, nf = refine_cells(grid, n, refine)
    if callable(phi):
        phi = phi(*fine.mesh())
    phi = np.broadcast_to(np.asarray(phi, dtype=float), fine.dims)
    s = skeletal_term(mollify(fine, nf, sigma), method)
    return pair_with_test(fine, s, phi)


def skeletal_forcing(
    grid: Grid,
    u: np.ndarray,
    sigma: float,
    c: float,
    eta: float = DEFAULT_ETA,
    method: str = "central",
    units: str = "grid",
) -> np.ndarray:
    """``c * (h_sigma * |S n_sigma|)``; zero for a flat phase or ``c = 0``.

    ``units="grid"`` measures the derivatives in ``S`` per grid cell (``S``
    times the smallest spacing); ``units="physical"`` uses the box length.
    """
    if c < 0:
        raise ValueError(f"forcing amplitude must be nonnegative, got {c}")
    if units not in ("grid", "physical"):
        raise ValueError(f"units must be 'grid' or 'physical', got {units!r}")
    if c == 0:
        return np.zeros(grid.dims)
    nf = smoothed_normal(grid, u, sigma, eta, method)
    if nf.degenerate:
        return np.zeros(grid.dims)
    s = np.abs(skeletal_term(nf, method))
    if units == "grid":
        c = c * float(grid.spacing.min())
    f = c * gaussian_convolve(grid, s, sigma)
    # convolution of a nonnegative field; clip round-off below zero
    np.maximum(f, 0.0, out=f)
    return f


def gaussian_kernel(grid: Grid, center, sigma: float) -> np.ndarray:
    """Periodically wrapped samples of ``sigma^-d exp(-pi |x - center|^2 / sigma^2)``."""
    center = np.asarray(center, dtype=float)
    r2 = np.zeros(grid.dims)
    for ax, (x, L) in enumerate(zip(grid.mesh(), grid.lengths)):
        d = x - center[ax]
        d = d - L * np.round(d / L)
        r2 = r2 + d * d
    return np.exp(-np.pi * r2 / sigma**2) / sigma**grid.ndim


def obstacle_forcing(grid: Grid, obs: ObstacleSpec, sigma: float, amplitude: float = 1.0) -> np.ndarray:
    """``amplitude * sum_k w_k h_sigma(x - a_k)`` for fixed obstacle sites ``a_k``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    out = np.zeros(grid.dims)
    if len(obs.sites) == 0:
        return out
    if obs.sites.shape[1] != grid.ndim:
        raise ValueError("obstacle sites do not match the grid dimension")
    inside = grid.contains(obs.sites)
    if not np.all(inside):
        raise ValueError(f"obstacle sites outside the box: {obs.sites[~inside].tolist()}")
    for a, w in zip(obs.sites, obs.weights):
        if w:
            out += w * gaussian_kernel(grid, a, sigma)
    return amplitude * out


def jump_density_oracle(n_plus, n_minus, nu, tol: float = 1e-10) -> float:
    """Limit density ``(1/12) |[n]|^2 <[n], nu>`` of ``S n_sigma`` on a jump set."""
    vecs = [np.asarray(v, dtype=float) for v in (n_plus, n_minus, nu)]
    for name, v in zip(("n_plus", "n_minus", "nu"), vecs):
        if abs(np.linalg.norm(v) - 1.0) > tol:
            raise ValueError(f"{name} must be a unit vector, |{name}| = {np.linalg.norm(v)!r}")
    jump = vecs[0] - vecs[1]
    return float(jump @ jump * (jump @ vecs[2]) / 12.0)


def pair_with_test(grid: Grid, s: np.ndarray, phi: np.ndarray) -> float:
    """Discrete distributional pairing ``<S, phi> = int S phi dx``."""
    if s.shape != phi.shape or s.shape != grid.dims:
        raise ValueError(f"field shapes {s.shape} and {phi.shape} do not match grid {grid.dims}")
    return integrate(grid, s * phi)
