"""Scalar probes of a run and the time series that collects them."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .grid import Grid, integrate

__all__ = [
    "COLUMNS",
    "DiagnosticsSeries",
    "squared_mass",
    "connected_components",
    "level_set_volume",
    "linear_fit",
    "torus_velocity_oracle",
    "sample",
]

COLUMNS = ("step", "time", "squared_mass", "energy", "volume_half_level", "component_count", "max_forcing")


def squared_mass(grid: Grid, u: np.ndarray) -> float:
    return integrate(grid, u) ** 2


def level_set_volume(grid: Grid, u: np.ndarray, level: float = 0.5) -> float:
    """Cell volume times the number of nodes with ``u >= level``."""
    return grid.cell_volume * int(np.count_nonzero(u >= level))


def connected_components(u: np.ndarray, level: float = 0.5, connectivity: int = 1) -> int:
    """Components of ``{u >= level}`` on the periodic grid.

    ``connectivity=1`` is face adjacency; ``connectivity=u.ndim`` also links
    edge and corner neighbours.  Labels touching across a periodic face are
    merged with a small union-find.
    """
    mask = np.asarray(u) >= level
    if not mask.any():
        return 0
    structure = ndimage.generate_binary_structure(mask.ndim, connectivity)
    labels, count = ndimage.label(mask, structure=structure)
    if count <= 1:
        return count
    parent = np.arange(count + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    offsets = [o for o in np.argwhere(structure) - 1 if o.any()]
    for ax in range(mask.ndim):
        last = np.take(labels, -1, axis=ax)
        for off in offsets:
            if off[ax] != 1:
                continue
            # neighbour of the last slab across the wrap is the first slab, shifted in the other axes
            first = np.take(labels, 0, axis=ax)
            shift = [int(o) for k, o in enumerate(off) if k != ax]
            nb = np.roll(first, [-s for s in shift], axis=tuple(range(first.ndim))) if shift else first
            pairs = np.stack([last.ravel(), nb.ravel()], axis=1)
            pairs = pairs[(pairs[:, 0] > 0) & (pairs[:, 1] > 0)]
            for a, b in np.unique(pairs, axis=0):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    return len({find(a) for a in range(1, count + 1)})


def linear_fit(t, y, burn_in_fraction: float = 0.05) -> tuple[float, float, float]:
    """Least squares line through the samples after dropping the first ``burn_in_fraction``.

    Returns ``(slope, intercept, r_squared)``.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise ValueError("t and y must have the same length")
    if not 0 <= burn_in_fraction < 1:
        raise ValueError("burn_in_fraction must lie in [0, 1)")
    start = int(np.floor(burn_in_fraction * len(t)))
    t, y = t[start:], y[start:]
    if len(t) < 3:
        raise ValueError(f"need at least 3 points after burn-in, got {len(t)}")
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), float(intercept), r2


def torus_velocity_oracle(R: float, delta: float) -> float:
    """Section-averaged normal speed ``(R/delta^2) (1/sqrt(1 - delta^2/R^2) - 1)`` of a thin torus."""
    if not (0 < delta < R):
        raise ValueError(f"need 0 < delta < R, got R={R}, delta={delta}")
    x = (delta / R) ** 2
    # 1/sqrt(1-x) - 1 loses digits for tiny x; expm1/log1p keeps them
    return R / delta**2 * np.expm1(-0.5 * np.log1p(-x))


def sample(grid: Grid, state, params, level: float = 0.5) -> tuple:
    from .evolver import energy

    f = state.f
    return (
        state.step_index,
        state.time,
        squared_mass(grid, state.u),
        energy(grid, state.u, f, params.eps),
        level_set_volume(grid, state.u, level),
        connected_components(state.u, level),
        0.0 if f is None else float(f.max()),
    )


@dataclass
class DiagnosticsSeries:
    sample_every: int = 1
    rows: list[tuple] = field(default_factory=list)

    def append(self, row) -> None:
        row = tuple(row)
        if len(row) != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} values, got {len(row)}")
        if self.rows and row[0] <= self.rows[-1][0]:
            raise ValueError(f"step {row[0]} does not increase past {self.rows[-1][0]}")
        if not all(np.isfinite(v) for v in row):
            raise ValueError(f"non-finite diagnostics at step {row[0]}")
        self.rows.append((int(row[0]), *map(float, row[1:5]), int(row[5]), float(row[6])))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.asarray([r[COLUMNS.index(name)] for r in self.rows])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([r[0], repr(r[1]), repr(r[2]), repr(r[3]), repr(r[4]), r[5], repr(r[6])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, sample_every: int = 1) -> "DiagnosticsSeries":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        out = cls(sample_every)
        for row in reader:
            out.append((int(row[0]), *map(float, row[1:5]), int(row[5]), float(row[6])))
        return out
