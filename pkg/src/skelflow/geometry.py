"""Constructive signed distances, the optimal profile and inclusion fields.

Shapes are small frozen dataclasses that form a tree.  Every node can be
turned into a plain dict (and back) so that geometry can live in a run
configuration as JSON.  Distances are Euclidean in the primary cell; there
is no periodic wrapping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .grid import Grid

__all__ = [
    "CurveSpec",
    "Ball",
    "Slab",
    "Box",
    "Tube",
    "PointSet",
    "Union_",
    "Intersection",
    "Complement",
    "ShapeSpec",
    "shape_from_dict",
    "shape_to_dict",
    "signed_distance",
    "profile",
    "profile_field",
    "inclusion_field_steiner",
    "inclusion_field_plateau",
    "load_curve",
    "circle_curve",
    "dumbbell",
]


def _vec(v, name: str) -> tuple[float, ...]:
    arr = np.asarray(v, dtype=float).ravel()
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be a finite, non-empty vector")
    return tuple(float(a) for a in arr)


def _positive(x, name: str) -> float:
    x = float(x)
    if not (np.isfinite(x) and x > 0):
        raise ValueError(f"{name} must be positive and finite, got {x}")
    return x


@dataclass(frozen=True)
class CurveSpec:
    """A polyline (open or closed) or an analytic circle.

    For a circle, ``circle = (center, radius, normal)`` and ``vertices`` may
    be left empty; :meth:`polyline` samples it when a polygon is needed.
    """

    vertices: tuple[tuple[float, ...], ...] = ()
    closed: bool = False
    circle: tuple[tuple[float, ...], float, tuple[float, ...]] | None = None

    def __post_init__(self):
        verts = tuple(_vec(v, "curve vertex") for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if self.circle is not None:
            c, r, nrm = self.circle
            c, nrm = _vec(c, "circle center"), _vec(nrm, "circle normal")
            if len(c) != 3 or len(nrm) != 3:
                raise ValueError("analytic circles live in 3-D")
            if np.linalg.norm(nrm) == 0:
                raise ValueError("circle normal must be nonzero")
            object.__setattr__(self, "circle", (c, _positive(r, "circle radius"), nrm))
            object.__setattr__(self, "closed", True)
            return
        if len(verts) < 2:
            raise ValueError("a polyline needs at least 2 vertices")
        if len({len(v) for v in verts}) != 1:
            raise ValueError("curve vertices have mixed dimensions")
        arr = np.asarray(verts)
        steps = np.linalg.norm(np.diff(arr, axis=0), axis=1)
        if np.any(steps == 0):
            raise ValueError("consecutive curve vertices must be distinct")
        if self.closed and np.array_equal(arr[0], arr[-1]):
            raise ValueError("closed curves list each vertex once (drop the repeated endpoint)")

    @property
    def ndim(self) -> int:
        return 3 if self.circle is not None else len(self.vertices[0])

    def polyline(self, segments: int = 64) -> np.ndarray:
        """Vertex array; closed curves repeat the first vertex at the end."""
        if self.circle is not None:
            c, r, nrm = self.circle
            e1, e2 = _plane_basis(np.asarray(nrm))
            t = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
            pts = np.asarray(c) + r * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
        else:
            pts = np.asarray(self.vertices)
        if self.closed:
            pts = np.vstack([pts, pts[:1]])
        return pts

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from each row of ``points`` to the curve."""
        points = np.asarray(points, dtype=float)
        if self.circle is not None:
            c, r, nrm = self.circle
            nrm = np.asarray(nrm) / np.linalg.norm(nrm)
            rel = points - np.asarray(c)
            h = rel @ nrm
            radial = np.sqrt(np.maximum(np.sum(rel * rel, axis=-1) - h * h, 0.0))
            return np.hypot(radial - r, h)
        return _polyline_distance(points, self.polyline())

    def to_dict(self) -> dict:
        if self.circle is not None:
            c, r, nrm = self.circle
            return {"circle": {"center": list(c), "radius": r, "normal": list(nrm)}}
        return {"vertices": [list(v) for v in self.vertices], "closed": self.closed}

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSpec":
        if "circle" in d:
            c = d["circle"]
            return cls(circle=(c["center"], c["radius"], c.get("normal", (0.0, 0.0, 1.0))))
        if "file" in d:
            return load_curve(d["file"], closed=bool(d.get("closed", False)))
        return cls(vertices=tuple(map(tuple, d["vertices"])), closed=bool(d.get("closed", False)))


def _plane_basis(nrm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nrm = nrm / np.linalg.norm(nrm)
    helper = np.eye(3)[np.argmin(np.abs(nrm))]
    e1 = np.cross(nrm, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(nrm, e1)


def _polyline_distance(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    best = np.full(points.shape[:-1], np.inf)
    for a, b in zip(verts[:-1], verts[1:]):
        ab = b - a
        t = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
        d = points - (a + t[..., None] * ab)
        np.minimum(best, np.sum(d * d, axis=-1), out=best)
    return np.sqrt(best)


def load_curve(path, closed: bool = False) -> CurveSpec:
    """Read a vertex list, one whitespace-separated point per line (``#`` comments allowed)."""
    verts = np.loadtxt(Path(path), comments="#", ndmin=2)
    return CurveSpec(vertices=tuple(map(tuple, verts)), closed=closed)


def circle_curve(center=(0.0, 0.0, 0.0), radius: float = 0.25, normal=(0.0, 0.0, 1.0)) -> CurveSpec:
    return CurveSpec(circle=(center, radius, normal))


# -- shapes ----------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "ball center"))
        object.__setattr__(self, "radius", _positive(self.radius, "ball radius"))

    def sdf(self, pts):
        return np.linalg.norm(pts - np.asarray(self.center), axis=-1) - self.radius


@dataclass(frozen=True)
class Slab:
    """``{ |<x - offset*normal, normal>| <= half_width }``."""

    normal: tuple[float, ...]
    half_width: float
    offset: float = 0.0

    def __post_init__(self):
        nrm = np.asarray(_vec(self.normal, "slab normal"))
        if np.linalg.norm(nrm) == 0:
            raise ValueError("slab normal must be nonzero")
        object.__setattr__(self, "normal", tuple(nrm / np.linalg.norm(nrm)))
        object.__setattr__(self, "half_width", _positive(self.half_width, "slab half_width"))
        object.__setattr__(self, "offset", float(self.offset))

    def sdf(self, pts):
        return np.abs(pts @ np.asarray(self.normal) - self.offset) - self.half_width


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo, hi = _vec(self.lower, "box lower"), _vec(self.upper, "box upper")
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise ValueError(f"degenerate box {lo} -> {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def sdf(self, pts):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        q = np.abs(pts - (lo + hi) / 2) - (hi - lo) / 2
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class Tube:
    curve: CurveSpec
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "radius", _positive(self.radius, "tube radius"))

    def sdf(self, pts):
        return self.curve.distance(pts) - self.radius


@dataclass(frozen=True)
class PointSet:
    """Unsigned distance to a finite set of sites (no interior)."""

    sites: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        sites = tuple(_vec(s, "site") for s in self.sites)
        if not sites:
            raise ValueError("a point set needs at least one site")
        object.__setattr__(self, "sites", sites)

    def sdf(self, pts):
        best = np.full(pts.shape[:-1], np.inf)
        for s in self.sites:
            np.minimum(best, np.linalg.norm(pts - np.asarray(s), axis=-1), out=best)
        return best


@dataclass(frozen=True)
class Union_:
    children: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.children:
            raise ValueError("union needs at least one child")
        object.__setattr__(self, "children", tuple(self.children))

    def sdf(self, pts):
        return np.minimum.reduce([c.sdf(pts) for c in self.children])


@dataclass(frozen=True)
class Intersection:
    children: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.children:
            raise ValueError("intersection needs at least one child")
        object.__setattr__(self, "children", tuple(self.children))

    def sdf(self, pts):
        return np.maximum.reduce([c.sdf(pts) for c in self.children])


@dataclass(frozen=True)
class Complement:
    child: object

    def sdf(self, pts):
        return -self.child.sdf(pts)


ShapeSpec = Union[Ball, Slab, Box, Tube, PointSet, Union_, Intersection, Complement]


def shape_to_dict(shape) -> dict:
    if isinstance(shape, Ball):
        return {"ball": {"center": list(shape.center), "radius": shape.radius}}
    if isinstance(shape, Slab):
        return {"slab": {"normal": list(shape.normal), "half_width": shape.half_width, "offset": shape.offset}}
    if isinstance(shape, Box):
        return {"box": {"lower": list(shape.lower), "upper": list(shape.upper)}}
    if isinstance(shape, Tube):
        return {"tube": {"curve": shape.curve.to_dict(), "radius": shape.radius}}
    if isinstance(shape, PointSet):
        return {"points": {"sites": [list(s) for s in shape.sites]}}
    if isinstance(shape, Union_):
        return {"union": [shape_to_dict(c) for c in shape.children]}
    if isinstance(shape, Intersection):
        return {"intersection": [shape_to_dict(c) for c in shape.children]}
    if isinstance(shape, Complement):
        return {"complement": shape_to_dict(shape.child)}
    raise TypeError(f"not a shape: {shape!r}")


def shape_from_dict(d) -> ShapeSpec:
    """Inverse of :func:`shape_to_dict`; also accepts a JSON string."""
    if isinstance(d, str):
        d = json.loads(d)
    if not isinstance(d, dict) or len(d) != 1:
        raise ValueError(f"a shape is a single-key mapping, got {d!r}")
    (kind, body), = d.items()
    if kind == "ball":
        return Ball(body["center"], body["radius"])
    if kind == "slab":
        return Slab(body["normal"], body["half_width"], body.get("offset", 0.0))
    if kind == "box":
        return Box(body["lower"], body["upper"])
    if kind == "tube":
        return Tube(CurveSpec.from_dict(body["curve"]), body["radius"])
    if kind == "points":
        return PointSet(tuple(map(tuple, body["sites"])))
    if kind == "union":
        return Union_(tuple(shape_from_dict(c) for c in body))
    if kind == "intersection":
        return Intersection(tuple(shape_from_dict(c) for c in body))
    if kind == "complement":
        return Complement(shape_from_dict(body))
    if kind == "dumbbell":
        return dumbbell(**body)
    raise ValueError(f"unknown shape kind {kind!r}")


def dumbbell(separation: float = 0.5, ball_radius: float = 0.2, neck_radius: float = 0.07, axis: int = 0, ndim: int = 3):
    """Two balls on a coordinate axis joined by a cylindrical neck."""
    a = np.zeros(ndim)
    a[axis] = separation / 2
    neck = Tube(CurveSpec(vertices=(tuple(-a), tuple(a))), neck_radius)
    return Union_((Ball(tuple(-a), ball_radius), Ball(tuple(a), ball_radius), neck))


def signed_distance(shape: ShapeSpec, grid: Grid) -> np.ndarray:
    """Signed distance sampled at the grid nodes; negative inside."""
    pts = np.stack(grid.mesh(sparse=False), axis=-1)
    return shape.sdf(pts)


def profile(s):
    """The tanh profile ``q(s) = (1 - tanh s) / 2``."""
    return 0.5 * (1.0 - np.tanh(s))


def profile_field(dist: np.ndarray, eps: float) -> np.ndarray:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return profile(np.asarray(dist, dtype=float) / eps)


def inclusion_field_steiner(sites: Sequence, sigma_tilde: float, eps: float, grid: Grid) -> np.ndarray:
    """Profile of the union of balls ``B(a_i, sigma_tilde)``."""
    sites = np.asarray(sites, dtype=float)
    if sites.size == 0:
        raise ValueError("steiner constraint needs at least one site")
    sites = np.atleast_2d(sites)
    _positive(sigma_tilde, "sigma_tilde")
    if sites.shape[1] != grid.ndim:
        raise ValueError(f"sites are {sites.shape[1]}-D but the grid is {grid.ndim}-D")
    if not np.all(grid.contains(sites)):
        raise ValueError("steiner sites must lie inside the box")
    d = signed_distance(PointSet(tuple(map(tuple, sites))), grid)
    return profile_field(d - sigma_tilde, eps)


def inclusion_field_plateau(curve: CurveSpec, sigma_tilde: float, eps: float, grid: Grid) -> np.ndarray:
    """Profile of the tube ``{dist(x, curve) <= sigma_tilde}``."""
    _positive(sigma_tilde, "sigma_tilde")
    if curve.ndim != grid.ndim:
        raise ValueError(f"curve is {curve.ndim}-D but the grid is {grid.ndim}-D")
    return profile_field(signed_distance(Tube(curve, sigma_tilde), grid), eps)
