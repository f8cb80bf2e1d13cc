"""Object of interest: a sampled bell curve closed by its baseline chord."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import EPS, as_point, convex_hull

# Uniform sampling intervals for random realizations (height, center, width).
A_RANGE = (1.0, 18.0)
B_RANGE = (5.0, 15.0)
C_RANGE = (1.0, 4.0)


@dataclass(frozen=True)
class BellCurveParams:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ValueError(f"bell curve needs a > 0 and c > 0, got {self}")

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "BellCurveParams":
        return cls(float(rng.uniform(*A_RANGE)),
                   float(rng.uniform(*B_RANGE)),
                   float(rng.uniform(*C_RANGE)))

    def __call__(self, x):
        return self.a * np.exp(-((np.asarray(x) - self.b) ** 2) / (2.0 * self.c ** 2))


@dataclass
class ObjectModel:
    """Piecewise-linear object.

    ``segments`` is the closed CCW boundary through every sample: the
    baseline chord from the leftmost to the rightmost sample, then the curve
    back from right to left. ``half_planes`` describe the convex hull of the
    samples (``normals @ x <= offsets`` means inside) and drive collision
    checks. For convex sample sets the two coincide.
    """

    points: np.ndarray                      # (n, 2) coverage targets
    segments: list[tuple[int, int]]         # pairs of indices into points
    hull: list[int]                         # CCW hull vertex indices
    normals: np.ndarray                     # (k, 2) outward unit normals
    offsets: np.ndarray                     # (k,)
    params: Optional[BellCurveParams] = None
    seed: Optional[int] = None
    _seg_starts: np.ndarray = field(init=False, repr=False)
    _seg_ends: np.ndarray = field(init=False, repr=False)
    _seg_index: np.ndarray = field(init=False, repr=False)
    _planes: tuple = field(init=False, repr=False)
    _seg_tuples: tuple = field(init=False, repr=False)
    _point_tuples: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        idx = np.asarray(self.segments, dtype=int)
        self._seg_starts = self.points[idx[:, 0]]
        self._seg_ends = self.points[idx[:, 1]]
        self._seg_index = idx
        self._point_tuples = tuple(tuple(map(float, p)) for p in self.points)
        self._seg_tuples = tuple((tuple(map(float, self.points[i])), tuple(map(float, self.points[j])), int(i), int(j))
                                 for i, j in idx)
        # plain floats: the collision test runs once per step on ~5 planes
        self._planes = tuple((float(n[0]), float(n[1]), float(o))
                             for n, o in zip(np.asarray(self.normals), np.asarray(self.offsets)))

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def centroid(self) -> np.ndarray:
        return centroid(self)

    @property
    def segment_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._seg_starts, self._seg_ends

    @property
    def segment_index(self) -> np.ndarray:
        """``(m, 2)`` integer array form of :attr:`segments`."""
        return self._seg_index

    def is_inside(self, x) -> bool:
        return is_inside(self, x)

    def to_json(self) -> dict:
        p = self.params
        return {
            "a": p.a if p else None,
            "b": p.b if p else None,
            "c": p.c if p else None,
            "points": self.points.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc) -> "ObjectModel":
        if isinstance(doc, str):
            doc = json.loads(doc)
        params = None
        if doc.get("a") is not None:
            params = BellCurveParams(doc["a"], doc["b"], doc["c"])
        return from_points(doc["points"], params=params, seed=doc.get("seed"))


def _half_planes(points: np.ndarray, hull: list[int]):
    k = len(hull)
    normals = np.empty((k, 2))
    offsets = np.empty(k)
    for i in range(k):
        a, b = points[hull[i]], points[hull[(i + 1) % k]]
        d = b - a
        # CCW polygon: outward normal is the edge direction turned clockwise.
        n = np.array([d[1], -d[0]]) / math.hypot(d[0], d[1])
        normals[i] = n
        offsets[i] = n @ a
    return normals, offsets


def from_points(points, params: Optional[BellCurveParams] = None,
                seed: Optional[int] = None) -> ObjectModel:
    """Build an object from boundary samples given in curve order (ascending x)."""
    pts = np.array([as_point(p) for p in points])
    n = len(pts)
    if n < 3:
        raise ValueError(f"need at least 3 boundary points, got {n}")
    hull_pts = convex_hull(pts)
    hull = []
    for hp in hull_pts:
        hull.append(int(np.flatnonzero(np.all(np.abs(pts - hp) <= EPS, axis=1))[0]))

    # Orientation of the curve-ordered loop decides the traversal direction.
    area2 = sum(pts[i, 0] * pts[(i + 1) % n, 1] - pts[(i + 1) % n, 0] * pts[i, 1]
                for i in range(n))
    order = list(range(n)) if area2 > 0 else [0] + list(range(n - 1, 0, -1))
    segments = [(order[i], order[(i + 1) % n]) for i in range(n)]

    normals, offsets = _half_planes(pts, hull)
    return ObjectModel(pts, segments, hull, normals, offsets, params, seed)


def sample_bell_object(params: BellCurveParams, n_points: int = 11,
                       width_sigmas: float = 3.0, seed: Optional[int] = None) -> ObjectModel:
    """Sample ``n_points`` evenly spaced over ``[b - k c, b + k c]`` on the curve."""
    if n_points < 3:
        raise ValueError(f"n_points must be >= 3, got {n_points}")
    xs = np.linspace(params.b - width_sigmas * params.c,
                     params.b + width_sigmas * params.c, n_points)
    return from_points(np.column_stack([xs, params(xs)]), params=params, seed=seed)


def is_inside(obj: ObjectModel, x) -> bool:
    """Closed collision test against the hull: boundary counts as inside."""
    px, py = float(x[0]), float(x[1])
    return all(nx * px + ny * py <= off + EPS for nx, ny, off in obj._planes)


def centroid(obj: ObjectModel) -> np.ndarray:
    """Arithmetic mean of the sampled points (not of the hull vertices)."""
    return obj.points.mean(axis=0)
