"""2D geometry kernel: FOV triangles, ray/segment intersection and convex hulls.

Points are plain ``numpy`` arrays of shape ``(2,)``. Every comparison uses the
absolute tolerance :data:`EPS` which is adequate on a ~20 m workspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

EPS = 1e-9
SINGULAR_EPS = 1e-12


def as_point(p) -> np.ndarray:
    """Coerce ``p`` to a finite float64 array of shape (2,)."""
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2D point, got shape {np.shape(p)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"point has non-finite coordinates: {arr}")
    return arr


class Segment(NamedTuple):
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def of(cls, start, end) -> "Segment":
        a, b = as_point(start), as_point(end)
        if np.array_equal(a, b):
            raise ValueError("degenerate segment: start == end")
        return cls(a, b)


class Ray(NamedTuple):
    """Light ray travelling from ``origin`` (on the FOV base) to ``target`` (the sensor)."""

    origin: np.ndarray
    target: np.ndarray

    @classmethod
    def of(cls, origin, target) -> "Ray":
        a, b = as_point(origin), as_point(target)
        if np.array_equal(a, b):
            raise ValueError("degenerate ray: origin == target")
        return cls(a, b)

    def at(self, s: float) -> np.ndarray:
        return self.origin + s * (self.target - self.origin)


@dataclass(frozen=True)
class FovConfig:
    """Isosceles-triangle camera footprint, apex at the origin facing -y."""

    apex_angle: float
    range: float
    side_len: float
    base_len: float
    base_vertices: np.ndarray  # 2x3, columns are the triangle vertices


@dataclass(frozen=True)
class FovState:
    vertices: np.ndarray  # 3x2, row 0 is the apex
    rotation: float

    @property
    def apex(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def base(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices[1], self.vertices[2]


def make_fov_config(apex_angle: float, fov_range: float) -> FovConfig:
    """Build the canonical (unrotated) FOV triangle.

    Parameters
    ----------
    apex_angle : float
        Angle of view at the apex, radians, in ``(0, pi)``.
    fov_range : float
        Height of the triangle (sensing range), meters.
    """
    if not (0.0 < apex_angle < math.pi):
        raise ValueError(f"apex_angle must lie in (0, pi), got {apex_angle}")
    if not fov_range > 0.0:
        raise ValueError(f"range must be positive, got {fov_range}")
    side = fov_range / math.cos(apex_angle / 2.0)
    base = 2.0 * side * math.sin(apex_angle / 2.0)
    verts = np.array(
        [[0.0, -base / 2.0, base / 2.0],
         [0.0, -fov_range, -fov_range]]
    )
    verts.setflags(write=False)
    return FovConfig(apex_angle, fov_range, side, base, verts)


def rotation_matrix(theta: float) -> np.ndarray:
    """Rotation used for the camera, ``[[c, s], [-s, c]]``.

    Positive ``theta`` turns the footprint clockwise.
    """
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def rotate_fov(cfg: FovConfig, apex, theta: float) -> FovState:
    apex = as_point(apex)
    verts = (rotation_matrix(theta) @ cfg.base_vertices).T + apex
    return FovState(verts, float(theta))


def _solve(origin, target, p, p_hat):
    """Cramer's-rule solution of the 2x2 ray/segment system, or None if singular."""
    a11, a21 = target[0] - origin[0], target[1] - origin[1]
    a12, a22 = p[0] - p_hat[0], p[1] - p_hat[1]
    b1, b2 = p[0] - origin[0], p[1] - origin[1]
    det = a11 * a22 - a12 * a21
    if abs(det) < SINGULAR_EPS:
        return None
    s = (b1 * a22 - a12 * b2) / det
    r = (a11 * b2 - b1 * a21) / det
    return s, r


def ray_segment_intersect(ray: Ray, seg: Segment) -> Optional[tuple[float, float, np.ndarray]]:
    """Intersect a ray with a segment.

    Returns ``(s, r, point)`` where ``s`` parameterises the ray from origin to
    target and ``r`` the segment from start to end, both in the closed unit
    interval. Parallel or collinear configurations never intersect.
    """
    sol = _solve(ray.origin, ray.target, seg.start, seg.end)
    if sol is None:
        return None
    s, r = sol
    if -EPS <= s <= 1.0 + EPS and -EPS <= r <= 1.0 + EPS:
        return s, r, ray.at(s)
    return None


def intersect_many(origins: np.ndarray, target: np.ndarray,
                   starts: np.ndarray, ends: np.ndarray):
    """Vectorised ray/segment solve for ``n`` rays against ``m`` segments.

    Returns ``(s, hit)`` with shape ``(n, m)``; ``s`` is only meaningful where
    ``hit`` is true.
    """
    d = target[None, :] - origins                      # (n, 2)
    e = starts - ends                                  # (m, 2)
    b = starts[None, :, :] - origins[:, None, :]       # (n, m, 2)
    det = d[:, None, 0] * e[None, :, 1] - e[None, :, 0] * d[:, None, 1]
    ok = np.abs(det) >= SINGULAR_EPS
    safe = np.where(ok, det, 1.0)
    s = (b[..., 0] * e[None, :, 1] - e[None, :, 0] * b[..., 1]) / safe
    r = (d[:, None, 0] * b[..., 1] - b[..., 0] * d[:, None, 1]) / safe
    hit = ok & (s >= -EPS) & (s <= 1.0 + EPS) & (r >= -EPS) & (r <= 1.0 + EPS)
    return s, hit


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def point_in_triangle(p, fov: FovState) -> bool:
    """Closed membership test (boundary counts as inside)."""
    v0, v1, v2 = fov.vertices
    p = as_point(p)
    d0 = _cross(v0, v1, p)
    d1 = _cross(v1, v2, p)
    d2 = _cross(v2, v0, p)
    has_neg = d0 < -EPS or d1 < -EPS or d2 < -EPS
    has_pos = d0 > EPS or d1 > EPS or d2 > EPS
    return not (has_neg and has_pos)


def points_in_triangle(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Vectorised :func:`point_in_triangle` over an ``(n, 2)`` array."""
    v0, v1, v2 = vertices
    out_neg = np.zeros(len(points), dtype=bool)
    out_pos = np.zeros(len(points), dtype=bool)
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        c = (b[0] - a[0]) * (points[:, 1] - a[1]) - (b[1] - a[1]) * (points[:, 0] - a[0])
        out_neg |= c < -EPS
        out_pos |= c > EPS
    return ~(out_neg & out_pos)


def convex_hull(points: Sequence) -> list[np.ndarray]:
    """Counter-clockwise hull via Andrew's monotone chain.

    Collinear boundary points are dropped. Raises ``ValueError`` when the
    input spans no area.
    """
    pts = sorted({(float(x), float(y)) for x, y in (as_point(p) for p in points)})
    if len(pts) < 3:
        raise ValueError("convex hull needs at least 3 distinct points")

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= EPS:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= EPS:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise ValueError("degenerate input: all points are collinear")
    return [np.array(p) for p in hull]
