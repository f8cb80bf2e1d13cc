"""Ray-traced visibility of boundary points through the camera footprint.

Rays start on the FOV base and converge on the sensor at the apex. The last
segment a ray crosses (largest ray parameter) is the one the camera images,
and the endpoints of that segment count as seen when they also fall inside
the footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import EPS, FovState, Ray, _solve, intersect_many, points_in_triangle
from .objects import ObjectModel


@dataclass(frozen=True)
class RayBundle:
    origins: np.ndarray  # (n, 2)
    fov: FovState

    @property
    def rays(self) -> list[Ray]:
        return [Ray(o, self.fov.apex) for o in self.origins]

    def __len__(self):
        return len(self.origins)


@dataclass(frozen=True)
class VisibilityResult:
    visible_segments: list[tuple[int, ...]]  # per ray, indices of last-hit segments
    covered: frozenset


def build_ray_bundle(fov: FovState, n_rays: int = 5) -> RayBundle:
    if n_rays < 2:
        raise ValueError(f"n_rays must be >= 2, got {n_rays}")
    b0, b1 = fov.base
    t = np.arange(n_rays, dtype=np.float64) / (n_rays - 1)
    return RayBundle(b0[None, :] + t[:, None] * (b1 - b0)[None, :], fov)


def _last_hit_mask(origins, apex, starts, ends) -> np.ndarray:
    """``(n, m)`` mask of the segments each ray crosses last (ties within EPS kept)."""
    s, hit = intersect_many(origins, apex, starts, ends)
    sm = np.where(hit, s, -np.inf)
    best = sm.max(axis=1, keepdims=True)
    return hit & (sm >= best - EPS)


def _last_hits(origins, apex, starts, ends) -> list[tuple[int, ...]]:
    s, hit = intersect_many(origins, apex, starts, ends)
    out = []
    for i in range(len(origins)):
        row = np.flatnonzero(hit[i])
        if row.size == 0:
            out.append(())
            continue
        si = s[i, row]
        best = si.max()
        out.append(tuple(int(j) for j in row[si >= best - EPS]))
    return out


def last_intersection(ray: Ray, obj: ObjectModel) -> Optional[int]:
    """Index of the segment the ray crosses last, or None.

    On an exact tie (ray through a shared vertex) the lowest index is
    returned; :func:`trace` reports every tied segment.
    """
    starts, ends = obj.segment_arrays
    hits = _last_hits(ray.origin[None, :], ray.target, starts, ends)[0]
    return min(hits) if hits else None


def trace(fov: FovState, bundle: RayBundle, obj: ObjectModel) -> VisibilityResult:
    starts, ends = obj.segment_arrays
    per_ray = _last_hits(bundle.origins, fov.apex, starts, ends)
    seen = set()
    for hits in per_ray:
        for j in hits:
            seen.update(obj.segments[j])
    if seen:
        cand = np.array(sorted(seen))
        inside = points_in_triangle(obj.points[cand], fov.vertices)
        covered = frozenset(int(i) for i in cand[inside])
    else:
        covered = frozenset()
    return VisibilityResult(per_ray, covered)


def covered_points(fov: FovState, bundle: RayBundle, obj: ObjectModel) -> frozenset:
    """Indices of the points the camera sees from this footprint.

    Same result as ``trace(...).covered``. The bundle is only a handful of
    rays, so plain float loops beat array set-up here.
    """
    v0, v1, v2 = fov.vertices.tolist()
    inside = {k for k, p in enumerate(obj._point_tuples) if _in_triangle(p, v0, v1, v2)}
    if not inside:
        return frozenset()  # nothing in view; occlusion cannot matter
    apex = (v0[0], v0[1])
    seen = set()
    for o in bundle.origins.tolist():
        best, hits = -math.inf, []
        for p, q, i, j in obj._seg_tuples:
            sol = _solve(o, apex, p, q)
            if sol is None:
                continue
            s, r = sol
            if -EPS <= s <= 1.0 + EPS and -EPS <= r <= 1.0 + EPS:
                hits.append((s, i, j))
                if s > best:
                    best = s
        for s, i, j in hits:
            if s >= best - EPS:
                seen.add(i)
                seen.add(j)
    return frozenset(seen & inside)


def _in_triangle(p, v0, v1, v2) -> bool:
    px, py = p
    neg = pos = False
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        c = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
        neg |= c < -EPS
        pos |= c > EPS
    return not (neg and pos)
