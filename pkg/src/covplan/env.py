"""Discrete-time coverage MDP.

The environment keeps the agent position and the set of covered points; the
learner only sees the discretised state ``(cell, coverage, distance)``. By
default positions snap to cell centers after every move so the agent travels
from cell to cell and the cell index fully determines where it stands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import rng as rng_mod
from .geometry import FovConfig, make_fov_config, rotate_fov
from .objects import BellCurveParams, ObjectModel, is_inside, sample_bell_object
from .visibility import build_ray_bundle, covered_points

COVERAGE_ENCODINGS = ("cumulative", "new", "mask")
COLLISION_MODES = ("reject", "terminate")


class MdpState(NamedTuple):
    cell: int
    coverage: int
    distance: int


class DiscreteAction(NamedTuple):
    radial: int    # l_R
    heading: int   # l_theta
    camera: int    # index into the camera angle set


@dataclass(frozen=True)
class GridSpec:
    """Square workspace ``[0, extent]^2`` split into ``n_cells x n_cells`` cells."""

    extent: float = 20.0
    n_cells: int = 10
    distance_step: float = 0.5

    def __post_init__(self):
        if self.n_cells <= 0 or self.extent <= 0 or self.distance_step <= 0:
            raise ValueError(f"invalid grid {self}")

    @property
    def cell_size(self) -> float:
        return self.extent / self.n_cells

    @property
    def n_total_cells(self) -> int:
        return self.n_cells * self.n_cells

    @property
    def max_distance(self) -> float:
        return float(math.ceil(math.sqrt(2.0) * self.extent))

    @property
    def n_distance_bins(self) -> int:
        return int(round(self.max_distance / self.distance_step)) + 1

    def cell_index(self, pose) -> int:
        n = self.n_cells
        col = min(max(int(pose[0] // self.cell_size), 0), n - 1)
        row = min(max(int(pose[1] // self.cell_size), 0), n - 1)
        return row * n + col

    def cell_center(self, index: int) -> np.ndarray:
        row, col = divmod(index, self.n_cells)
        h = self.cell_size
        return np.array([(col + 0.5) * h, (row + 0.5) * h])

    def distance_index(self, d: float) -> int:
        # Round half up onto the lattice, then cap at the last bin.
        return min(int(math.floor(d / self.distance_step + 0.5)), self.n_distance_bins - 1)


@dataclass(frozen=True)
class ActionSpec:
    step_size: float = 2.0
    n_headings: int = 8
    n_radial: int = 1
    camera_angles: tuple = (-85.0, -42.5, 0.0, 42.5, 85.0)  # degrees

    @property
    def n_actions(self) -> int:
        # Heading index runs 0..n_headings inclusive, so 0 and 2*pi both appear.
        return (self.n_headings + 1) * (self.n_radial + 1) * len(self.camera_angles)

    def encode(self, a: DiscreteAction) -> int:
        if not (0 <= a.radial <= self.n_radial and 0 <= a.heading <= self.n_headings
                and 0 <= a.camera < len(self.camera_angles)):
            raise IndexError(f"action {a} out of range")
        return (a.radial * (self.n_headings + 1) + a.heading) * len(self.camera_angles) + a.camera

    def decode(self, index: int) -> DiscreteAction:
        if not 0 <= index < self.n_actions:
            raise IndexError(f"action index {index} out of range [0, {self.n_actions})")
        rest, cam = divmod(int(index), len(self.camera_angles))
        radial, heading = divmod(rest, self.n_headings + 1)
        return DiscreteAction(radial, heading, cam)

    def displacement(self, a: DiscreteAction) -> tuple[float, float]:
        ang = a.heading * 2.0 * math.pi / self.n_headings
        r = a.radial * self.step_size
        # Rounding keeps axis-aligned moves exact (cos(pi/2) is not 0 in floats).
        return round(r * math.cos(ang), 12), round(r * math.sin(ang), 12)


@dataclass(frozen=True)
class RewardWeights:
    step: float = 1.0
    collision: float = 100.0
    cover: float = 2.0

    def __post_init__(self):
        if min(self.step, self.collision, self.cover) < 0:
            raise ValueError("reward weights must be non-negative")

    def __call__(self, collision: bool, n_new: int) -> float:
        return -self.step - self.collision * float(collision) + self.cover * n_new


@dataclass
class StepRecord:
    t: int
    pose: tuple[float, float]
    state: MdpState
    action: DiscreteAction
    reward: float
    new_cover: tuple[int, ...]
    collision: bool
    terminated: bool = False
    truncated: bool = False

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "x": [self.pose[0], self.pose[1]],
            "s": list(self.state),
            "a": list(self.action),
            "r": self.reward,
            "new_cover": list(self.new_cover),
            "collision": self.collision,
        }


@dataclass
class EpisodeLog:
    start: tuple[float, float]
    obj: ObjectModel
    steps: list[StepRecord] = field(default_factory=list)
    initial_covered: tuple[int, ...] = ()

    @property
    def total_return(self) -> float:
        return float(sum(s.reward for s in self.steps))

    def discounted_return(self, gamma: float) -> float:
        g, w = 0.0, 1.0
        for s in self.steps:
            g += w * s.reward
            w *= gamma
        return g

    def __len__(self):
        return len(self.steps)

    @property
    def covered(self) -> set:
        out = set(self.initial_covered)
        for s in self.steps:
            out.update(s.new_cover)
        return out

    @property
    def success(self) -> bool:
        return len(self.covered) == self.obj.n_points


def discretize_state(pose, covered_count: int, obj: ObjectModel, grid: GridSpec) -> MdpState:
    d = math.hypot(pose[0] - obj.centroid[0], pose[1] - obj.centroid[1])
    return MdpState(grid.cell_index(pose), int(covered_count), grid.distance_index(d))


class CoverageEnv(BaseEstimator):
    """Agent with a rotatable triangular camera covering a bell-shaped object.

    Parameters
    ----------
    extent, n_cells : workspace side (m) and grid resolution.
    bounds : optional ``(xmin, xmax, ymin, ymax)`` admissible positions;
        defaults to the whole workspace. Moves leaving it are clamped.
    fov_angle, fov_range, n_rays : camera angle of view (deg), range (m), rays.
    step_size, n_headings, n_radial, camera_angles : action discretisation.
    w_step, w_collision, w_cover : reward weights.
    object_params : ``(a, b, c)`` of a fixed object, or None to sample a new
        realization every episode.
    n_points, width_sigmas : boundary sampling.
    max_steps : episode length cap.
    collision_mode : ``"reject"`` reverts a colliding move, ``"terminate"``
        ends the episode at the colliding pose.
    coverage_encoding : ``"cumulative"`` covered count, ``"new"`` points newly
        covered at the last step, or ``"mask"`` bitmask of covered points.
    pose_mode : ``"snap"`` moves to the center of the cell the displaced
        position falls in; ``"continuous"`` keeps the raw position.
    seed : base seed of the object and start-position streams.
    """

    def __init__(self, extent=20.0, n_cells=10, bounds=None, distance_step=0.5,
                 fov_angle=40.0, fov_range=10.0, n_rays=5,
                 step_size=2.0, n_headings=8, n_radial=1,
                 camera_angles=(-85.0, -42.5, 0.0, 42.5, 85.0),
                 w_step=1.0, w_collision=100.0, w_cover=2.0,
                 object_params=(8.0, 8.0, 2.0), n_points=11, width_sigmas=3.0,
                 max_steps=100, collision_mode="reject",
                 coverage_encoding="cumulative", pose_mode="snap", seed=0):
        self.extent = extent
        self.n_cells = n_cells
        self.bounds = bounds
        self.distance_step = distance_step
        self.fov_angle = fov_angle
        self.fov_range = fov_range
        self.n_rays = n_rays
        self.step_size = step_size
        self.n_headings = n_headings
        self.n_radial = n_radial
        self.camera_angles = camera_angles
        self.w_step = w_step
        self.w_collision = w_collision
        self.w_cover = w_cover
        self.object_params = object_params
        self.n_points = n_points
        self.width_sigmas = width_sigmas
        self.max_steps = max_steps
        self.collision_mode = collision_mode
        self.coverage_encoding = coverage_encoding
        self.pose_mode = pose_mode
        self.seed = seed

    # -- derived configuration -------------------------------------------

    def _build(self):
        if self.coverage_encoding not in COVERAGE_ENCODINGS:
            raise ValueError(f"coverage_encoding must be one of {COVERAGE_ENCODINGS}")
        if self.collision_mode not in COLLISION_MODES:
            raise ValueError(f"collision_mode must be one of {COLLISION_MODES}")
        if self.pose_mode not in ("snap", "continuous"):
            raise ValueError("pose_mode must be 'snap' or 'continuous'")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        self.grid_ = GridSpec(float(self.extent), int(self.n_cells), float(self.distance_step))
        self.actions_ = ActionSpec(float(self.step_size), int(self.n_headings),
                                   int(self.n_radial), tuple(float(a) for a in self.camera_angles))
        self.weights_ = RewardWeights(float(self.w_step), float(self.w_collision),
                                      float(self.w_cover))
        self.fov_cfg_: FovConfig = make_fov_config(math.radians(self.fov_angle), float(self.fov_range))
        self.camera_rad_ = [math.radians(a) for a in self.actions_.camera_angles]
        b = self.bounds if self.bounds is not None else (0.0, self.extent, 0.0, self.extent)
        self.bounds_ = tuple(float(v) for v in b)
        self._moves = [self.actions_.displacement(self.actions_.decode(i)) + (self.actions_.decode(i).camera,)
                       for i in range(self.actions_.n_actions)]
        self._decoded = [self.actions_.decode(i) for i in range(self.actions_.n_actions)]
        self._state_shape = (self.grid_.n_total_cells, self.n_coverage_values,
                             self.grid_.n_distance_bins)
        self._object_rng = rng_mod.stream(self.seed, "object")
        self._init_rng = rng_mod.stream(self.seed, "init")
        self.obj_: Optional[ObjectModel] = None
        if self.object_params is not None:
            self.set_object(self.make_object(BellCurveParams(*self.object_params)))
        self._built = True

    def _ensure(self):
        if not getattr(self, "_built", False):
            self._build()

    def set_params(self, **params):
        super().set_params(**params)
        self._built = False
        return self

    @property
    def n_actions(self) -> int:
        self._ensure()
        return self.actions_.n_actions

    @property
    def n_coverage_values(self) -> int:
        if self.coverage_encoding == "mask":
            return 2 ** self.n_points
        return self.n_points + 1

    @property
    def state_shape(self) -> tuple[int, int, int]:
        self._ensure()
        return (self.grid_.n_total_cells, self.n_coverage_values, self.grid_.n_distance_bins)

    @property
    def q_shape(self) -> tuple[int, int, int, int]:
        return self.state_shape + (self.n_actions,)

    # -- object handling ---------------------------------------------------

    def make_object(self, params: BellCurveParams, seed=None) -> ObjectModel:
        return sample_bell_object(params, int(self.n_points), float(self.width_sigmas), seed=seed)

    def set_object(self, obj: ObjectModel):
        if obj.n_points != self.n_points:
            raise ValueError(f"object has {obj.n_points} points, env expects {self.n_points}")
        self.obj_ = obj
        self._centroid = tuple(obj.centroid)
        self._vis_cache: dict = {}
        self._move_cache: dict = {}
        self._pose_cache: dict = {}
        self._free_cells = None

    # -- pure dynamics ------------------------------------------------------

    def clamp(self, x: float, y: float) -> tuple[float, float]:
        x0, x1, y0, y1 = self.bounds_
        return min(max(x, x0), x1), min(max(y, y0), y1)

    def visible(self, pose: tuple[float, float], camera: int) -> frozenset:
        """Points seen from ``pose`` with camera angle index ``camera`` (memoised)."""
        key = (pose[0], pose[1], camera)
        hit = self._vis_cache.get(key)
        if hit is None:
            if len(self._vis_cache) > 500_000:
                self._vis_cache.clear()
            fov = rotate_fov(self.fov_cfg_, pose, self.camera_rad_[camera])
            hit = covered_points(fov, build_ray_bundle(fov, int(self.n_rays)), self.obj_)
            self._vis_cache[key] = hit
        return hit

    def transition(self, pose, covered: frozenset, action: int):
        """Apply ``action`` from ``(pose, covered)`` without touching episode state.

        Returns ``(pose, covered, new_points, collision, reward)``.
        """
        self._ensure()
        if not 0 <= action < len(self._moves):
            raise IndexError(f"action index {action} out of range [0, {len(self._moves)})")
        key = (pose[0], pose[1], action)
        moved = self._move_cache.get(key)
        if moved is None:
            dx, dy, _ = self._moves[action]
            nxt = self.clamp(pose[0] + dx, pose[1] + dy)
            if self.pose_mode == "snap":
                c = self.grid_.cell_center(self.grid_.cell_index(nxt))
                nxt = (float(c[0]), float(c[1]))
            collision = is_inside(self.obj_, nxt)
            if collision and self.collision_mode == "reject":
                nxt = (float(pose[0]), float(pose[1]))
            if len(self._move_cache) > 1_000_000:
                self._move_cache.clear()
            moved = self._move_cache[key] = (nxt, collision)
        nxt, collision = moved
        new = self.visible(nxt, self._moves[action][2]) - covered
        reward = self.weights_(collision, len(new))
        return nxt, covered | new, tuple(sorted(new)), collision, reward

    def encode_state(self, pose, covered: frozenset, new=()) -> MdpState:
        if self.coverage_encoding == "cumulative":
            cov = len(covered)
        elif self.coverage_encoding == "new":
            cov = len(new)
        else:
            cov = sum(1 << i for i in covered)
        where = self._pose_cache.get(pose)
        if where is None:
            d = math.hypot(pose[0] - self._centroid[0], pose[1] - self._centroid[1])
            where = (self.grid_.cell_index(pose), self.grid_.distance_index(d))
            if len(self._pose_cache) > 1_000_000:
                self._pose_cache.clear()
            self._pose_cache[pose] = where
        return MdpState(where[0], cov, where[1])

    def state_index(self, state) -> int:
        _, nc, nd = self._state_shape
        return (state[0] * nc + state[1]) * nd + state[2]

    # -- episode API --------------------------------------------------------

    def reset(self, seed: Optional[int] = None, params: Optional[BellCurveParams] = None,
              pose=None, obj: Optional[ObjectModel] = None, covered=()) -> MdpState:
        """Start an episode.

        A fresh object is drawn when the env has no fixed object (or ``params``
        is given). The start is a uniformly random cell center outside the
        object unless ``pose`` is supplied. ``covered`` pre-marks points as
        already seen (used for exploring starts).
        """
        if seed is not None:
            self.seed = seed
            self._built = False
        self._ensure()
        if obj is not None:
            if obj is not self.obj_:
                self.set_object(obj)
        elif params is not None:
            self.set_object(self.make_object(params))
        elif self.object_params is None:
            p = BellCurveParams.sample(self._object_rng)
            self.set_object(self.make_object(p))
        if pose is None:
            free = self.free_cells()
            if not free:
                raise RuntimeError("no free start cell outside the object")
            pose = self.grid_.cell_center(free[int(self._init_rng.integers(len(free)))])
        self.pose_ = (float(pose[0]), float(pose[1]))
        self.covered_ = frozenset(int(i) for i in covered)
        self.t_ = 0
        self.log_ = EpisodeLog(self.pose_, self.obj_, initial_covered=tuple(sorted(self.covered_)))
        self.state_ = self.encode_state(self.pose_, self.covered_)
        return self.state_

    def free_cells(self) -> list[int]:
        """Cells whose center is admissible and outside the object."""
        if self._free_cells is None:
            centers = [self.grid_.cell_center(i) for i in range(self.grid_.n_total_cells)]
            self._free_cells = [i for i, c in enumerate(centers)
                                if self.in_bounds(c) and not is_inside(self.obj_, c)]
        return self._free_cells

    def in_bounds(self, p) -> bool:
        x0, x1, y0, y1 = self.bounds_
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def step(self, action: int):
        """Advance one step. Returns ``(state, reward, done, record)``."""
        pose, covered, new, collision, reward = self.transition(self.pose_, self.covered_, action)
        self.t_ += 1
        self.pose_, self.covered_ = pose, covered
        self.state_ = self.encode_state(pose, covered, new)
        terminated = len(covered) == self.obj_.n_points or (
            collision and self.collision_mode == "terminate")
        truncated = not terminated and self.t_ >= self.max_steps
        rec = StepRecord(self.t_, pose, self.state_, self._decoded[action], reward,
                         new, collision, terminated, truncated)
        self.log_.steps.append(rec)
        return self.state_, reward, rec.done, rec
