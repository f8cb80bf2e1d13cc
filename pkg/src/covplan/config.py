"""Experiment configuration stored as a typed INI file.

Every key must belong to the schema below; unknown sections or keys are
errors so that a typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .env import CoverageEnv


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


@dataclass
class GridSection:
    extent: float = 20.0
    n_cells: int = 10
    distance_step: float = 0.5
    bounds: tuple = ()  # empty means the whole workspace


@dataclass
class FovSection:
    angle_deg: float = 40.0
    range: float = 10.0
    n_rays: int = 5


@dataclass
class ActionSection:
    step_size: float = 2.0
    n_headings: int = 8
    n_radial: int = 1
    camera_angles_deg: tuple = (-85.0, -42.5, 0.0, 42.5, 85.0)


@dataclass
class RewardSection:
    w_step: float = 1.0
    w_collision: float = 100.0
    w_cover: float = 2.0


@dataclass
class LearnerSection:
    alpha: float = 0.1
    gamma: float = 0.8
    epsilon: float = 0.9
    epsilon_decay: float = 0.9999
    epsilon_min: float = 0.0
    episodes: int = 5000
    max_steps: int = 100


@dataclass
class ObjectSection:
    mode: str = "fixed"  # fixed | random
    a: float = 8.0
    b: float = 8.0
    c: float = 2.0
    n_points: int = 11
    width_sigmas: float = 3.0


@dataclass
class EnvSection:
    collision_mode: str = "reject"
    coverage_encoding: str = "cumulative"
    pose_mode: str = "snap"


@dataclass
class RunSection:
    seed: int = 0
    eval_seed: int = 12345
    output_dir: str = "runs"


@dataclass
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    fov: FovSection = field(default_factory=FovSection)
    action: ActionSection = field(default_factory=ActionSection)
    reward: RewardSection = field(default_factory=RewardSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    object: ObjectSection = field(default_factory=ObjectSection)
    env: EnvSection = field(default_factory=EnvSection)
    run: RunSection = field(default_factory=RunSection)

    # -- serialisation -----------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for sec in dataclasses.fields(self):
            body = getattr(self, sec.name)
            cp[sec.name] = {f.name: _fmt(getattr(body, f.name)) for f in dataclasses.fields(body)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path):
        Path(path).write_text(self.to_ini())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError([("<file>", str(exc))]) from exc
        cfg = cls()
        errors = []
        known = {f.name: f for f in dataclasses.fields(cls)}
        for name in cp.sections():
            if name not in known:
                errors.append((name, "unknown section"))
                continue
            body = getattr(cfg, name)
            types = {f.name: f.type for f in dataclasses.fields(body)}
            for key, raw in cp[name].items():
                where = f"{name}.{key}"
                if key not in types:
                    errors.append((where, "unknown key"))
                    continue
                try:
                    setattr(body, key, _parse(types[key], raw))
                except ValueError as exc:
                    errors.append((where, f"cannot parse {raw!r} as {types[key]}: {exc}"))
        errors.extend(cfg.validate())
        if errors:
            raise ConfigError(errors)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_ini(Path(path).read_text())

    def validate(self) -> list:
        errs = []
        g, f, a, l, o = self.grid, self.fov, self.action, self.learner, self.object
        if g.extent <= 0:
            errs.append(("grid.extent", "must be > 0"))
        if g.n_cells <= 0:
            errs.append(("grid.n_cells", "must be > 0"))
        if g.bounds and len(g.bounds) != 4:
            errs.append(("grid.bounds", "expected xmin,xmax,ymin,ymax"))
        if not 0 < f.angle_deg < 180:
            errs.append(("fov.angle_deg", "must lie in (0, 180)"))
        if f.range <= 0:
            errs.append(("fov.range", "must be > 0"))
        if f.n_rays < 2:
            errs.append(("fov.n_rays", "must be >= 2"))
        if a.n_headings <= 0 or a.n_radial < 0 or not a.camera_angles_deg:
            errs.append(("action", "need n_headings > 0, n_radial >= 0 and camera angles"))
        for k in ("w_step", "w_collision", "w_cover"):
            if getattr(self.reward, k) < 0:
                errs.append((f"reward.{k}", "must be >= 0"))
        if not 0 < l.alpha <= 1:
            errs.append(("learner.alpha", "must lie in (0, 1]"))
        for k in ("gamma", "epsilon", "epsilon_decay", "epsilon_min"):
            if not 0 <= getattr(l, k) <= 1:
                errs.append((f"learner.{k}", "must lie in [0, 1]"))
        if l.episodes < 0:
            errs.append(("learner.episodes", "must be >= 0"))
        if l.max_steps <= 0:
            errs.append(("learner.max_steps", "must be > 0"))
        if o.mode not in ("fixed", "random"):
            errs.append(("object.mode", "must be 'fixed' or 'random'"))
        if o.mode == "fixed" and not (o.a > 0 and o.c > 0):
            errs.append(("object", "need a > 0 and c > 0"))
        if o.n_points < 3:
            errs.append(("object.n_points", "must be >= 3"))
        if self.env.collision_mode not in ("reject", "terminate"):
            errs.append(("env.collision_mode", "must be 'reject' or 'terminate'"))
        if self.env.coverage_encoding not in ("cumulative", "new", "mask"):
            errs.append(("env.coverage_encoding", "must be cumulative, new or mask"))
        if self.env.pose_mode not in ("snap", "continuous"):
            errs.append(("env.pose_mode", "must be 'snap' or 'continuous'"))
        return errs

    # -- builders -----------------------------------------------------------

    def env_params(self) -> dict:
        g, f, a, r, o = self.grid, self.fov, self.action, self.reward, self.object
        return dict(
            extent=g.extent, n_cells=g.n_cells, distance_step=g.distance_step,
            bounds=tuple(g.bounds) if g.bounds else None,
            fov_angle=f.angle_deg, fov_range=f.range, n_rays=f.n_rays,
            step_size=a.step_size, n_headings=a.n_headings, n_radial=a.n_radial,
            camera_angles=tuple(a.camera_angles_deg),
            w_step=r.w_step, w_collision=r.w_collision, w_cover=r.w_cover,
            object_params=(o.a, o.b, o.c) if o.mode == "fixed" else None,
            n_points=o.n_points, width_sigmas=o.width_sigmas,
            max_steps=self.learner.max_steps,
            collision_mode=self.env.collision_mode,
            coverage_encoding=self.env.coverage_encoding,
            pose_mode=self.env.pose_mode,
            seed=self.run.seed,
        )

    def make_env(self, seed: Optional[int] = None) -> CoverageEnv:
        env = CoverageEnv(**self.env_params())
        if seed is not None:
            env.set_params(seed=seed)
        return env

    def learner_params(self) -> dict:
        l = self.learner
        return dict(alpha=l.alpha, gamma=l.gamma, epsilon=l.epsilon,
                    epsilon_decay=l.epsilon_decay, epsilon_min=l.epsilon_min,
                    n_episodes=l.episodes, random_state=self.run.seed)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(tp, raw: str):
    tp = tp if isinstance(tp, str) else tp.__name__
    raw = raw.strip()
    if tp == "float":
        return float(raw)
    if tp == "int":
        return int(raw)
    if tp == "tuple":
        return _floats(raw)
    return raw
