"""Ground-truth solvers used to check the learner and the visibility engine.

* :func:`enumerate_mdp` materialises the environment's transition function on
  a small instance and checks that the discrete state is Markov.
* :func:`value_iteration` solves the enumerated MDP exactly.
* :func:`exhaustive_plan` searches every action sequence of a short horizon
  for the best time-weighted coverage score.
* :func:`dense_covered_points` is a slow, loop-based visibility check.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .env import CoverageEnv, EpisodeLog

MAX_STATES = 100_000
MAX_SEQUENCES = 10_000_000


class OracleSizeError(ValueError):
    pass


@dataclass
class ExactMdp:
    states: np.ndarray          # (n,) flat env state index of each enumerated state
    next_state: np.ndarray      # (n, n_actions) local index of the successor
    reward: np.ndarray          # (n, n_actions)
    terminal: np.ndarray        # (n,) True when every point is covered
    starts: list = field(default_factory=list)  # local indices of episode start states

    @property
    def n_states(self) -> int:
        return len(self.states)

    def local(self, flat_index: int) -> int:
        return int(np.flatnonzero(self.states == flat_index)[0])


def enumerate_mdp(env: CoverageEnv, start_poses: Optional[Sequence] = None,
                  max_states: int = MAX_STATES) -> ExactMdp:
    """Breadth-first enumeration of every configuration reachable from the start cells.

    Each configuration ``(pose, covered set)`` is mapped to the env's discrete
    state. A ``ValueError`` is raised if two configurations sharing a discrete
    state disagree on any successor or reward, i.e. if the discrete state is
    not Markov for this env.
    """
    if getattr(env, "obj_", None) is None:
        env.reset()
    grid = env.grid_
    n_a = env.n_actions
    full = frozenset(range(env.obj_.n_points))
    if start_poses is None:
        start_poses = [tuple(map(float, grid.cell_center(i))) for i in range(grid.n_total_cells)
                       if env.in_bounds(grid.cell_center(i))
                       and not env.obj_.is_inside(grid.cell_center(i))]

    def flat(pose, covered):
        return env.state_index(env.encode_state(pose, covered))

    configs: dict = {}
    order: list = []
    queue: deque = deque()
    for p in start_poses:
        cfg = ((float(p[0]), float(p[1])), frozenset())
        if cfg not in configs:
            configs[cfg] = len(order)
            order.append(cfg)
            queue.append(cfg)

    rows: dict = {}   # flat state -> (succ flats, rewards, terminal)
    while queue:
        cfg = queue.popleft()
        pose, covered = cfg
        s = flat(pose, covered)
        if covered == full:
            row = None
        else:
            succ, rew = [], []
            for a in range(n_a):
                p2, c2, _, _, r = env.transition(pose, covered, a)
                nxt = ((p2[0], p2[1]), c2)
                succ.append(flat(*nxt))
                rew.append(r)
                if nxt not in configs:
                    if len(configs) >= max_states:
                        raise OracleSizeError(f"more than {max_states} configurations")
                    configs[nxt] = len(order)
                    order.append(nxt)
                    queue.append(nxt)
            row = (tuple(succ), tuple(rew))
        if s in rows:
            if rows[s] != row:
                raise ValueError(f"discrete state {s} aliases configurations with different dynamics")
        else:
            rows[s] = row

    flats = np.array(sorted(rows))
    pos = {int(f): i for i, f in enumerate(flats)}
    n = len(flats)
    next_state = np.zeros((n, n_a), dtype=np.int64)
    reward = np.zeros((n, n_a))
    terminal = np.zeros(n, dtype=bool)
    for f, row in rows.items():
        i = pos[f]
        if row is None:
            terminal[i] = True
            next_state[i] = i
            continue
        next_state[i] = [pos[x] for x in row[0]]
        reward[i] = row[1]
    starts = sorted({pos[flat((float(p[0]), float(p[1])), frozenset())] for p in start_poses})
    return ExactMdp(flats, next_state, reward, terminal, starts)


def value_iteration(mdp: ExactMdp, gamma: float, tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal state values, action values and greedy policy of an enumerated MDP.

    Terminal states are absorbing with value zero. The greedy policy picks the
    lowest action index among maximisers.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("value iteration needs gamma in [0, 1)")
    v = np.zeros(mdp.n_states)
    live = ~mdp.terminal
    for _ in range(max_iter):
        q = mdp.reward + gamma * v[mdp.next_state]
        q[~live] = 0.0
        v_new = q.max(axis=1)
        delta = np.max(np.abs(v_new - v)) if len(v) else 0.0
        v = v_new
        if delta < tol:
            break
    q = mdp.reward + gamma * v[mdp.next_state]
    q[~live] = 0.0
    return v, q, q.argmax(axis=1)


def policy_return(mdp: ExactMdp, policy: np.ndarray, start: int, gamma: float,
                  max_steps: int = 500) -> float:
    """Discounted return of a deterministic policy rolled out on the enumerated MDP."""
    g, w, s = 0.0, 1.0, start
    for _ in range(max_steps):
        if mdp.terminal[s]:
            break
        a = policy[s]
        g += w * mdp.reward[s, a]
        w *= gamma
        s = mdp.next_state[s, a]
    return g


# -- coverage objective -------------------------------------------------------

def sigma(t: int, horizon: int) -> float:
    """Time weight ``(T - t) / T``; coverage at the last step earns nothing."""
    return (horizon - t) / horizon


def score_plan(trajectory, horizon: Optional[int] = None) -> float:
    """Time-weighted coverage score of a trajectory.

    ``trajectory`` is an :class:`EpisodeLog` or a sequence of per-step sets of
    points covered at steps ``t = 1, 2, ...``. Each point is credited once, at
    the first step that covers it. ``horizon`` defaults to the trajectory length.
    """
    if isinstance(trajectory, EpisodeLog):
        trajectory = [s.new_cover for s in trajectory.steps]
    steps = list(trajectory)
    T = len(steps) if horizon is None else int(horizon)
    if T <= 0:
        return 0.0
    seen: set = set()
    total = 0.0
    for t, pts in enumerate(steps[:T], start=1):
        fresh = set(pts) - seen
        total += len(fresh) * sigma(t, T)
        seen |= fresh
    return total


@dataclass
class Plan:
    actions: tuple
    score: float
    covered: frozenset


def _candidate_actions(env: CoverageEnv, prune: bool) -> list[int]:
    if not prune:
        return list(range(env.n_actions))
    spec = env.actions_
    keep = []
    for a in range(env.n_actions):
        d = spec.decode(a)
        if d.radial == 0 and d.heading != 0:
            continue  # staying put: heading is irrelevant
        if d.heading == spec.n_headings:
            continue  # same direction as heading 0
        keep.append(a)
    return keep


def exhaustive_plan(env: CoverageEnv, start, horizon: int, prune: bool = True) -> Plan:
    """Best collision-free action sequence of length ``horizon`` from ``start``.

    The score is :func:`score_plan` with the horizon fixed at ``horizon``.
    Sequences that enter the object are infeasible. With ``prune`` the search
    drops duplicate actions and revisits of an identical ``(step, pose,
    covered)`` node that cannot beat an earlier visit.
    """
    if getattr(env, "obj_", None) is None:
        env.reset()
    actions = _candidate_actions(env, prune)
    if len(actions) ** horizon > MAX_SEQUENCES:
        raise OracleSizeError(f"{len(actions)}^{horizon} sequences exceed {MAX_SEQUENCES}")
    start = (float(start[0]), float(start[1]))
    best = Plan((), -1.0, frozenset())
    memo: dict = {}

    def dfs(t, pose, covered, score, seq):
        nonlocal best
        if t == horizon:
            if score > best.score + 1e-12:
                best = Plan(tuple(seq), score, covered)
            return
        if prune:
            key = (t, pose, covered)
            prev = memo.get(key)
            if prev is not None and prev >= score - 1e-12:
                return
            memo[key] = score
        for a in actions:
            p2, c2, new, collision, _ = env.transition(pose, covered, a)
            if collision:
                continue
            seq.append(a)
            dfs(t + 1, p2, c2, score + len(new) * sigma(t + 1, horizon), seq)
            seq.pop()

    dfs(0, start, frozenset(), 0.0, [])
    if best.score < 0:
        raise ValueError("no feasible plan from this start")
    return best


# -- independent visibility -------------------------------------------------

def _last_hits_loop(origin, apex, segments: Iterable, tol=1e-9):
    hits = []
    for j, (p, q) in enumerate(segments):
        m = np.array([[apex[0] - origin[0], p[0] - q[0]],
                      [apex[1] - origin[1], p[1] - q[1]]])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        s, r = np.linalg.solve(m, np.array([p[0] - origin[0], p[1] - origin[1]]))
        if -tol <= s <= 1 + tol and -tol <= r <= 1 + tol:
            hits.append((s, j))
    if not hits:
        return []
    top = max(s for s, _ in hits)
    return [j for s, j in hits if s >= top - tol]


def _inside_barycentric(p, tri, tol=1e-9) -> bool:
    a, b, c = tri
    m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    u, v = np.linalg.solve(m, np.asarray(p) - a)
    return u >= -tol and v >= -tol and u + v <= 1 + tol


def dense_covered_points(fov, obj, n_rays: int = 201) -> frozenset:
    """Covered points computed ray by ray with ``numpy.linalg`` solves."""
    b0, b1 = fov.base
    segs = [(obj.points[i], obj.points[j]) for i, j in obj.segments]
    seen = set()
    for k in range(n_rays):
        origin = b0 + (k / (n_rays - 1)) * (b1 - b0)
        for j in _last_hits_loop(origin, fov.apex, segs):
            seen.update(obj.segments[j])
    return frozenset(i for i in seen if _inside_barycentric(obj.points[i], fov.vertices))
