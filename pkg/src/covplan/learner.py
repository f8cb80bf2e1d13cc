"""Tabular Q-learning with per-step epsilon decay, as a scikit-learn estimator."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted

from . import rng as rng_mod
from .env import CoverageEnv, EpisodeLog
from .objects import BellCurveParams

log = logging.getLogger(__name__)


@dataclass
class LearningCurve:
    discounted_return: list = field(default_factory=list)
    total_return: list = field(default_factory=list)
    coverage_time: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    success: list = field(default_factory=list)
    collisions: list = field(default_factory=list)

    def __len__(self):
        return len(self.discounted_return)

    def append(self, ep: EpisodeLog, gamma: float, eps: float):
        self.discounted_return.append(ep.discounted_return(gamma))
        self.total_return.append(ep.total_return)
        self.coverage_time.append(len(ep))
        self.epsilon.append(eps)
        self.success.append(ep.success)
        self.collisions.append(sum(s.collision for s in ep.steps))


def q_update(q: np.ndarray, s: int, a: int, r: float, s_next: int,
             alpha: float, gamma: float, terminal: bool = False) -> float:
    """One temporal-difference update of ``q[s, a]`` in place; returns the new value."""
    target = r if terminal else r + gamma * q[s_next].max()
    # convex-combination form so that alpha = 1 overwrites exactly
    q[s, a] = (1.0 - alpha) * q[s, a] + alpha * target
    return q[s, a]


def greedy_action(row: np.ndarray, tie_rng: random.Random) -> int:
    best = row.max()
    ties = np.flatnonzero(row == best)
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[tie_rng.randrange(len(ties))])


def select_action(q: np.ndarray, s: int, epsilon: float, rng: random.Random,
                  tie_rng: random.Random | None = None) -> int:
    """Epsilon-greedy choice; argmax ties are broken uniformly at random."""
    if epsilon > 0.0 and rng.random() < epsilon:
        return rng.randrange(q.shape[1])
    return greedy_action(q[s], tie_rng if tie_rng is not None else rng)


def run_episode(env: CoverageEnv, q: np.ndarray, epsilon: float, rng, tie_rng,
                learn: bool = False, alpha: float = 0.1, gamma: float = 0.8,
                decay: float = 1.0, eps_min: float = 0.0, visits=None, **reset_kw):
    """Roll out one episode; optionally learn along the way.

    Returns the episode log and the epsilon reached at its end.
    """
    state = env.reset(**reset_kw)
    s = env.state_index(state)
    done = False
    while not done:
        a = select_action(q, s, epsilon, rng, tie_rng)
        state, r, done, rec = env.step(a)
        s2 = env.state_index(state)
        if learn:
            q_update(q, s, a, r, s2, alpha, gamma, terminal=rec.terminated)
            epsilon = max(epsilon * decay, eps_min)
            if visits is not None:
                visits[s, a] += 1
        s = s2
    return env.log_, epsilon


class QLearningCoverage(BaseEstimator):
    """Learn a coverage controller for :class:`CoverageEnv` with Q-learning.

    ``fit`` trains from scratch; ``predict`` maps discretised states to greedy
    action indices; ``evaluate`` rolls out the learned policy.

    Parameters
    ----------
    env : CoverageEnv
        Environment template; it is cloned, never mutated.
    alpha, gamma : learning rate and discount factor.
    epsilon, epsilon_decay, epsilon_min : exploration schedule. Epsilon is
        multiplied by ``epsilon_decay`` after every environment step and
        carries over between episodes.
    n_episodes : training episodes.
    exploring_starts : if True every episode starts in a random free cell with
        a random strict subset of the points already covered, so that rarely
        reached states are still sampled. Off by default.
    random_state : seed for exploration and tie-breaking streams.
    """

    def __init__(self, env=None, alpha=0.1, gamma=0.8, epsilon=0.9, epsilon_decay=0.9999,
                 epsilon_min=0.0, n_episodes=5000, exploring_starts=False,
                 random_state=0, verbose=0):
        self.env = env
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon = epsilon
        self.epsilon_decay = epsilon_decay
        self.epsilon_min = epsilon_min
        self.n_episodes = n_episodes
        self.exploring_starts = exploring_starts
        self.random_state = random_state
        self.verbose = verbose

    def _validate_params(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("epsilon", "epsilon_decay", "epsilon_min"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.n_episodes < 0:
            raise ValueError("n_episodes must be >= 0")

    def _make_env(self, seed) -> CoverageEnv:
        env = clone(self.env) if self.env is not None else CoverageEnv()
        env.set_params(seed=seed)
        return env

    def fit(self, X=None, y=None, episode_callback=None):
        """Train the Q-table.

        Parameters
        ----------
        X : array-like of shape (n_objects, 3), optional
            Bell-curve parameters ``(a, b, c)``; one row is drawn per episode.
            When omitted the environment's own object setting is used.
        y : ignored
        episode_callback : callable, optional
            Called as ``episode_callback(k, log)`` after every training episode.
        """
        self._validate_params()
        objects = None
        if X is not None:
            objects = [BellCurveParams(*row) for row in check_array(X, ensure_min_features=3)]
        seed = self.random_state if self.random_state is not None else 0
        env = self._make_env(seed)
        self.env_ = env
        self.q_ = np.zeros((int(np.prod(env.state_shape)), env.n_actions))
        self.visits_ = np.zeros(self.q_.shape, dtype=np.int32)
        rng = rng_mod.py_stream(seed, "explore")
        tie_rng = rng_mod.py_stream(seed, "tiebreak")
        pick = rng_mod.stream(seed, "object_pool")
        starts = rng_mod.py_stream(seed, "starts")
        eps = float(self.epsilon)
        self.curve_ = LearningCurve()
        self.n_steps_ = 0
        for ep in range(int(self.n_episodes)):
            kw = {}
            if objects is not None:
                kw["params"] = objects[int(pick.integers(len(objects)))]
            if self.exploring_starts:
                kw.update(self._exploring_start(env, starts, kw.get("params")))
            episode, eps = run_episode(env, self.q_, eps, rng, tie_rng, learn=True,
                                       alpha=self.alpha, gamma=self.gamma,
                                       decay=self.epsilon_decay, eps_min=self.epsilon_min,
                                       visits=self.visits_, **kw)
            self.n_steps_ += len(episode)
            self.curve_.append(episode, self.gamma, eps)
            if episode_callback is not None:
                episode_callback(ep, episode)
            if self.verbose and (ep + 1) % max(1, self.n_episodes // 10) == 0:
                log.info("episode %d/%d eps=%.4f steps=%d", ep + 1, self.n_episodes,
                         eps, len(episode))
        self.epsilon_ = eps
        return self

    @staticmethod
    def _exploring_start(env, rng, params) -> dict:
        if params is not None:
            env.set_object(env.make_object(params))
        elif env.object_params is None:
            env.reset()
        n = env.obj_.n_points
        while True:
            covered = [i for i in range(n) if rng.random() < 0.5]
            if len(covered) < n:
                break
        cell = rng.choice(env.free_cells())
        return {"pose": env.grid_.cell_center(cell), "covered": covered,
                "obj": env.obj_, "params": None}

    @property
    def q_table_(self) -> np.ndarray:
        check_is_fitted(self, "q_")
        return self.q_.reshape(self.env_.q_shape)

    def predict(self, X) -> np.ndarray:
        """Greedy action index for each discrete state row ``(cell, coverage, distance)``.

        Ties resolve to the lowest action index so the mapping is deterministic.
        """
        check_is_fitted(self, "q_")
        X = check_array(X, dtype=np.int64, ensure_min_features=3)
        shape = self.env_.state_shape
        if X.shape[1] != 3 or np.any(X < 0) or np.any(X >= np.array(shape)):
            raise ValueError(f"states must be rows of 3 indices within {shape}")
        idx = np.ravel_multi_index(X.T, shape)
        return self.q_[idx].argmax(axis=1)

    def evaluate(self, n_episodes=200, epsilon=0.0, seed=12345, X=None,
                 keep_logs=False) -> dict:
        """Roll out the learned policy; see :func:`evaluate_greedy`."""
        check_is_fitted(self, "q_")
        return evaluate_greedy(self.q_, self.env_, n_episodes, epsilon=epsilon, seed=seed,
                               objects=X, keep_logs=keep_logs)


def evaluate_greedy(q: np.ndarray, env: CoverageEnv, n_episodes: int, epsilon: float = 0.0,
                    seed: int = 12345, objects=None, keep_logs: bool = False) -> dict:
    """Summary statistics of ``n_episodes`` rollouts with a fixed table.

    ``objects`` optionally lists ``(a, b, c)`` rows used in turn, one per episode.
    """
    env = clone(env)
    env.set_params(seed=seed)
    rng = rng_mod.py_stream(seed, "explore")
    tie_rng = rng_mod.py_stream(seed, "tiebreak")
    logs = []
    times, succ, coll, rets = [], [], [], []
    for i in range(int(n_episodes)):
        kw = {}
        if objects is not None:
            kw["params"] = BellCurveParams(*objects[i % len(objects)])
        episode, _ = run_episode(env, q.reshape(-1, env.n_actions), epsilon, rng, tie_rng, **kw)
        times.append(len(episode))
        succ.append(episode.success)
        coll.append(sum(s.collision for s in episode.steps))
        rets.append(episode.total_return)
        if keep_logs:
            logs.append(episode)
    times_a = np.asarray(times, dtype=float)
    out = {
        "episodes": int(n_episodes),
        "mean_coverage_time": float(times_a.mean()) if len(times) else float("nan"),
        "p50": float(np.percentile(times_a, 50)) if len(times) else float("nan"),
        "p95": float(np.percentile(times_a, 95)) if len(times) else float("nan"),
        "success_rate": float(np.mean(succ)) if succ else float("nan"),
        "collisions": int(sum(coll)),
        "mean_return": float(np.mean(rets)) if rets else float("nan"),
    }
    if keep_logs:
        out["logs"] = logs
    return out


def train(env: CoverageEnv, **learner_params):
    """Functional wrapper: returns ``(q_table, learning_curve)``."""
    est = QLearningCoverage(env=env, **learner_params).fit()
    return est.q_table_, est.curve_
