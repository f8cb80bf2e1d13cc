import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from covplan.env import (
    ActionSpec, CoverageEnv, DiscreteAction, GridSpec, MdpState, RewardWeights, discretize_state,
)
from covplan.objects import BellCurveParams, from_points

from conftest import tiny_env


def move_action(env, dx, dy, cam):
    """Index of the action with displacement ``(dx, dy)`` and camera ``cam``."""
    for a in range(env.n_actions):
        d = env.actions_.decode(a)
        if d.camera == cam and env.actions_.displacement(d) == (dx, dy):
            return a
    raise LookupError((dx, dy, cam))


class TestGrid:
    grid = GridSpec()

    def test_dimensions(self):
        assert self.grid.cell_size == 2.0 and self.grid.n_total_cells == 100
        assert self.grid.n_distance_bins == 59

    def test_first_cell(self):
        assert self.grid.cell_index((1.0, 1.0)) == 0
        np.testing.assert_array_equal(self.grid.cell_center(0), [1, 1])

    def test_row_major(self):
        assert self.grid.cell_index((3.0, 1.0)) == 1
        assert self.grid.cell_index((1.0, 3.0)) == 10
        assert self.grid.cell_index((20.0, 20.0)) == 99  # far edge belongs to the last cell

    def test_distance_bins(self):
        d = math.hypot(20, 20)
        assert self.grid.distance_index(d) * 0.5 == 28.5
        assert self.grid.distance_index(0.0) == 0
        assert self.grid.distance_index(0.25) == 1  # half rounds up
        assert self.grid.distance_index(1e9) == 58

    @given(st.integers(0, 99))
    def test_center_roundtrip(self, i):
        assert self.grid.cell_index(self.grid.cell_center(i)) == i

    def test_discretize(self):
        obj = from_points([(0, 0), (2, 0), (1, 3)])
        assert discretize_state((1.0, 1.0), 2, obj, self.grid) == MdpState(0, 2, 0)


class TestActions:
    spec = ActionSpec()

    def test_count(self):
        assert self.spec.n_actions == 90

    @given(st.integers(0, 89))
    def test_roundtrip(self, i):
        assert self.spec.encode(self.spec.decode(i)) == i

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            self.spec.decode(90)
        with pytest.raises(IndexError):
            self.spec.encode(DiscreteAction(2, 0, 0))

    def test_displacements(self):
        assert self.spec.displacement(DiscreteAction(0, 5, 1)) == (0.0, 0.0)
        assert self.spec.displacement(DiscreteAction(1, 0, 0)) == (2.0, 0.0)
        assert self.spec.displacement(DiscreteAction(1, 2, 0)) == (0.0, 2.0)
        assert self.spec.displacement(DiscreteAction(1, 8, 0)) == (2.0, 0.0)
        dx, dy = self.spec.displacement(DiscreteAction(1, 1, 0))
        assert dx == pytest.approx(math.sqrt(2)) and dy == pytest.approx(math.sqrt(2))


class TestReward:
    w = RewardWeights()

    def test_values(self):
        assert self.w(False, 0) == -1.0
        assert self.w(False, 2) == 3.0
        assert self.w(True, 0) == -101.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            RewardWeights(step=-1)


class TestDynamics:
    def test_stay_keeps_pose(self, default_env):
        env = default_env
        env.reset(pose=(1.0, 1.0))
        for h in range(9):
            _, _, _, rec = env.step(env.actions_.encode(DiscreteAction(0, h, 2)))
            assert rec.pose == (1.0, 1.0)

    def test_idle_step_costs_one(self, default_env):
        env = default_env
        env.reset(pose=(1.0, 19.0))
        _, r, done, rec = env.step(env.actions_.encode(DiscreteAction(0, 0, 0)))
        assert rec.new_cover == () and r == -1.0 and not done

    def test_two_new_points(self, default_env):
        env = default_env
        env.reset(pose=(1.0, 1.0))
        # stay put and look with camera 0, which sees points 1 and 2 from here
        _, r, _, rec = env.step(env.actions_.encode(DiscreteAction(0, 0, 0)))
        assert rec.new_cover == (1, 2) and r == 3.0
        _, r, _, rec = env.step(env.actions_.encode(DiscreteAction(0, 0, 0)))
        assert rec.new_cover == () and r == -1.0  # no double credit

    def test_collision_reject(self, default_env):
        env = default_env
        env.reset(pose=(7.0, 5.0))
        _, r, _, rec = env.step(move_action(env, 2.0, 0.0, 2))  # into the object at (9, 5)
        assert rec.collision and rec.pose == (7.0, 5.0)
        assert r == -101.0 + 2 * len(rec.new_cover)

    def test_collision_terminate(self):
        env = CoverageEnv(collision_mode="terminate")
        env.reset(pose=(7.0, 5.0))
        _, _, done, rec = env.step(move_action(env, 2.0, 0.0, 2))
        assert rec.collision and done and rec.terminated

    def test_boundary_clamp(self, default_env):
        env = default_env
        env.reset(pose=(19.0, 19.0))
        _, r, _, rec = env.step(move_action(env, 2.0, 0.0, 2))
        assert env.in_bounds(rec.pose) and not rec.collision and rec.pose == (19.0, 19.0)

    def test_bounds_param_limits_positions(self):
        env = CoverageEnv(bounds=(0.0, 20.0, 10.0, 20.0))
        env.reset()
        assert all(env.grid_.cell_center(c)[1] >= 10 for c in env.free_cells())
        env.reset(pose=(1.0, 11.0))
        _, _, _, rec = env.step(move_action(env, 0.0, -2.0, 2))
        assert rec.pose[1] >= 10.0

    def test_truncation(self):
        env = CoverageEnv(max_steps=3)
        env.reset(pose=(1.0, 19.0))
        for t in range(3):
            _, _, done, rec = env.step(0)
        assert done and rec.truncated and not rec.terminated

    def test_termination_on_full_coverage(self, small_env):
        env = small_env
        env.reset(pose=(1.0, 1.0), covered=(0, 1, 2))
        # a sweep of cameras from the free cells eventually sees the last point
        done = False
        for a in range(env.n_actions):
            env.reset(pose=(7.0, 1.0), covered=(0, 1, 2))
            _, _, done, rec = env.step(a)
            if 3 in rec.new_cover:
                break
        assert done and rec.terminated and env.log_.success

    def test_continuous_mode(self):
        env = CoverageEnv(pose_mode="continuous")
        env.reset(pose=(1.0, 1.0))
        _, _, _, rec = env.step(move_action(env, 0.0, 2.0, 2))
        assert rec.pose == (1.0, 3.0)
        d = env.actions_.displacement(DiscreteAction(1, 1, 0))
        _, _, _, rec = env.step(move_action(env, d[0], d[1], 2))
        assert rec.pose == pytest.approx((1.0 + d[0], 3.0 + d[1]))

    def test_invalid_action(self, default_env):
        with pytest.raises(IndexError):
            default_env.step(90)

    def test_bad_params(self):
        for kw in ({"coverage_encoding": "x"}, {"collision_mode": "x"}, {"pose_mode": "x"},
                   {"max_steps": 0}):
            with pytest.raises(ValueError):
                CoverageEnv(**kw).reset()


class TestEncoding:
    def test_shapes(self):
        assert CoverageEnv().q_shape == (100, 12, 59, 90)
        assert tiny_env().q_shape == (16, 16, 25, 30)
        assert CoverageEnv(coverage_encoding="new").state_shape == (100, 12, 59)

    def test_state_components(self, default_env):
        env = default_env
        s = env.reset(pose=(1.0, 1.0))
        d = math.hypot(1 - 8.0, 1 - env.obj_.centroid[1])
        assert s == MdpState(0, 0, int(math.floor(d / 0.5 + 0.5)))

    def test_state_index_matches_ravel(self, default_env):
        env = default_env
        for s in [MdpState(0, 0, 0), MdpState(99, 11, 58), MdpState(37, 4, 12)]:
            assert env.state_index(s) == np.ravel_multi_index(s, env.state_shape)

    def test_encodings(self):
        env = CoverageEnv(coverage_encoding="mask")
        env.reset()
        assert env.encode_state((1.0, 1.0), frozenset({0, 3})).coverage == 0b1001
        env = CoverageEnv(coverage_encoding="new")
        env.reset()
        assert env.encode_state((1.0, 1.0), frozenset({0, 3}), new=(3,)).coverage == 1


class TestEpisodes:
    def test_start_never_inside(self):
        env = CoverageEnv(object_params=None, seed=3)
        for _ in range(200):
            env.reset()
            assert not env.obj_.is_inside(env.pose_)

    def test_seeded_reset_reproducible(self):
        a, b = CoverageEnv(object_params=None, seed=11), CoverageEnv(object_params=None, seed=11)
        for _ in range(20):
            a.reset(), b.reset()
            assert a.pose_ == b.pose_
            np.testing.assert_array_equal(a.obj_.points, b.obj_.points)

    def test_clone_is_fresh(self, default_env):
        c = clone(default_env)
        assert c.get_params() == default_env.get_params()
        c.reset()

    def test_random_objects_in_range(self):
        env = CoverageEnv(object_params=None, seed=5)
        for _ in range(100):
            env.reset()
            p = env.obj_.params
            assert 1 <= p.a <= 18 and 5 <= p.b <= 15 and 1 <= p.c <= 4

    def test_explicit_params(self, default_env):
        default_env.reset(params=BellCurveParams(5, 6, 1.4))
        assert default_env.obj_.params == BellCurveParams(5, 6, 1.4)

    def test_log_json(self, default_env):
        env = default_env
        env.reset(pose=(1.0, 1.0))
        _, _, _, rec = env.step(0)
        doc = rec.to_json()
        assert set(doc) == {"t", "x", "s", "a", "r", "new_cover", "collision"}
        assert doc["t"] == 1 and doc["x"] == [1.0, 1.0]
