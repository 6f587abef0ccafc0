import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import grid_centers
from topna.exceptions import TrajectoryError
from topna.mobility import (
    Trajectory,
    TransitionModel,
    discretize,
    load_trajectory,
    position_at,
    project_equirectangular,
    rescale_into_area,
    sojourn_time,
    synthesize_random_waypoint,
    update_transition_counts,
    velocity_at,
)
from topna.model import Deployment, Server


def nearest_center(p, m):
    dist = [math.dist(p, c) for c in grid_centers(m, 1000.0)]
    return dist.index(min(dist))


class TestDiscretize:
    def test_nearest(self, dep4):
        assert discretize((100, 100), dep4) == 0

    def test_at_center(self, dep16):
        for j, s in enumerate(dep16.servers):
            assert discretize(s.location, dep16) == j

    def test_tie_lowest(self, dep4):
        assert discretize((500, 500), dep4) == 0

    @given(st.sampled_from([4, 9, 16, 36]), st.floats(0, 1000), st.floats(0, 1000))
    def test_matches_oracle(self, m, x, y):
        assert discretize((x, y), Deployment.grid(m)) == nearest_center((x, y), m)


class TestTrajectory:
    def test_validation(self):
        with pytest.raises(TrajectoryError):
            Trajectory([0.0], [[0, 0]])
        with pytest.raises(TrajectoryError):
            Trajectory([0.0, 0.0], [[0, 0], [1, 1]])
        with pytest.raises(TrajectoryError):
            Trajectory([0.0, 1.0], [[0, 0], [np.nan, 1]])

    def test_position_at(self):
        tr = Trajectory([0.0, 2.0], [[0, 0], [10, 0]])
        assert np.allclose(position_at(tr, 1.0), (5, 0))
        assert np.allclose(position_at(tr, -3.0), (0, 0))
        assert np.allclose(position_at(tr, 0.25), (1.25, 0))
        assert np.allclose(position_at(tr, 99.0), (10, 0))

    def test_velocity_causal(self):
        tr = Trajectory([0.0, 1.0, 2.0], [[0, 0], [10, 0], [10, 5]])
        assert np.allclose(velocity_at(tr, 0.5), (10, 0))
        assert np.allclose(velocity_at(tr, 1.5), (10, 0))
        assert np.allclose(velocity_at(tr, 2.0), (0, 5))

    @given(st.integers(0, 10_000))
    def test_cells_piecewise_constant(self, seed):
        dep = Deployment.grid(16)
        tr = synthesize_random_waypoint(seed, 1000.0, (5, 15), 60.0, 1.0)
        ts = np.linspace(0, 60, 600)
        cells = np.array([discretize(position_at(tr, t), dep) for t in ts])
        # every cell change happens where the two cell centers are (almost) equidistant
        for i in np.flatnonzero(np.diff(cells)):
            p, q = position_at(tr, ts[i]), position_at(tr, ts[i + 1])
            a, b = dep.centers[cells[i]], dep.centers[cells[i + 1]]
            side = lambda x: np.linalg.norm(x - a) - np.linalg.norm(x - b)  # noqa: E731
            assert side(p) <= 1e-9 and side(q) >= -1e-9


class TestLoadTrajectory:
    def test_xy(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("0,100,200\n1,110,200\n")
        tr = load_trajectory(f)
        assert np.allclose(tr.positions, [[100, 200], [110, 200]])
        assert np.linalg.norm(tr.positions[1] - tr.positions[0]) == pytest.approx(10.0)

    def test_header_optional(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("t_sec,x_m,y_m\n0,100,200\n1,110,200\n")
        assert len(load_trajectory(f)) == 2

    def test_bad_field_line_number(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("0,100,200\n1,abc,200\n")
        with pytest.raises(TrajectoryError, match="line 2") as exc:
            load_trajectory(f)
        assert exc.value.line == 2

    def test_wrong_field_count(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("0,100,200\n1,110\n")
        with pytest.raises(TrajectoryError, match="line 2"):
            load_trajectory(f)

    def test_non_monotone(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("0,1,1\n2,1,1\n1,1,1\n")
        with pytest.raises(TrajectoryError, match="line 3"):
            load_trajectory(f)

    def test_latlon_projection(self, tmp_path):
        f = tmp_path / "g.csv"
        f.write_text("0,39.9,116.3\n1,39.901,116.3\n")
        tr = load_trajectory(f, format="latlon-csv")
        assert np.linalg.norm(tr.positions[1] - tr.positions[0]) == pytest.approx(111.19, abs=0.01)

    def test_latlon_rescaled(self, tmp_path):
        f = tmp_path / "g.csv"
        f.write_text("0,39.9,116.3\n1,39.901,116.3\n2,39.902,116.301\n")
        tr = load_trajectory(f, format="latlon-csv", area_side=1000.0)
        assert tr.positions.min() >= 0.0 and tr.positions.max() == pytest.approx(1000.0)

    def test_unknown_format(self, tmp_path):
        f = tmp_path / "t.csv"
        f.write_text("0,1,1\n1,1,1\n")
        with pytest.raises(TrajectoryError):
            load_trajectory(f, format="plt")

    def test_projection_formula(self):
        xy = project_equirectangular([0.0, 0.001], [0.0, 0.0])
        assert xy[1, 1] == pytest.approx(6371e3 * math.radians(0.001), rel=1e-12)

    def test_rescale_degenerate(self):
        assert np.allclose(rescale_into_area(np.zeros((3, 2)), 1000.0), 500.0)


class TestRandomWaypoint:
    def test_deterministic(self):
        a = synthesize_random_waypoint(3, 1000.0, (5, 15), 100.0, 1.0)
        b = synthesize_random_waypoint(3, 1000.0, (5, 15), 100.0, 1.0)
        assert np.array_equal(a.positions, b.positions) and np.array_equal(a.times, b.times)

    def test_stationary(self):
        tr = synthesize_random_waypoint(1, 1000.0, (0, 0), 50.0, 1.0)
        assert np.all(tr.positions == tr.positions[0])

    @given(st.integers(0, 2**32 - 1), st.floats(100, 5000), st.floats(0.1, 40))
    def test_within_area(self, seed, side, vmax):
        tr = synthesize_random_waypoint(seed, side, (0.5 * vmax, vmax), 200.0, 2.0)
        assert tr.positions.min() >= 0.0 and tr.positions.max() <= side
        assert tr.end >= 200.0

    def test_speed_respected(self):
        tr = synthesize_random_waypoint(0, 1000.0, (5, 15), 300.0, 1.0)
        speeds = np.linalg.norm(np.diff(tr.positions, axis=0), axis=1) / np.diff(tr.times)
        assert speeds.max() <= 15.0 + 1e-9


class TestTransitionModel:
    def test_normalization(self):
        tm = TransitionModel(4)
        for _ in range(3):
            update_transition_counts(tm, 0, 0)
        update_transition_counts(tm, 0, 1)
        assert np.allclose(tm.row(0), [0.75, 0.25, 0, 0])

    def test_unobserved_self_loop(self):
        tm = TransitionModel(4)
        assert np.array_equal(tm.row(2), [0, 0, 1, 0])

    @given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), max_size=200))
    def test_rows_stochastic(self, updates):
        tm = TransitionModel(9)
        for a, b in updates:
            tm.update(a, b)
            assert abs(tm.row(a).sum() - 1.0) <= 1e-9
        assert np.allclose(tm.matrix.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(tm.matrix >= 0)

    def test_copy_independent(self):
        tm = TransitionModel(2).update(0, 1)
        cp = tm.copy().update(0, 0)
        assert np.allclose(tm.row(0), [0, 1]) and np.allclose(cp.row(0), [0.5, 0.5])


class TestSojourn:
    server = Server(0, (100.0, 0.0), 200.0, 1e7, 1e9)

    def test_exit_time(self):
        assert sojourn_time((0, 0), (10, 0), self.server) == pytest.approx(30.0, rel=1e-12)

    def test_stationary_inside(self):
        assert sojourn_time((0, 0), (0, 0), self.server) == math.inf

    def test_outside_moving_away(self):
        assert sojourn_time((400, 0), (10, 0), self.server) == 0.0

    def test_outside_stationary(self):
        assert sojourn_time((400, 0), (0, 0), self.server) == 0.0

    @given(
        st.floats(-199, 199), st.floats(-199, 199), st.floats(-30, 30), st.floats(-30, 30),
    )
    def test_exit_point_on_circle(self, x, y, vx, vy):
        if x * x + y * y > 199**2 or vx * vx + vy * vy < 1e-6:
            return
        server = Server(0, (0.0, 0.0), 200.0, 1e7, 1e9)
        t = sojourn_time((x, y), (vx, vy), server)
        assert t > 0
        assert math.hypot(x + vx * t, y + vy * t) == pytest.approx(200.0, rel=1e-9)

    @given(st.floats(-150, 150), st.floats(0.1, 20))
    def test_continuous_along_motion(self, x0, dx):
        server = Server(0, (0.0, 0.0), 200.0, 1e7, 1e9)
        v = (10.0, 0.0)
        a = sojourn_time((x0, 0.0), v, server)
        b = sojourn_time((x0 + dx * 1e-6, 0.0), v, server)
        assert abs(a - b) <= 1e-5
