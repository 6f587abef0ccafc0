"""Trajectories, location cells and the empirical cell transition model."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_row_stochastic
from .exceptions import TrajectoryError

EARTH_RADIUS_M = 6_371_000.0
TRAJECTORY_FORMATS = ("xy-csv", "latlon-csv")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        if self.times.ndim != 1 or len(self.times) != len(self.positions):
            raise TrajectoryError("times and positions must have matching lengths")
        if len(self.times) < 2:
            raise TrajectoryError("a trajectory needs at least 2 samples")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.positions))):
            raise TrajectoryError("trajectory contains non-finite values")
        if np.any(np.diff(self.times) <= 0):
            raise TrajectoryError("timestamps must be strictly increasing")

    @property
    def start(self):
        return float(self.times[0])

    @property
    def end(self):
        return float(self.times[-1])

    def __len__(self):
        return len(self.times)


def position_at(trajectory, t):
    """Linear interpolation, clamped to the first/last sample."""
    x = np.interp(t, trajectory.times, trajectory.positions[:, 0])
    y = np.interp(t, trajectory.times, trajectory.positions[:, 1])
    return np.array([x, y])


def velocity_at(trajectory, t):
    """Finite difference of the last two samples at or before ``t``."""
    i = int(np.searchsorted(trajectory.times, t, side="right")) - 1
    i = min(max(i, 1), len(trajectory) - 1)
    dt = trajectory.times[i] - trajectory.times[i - 1]
    return (trajectory.positions[i] - trajectory.positions[i - 1]) / dt


def discretize(position, deployment):
    """Index of the nearest server center; ties go to the lowest id."""
    p = np.asarray(position, dtype=float)
    return int(np.argmin(((deployment.centers - p) ** 2).sum(axis=1)))


def project_equirectangular(lat_deg, lon_deg, lat0_deg=None, lon0_deg=None):
    """Local east/north meters about a reference point (default: first sample)."""
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    lat0 = lat.flat[0] if lat0_deg is None else math.radians(lat0_deg)
    lon0 = lon.flat[0] if lon0_deg is None else math.radians(lon0_deg)
    x = EARTH_RADIUS_M * (lon - lon0) * math.cos(lat0)
    y = EARTH_RADIUS_M * (lat - lat0)
    return np.stack([x, y], axis=-1)


def rescale_into_area(xy, area_side):
    """Shift to the origin and scale uniformly so the longer extent spans the area."""
    xy = np.asarray(xy, dtype=float)
    lo = xy.min(axis=0)
    extent = float((xy.max(axis=0) - lo).max())
    if extent == 0.0:
        return np.full_like(xy, area_side / 2.0)
    return (xy - lo) * (area_side / extent)


def _read_rows(path):
    rows = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh), start=1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            if len(raw) != 3:
                raise TrajectoryError(f"expected 3 fields, got {len(raw)}", line=lineno)
            try:
                rows.append((lineno, [float(cell) for cell in raw]))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise TrajectoryError(f"non-numeric field in {raw!r}", line=lineno) from None
    return rows


def load_trajectory(path, format="xy-csv", area_side=None):
    """Read a ``t_sec,x_m,y_m`` or ``t_sec,lat_deg,lon_deg`` CSV file.

    Lat/lon files are projected to local meters about the first sample and,
    when ``area_side`` is given, rescaled into ``[0, area_side]^2``.
    """
    if format not in TRAJECTORY_FORMATS:
        raise TrajectoryError(f"unknown trajectory format {format!r}")
    rows = _read_rows(path)
    if len(rows) < 2:
        raise TrajectoryError(f"{path}: a trajectory needs at least 2 samples")
    lines = [ln for ln, _ in rows]
    data = np.array([vals for _, vals in rows])
    t, a, b = data[:, 0], data[:, 1], data[:, 2]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise TrajectoryError("timestamps must be strictly increasing", line=lines[bad[0] + 1])
    if format == "latlon-csv":
        xy = project_equirectangular(a, b)
        if area_side is not None:
            xy = rescale_into_area(xy, area_side)
    else:
        xy = np.stack([a, b], axis=1)
    return Trajectory(t, xy)


def synthesize_random_waypoint(seed, area_side, speed_range, duration, sample_dt, pause=0.0):
    """Random-waypoint path sampled every ``sample_dt`` seconds.

    Starts at a uniform point, repeatedly picks a uniform waypoint and a speed
    uniform in ``speed_range``. A zero speed leaves the machine parked.
    """
    rng = np.random.default_rng(seed)
    lo_v, hi_v = speed_range
    pos = rng.uniform(0.0, area_side, size=2)
    knots_t, knots_p = [0.0], [pos.copy()]
    t = 0.0
    while t < duration:
        target = rng.uniform(0.0, area_side, size=2)
        speed = rng.uniform(lo_v, hi_v) if hi_v > lo_v else float(lo_v)
        dist = float(np.hypot(*(target - pos)))
        if speed <= 0.0:
            break
        t += dist / speed
        pos = target
        knots_t.append(t)
        knots_p.append(pos.copy())
        if pause > 0.0:
            t += pause
            knots_t.append(t)
            knots_p.append(pos.copy())
    if knots_t[-1] < duration:
        knots_t.append(max(duration, knots_t[-1] + sample_dt))
        knots_p.append(pos.copy())
    knots_t = np.array(knots_t)
    knots_p = np.array(knots_p)
    grid = np.arange(0.0, duration + 0.5 * sample_dt, sample_dt)
    if len(grid) < 2:
        grid = np.array([0.0, duration])
    xs = np.interp(grid, knots_t, knots_p[:, 0])
    ys = np.interp(grid, knots_t, knots_p[:, 1])
    return Trajectory(grid, np.clip(np.stack([xs, ys], axis=1), 0.0, area_side))


class TransitionModel:
    """Empirical ``Pr(cell' | cell)`` from observed cell changes.

    Rows without observations default to a self-loop.
    """

    def __init__(self, num_cells):
        self.num_cells = int(num_cells)
        self.counts = np.zeros((self.num_cells, self.num_cells))
        self._matrix = None

    @classmethod
    def from_matrix(cls, matrix):
        """Fixed model whose rows are the given probabilities (used as pseudo-counts)."""
        matrix = np.asarray(matrix, dtype=float)
        for row in matrix:
            check_row_stochastic(row)
        model = cls(matrix.shape[0])
        model.counts = matrix.copy()
        return model

    def copy(self):
        other = TransitionModel(self.num_cells)
        other.counts = self.counts.copy()
        return other

    def update(self, from_cell, to_cell):
        self.counts[from_cell, to_cell] += 1.0
        self._matrix = None
        return self

    def row(self, cell):
        return self.matrix[cell]

    @property
    def matrix(self):
        if self._matrix is None:
            totals = self.counts.sum(axis=1, keepdims=True)
            m = np.divide(self.counts, totals, out=np.zeros_like(self.counts), where=totals > 0)
            empty = totals[:, 0] == 0
            m[empty, :] = 0.0
            m[empty, np.flatnonzero(empty)] = 1.0
            self._matrix = m
        return self._matrix


def update_transition_counts(model, from_cell, to_cell):
    return model.update(from_cell, to_cell)


def sojourn_time(position, velocity, server):
    """Remaining time inside ``server``'s coverage disk under straight-line motion.

    ``inf`` for a stationary machine inside coverage, 0 outside coverage.
    """
    rel = np.asarray(position, dtype=float) - np.asarray(server.location, dtype=float)
    v = np.asarray(velocity, dtype=float)
    r2 = server.coverage_radius**2
    c = float(rel @ rel) - r2
    if c > 0:
        return 0.0
    a = float(v @ v)
    if a == 0.0:
        return math.inf
    b = 2.0 * float(rel @ v)
    disc = max(b * b - 4.0 * a * c, 0.0)
    return max((-b + math.sqrt(disc)) / (2.0 * a), 0.0)
