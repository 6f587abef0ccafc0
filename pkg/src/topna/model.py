"""Deployment geometry, task parameters and the per-frame delay/energy model.

All quantities are in SI units (s, J, W, bit, bit/s, cycles/s, m). Display units
(ms, mJ, Mbit, Mbps, GHz, dBm) are converted at the I/O boundary only, see
:mod:`topna.cli`.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._validation import (
    check_perfect_square,
    check_position,
    check_positive,
    check_row_stochastic,
)
from .exceptions import ConfigError, DomainError, InvalidActionError

# Reference defaults, canonical units.
DEFAULT_AREA_SIDE = 1000.0
DEFAULT_COVERAGE_RADIUS = 200.0
DEFAULT_CAPACITY_RANGE = (20e6, 100e6)
DEFAULT_CPU_RANGE = (10e9, 50e9)


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * np.log10(watt) + 30.0


@dataclass(frozen=True)
class Server:
    id: int
    location: tuple
    coverage_radius: float
    mean_capacity: float
    mean_cpu: float

    def __post_init__(self):
        check_positive(self.coverage_radius, "coverage_radius")
        check_positive(self.mean_capacity, "mean_capacity")
        check_positive(self.mean_cpu, "mean_cpu")


@dataclass(eq=False)
class Deployment:
    """``k x k`` grid of MEC servers over a square area.

    Cells are the Voronoi cells of the server centers, so ``num_cells == M``
    and the representative position of cell ``c`` is server ``c``'s location.
    """

    servers: Sequence[Server]
    area_side: float
    grid_dim: int
    centers: np.ndarray = field(init=False, repr=False)
    coverage: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.servers:
            raise ConfigError("deployment has no servers")
        ids = [s.id for s in self.servers]
        if ids != list(range(len(ids))):
            raise ConfigError("server ids must be dense and ordered 0..M-1")
        self.servers = tuple(self.servers)
        self.centers = np.array([s.location for s in self.servers], dtype=float)
        self.radii = np.array([s.coverage_radius for s in self.servers], dtype=float)
        self.mean_capacity = np.array([s.mean_capacity for s in self.servers])
        self.mean_cpu = np.array([s.mean_cpu for s in self.servers])
        # coverage[c, j]: server j covers the center of cell c
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        self.coverage = dist <= self.radii[None, :]
        self._cell_candidates = [
            candidate_set(self.centers[c], self) for c in range(self.num_cells)
        ]

    @classmethod
    def grid(
        cls,
        m,
        area_side=DEFAULT_AREA_SIDE,
        coverage_radius=DEFAULT_COVERAGE_RADIUS,
        capacity_range=DEFAULT_CAPACITY_RANGE,
        cpu_range=DEFAULT_CPU_RANGE,
    ):
        """Regular grid with mean capacity/CPU evenly spaced, ascending with id."""
        k = check_perfect_square(m)
        check_positive(area_side, "area_side")
        caps = np.linspace(capacity_range[0], capacity_range[1], m)
        cpus = np.linspace(cpu_range[0], cpu_range[1], m)
        step = area_side / k
        servers = []
        for j in range(m):
            row, col = divmod(j, k)
            loc = ((row + 0.5) * step, (col + 0.5) * step)
            servers.append(Server(j, loc, coverage_radius, float(caps[j]), float(cpus[j])))
        return cls(servers, float(area_side), k)

    @property
    def num_servers(self):
        return len(self.servers)

    @property
    def num_cells(self):
        return len(self.servers)

    @property
    def num_states(self):
        return self.num_cells * self.num_servers

    def cell_candidates(self, cell):
        """Candidate set at the representative position of ``cell``."""
        return self._cell_candidates[cell]

    def clamp(self, position):
        return np.clip(check_position(position), 0.0, self.area_side)


@dataclass(frozen=True)
class TaskParams:
    intensity: float = 238.0  # cycles/bit
    size_min: float = 0.5e6  # bits
    size_max: float = 1.0e6
    tx_power: float = dbm_to_watt(23.0)  # W
    handover_cost: float = 0.015  # s
    energy_budget: float = 0.125  # W

    def __post_init__(self):
        check_positive(self.intensity, "intensity")
        check_positive(self.size_min, "size_min")
        check_positive(self.size_max, "size_max")
        if self.size_min > self.size_max:
            raise ConfigError("size_min must not exceed size_max")
        check_positive(self.tx_power, "tx_power")
        check_positive(self.handover_cost, "handover_cost", strict=False)
        check_positive(self.energy_budget, "energy_budget")


class TaskState(NamedTuple):
    cell: int
    prev_assoc: int

    def index(self, num_servers):
        return self.cell * num_servers + self.prev_assoc

    @classmethod
    def from_index(cls, index, num_servers):
        return cls(*divmod(int(index), num_servers))


@dataclass(frozen=True, eq=False)
class RandomEvent:
    """Per-frame i.i.d. draw: task size plus capacity/CPU of every server."""

    size: float
    capacity: np.ndarray
    cpu: np.ndarray


@dataclass(frozen=True)
class DelayBreakdown:
    d_h: float
    d_tr: float
    d_c: float
    energy: float

    @property
    def d_total(self):
        return self.d_h + self.d_tr + self.d_c

    @property
    def frame_size(self):
        return self.d_total


class CandidateSet(NamedTuple):
    servers: tuple
    fallback: bool

    def __contains__(self, server):
        return server in self.servers

    def __len__(self):
        return len(self.servers)

    def __iter__(self):
        return iter(self.servers)


def candidate_set(position, deployment):
    """Servers covering ``position``; nearest server (flagged) when none does."""
    p = np.clip(check_position(position), 0.0, deployment.area_side)
    dist = np.sqrt(((deployment.centers - p) ** 2).sum(axis=1))
    covered = np.flatnonzero(dist <= deployment.radii)
    if covered.size:
        return CandidateSet(tuple(int(j) for j in covered), False)
    return CandidateSet((int(np.argmin(dist)),), True)


def handover_delay(action, prev, handover_cost):
    return 0.0 if action == prev else float(handover_cost)


def transmission_delay(size, capacity):
    if capacity <= 0:
        raise DomainError(f"channel capacity must be positive, got {capacity!r}")
    return size / capacity


def computation_delay(size, intensity, cpu):
    if cpu <= 0:
        raise DomainError(f"CPU frequency must be positive, got {cpu!r}")
    return size * intensity / cpu


def energy(tx_power, size, capacity):
    return tx_power * transmission_delay(size, capacity)


def _check_action(action, candidates):
    if candidates is not None and action not in candidates:
        raise InvalidActionError(f"server {action} is not in candidate set {tuple(candidates)}")


def task_delay(state, event, action, params, candidates=None):
    """Handover, transmission and computation delay plus uplink energy of one frame.

    ``candidates`` is the set the action was chosen from; when given, actions
    outside it are rejected.
    """
    _check_action(action, candidates)
    if not params.size_min <= event.size <= params.size_max:
        raise DomainError(
            f"task size {event.size!r} outside [{params.size_min}, {params.size_max}]"
        )
    d_tr = transmission_delay(event.size, float(event.capacity[action]))
    d_c = computation_delay(event.size, params.intensity, float(event.cpu[action]))
    d_h = handover_delay(action, state.prev_assoc, params.handover_cost)
    return DelayBreakdown(d_h, d_tr, d_c, params.tx_power * d_tr)


def anticipatory_cost(state, event, action, next_state, deployment, params, next_candidates=None):
    """Delay cost including a handover forced by the next position.

    One handover cost is added when ``action`` differs from the previous
    association and another when ``action`` does not cover the next position.
    ``next_candidates`` defaults to the candidate set of ``next_state``'s cell.
    """
    bd = task_delay(state, event, action, params)
    if next_candidates is None:
        next_candidates = deployment.cell_candidates(next_state.cell)
    cost = bd.d_tr + bd.d_c
    if action != state.prev_assoc:
        cost += params.handover_cost
    if action not in next_candidates:
        cost += params.handover_cost
    return cost


def leave_probability(transition_model, deployment):
    """``out[c, a]``: probability the next cell is not covered by server ``a``."""
    return transition_model.matrix @ (~deployment.coverage).astype(float)


def expected_anticipatory_cost(state, event, action, transition_model, deployment, params):
    """Expectation of :func:`anticipatory_cost` over the next task state.

    The next association equals ``action`` with probability one, so only the
    location factor of the transition is summed over.
    """
    row = check_row_stochastic(transition_model.row(state.cell))
    bd = task_delay(state, event, action, params)
    base = bd.d_tr + bd.d_c + bd.d_h
    leave = sum(
        p for c, p in enumerate(row) if p > 0 and action not in deployment.cell_candidates(c)
    )
    return base + params.handover_cost * leave
