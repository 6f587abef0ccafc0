"""Stage 1: learn per-state energy, frame-size and transition targets.

The task state is treated as a decision variable. Each frame the learner picks
the state whose drift-plus-penalty bound, estimated by a min-over-actions
average over a window of past random events, is smallest, then acts on the
freshly observed event and updates an energy queue ``E`` and a global-balance
queue ``G_s`` per state. Frame averages over the visits of each state give the
targets consumed by :mod:`topna.stage2`.
"""

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import LearningError, ModelError
from .model import TaskState, expected_anticipatory_cost, leave_probability, task_delay

TIE_RTOL = 1e-12


class ObjectiveUnits(NamedTuple):
    """Units in which the drift-plus-penalty objectives are evaluated.

    Queues are stored in SI; only the objective weighs delay, frame size and
    energy terms as if they were expressed in ``time_unit`` seconds and
    ``energy_unit`` joules. Balance queues are dimensionless either way.
    """

    time_unit: float = 1.0
    energy_unit: float = 1.0

    @property
    def penalty(self):
        return 1.0 / self.time_unit

    @property
    def energy(self):
        return 1.0 / self.energy_unit**2

    @property
    def frame(self):
        return 1.0 / self.time_unit**2


SI_UNITS = ObjectiveUnits(1.0, 1.0)
MILLI_UNITS = ObjectiveUnits(1e-3, 1e-3)  # ms and mJ


def argmin_lowest(values, rtol=TIE_RTOL):
    """Index of the minimum; values within ``rtol`` of it tie and go to the lowest index."""
    values = np.asarray(values, dtype=float)
    vmin = values.min()
    scale = max(float(np.abs(values).max()), np.finfo(float).tiny)
    return int(np.flatnonzero(values <= vmin + rtol * scale)[0])


def next_state_distribution(state, action, transition_model, num_servers):
    """``Pr(s' | s, a)`` over flat state indices: next association is ``action``."""
    row = transition_model.row(state.cell)
    probs = np.zeros(row.size * num_servers)
    probs[np.arange(row.size) * num_servers + action] = row
    return probs


@dataclass
class Stage1Queues:
    num_states: int
    E: float = 0.0
    G: np.ndarray = None

    def __post_init__(self):
        if self.G is None:
            self.G = np.zeros(self.num_states)

    def copy(self):
        return Stage1Queues(self.num_states, self.E, self.G.copy())


class EventWindow:
    """FIFO of the ``size`` most recent events, with per-server delay terms cached."""

    def __init__(self, size, params):
        if size < 1:
            raise ValueError("window size must be >= 1")
        self.size = int(size)
        self.params = params
        self._events = deque(maxlen=self.size)
        self._dtr = deque(maxlen=self.size)
        self._dc = deque(maxlen=self.size)

    def append(self, event):
        self._events.append(event)
        self._dtr.append(event.size / event.capacity)
        self._dc.append(event.size * self.params.intensity / event.cpu)

    def __len__(self):
        return len(self._events)

    def __iter__(self):
        return iter(self._events)

    def delay_terms(self):
        """``(d_tr, d_c)`` arrays of shape ``(len(window), M)``."""
        return np.array(self._dtr), np.array(self._dc)


@dataclass
class StateAverages:
    num_states: int
    visits: np.ndarray = field(init=False)
    energy_sum: np.ndarray = field(init=False)
    frame_sum: np.ndarray = field(init=False)
    transition_sum: dict = field(init=False)

    def __post_init__(self):
        self.visits = np.zeros(self.num_states, dtype=np.int64)
        self.energy_sum = np.zeros(self.num_states)
        self.frame_sum = np.zeros(self.num_states)
        self.transition_sum = {}

    def add(self, s, energy, frame_size, q_row):
        self.visits[s] += 1
        self.energy_sum[s] += energy
        self.frame_sum[s] += frame_size
        acc = self.transition_sum.get(s)
        if acc is None:
            self.transition_sum[s] = q_row.copy()
        else:
            acc += q_row


@dataclass
class OptimalParams:
    """Per-state targets ``e*_s``, ``T*_s`` and transition rows ``Pr*_s``.

    Only rows of visited states are stored; other rows are self-loops.
    """

    energy: np.ndarray
    frame_size: np.ndarray
    transition: dict
    visits: np.ndarray

    @property
    def num_states(self):
        return self.energy.size

    def row(self, s):
        row = self.transition.get(s)
        if row is None:
            row = np.zeros(self.num_states)
            row[s] = 1.0
        return row

    def save(self, path):
        """One record per state: ``state,visits,e_star_j,t_star_s,pr_row``.

        ``pr_row`` lists the nonzero entries as ``index:prob`` joined by ``;``.
        """
        with open(path, "w", newline="") as fh:
            fh.write("state,visits,e_star_j,t_star_s,pr_row\n")
            for s in range(self.num_states):
                row = self.row(s)
                nz = np.flatnonzero(row)
                pr = ";".join(f"{j}:{float(row[j])!r}" for j in nz)
                e, t = float(self.energy[s]), float(self.frame_size[s])
                fh.write(f"{s},{int(self.visits[s])},{e!r},{t!r},{pr}\n")

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            records = list(csv.DictReader(fh))
        n = len(records)
        energy, frame, visits = np.zeros(n), np.zeros(n), np.zeros(n, dtype=np.int64)
        transition = {}
        for rec in records:
            s = int(rec["state"])
            energy[s] = float(rec["e_star_j"])
            frame[s] = float(rec["t_star_s"])
            visits[s] = int(rec["visits"])
            if visits[s] > 0:
                row = np.zeros(n)
                for item in filter(None, rec["pr_row"].split(";")):
                    j, p = item.split(":")
                    row[int(j)] = float(p)
                transition[s] = row
        return cls(energy, frame, transition, visits)


def dpp_score(
    state, event, action, queues, V, transition_model, deployment, params, units=SI_UNITS
):
    """Per-sample drift-plus-penalty bound, without the constant and expectation."""
    M = deployment.num_servers
    bd = task_delay(state, event, action, params, deployment.cell_candidates(state.cell))
    d_prime = expected_anticipatory_cost(state, event, action, transition_model, deployment, params)
    s = state.index(M)
    balance = queues.G[s] - queues.G @ next_state_distribution(state, action, transition_model, M)
    return (
        units.penalty * V * d_prime
        + units.energy * queues.E * (bd.energy - params.energy_budget * bd.frame_size)
        + balance
    )


class _Tables:
    """Per-frame quantities shared by every state evaluation."""

    def __init__(self, queues, V, transition_model, deployment, params, units=SI_UNITS):
        M = deployment.num_servers
        V = units.penalty * V
        E = units.energy * queues.E
        C = params.handover_cost
        P = transition_model.matrix
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise ModelError("transition model rows must sum to 1")
        cand = [deployment.cell_candidates(c).servers for c in range(deployment.num_cells)]
        K = max(len(c) for c in cand)
        self.cand = np.array([list(c) + [c[0]] * (K - len(c)) for c in cand])
        self.valid = np.array([[k < len(c) for k in range(K)] for c in cand])
        rows = np.arange(deployment.num_cells)[:, None]
        G = queues.G.reshape(deployment.num_cells, M)
        # cost independent of the event and of the previous association
        self.static = (
            V * C * leave_probability(transition_model, deployment)[rows, self.cand]
            - (P @ G)[rows, self.cand]
        )
        self.switch = V * C - E * params.energy_budget * C
        self.G = G
        self.V = V
        self.E = E
        self.params = params
        self.M = M

    def event_cost(self, dtr, dc):
        p = self.params
        return self.V * (dtr + dc) + self.E * (p.tx_power * dtr - p.energy_budget * (dtr + dc))

    def scores(self, dtr, dc):
        """``scores[w, c, m, k]`` for window samples ``w`` and candidate slot ``k``."""
        ev = self.event_cost(dtr, dc)[:, self.cand]  # (W, C, K)
        base = ev + self.static[None]
        cost = base[:, :, None, :] + self.switch * (
            self.cand[:, None, :] != np.arange(self.M)[None, :, None]
        )
        return np.where(self.valid[None, :, None, :], cost, np.inf) + self.G[None, :, :, None]


def state_estimates(queues, window, V, transition_model, deployment, params, units=SI_UNITS):
    """Window estimate of the bound for every state, shape ``(S,)``."""
    if len(window) == 0:
        raise LearningError("event window is empty")
    tables = _Tables(queues, V, transition_model, deployment, params, units)
    dtr, dc = window.delay_terms()
    return tables.scores(dtr, dc).min(axis=3).mean(axis=0).reshape(-1)


def select_state(queues, window, V, transition_model, deployment, params, units=SI_UNITS):
    est = state_estimates(queues, window, V, transition_model, deployment, params, units)
    return TaskState.from_index(argmin_lowest(est), deployment.num_servers)


def select_action(state, event, queues, V, transition_model, deployment, params, units=SI_UNITS):
    cands = deployment.cell_candidates(state.cell).servers
    scores = [
        dpp_score(state, event, a, queues, V, transition_model, deployment, params, units)
        for a in cands
    ]
    return cands[argmin_lowest(scores)]


def energy_queue_update(E, energy, frame_size, beta):
    return max(E + energy - beta * frame_size, 0.0)


def balance_queue_update(G, s, q_row):
    """In place: ``G_s' += 1(s' = s) - Pr(s' | s, a)``."""
    G -= q_row
    G[s] += 1.0
    return G


class Stage1Step(NamedTuple):
    state: TaskState
    action: int
    breakdown: object
    q_row: np.ndarray


def stage1_step(
    queues, averages, window, new_event, V, transition_model, deployment, params, units=SI_UNITS
):
    """One learning frame; updates ``queues``, ``averages`` and ``window`` in place.

    The state is chosen from past samples only, then ``new_event`` is observed,
    acted on and appended to the window.
    """
    M = deployment.num_servers
    state = select_state(queues, window, V, transition_model, deployment, params, units)
    action = select_action(state, new_event, queues, V, transition_model, deployment, params, units)
    window.append(new_event)
    bd = task_delay(state, new_event, action, params)
    q_row = next_state_distribution(state, action, transition_model, M)
    s = state.index(M)
    queues.E = energy_queue_update(queues.E, bd.energy, bd.frame_size, params.energy_budget)
    balance_queue_update(queues.G, s, q_row)
    averages.add(s, bd.energy, bd.frame_size, q_row)
    return Stage1Step(state, action, bd, q_row)


def finalize_params(averages):
    visited = averages.visits > 0
    if not visited.any():
        raise LearningError("no state was visited during stage-1 learning")
    n = np.where(visited, averages.visits, 1)
    energy = averages.energy_sum / n
    frame = averages.frame_sum / n
    energy[~visited] = energy[visited].mean()
    frame[~visited] = frame[visited].mean()
    transition = {s: acc / averages.visits[s] for s, acc in averages.transition_sum.items()}
    return OptimalParams(energy, frame, transition, averages.visits.copy())


def constant_B(e_max, T_max, beta, S):
    return 0.5 * (e_max**2 + beta**2 * T_max**2) + S
