"""Random small scenarios built both as package objects and as plain oracles."""

from types import SimpleNamespace

import numpy as np

from oracles import Instance
from topna.mobility import TransitionModel
from topna.model import Deployment, RandomEvent, TaskParams, TaskState
from topna.stage1 import EventWindow, OptimalParams, Stage1Queues
from topna.stage2 import Stage2Queues


def random_event(rng, dep, params):
    return RandomEvent(
        float(rng.uniform(params.size_min, params.size_max)),
        dep.mean_capacity * rng.uniform(0.5, 1.5, dep.num_servers),
        dep.mean_cpu * rng.uniform(0.5, 1.5, dep.num_servers),
    )


def random_matrix(rng, n):
    P = rng.dirichlet(np.full(n, 0.7), size=n)
    P[rng.random((n, n)) < 0.3] = 0.0
    P[np.arange(n), np.arange(n)] += 0.05
    return P / P.sum(axis=1, keepdims=True)


def small_instance(rng, m=4, max_window=5):
    """S = m^2 <= 16 states, radius drawn so candidate sets range over 1..4 servers."""
    radius = float(rng.uniform(150.0, 800.0))
    dep = Deployment.grid(m, coverage_radius=radius)
    params = TaskParams(handover_cost=float(rng.choice([0.0, 0.015, 0.05])))
    tm = TransitionModel.from_matrix(random_matrix(rng, m))
    oracle = Instance(m, dep.area_side, radius, tm.matrix, params.intensity, params.tx_power,
                      params.handover_cost, params.energy_budget)
    window = EventWindow(int(rng.integers(1, max_window + 1)), params)
    for _ in range(window.size):
        window.append(random_event(rng, dep, params))
    S = dep.num_states
    q1 = Stage1Queues(S, float(rng.choice([0.0, rng.exponential(0.05)])), rng.normal(0, 2, S))
    V = float(rng.choice([0.0, rng.uniform(0, 1), rng.uniform(0, 500)]))
    rows = {s: random_matrix(rng, S)[0] for s in range(S) if rng.random() < 0.7}
    optimal = OptimalParams(
        rng.uniform(1e-3, 5e-3, S), rng.uniform(0.01, 0.06, S), rows, np.ones(S, dtype=int)
    )
    q2 = Stage2Queues(S, float(rng.exponential(0.05)), float(rng.normal(0, 0.5)),
                      {s: rng.normal(0, 2, S) for s in range(S) if rng.random() < 0.5})
    state = TaskState.from_index(int(rng.integers(S)), m)
    return SimpleNamespace(dep=dep, params=params, tm=tm, oracle=oracle, window=window,
                           q1=q1, q2=q2, V=V, optimal=optimal, state=state,
                           event=random_event(rng, dep, params))


def as_tuple(event):
    return (event.size, event.capacity, event.cpu)
