"""Association policies as scikit-learn style estimators.

Hyperparameters live in ``__init__`` so ``get_params``/``set_params``/``clone``
work; anything learned in :meth:`fit` ends with an underscore. ``decide`` maps
one frame observation to a server id and ``observe`` feeds back the realized
frame.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import baselines
from .diagnostics import count_violations
from .mobility import TransitionModel, discretize, position_at
from .model import CandidateSet, RandomEvent, TaskState
from .stage1 import (
    MILLI_UNITS,
    SI_UNITS,
    EventWindow,
    StateAverages,
    Stage1Queues,
    finalize_params,
    stage1_step,
)
from .stage2 import Stage2Queues, decide, update_queues


@dataclass
class Observation:
    state: TaskState
    event: RandomEvent
    position: np.ndarray
    velocity: np.ndarray
    candidates: CandidateSet
    transition_model: TransitionModel
    deployment: object
    params: object


OBJECTIVE_UNITS = {"si": SI_UNITS, "milli": MILLI_UNITS}


class AssociationPolicy(BaseEstimator):
    name = None

    def fit(self, scenario=None):
        return self

    def start_episode(self, scenario):
        """Reset per-episode state; returns the transition model the episode starts from."""
        return TransitionModel(scenario.deployment.num_cells)

    def decide(self, obs):
        raise NotImplementedError

    def observe(self, obs, action, breakdown):
        pass

    def queue_snapshot(self):
        return (np.nan, np.nan)


class BestChannelPolicy(AssociationPolicy):
    name = "best-channel"

    def decide(self, obs):
        return baselines.best_channel(obs.candidates, obs.event)


class MaxSojournPolicy(AssociationPolicy):
    name = "max-sojourn"

    def decide(self, obs):
        return baselines.max_sojourn(obs.candidates, obs.position, obs.velocity, obs.deployment)


class MyopicOptimalPolicy(AssociationPolicy):
    name = "myopic"

    def decide(self, obs):
        return baselines.myopic_optimal(obs.candidates, obs.event, obs.params)


class Stage1Learner:
    """Owns the stage-1 queues, window and averages for one learning run."""

    def __init__(
        self, deployment, params, V, window_size, transition_model, track_bounds=False,
        units=SI_UNITS,
    ):
        S = deployment.num_states
        self.deployment = deployment
        self.params = params
        self.V = V
        self.transition_model = transition_model
        self.queues = Stage1Queues(S)
        self.averages = StateAverages(S)
        self.window = EventWindow(window_size, params)
        self.track_bounds = track_bounds
        self.units = units
        self.energy_violations = 0
        self.balance_violations = 0
        self.frames = 0

    def step(self, event):
        E0 = self.queues.E
        G0 = self.queues.G.copy() if self.track_bounds else None
        step = stage1_step(
            self.queues, self.averages, self.window, event, self.V,
            self.transition_model, self.deployment, self.params, self.units,
        )
        if self.track_bounds:
            bd = step.breakdown
            self.energy_violations += count_violations(
                E0, self.queues.E, bd.energy, self.params.energy_budget * bd.frame_size
            )
            arrivals = np.zeros_like(G0)
            arrivals[step.state.index(self.deployment.num_servers)] = 1.0
            self.balance_violations += count_violations(G0, self.queues.G, arrivals, step.q_row)
        self.frames += 1
        return step

    def finalize(self):
        return finalize_params(self.averages)


class TOPNAPolicy(AssociationPolicy):
    """Two-stage proactive association.

    ``fit`` runs ``n_warmup`` stage-1 frames along the scenario trajectory to
    learn per-state targets; afterwards each frame is decided by the stage-2
    controller with control weight ``V_hat`` (``V`` when left as ``None``).
    """

    name = "topna"

    def __init__(
        self, V=500.0, V_hat=None, window=50, n_warmup=2000, units="milli", track_bounds=False
    ):
        self.V = V
        self.V_hat = V_hat
        self.window = window
        self.n_warmup = n_warmup
        self.units = units
        self.track_bounds = track_bounds

    def fit(self, scenario):
        dep = scenario.deployment
        tm = TransitionModel(dep.num_cells)
        learner = Stage1Learner(
            dep, scenario.params, self.V, self.window, tm, self.track_bounds, self.objective_units
        )
        rng = scenario.stage1_rng()
        # selection only ever sees past samples, so seed the window before frame 0
        learner.window.append(scenario.draw_event(rng))
        traj = scenario.trajectory
        t = traj.start
        cell = discretize(position_at(traj, t), dep)
        for _ in range(self.n_warmup):
            step = learner.step(scenario.draw_event(rng))
            t += step.breakdown.frame_size
            nxt = discretize(position_at(traj, t), dep)
            tm.update(cell, nxt)
            cell = nxt
        self.optimal_params_ = learner.finalize()
        self.transition_model_ = tm
        self.stage1_queues_ = learner.queues
        self.stage1_learner_ = learner
        return self

    @property
    def objective_units(self):
        return OBJECTIVE_UNITS[self.units]

    @property
    def control_weight(self):
        return self.V if self.V_hat is None else self.V_hat

    def start_episode(self, scenario):
        check_is_fitted(self, "optimal_params_")
        self.queues_ = Stage2Queues(scenario.deployment.num_states)
        return self.transition_model_.copy()

    def decide(self, obs):
        return decide(
            obs.state, obs.event, self.queues_, self.control_weight, self.optimal_params_,
            obs.transition_model, obs.deployment, obs.params, obs.candidates,
            self.objective_units,
        )

    def observe(self, obs, action, breakdown):
        update_queues(
            self.queues_, obs.state, breakdown, action, self.optimal_params_, obs.transition_model
        )

    def queue_snapshot(self):
        return (self.queues_.E_hat, self.queues_.F_hat)


POLICIES = {
    cls.name: cls
    for cls in (TOPNAPolicy, BestChannelPolicy, MaxSojournPolicy, MyopicOptimalPolicy)
}


def make_policy(name, **params):
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}") from None
    valid = cls._get_param_names()
    return cls(**{k: v for k, v in params.items() if k in valid})
