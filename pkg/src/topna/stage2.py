"""Stage 2: the online association controller.

The observed task state is tracked against the stage-1 targets through three
virtual queues: an energy queue ``E_hat`` (projected at zero), a signed
frame-size queue ``F_hat`` and signed transition-fraction queues ``G_hat``.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import expected_anticipatory_cost, task_delay
from .stage1 import SI_UNITS, argmin_lowest, next_state_distribution


@dataclass
class Stage2Queues:
    num_states: int
    E_hat: float = 0.0
    F_hat: float = 0.0
    # visited rows only; each row spans all next states
    G_hat: dict = field(default_factory=dict)

    def g_row(self, s):
        row = self.G_hat.get(s)
        return np.zeros(self.num_states) if row is None else row

    def copy(self):
        return Stage2Queues(
            self.num_states, self.E_hat, self.F_hat, {s: r.copy() for s, r in self.G_hat.items()}
        )


def stage2_objective(
    state, event, action, queues, V_hat, optimal, transition_model, deployment, params,
    candidates=None, units=SI_UNITS,
):
    M = deployment.num_servers
    s = state.index(M)
    bd = task_delay(state, event, action, params, candidates)
    d_prime = expected_anticipatory_cost(state, event, action, transition_model, deployment, params)
    q = next_state_distribution(state, action, transition_model, M)
    return (
        units.penalty * V_hat * d_prime
        + units.energy * queues.E_hat * (bd.energy - optimal.energy[s])
        + units.frame * queues.F_hat * (bd.frame_size - optimal.frame_size[s])
        + queues.g_row(s) @ (q - optimal.row(s))
    )


def decide(
    state, event, queues, V_hat, optimal, transition_model, deployment, params, candidates=None,
    units=SI_UNITS,
):
    """Minimizer of :func:`stage2_objective` over the candidate set; ties to the lowest id.

    ``candidates`` defaults to the candidate set of the state's cell.
    """
    if candidates is None:
        candidates = deployment.cell_candidates(state.cell)
    servers = tuple(candidates)
    if len(servers) == 1:
        return servers[0]
    scores = [
        stage2_objective(
            state, event, a, queues, V_hat, optimal, transition_model, deployment, params,
            candidates, units,
        )
        for a in servers
    ]
    return servers[argmin_lowest(scores)]


def update_queues(queues, state, realized, action, optimal, transition_model):
    """Advance all stage-2 queues by one frame (in place); returns ``queues``."""
    M = optimal.num_states // transition_model.num_cells
    s = state.index(M)
    queues.E_hat = max(queues.E_hat + realized.energy - optimal.energy[s], 0.0)
    queues.F_hat = queues.F_hat + realized.frame_size - optimal.frame_size[s]
    q = next_state_distribution(state, action, transition_model, M)
    row = queues.G_hat.setdefault(s, np.zeros(queues.num_states))
    row += q - optimal.row(s)
    return queues
