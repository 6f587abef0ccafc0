"""Comparison policies: best channel, maximum sojourn time, myopic minimum delay."""

import numpy as np

from .mobility import sojourn_time
from .stage1 import argmin_lowest


def _servers(candidates):
    servers = tuple(candidates)
    if not servers:
        raise ValueError("candidate set is empty")
    return servers


def best_channel(candidates, event):
    servers = _servers(candidates)
    return servers[argmin_lowest(-event.capacity[list(servers)], rtol=0.0)]


def max_sojourn(candidates, position, velocity, deployment):
    servers = _servers(candidates)
    times = np.array(
        [sojourn_time(position, velocity, deployment.servers[j]) for j in servers]
    )
    # first maximum, so equal (including infinite) sojourns go to the lowest id
    return servers[int(np.argmax(times))]


def myopic_optimal(candidates, event, params):
    """Minimum transmission plus computation delay, ignoring handover."""
    servers = list(_servers(candidates))
    delay = event.size / event.capacity[servers] + event.size * params.intensity / event.cpu[servers]
    return servers[argmin_lowest(delay, rtol=0.0)]
