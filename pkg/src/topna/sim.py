"""Event-triggered episode loop, metrics and the server-count / V sweeps.

Decisions happen at task completion instants: frame ``r + 1`` starts when
frame ``r`` finishes, so the clock advances by each frame's total delay.
"""

import hashlib
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ._validation import check_perfect_square
from .exceptions import ConfigError
from .mobility import (
    discretize,
    load_trajectory,
    position_at,
    synthesize_random_waypoint,
    velocity_at,
)
from .model import (
    DEFAULT_CAPACITY_RANGE,
    DEFAULT_CPU_RANGE,
    Deployment,
    RandomEvent,
    TaskParams,
    TaskState,
    candidate_set,
    task_delay,
)
from .policies import POLICIES, Observation, make_policy

log = logging.getLogger(__name__)

POLICY_ORDER = ("topna", "best-channel", "max-sojourn", "myopic")


@dataclass(frozen=True)
class TrajectorySource:
    """Either ``kind="random-waypoint"`` or a CSV file path in ``path``."""

    kind: str = "random-waypoint"
    path: str = None
    format: str = "xy-csv"
    speed_range: tuple = (5.0, 15.0)
    sample_dt: float = 1.0
    duration: float = 900.0
    pause: float = 0.0


@dataclass(frozen=True)
class EpisodeConfig:
    m: int = 16
    area_side: float = 1000.0
    coverage_radius: float = 200.0
    params: TaskParams = field(default_factory=TaskParams)
    capacity_range: tuple = DEFAULT_CAPACITY_RANGE
    cpu_range: tuple = DEFAULT_CPU_RANGE
    trajectory: TrajectorySource = field(default_factory=TrajectorySource)
    policy: str = "topna"
    V: float = 500.0
    V_hat: float = None
    units: str = "milli"
    window: int = 50
    n_warmup: int = 2000
    frames: int = 3000
    seed: int = 0

    def __post_init__(self):
        check_perfect_square(self.m)
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.n_warmup < 1:
            raise ConfigError("n_warmup must be >= 1")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")

    def build_policy(self):
        return make_policy(
            self.policy, V=self.V, V_hat=self.V_hat, window=self.window,
            n_warmup=self.n_warmup, units=self.units,
        )


class Scenario:
    """Deployment, trajectory and seeded random streams for one (config, seed)."""

    def __init__(self, config):
        self.config = config
        self.deployment = Deployment.grid(
            config.m, config.area_side, config.coverage_radius,
            config.capacity_range, config.cpu_range,
        )
        self.params = config.params
        ss = np.random.SeedSequence(config.seed)
        self._traj_seed, self._event_seed, self._stage1_seed = ss.spawn(3)
        src = config.trajectory
        if src.kind == "random-waypoint":
            self.trajectory = synthesize_random_waypoint(
                self._traj_seed, config.area_side, src.speed_range, src.duration,
                src.sample_dt, src.pause,
            )
        elif src.kind == "file":
            self.trajectory = load_trajectory(src.path, src.format, config.area_side)
        else:
            raise ConfigError(f"unknown trajectory kind {src.kind!r}")

    def event_rng(self):
        return np.random.default_rng(self._event_seed)

    def stage1_rng(self):
        return np.random.default_rng(self._stage1_seed)

    def draw_event(self, rng):
        return draw_event(rng, self.deployment, self.params)


def draw_event(rng, deployment, params):
    """Task size and per-server capacity/CPU, each uniform around its mean."""
    M = deployment.num_servers
    size = rng.uniform(params.size_min, params.size_max)
    capacity = deployment.mean_capacity * rng.uniform(0.5, 1.5, M)
    cpu = deployment.mean_cpu * rng.uniform(0.5, 1.5, M)
    return RandomEvent(float(size), capacity, cpu)


class FrameRecord(NamedTuple):
    frame: int
    policy: str
    t_start: float
    cell: int
    prev_assoc: int
    action: int
    d_h: float
    d_tr: float
    d_c: float
    d_total: float
    energy: float
    E_hat: float
    F_hat: float
    num_candidates: int
    fallback: bool


@dataclass
class Metrics:
    policy: str
    records: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def num_frames(self):
        return len(self.records)

    @property
    def avg_delay(self):
        return float(np.mean(self.column("d_total")))

    @property
    def avg_energy(self):
        return float(np.mean(self.column("energy")))

    @property
    def avg_frame_size(self):
        return float(np.mean(self.column("d_total")))

    @property
    def power(self):
        """Ratio of averages: total energy over total elapsed time."""
        return float(self.column("energy").sum() / self.column("d_total").sum())

    @property
    def actions(self):
        return self.column("action")

    def action_digest(self):
        return hashlib.sha256(self.actions.astype(np.int64).tobytes()).hexdigest()


def run_episode(config, policy=None, scenario=None, on_frame=None):
    """Simulate ``config.frames`` measured frames.

    ``policy`` defaults to ``config.build_policy()``; a TOPNA policy that is
    not yet fitted runs its stage-1 warmup on the same scenario first.
    ``on_frame(obs, action, breakdown)`` is called after every frame.
    """
    scenario = scenario or Scenario(config)
    policy = policy if policy is not None else config.build_policy()
    if hasattr(policy, "n_warmup") and not hasattr(policy, "optimal_params_"):
        policy.fit(scenario)
    tm = policy.start_episode(scenario)
    dep, params, traj = scenario.deployment, scenario.params, scenario.trajectory
    rng = scenario.event_rng()
    metrics = Metrics(policy.name)

    t = traj.start
    pos = position_at(traj, t)
    cell = discretize(pos, dep)
    prev = cell  # the machine starts attached to its nearest server
    if traj.end < t + 1e-3 * config.frames:
        log.debug("trajectory may be exhausted; positions clamp to the last sample")
    for r in range(config.frames):
        cands = candidate_set(pos, dep)
        state = TaskState(cell, prev)
        event = draw_event(rng, dep, params)
        obs = Observation(state, event, pos, velocity_at(traj, t), cands, tm, dep, params)
        E_hat, F_hat = policy.queue_snapshot()
        action = policy.decide(obs)
        bd = task_delay(state, event, action, params, cands)
        policy.observe(obs, action, bd)
        if on_frame is not None:
            on_frame(obs, action, bd)
        metrics.records.append(
            FrameRecord(
                r, policy.name, t, cell, prev, action, bd.d_h, bd.d_tr, bd.d_c, bd.d_total,
                bd.energy, E_hat, F_hat, len(cands), cands.fallback,
            )
        )
        t = t + bd.frame_size
        pos = position_at(traj, t)
        nxt = discretize(pos, dep)
        tm.update(cell, nxt)
        cell, prev = nxt, action
    metrics.final_queues = policy.queue_snapshot()
    metrics.policy_obj = policy
    return metrics


class SummaryRow(NamedTuple):
    setting: str
    policy: str
    seed_count: int
    mean_avg_delay_s: float
    std_avg_delay_s: float
    mean_power_w: float
    std_power_w: float


class EpisodeResult(NamedTuple):
    setting: str
    policy: str
    seed: int
    avg_delay: float
    power: float
    action_digest: str
    final_queues: tuple


@dataclass
class SweepResult:
    rows: list
    episodes: list

    def per_seed(self, setting, policy):
        return sorted(
            (e for e in self.episodes if e.setting == setting and e.policy == policy),
            key=lambda e: e.seed,
        )


def _run_one(config, setting):
    m = run_episode(config)
    return EpisodeResult(
        setting, config.policy, config.seed, m.avg_delay, m.power, m.action_digest(),
        tuple(float(q) for q in m.final_queues),
    )


def _summarize(episodes, settings, policies):
    rows = []
    for setting in settings:
        for pol in policies:
            eps = [e for e in episodes if e.setting == setting and e.policy == pol]
            d = np.array([e.avg_delay for e in eps])
            p = np.array([e.power for e in eps])
            ddof = 1 if len(eps) > 1 else 0
            rows.append(
                SummaryRow(setting, pol, len(eps), float(d.mean()), float(d.std(ddof=ddof)),
                           float(p.mean()), float(p.std(ddof=ddof)))
            )
    return rows


def _sweep(configs, settings, policies, n_jobs):
    if n_jobs == 1:
        episodes = [_run_one(cfg, setting) for cfg, setting in configs]
    else:
        from joblib import Parallel, delayed

        episodes = Parallel(n_jobs=n_jobs)(delayed(_run_one)(c, s) for c, s in configs)
    return SweepResult(_summarize(episodes, settings, policies), episodes)


def sweep_servers(base_config, m_list, seeds, policies=POLICY_ORDER, n_jobs=1):
    """One summary row per (M, policy), averaged over ``seeds``."""
    for m in m_list:
        check_perfect_square(m)
    settings = [f"m={m}" for m in m_list]
    configs = [
        (replace(base_config, m=m, policy=pol, seed=seed), f"m={m}")
        for m in m_list for pol in policies for seed in seeds
    ]
    return _sweep(configs, settings, policies, n_jobs)


def sweep_V(base_config, v_list, seeds, policies=POLICY_ORDER, n_jobs=1):
    """One summary row per (V, policy); ``V_hat`` follows ``V`` unless set in the base config."""
    settings = [f"v={v:g}" for v in v_list]
    configs = [
        (replace(base_config, V=float(v), policy=pol, seed=seed), f"v={v:g}")
        for v in v_list for pol in policies for seed in seeds
    ]
    return _sweep(configs, settings, policies, n_jobs)


def config_to_dict(config):
    return asdict(config)
