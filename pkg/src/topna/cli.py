"""Command-line front end: ``topna run | sweep-m | sweep-v | learn | check``.

Configs are flat TOML documents in the units experimenters usually quote
(ms, mW, Mbit, Mbps, GHz, dBm); everything is converted to SI on load::

    m = 16
    beta_mw = 125
    handover_ms = 15
    v = 500
    seeds = [0, 1, 2, 3, 4]
    m_list = [4, 9, 16, 25, 36]

Every verb writes its CSV outputs plus ``manifest.json`` into ``--out-dir``.
"""

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import count_violations, max_weight_triples
from .exceptions import ConfigError, TopnaError
from .model import TaskParams, dbm_to_watt, watt_to_dbm
from .policies import OBJECTIVE_UNITS, POLICIES
from .sim import (
    POLICY_ORDER,
    EpisodeConfig,
    Scenario,
    TrajectorySource,
    config_to_dict,
    run_episode,
    sweep_servers,
    sweep_V,
)
from .stage1 import OptimalParams

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("topna")

FRAME_COLUMNS = (
    "frame", "policy", "t_start_s", "cell", "prev_assoc", "action", "d_h_s", "d_tr_s",
    "d_c_s", "d_total_s", "energy_j", "E_hat", "F_hat",
)
SUMMARY_COLUMNS = (
    "setting", "policy", "seed_count", "mean_avg_delay_s", "std_avg_delay_s",
    "mean_power_w", "std_power_w",
)
EPISODE_COLUMNS = ("setting", "policy", "seed", "avg_delay_s", "power_w", "action_digest")

# config key -> factor from file units to SI
_SCALE = {
    "area_side_m": 1.0,
    "ra_m": 1.0,
    "epsilon_cycles_per_bit": 1.0,
    "alpha_mbit_min": 1e6,
    "alpha_mbit_max": 1e6,
    "c_mbps_min": 1e6,
    "c_mbps_max": 1e6,
    "f_ghz_min": 1e9,
    "f_ghz_max": 1e9,
    "beta_mw": 1e-3,
    "handover_ms": 1e-3,
    "rwp_speed_min_mps": 1.0,
    "rwp_speed_max_mps": 1.0,
    "rwp_duration_s": 1.0,
    "rwp_sample_dt_s": 1.0,
    "rwp_pause_s": 1.0,
}
_INT_KEYS = {"m", "w", "n1", "frames"}
_FLOAT_KEYS = {"v", "v_hat", "ptx_dbm"} | set(_SCALE)
_STR_KEYS = {"policy", "trajectory", "trajectory_format", "units"}
_LIST_KEYS = {"seeds", "m_list", "v_list"}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS
REQUIRED_KEYS = {"m"}


@dataclass
class RunSpec:
    """An episode config plus the sweep axes and seeds a verb iterates over."""

    config: EpisodeConfig
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    m_list: list = field(default_factory=lambda: [4, 9, 16, 25, 36])
    v_list: list = field(default_factory=lambda: [0.0, 10.0, 50.0, 100.0, 500.0])


def _number(doc, key, kind):
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"config key {key!r} must be finite")
    return float(value)


def spec_from_dict(doc):
    """Build a :class:`RunSpec` from a flat key/value mapping in file units."""
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    missing = sorted(REQUIRED_KEYS - set(doc))
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    val = {}
    for key in doc:
        if key in _INT_KEYS:
            val[key] = _number(doc, key, int)
        elif key in _FLOAT_KEYS:
            val[key] = _number(doc, key, float) * _SCALE.get(key, 1.0)
        elif key in _STR_KEYS:
            if not isinstance(doc[key], str):
                raise ConfigError(f"config key {key!r} must be a string")
            val[key] = doc[key]
        else:
            if not isinstance(doc[key], list) or not doc[key]:
                raise ConfigError(f"config key {key!r} must be a nonempty list")
            kind = float if key == "v_list" else int
            val[key] = [_number({key: x}, key, kind) for x in doc[key]]

    base = TaskParams()
    try:
        params = TaskParams(
            intensity=val.get("epsilon_cycles_per_bit", base.intensity),
            size_min=val.get("alpha_mbit_min", base.size_min),
            size_max=val.get("alpha_mbit_max", base.size_max),
            tx_power=dbm_to_watt(val["ptx_dbm"]) if "ptx_dbm" in val else base.tx_power,
            handover_cost=val.get("handover_ms", base.handover_cost),
            energy_budget=val.get("beta_mw", base.energy_budget),
        )
    except ValueError as exc:
        raise ConfigError(f"task parameters: {exc}") from None

    defaults = EpisodeConfig()
    cap = (val.get("c_mbps_min", defaults.capacity_range[0]),
           val.get("c_mbps_max", defaults.capacity_range[1]))
    cpu = (val.get("f_ghz_min", defaults.cpu_range[0]), val.get("f_ghz_max", defaults.cpu_range[1]))
    for name, (lo, hi) in (("c_mbps", cap), ("f_ghz", cpu)):
        if not 0 < lo <= hi:
            raise ConfigError(f"{name}_min/max must satisfy 0 < min <= max")

    tsrc = defaults.trajectory
    traj = val.get("trajectory", "random-waypoint")
    speed = (val.get("rwp_speed_min_mps", tsrc.speed_range[0]),
             val.get("rwp_speed_max_mps", tsrc.speed_range[1]))
    if not 0 <= speed[0] <= speed[1]:
        raise ConfigError("rwp_speed_min/max must satisfy 0 <= min <= max")
    trajectory = TrajectorySource(
        kind="random-waypoint" if traj == "random-waypoint" else "file",
        path=None if traj == "random-waypoint" else traj,
        format=val.get("trajectory_format", tsrc.format),
        speed_range=speed,
        sample_dt=val.get("rwp_sample_dt_s", tsrc.sample_dt),
        duration=val.get("rwp_duration_s", tsrc.duration),
        pause=val.get("rwp_pause_s", tsrc.pause),
    )
    units = val.get("units", defaults.units)
    if units not in OBJECTIVE_UNITS:
        raise ConfigError(f"units must be one of {sorted(OBJECTIVE_UNITS)}, got {units!r}")
    for key in ("area_side_m", "ra_m", "rwp_sample_dt_s", "rwp_duration_s"):
        if key in val and val[key] <= 0:
            raise ConfigError(f"{key} must be > 0")
    for key in ("v", "v_hat"):
        if key in val and val[key] < 0:
            raise ConfigError(f"{key} must be >= 0")

    config = EpisodeConfig(
        m=val["m"],
        area_side=val.get("area_side_m", defaults.area_side),
        coverage_radius=val.get("ra_m", defaults.coverage_radius),
        params=params,
        capacity_range=cap,
        cpu_range=cpu,
        trajectory=trajectory,
        policy=val.get("policy", defaults.policy),
        V=val.get("v", defaults.V),
        V_hat=val.get("v_hat"),
        units=units,
        window=val.get("w", defaults.window),
        n_warmup=val.get("n1", defaults.n_warmup),
        frames=val.get("frames", defaults.frames),
    )
    spec = RunSpec(config)
    for key in ("seeds", "m_list", "v_list"):
        if key in val:
            setattr(spec, key, val[key])
    return spec


def parse_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return spec_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def spec_to_dict(spec):
    """Inverse of :func:`spec_from_dict` (file units)."""
    c, p, t = spec.config, spec.config.params, spec.config.trajectory
    doc = {
        "m": c.m,
        "area_side_m": c.area_side,
        "ra_m": c.coverage_radius,
        "ptx_dbm": float(watt_to_dbm(p.tx_power)),
        "epsilon_cycles_per_bit": p.intensity,
        "alpha_mbit_min": p.size_min / 1e6,
        "alpha_mbit_max": p.size_max / 1e6,
        "c_mbps_min": c.capacity_range[0] / 1e6,
        "c_mbps_max": c.capacity_range[1] / 1e6,
        "f_ghz_min": c.cpu_range[0] / 1e9,
        "f_ghz_max": c.cpu_range[1] / 1e9,
        "beta_mw": p.energy_budget / 1e-3,
        "handover_ms": p.handover_cost / 1e-3,
        "v": c.V,
        "w": c.window,
        "n1": c.n_warmup,
        "frames": c.frames,
        "policy": c.policy,
        "units": c.units,
        "trajectory": t.path if t.kind == "file" else "random-waypoint",
        "trajectory_format": t.format,
        "rwp_speed_min_mps": t.speed_range[0],
        "rwp_speed_max_mps": t.speed_range[1],
        "rwp_duration_s": t.duration,
        "rwp_sample_dt_s": t.sample_dt,
        "rwp_pause_s": t.pause,
        "seeds": list(spec.seeds),
        "m_list": list(spec.m_list),
        "v_list": [float(v) for v in spec.v_list],
    }
    if c.V_hat is not None:
        doc["v_hat"] = c.V_hat
    return doc


def _toml_value(value):
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


def dump_config(spec, path=None):
    """Serialize ``spec`` as flat TOML; written to ``path`` when given."""
    text = "".join(f"{k} = {_toml_value(v)}\n" for k, v in spec_to_dict(spec).items())
    if path is not None:
        Path(path).write_text(text)
    return text


def config_digest(spec):
    canonical = json.dumps(
        {"config": config_to_dict(spec.config), "m_list": spec.m_list, "v_list": spec.v_list},
        sort_keys=True, default=list,
    )
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class RunManifest:
    verb: str
    config_digest: str
    seeds: list
    versions: dict
    outputs: list = field(default_factory=list)
    started_at: float = field(default_factory=time.time)
    wall_seconds: float = None

    def finish(self, out_dir):
        self.wall_seconds = time.time() - self.started_at
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path


def _versions():
    import sklearn

    return {
        "topna": __version__,
        "numpy": np.__version__,
        "scikit-learn": sklearn.__version__,
        "python": platform.python_version(),
    }


def _num(x):
    return repr(float(x))


def _open_csv(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def emit_frames(metrics, path):
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_COLUMNS)
        for r in metrics.records:
            w.writerow([r.frame, r.policy, _num(r.t_start), r.cell, r.prev_assoc, r.action]
                       + [_num(x) for x in (r.d_h, r.d_tr, r.d_c, r.d_total, r.energy, r.E_hat,
                                            r.F_hat)])
    return Path(path)


def emit_summary(rows, path):
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.setting, r.policy, r.seed_count] + [_num(x) for x in r[3:]])
    return Path(path)


def emit_episodes(episodes, path):
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for e in episodes:
            w.writerow([e.setting, e.policy, e.seed, _num(e.avg_delay), _num(e.power),
                        e.action_digest])
    return Path(path)


def read_frames(path):
    """Frames CSV back into a dict of numpy columns (``policy`` stays a list of str)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for name in FRAME_COLUMNS:
        values = [row[name] for row in rows]
        if name == "policy":
            cols[name] = values
        elif name in ("frame", "cell", "prev_assoc", "action"):
            cols[name] = np.array(values, dtype=np.int64)
        else:
            cols[name] = np.array(values, dtype=float)
    return cols


def _policies_arg(value, default):
    if value is None:
        return default
    names = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [n for n in names if n not in POLICIES]
    if bad:
        raise ConfigError(f"unknown policy {bad[0]!r}; choose from {sorted(POLICIES)}")
    return names


def _load_spec(args):
    spec = parse_config(args.config) if args.config else RunSpec(EpisodeConfig())
    if args.seeds:
        spec.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    return spec


def cmd_run(args, spec, out, manifest):
    policies = _policies_arg(args.policy, (spec.config.policy,))
    for pol in policies:
        for seed in spec.seeds:
            cfg = replace(spec.config, policy=pol, seed=seed)
            metrics = run_episode(cfg)
            tag = f"{pol}_seed{seed}"
            manifest.outputs.append(str(emit_frames(metrics, out / f"frames_{tag}.csv")))
            if hasattr(metrics.policy_obj, "optimal_params_"):
                p = out / f"optimal_params_{tag}.csv"
                metrics.policy_obj.optimal_params_.save(p)
                manifest.outputs.append(str(p))
            print(f"{tag}: avg_delay={metrics.avg_delay * 1e3:.3f} ms "
                  f"power={metrics.power * 1e3:.2f} mW")
    return 0


def _emit_sweep(result, out, manifest):
    manifest.outputs.append(str(emit_summary(result.rows, out / "summary.csv")))
    manifest.outputs.append(str(emit_episodes(result.episodes, out / "episodes.csv")))
    for r in result.rows:
        print(f"{r.setting:>8} {r.policy:>12}  d={r.mean_avg_delay_s * 1e3:8.3f} ms "
              f"(sd {r.std_avg_delay_s * 1e3:.3f})  P={r.mean_power_w * 1e3:7.2f} mW")
    return 0


def cmd_sweep_m(args, spec, out, manifest):
    policies = _policies_arg(args.policy, POLICY_ORDER)
    result = sweep_servers(spec.config, spec.m_list, spec.seeds, policies, args.jobs)
    return _emit_sweep(result, out, manifest)


def cmd_sweep_v(args, spec, out, manifest):
    policies = _policies_arg(args.policy, POLICY_ORDER)
    result = sweep_V(spec.config, spec.v_list, spec.seeds, policies, args.jobs)
    return _emit_sweep(result, out, manifest)


def cmd_learn(args, spec, out, manifest):
    for seed in spec.seeds:
        cfg = replace(spec.config, policy="topna", seed=seed)
        policy = cfg.build_policy().fit(Scenario(cfg))
        path = out / f"optimal_params_topna_seed{seed}.csv"
        policy.optimal_params_.save(path)
        manifest.outputs.append(str(path))
        op = policy.optimal_params_
        print(f"seed {seed}: {int((op.visits > 0).sum())} of {op.num_states} states visited")
    return 0


def check_frames(frames, optimal=None, num_servers=None):
    """Violation counts of the per-frame identities and squared-queue bounds."""
    counts = {}
    total = frames["d_h_s"] + frames["d_tr_s"] + frames["d_c_s"]
    counts["delay_sum"] = int(np.count_nonzero(
        np.abs(total - frames["d_total_s"]) > 1e-12 * np.abs(frames["d_total_s"])
    ))
    dt = np.diff(frames["t_start_s"])
    gap = np.abs(dt - frames["d_total_s"][:-1])
    counts["clock"] = int(np.count_nonzero(gap > 1e-9 * np.maximum(frames["t_start_s"][1:], 1.0)))
    E, F = frames["E_hat"], frames["F_hat"]
    if optimal is not None and np.all(np.isfinite(E)):
        s = frames["cell"] * num_servers + frames["prev_assoc"]
        e, e_star = frames["energy_j"][:-1], optimal.energy[s][:-1]
        T, T_star = frames["d_total_s"][:-1], optimal.frame_size[s][:-1]
        counts["E_hat_bound"] = count_violations(E[:-1], E[1:], e, e_star)
        counts["F_hat_bound"] = count_violations(F[:-1], F[1:], T, T_star)
        expect = np.maximum(E[:-1] + e - e_star, 0.0)
        counts["E_hat_recursion"] = int(np.count_nonzero(
            np.abs(E[1:] - expect) > 1e-9 * np.maximum(np.abs(expect), 1e-6)
        ))
    return counts


def cmd_check(args, spec, out, manifest):
    run_dir = Path(args.run_dir or args.out_dir)
    frame_files = sorted(run_dir.glob("frames_*.csv"))
    if not frame_files:
        raise ConfigError(f"no frames_*.csv files in {run_dir}")
    failed = 0
    rng = np.random.default_rng(args.check_seed)
    a, b, c = rng.uniform(0.0, 10.0, (3, args.triples))
    bad = int(np.count_nonzero(max_weight_triples(a, b, c) < -1e-9 * (a + b + c + 1.0) ** 2))
    print(f"max-weight triples: {args.triples} checked, {bad} violations")
    failed += bad
    for path in frame_files:
        tag = path.stem[len("frames_"):]
        params_path = run_dir / f"optimal_params_{tag}.csv"
        optimal = OptimalParams.load(params_path) if params_path.exists() else None
        counts = check_frames(read_frames(path), optimal, spec.config.m)
        failed += sum(counts.values())
        print(f"{path.name}: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    print("check passed" if failed == 0 else f"check FAILED: {failed} violations")
    return 0 if failed == 0 else 1


COMMANDS = {
    "run": cmd_run,
    "sweep-m": cmd_sweep_m,
    "sweep-v": cmd_sweep_v,
    "learn": cmd_learn,
    "check": cmd_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="topna", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument("--config", help="flat TOML config file")
        p.add_argument("--out-dir", default=".", help="output directory (default: .)")
        p.add_argument("--seeds", help="comma-separated seeds, overrides the config")
        p.add_argument("--policy", help="policy name (comma-separated list for sweeps)")
        p.add_argument("--jobs", type=int, default=1, help="parallel episodes for sweeps")
        if verb == "check":
            p.add_argument("--run-dir", help="directory of a finished run (default: --out-dir)")
            p.add_argument("--triples", type=int, default=100_000)
            p.add_argument("--check-seed", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        spec = _load_spec(args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(args.verb, config_digest(spec), list(spec.seeds), _versions())
        status = COMMANDS[args.verb](args, spec, out, manifest)
        if args.verb != "check":
            manifest.finish(out)
    except (TopnaError, OSError, ValueError) as exc:
        print(f"topna: error: {exc}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
