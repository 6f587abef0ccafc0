import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from topna.cli import (
    FRAME_COLUMNS,
    SUMMARY_COLUMNS,
    RunSpec,
    config_digest,
    dump_config,
    emit_frames,
    emit_summary,
    main,
    parse_config,
    read_frames,
    spec_from_dict,
)
from topna.exceptions import ConfigError
from topna.model import TaskParams
from topna.sim import EpisodeConfig, run_episode, sweep_servers

FAST = "frames = 40\nn1 = 60\nw = 5\n"


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfig:
    def test_experimenter_units(self, tmp_path):
        spec = parse_config(write(tmp_path, "m = 16\nbeta_mw = 125\nhandover_ms = 15\n"))
        assert spec.config.params.energy_budget == 0.125
        assert spec.config.params.handover_cost == 0.015

    def test_all_conversions(self, tmp_path):
        text = ("m = 9\nptx_dbm = 30\nalpha_mbit_min = 0.2\nalpha_mbit_max = 0.4\n"
                "c_mbps_min = 10\nc_mbps_max = 50\nf_ghz_min = 2\nf_ghz_max = 8\n"
                "epsilon_cycles_per_bit = 100\nra_m = 250\narea_side_m = 2000\n")
        c = parse_config(write(tmp_path, text)).config
        assert c.params.tx_power == pytest.approx(1.0)
        assert (c.params.size_min, c.params.size_max) == (0.2e6, 0.4e6)
        assert c.capacity_range == (10e6, 50e6) and c.cpu_range == (2e9, 8e9)
        assert c.params.intensity == 100 and c.coverage_radius == 250 and c.area_side == 2000

    def test_missing_m(self, tmp_path):
        with pytest.raises(ConfigError, match="'?m'?"):
            parse_config(write(tmp_path, "beta_mw = 125\n"))
        with pytest.raises(ConfigError, match="\\bm\\b"):
            spec_from_dict({"v": 1})

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            spec_from_dict({"m": 4, "bogus": 1})

    @pytest.mark.parametrize(
        "doc",
        [{"m": 5}, {"m": 4, "beta_mw": -1}, {"m": 4, "alpha_mbit_min": 2}, {"m": 4, "frames": 1.5},
         {"m": 4, "c_mbps_min": 0}, {"m": 4, "v": -1}, {"m": 4, "units": "furlongs"},
         {"m": 4, "seeds": []}, {"m": 4, "policy": 3}, {"m": 4, "ra_m": 0}, {"m": "4"}],
    )
    def test_out_of_range(self, doc):
        with pytest.raises(ConfigError):
            spec_from_dict(doc)

    def test_bad_toml(self, tmp_path):
        with pytest.raises(ConfigError, match="cfg.toml"):
            parse_config(write(tmp_path, "m = = 4\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.toml")

    def test_roundtrip_identity(self, tmp_path):
        spec = RunSpec(
            replace(EpisodeConfig(m=25, V=123.0, V_hat=7.5, window=20, n_warmup=500, frames=77,
                                  params=TaskParams(handover_cost=0.02, energy_budget=0.1)),
                    units="si"),
            seeds=[3, 4], m_list=[4, 16], v_list=[0.0, 42.0],
        )
        path = tmp_path / "dump.toml"
        dump_config(spec, path)
        back = parse_config(path)
        assert back == spec
        assert config_digest(back) == config_digest(spec)

    def test_default_roundtrip(self, tmp_path):
        spec = RunSpec(EpisodeConfig())
        assert parse_config(write(tmp_path, dump_config(spec))) == spec


class TestEmit:
    def test_frames_single(self, tmp_path):
        m = run_episode(EpisodeConfig(m=4, frames=1, policy="myopic"))
        path = emit_frames(m, tmp_path / "f.csv")
        text = path.read_text()
        assert text.endswith("\n")
        lines = text.splitlines()
        assert len(lines) == 2 and lines[0] == ",".join(FRAME_COLUMNS)

    def test_frames_roundtrip_delay(self, tmp_path):
        m = run_episode(EpisodeConfig(m=16, frames=200, n_warmup=100, window=5))
        cols = read_frames(emit_frames(m, tmp_path / "f.csv"))
        assert abs(cols["d_total_s"].mean() - m.avg_delay) <= 1e-12 * m.avg_delay
        assert np.array_equal(cols["action"], m.actions)
        assert np.array_equal(cols["E_hat"], m.column("E_hat"))

    def test_summary(self, tmp_path):
        res = sweep_servers(EpisodeConfig(frames=10, n_warmup=20, window=3), [4, 9], [0],
                            ("myopic", "best-channel", "max-sojourn"))
        path = emit_summary(res.rows, tmp_path / "s.csv")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == SUMMARY_COLUMNS
        assert len(rows) - 1 == 2 * 3
        assert path.read_text().endswith("\n")

    def test_unwritable(self, tmp_path):
        m = run_episode(EpisodeConfig(m=4, frames=1, policy="myopic"))
        with pytest.raises(OSError, match="nope"):
            emit_frames(m, tmp_path / "nope" / "f.csv")


class TestMain:
    def test_run_and_check(self, tmp_path, capsys):
        cfg = write(tmp_path, "m = 16\n" + FAST)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out-dir", str(out), "--seeds", "0,1"]) == 0
        for seed in (0, 1):
            assert (out / f"frames_topna_seed{seed}.csv").exists()
            assert (out / f"optimal_params_topna_seed{seed}.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [0, 1] and len(manifest["config_digest"]) == 64
        assert manifest["versions"]["topna"]
        assert main(["check", "--config", str(cfg), "--out-dir", str(out),
                     "--triples", "1000"]) == 0
        assert "check passed" in capsys.readouterr().out

    def test_check_detects_tampering(self, tmp_path):
        cfg = write(tmp_path, "m = 16\n" + FAST)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out-dir", str(out)]) == 0
        path = out / "frames_topna_seed0.csv"
        lines = path.read_text().splitlines()
        fields = lines[5].split(",")
        fields[11] = "99.0"  # E_hat
        lines[5] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        assert main(["check", "--config", str(cfg), "--out-dir", str(out),
                     "--triples", "10"]) == 1

    def test_sweeps(self, tmp_path):
        cfg = write(tmp_path, "m = 4\nm_list = [4, 9]\nv_list = [0, 500]\n" + FAST)
        out = tmp_path / "m"
        assert main(["sweep-m", "--config", str(cfg), "--out-dir", str(out),
                     "--policy", "myopic,best-channel"]) == 0
        assert len((out / "summary.csv").read_text().splitlines()) == 1 + 4
        out = tmp_path / "v"
        assert main(["sweep-v", "--config", str(cfg), "--out-dir", str(out), "--seeds", "0,1"]) == 0
        assert len((out / "summary.csv").read_text().splitlines()) == 1 + 2 * 4
        assert len((out / "episodes.csv").read_text().splitlines()) == 1 + 2 * 4 * 2

    def test_learn(self, tmp_path):
        cfg = write(tmp_path, "m = 9\n" + FAST)
        out = tmp_path / "l"
        assert main(["learn", "--config", str(cfg), "--out-dir", str(out)]) == 0
        lines = (out / "optimal_params_topna_seed0.csv").read_text().splitlines()
        assert len(lines) == 1 + 81

    def test_errors_exit_nonzero(self, tmp_path, capsys):
        cfg = write(tmp_path, "m = 7\n")
        assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) != 0
        assert "perfect square" in capsys.readouterr().err
        cfg = write(tmp_path, "m = 4\n" + FAST, "ok.toml")
        assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path),
                     "--policy", "nope"]) != 0
        assert main(["check", "--out-dir", str(tmp_path / "empty")]) != 0
