import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stripres.errors import ConfigError
from stripres.pipeline import (
    DECAY_COLUMNS,
    FREDHOLM_COLUMNS,
    LOCALIZATION_COLUMNS,
    STAGES,
    TRAJECTORY_COLUMNS,
    RunConfig,
    free_pole_count,
    read_csv,
    run_pipeline,
    write_csv,
    write_json,
)
from stripres.symbol import free_poles_in_D

PI = np.pi
TWO_PI = 2.0 * PI


def small_config(tmp_path, **kw):
    base = dict(ells=(1.0, 2.0), n1_margin=1, n2_margin=2, q_line=32, q_circle=16, out_dir=str(tmp_path))
    base.update(kw)
    return RunConfig(**base)


class TestRunConfig:
    def test_defaults_validate(self):
        RunConfig().validate()

    @pytest.mark.parametrize(
        "kw",
        [
            dict(delta=PI / 4),
            dict(delta=0.0),
            dict(theta=PI - 0.1, delta=0.2),
            dict(theta=0.0),
            dict(tau1=3.0),
            dict(ells=()),
            dict(ells=(3.0, 2.0)),
            dict(re_k2=2.0),
            dict(q_nodes=30),
            dict(z0_samples=4),
            dict(q_line=0),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw).validate()

    def test_dict_round_trip(self, rect):
        cfg = RunConfig(medium=rect, lam=0.5, tau1=2 * TWO_PI, ells=(2.0, 3.5), waypoints=[2.5, PI, PI + 3j], max_step=0.1)
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"spectrl": {}})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"quadrature": {"q_lines": 3}})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"spectral": {"basis": {"n3_margin": 1}}})

    def test_malformed_values(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"spectral": {"lambda": "lots"}})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"path": {"waypoints": [[1.0]]}})

    def test_load(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"spectral": {"lambda": -2.0}, "path": {"ells": [1, 2]}}))
        cfg = RunConfig.load(p)
        assert cfg.lam == -2.0 and cfg.ells == (1.0, 2.0)
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "bad.json")

    def test_heights(self):
        assert RunConfig(ells=(1.0, 3.0)).heights == [PI / 2 + TWO_PI, PI / 2 + 3 * TWO_PI]


class TestCsv:
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=True, width=64), min_size=1, max_size=20))
    def test_float_round_trip_is_exact(self, xs):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as d:
            rows = [{"i": i, "x": x, "tag": "a b"} for i, x in enumerate(xs)]
            p = write_csv(Path(d) / "t.csv", rows, ["i", "x", "tag"])
            back = read_csv(p, {"i": int, "x": float})
        assert back == rows

    def test_no_temp_files_left(self, tmp_path):
        write_csv(tmp_path / "a.csv", [{"x": 1.0}], ["x"])
        write_json(tmp_path / "b.json", {"z": 1 + 2j, "v": np.float64(0.1)})
        assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv", "b.json"]
        assert json.loads((tmp_path / "b.json").read_text()) == {"v": 0.1, "z": [1.0, 2.0]}


class TestFreePoleCount:
    def test_matches_enumeration(self):
        assert free_pole_count(PI + 2.5j * PI, 0.0, 1.0, TWO_PI) == len(free_poles_in_D(PI, TWO_PI, TWO_PI, 8))

    def test_default_start(self):
        # Only n2 = 0, -1 give |Im| = sqrt((m2 + k2)² + 1) below 2π near k2 = 2.75.
        assert free_pole_count(0.5 * (PI + PI / 2), -1.0, 1.0, TWO_PI) == 4

    def test_grows_with_tau1(self):
        assert free_pole_count(2.0, -1.0, 1.0, 2 * TWO_PI) == 8


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    cfg = small_config(tmp_path_factory.mktemp("run"))
    return cfg, run_pipeline(cfg)


class TestRunPipeline:
    def test_all_stages_pass(self, small_run):
        _, rep = small_run
        assert [s.name for s in rep.stages] == list(STAGES)
        assert all(s.status == "passed" for s in rep.stages), [(s.name, s.message) for s in rep.stages]
        assert rep.passed

    def test_report_fields(self, small_run):
        _, rep = small_run
        assert rep.tau1 == TWO_PI
        assert (rep.N, rep.N_plus, rep.N_minus) == (4, 2, 2)
        assert rep.delta0 > 0 and rep.C_empirical > 0
        assert rep.M_empirical in (TWO_PI, 2 * TWO_PI)

    def test_outputs(self, small_run):
        cfg, rep = small_run
        cols = {
            "trajectory": TRAJECTORY_COLUMNS,
            "localization": LOCALIZATION_COLUMNS,
            "decay": DECAY_COLUMNS,
            "fredholm": FREDHOLM_COLUMNS,
        }
        for key, c in cols.items():
            with open(rep.artifacts[key]) as fh:
                assert fh.readline().strip().split(",") == c
        decay = read_csv(rep.artifacts["decay"], {c: float for c in DECAY_COLUMNS})
        assert [r["ell"] for r in decay] == [TWO_PI * e for e in cfg.ells]
        doc = json.loads(open(rep.artifacts["report"]).read())
        assert RunConfig.from_dict(doc["config"]) == cfg
        assert doc["report"]["N"] == 4

    def test_until(self, tmp_path):
        rep = run_pipeline(small_config(tmp_path), until="z0_search")
        status = {s.name: s.status for s in rep.stages}
        assert status["z0_search"] == "passed" and status["track"] == "skipped"
        assert sorted(p.name for p in tmp_path.iterdir()) == ["report.json"]

    def test_until_unknown(self, tmp_path):
        with pytest.raises(ValueError):
            run_pipeline(small_config(tmp_path), until="everything")

    @pytest.mark.parametrize(
        "kw,failed",
        [
            (dict(lam=100.0, tau1=TWO_PI), "select_tau1"),
            (dict(delta=PI / 4), "validate"),
        ],
    )
    def test_failure_skips_later_stages(self, tmp_path, kw, failed):
        rep = run_pipeline(small_config(tmp_path, **kw), write=False)
        names = [s.name for s in rep.stages]
        i = names.index(failed)
        assert rep.stages[i].status == "failed" and rep.stages[i].message
        assert all(s.status == "passed" for s in rep.stages[:i])
        assert all(s.status == "skipped" for s in rep.stages[i + 1 :])
        assert not rep.passed

    def test_rectangle_crystal_in_certified_gap(self, tmp_path, rect):
        # λ = 0.5 lies below θ²/sup ε₀ ≈ 0.82; the ascent meets a branch point.
        rep = run_pipeline(small_config(tmp_path, medium=rect, lam=0.5), write=False)
        assert all(s.status == "passed" for s in rep.stages), [(s.name, s.message) for s in rep.stages]
        track = next(s for s in rep.stages if s.name == "track")
        assert track.metrics["flagged_steps"] >= 1 and track.metrics["counts"] == [rep.N]

    def test_repeat_is_bit_identical(self, tmp_path, small_run):
        cfg, rep = small_run
        first = {k: open(v, "rb").read() for k, v in rep.artifacts.items()}
        again = run_pipeline(replace(cfg))
        assert {k: open(v, "rb").read() for k, v in again.artifacts.items()} == first
