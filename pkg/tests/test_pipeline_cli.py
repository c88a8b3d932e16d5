import json

import numpy as np
import pytest

from tripoint.cli import EXIT_NUMERICAL, EXIT_VALIDATION, build_parser, main
from tripoint.errors import ConfigError, NoJunction
from tripoint.pipeline import STAGES, Pipeline, RunConfig, StageError

SMALL = {"n": 96, "eps": [0.2], "probe_trials": 10, "profile_n": 801, "geodesic_nodes": 61}


def _write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return p


def test_default_config_manifest(default_run):
    m = json.loads((default_run.root / "manifest.json").read_text())
    assert set(m["stages"]) == set(STAGES)
    assert m["halted"] is None
    for files in m["stages"].values():
        assert files
        for f in files:
            assert (default_run.root / f).is_file()
    rep = json.loads((default_run.root / "report.json").read_text())
    assert rep["smallest_eps"] == 0.05
    assert rep["max_angle_error_deg"] < 5.0


def test_manifest_lists_every_file(default_run):
    m = json.loads((default_run.root / "manifest.json").read_text())
    listed = {f for files in m["stages"].values() for f in files} | set(m["inputs"]) | {"manifest.json"}
    on_disk = {str(p.relative_to(default_run.root)) for p in default_run.root.rglob("*") if p.is_file()}
    assert on_disk == listed


def test_config_roundtrip():
    cfg = RunConfig(delta=0.1234567890123, eps=[0.3, 0.15], alphas=[0.25, 0.5], seed=7)
    back = RunConfig.from_json(cfg.to_json())
    assert back == cfg
    assert back.to_json() == cfg.to_json()
    assert back.digest() == cfg.digest()


def test_config_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"nn": 3})
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        RunConfig(eps=[0.1, 0.2]).validate()
    with pytest.raises(ConfigError):
        RunConfig(eps=[0.02], n=128).validate()
    with pytest.raises(ConfigError):
        RunConfig(alphas=[1.0]).validate()


def test_synthetic_no_junction_halts(tmp_path):
    cfg = RunConfig(synthetic_table=[[0, 1, 2.5], [1, 0, 1], [2.5, 1, 0]], **SMALL)
    p = Pipeline(cfg, tmp_path)
    with pytest.raises(StageError) as exc:
        p.report()
    assert exc.value.stage == "junction_geometry"
    assert isinstance(exc.value.err, NoJunction)
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["halted"]["stage"] == "junction_geometry"
    assert m["halted"]["error"] == "NoJunction"
    assert set(m["stages"]) == {"potential", "metric_geodesics"}


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, {"synthetic_table": [[0, 1, 2.5], [1, 0, 1], [2.5, 1, 0]]})
    assert main(["angles", "--config", str(bad), "--out", str(tmp_path / "a")]) == EXIT_VALIDATION
    assert "NoJunction" in capsys.readouterr().err
    unknown = _write(tmp_path, {"colour": "red"}, "u.json")
    assert main(["angles", "--config", str(unknown), "--out", str(tmp_path / "b")]) == EXIT_VALIDATION
    # a three-step budget cannot reach the residual tolerance
    slow = _write(tmp_path, dict(SMALL, max_steps=3), "s.json")
    assert main(["solve", "--config", str(slow), "--out", str(tmp_path / "c")]) == EXIT_NUMERICAL


def test_cli_overrides(tmp_path):
    cfg = _write(tmp_path, SMALL)
    args = build_parser().parse_args(["angles", "--config", str(cfg), "--eps", "0.15", "--seed", "9",
                                      "--out", str(tmp_path / "o")])
    assert args.command == "angles"
    assert main(["angles", "--config", str(cfg), "--eps", "0.15", "--seed", "9",
                 "--out", str(tmp_path / "o")]) == 0
    stored = RunConfig.load(tmp_path / "o" / "config.json")
    assert stored.eps == [0.15] and stored.seed == 9
    ang = json.loads((tmp_path / "o" / "angles.json").read_text())
    assert np.allclose(np.rad2deg(ang["alpha"]), 120, atol=0.1)


def test_rerun_is_byte_identical(tmp_path):
    cfg = _write(tmp_path, dict(SMALL, out=str(tmp_path / "run")))
    runs = []
    for _ in range(2):
        assert main(["report", "--config", str(cfg)]) == 0
        runs.append(json.loads((tmp_path / "run" / "manifest.json").read_text()))
    a, b = runs
    assert a["config_hash"] == b["config_hash"]
    sums = [{f: c for s in m["stages"].values() for f, c in s.items()} for m in runs]
    assert sums[0] == sums[1]
    assert len(sums[0]) > 15
