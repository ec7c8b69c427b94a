import json
import math

import numpy as np
import pytest

from dyadsum.field import read_field
from dyadsum.harness import suites as S
from dyadsum.harness import experiments as X
from dyadsum.harness.cli import main
from dyadsum.harness.config import RunConfig, build_config, load_config, parse_overrides
from dyadsum.harness.reports import ExperimentReport, clean, csv_text, dumps, stable


def test_parse_overrides():
    text = "# comment\ntrials = 7\n\nscales=-1, 0,1  # trailing\nunit_mother=off\n"
    assert parse_overrides(text) == {"trials": "7", "scales": "-1, 0,1", "unit_mother": "off"}
    with pytest.raises(ValueError):
        parse_overrides("no equals sign")


def test_build_config_coerces_and_rejects():
    cfg = build_config({"trials": "7", "scales": "-1,0,1", "unit_mother": "off", "kappa": "1.5"})
    assert cfg.trials == 7 and cfg.scales == (-1, 0, 1) and cfg.unit_mother is False and cfg.kappa == 1.5
    with pytest.raises(ValueError):
        build_config({"nope": "1"})
    with pytest.raises(ValueError):
        build_config({"refine": "maybe"})
    two = build_config({"dim": "2"})
    assert two == RunConfig.desk(2)
    assert build_config({}, dim=2, seed=4).seed == 4


def test_load_config(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("seed=9\ngamma=11\n")
    cfg = load_config(p, trials=3)
    assert (cfg.seed, cfg.gamma, cfg.trials) == (9, 11, 3)
    assert json.loads(cfg.dumps())["scales"] == [-2, -1, 0, 1]


def test_desk_defaults():
    assert len(S.window_tiles(RunConfig.desk(1))) == 1024
    assert len(S.window_tiles(RunConfig.desk(2))) == 2048
    with pytest.raises(ValueError):
        RunConfig.desk(3)


def test_reports_helpers(tmp_path):
    assert clean({"a": np.float64(math.inf), "b": (np.int64(2), np.nan), "c": 1 + 2j}) == {
        "a": "inf",
        "b": [2, "nan"],
        "c": [1.0, 2.0],
    }
    assert stable(1.0, 1.9) and not stable(1.0, 2.0) and stable(0.0, 0.0) and not stable(0.0, 1.0)
    assert csv_text([]) == ""
    assert csv_text([{"x": 0.1, "y": [1, 2]}]) == 'x,y\n0.1,"[1, 2]"\n'
    rep = ExperimentReport("EX", {"p": 1}, [{"trial": 0}], {"C": 2.0}, {"ok": True}, True, {"t": [{"a": 1}]}, runtime=3.0)
    paths = rep.write(tmp_path)
    assert [p.name for p in paths] == ["EX.json", "EX_t.csv"]
    assert "runtime" not in (tmp_path / "EX.json").read_text()
    assert json.loads((tmp_path / "EX.timing.json").read_text())["runtime_s"] == 3.0
    assert rep.ok and dumps({"b": 1, "a": 2}).startswith('{\n "a"')


def test_trial_rng_is_order_independent():
    a = S.trial_rng(0, "E1", 5).uniform(size=4)
    S.trial_rng(0, "E1", 4).uniform(size=100)
    assert np.array_equal(a, S.trial_rng(0, "E1", 5).uniform(size=4))
    assert not np.array_equal(a, S.trial_rng(0, "E2", 5).uniform(size=4))
    assert not np.array_equal(a, S.trial_rng(1, "E1", 5).uniform(size=4))


@pytest.mark.parametrize("dim", [1, 2])
def test_random_sets(dim):
    cfg = RunConfig.desk(dim)
    grid = S.desk_grid(cfg)
    for i in range(5):
        rng = S.trial_rng(0, "sets", i)
        F, cubes = S.random_F(rng, grid, cfg, (2.0**-6, 2.0**-1))
        assert 2.0**-6 <= F.measure() <= 2.0**-1
        E, _ = S.random_E(rng, grid, cfg)
        assert 0.5 <= E.sum() * grid.cell_volume <= 1.0
        N = S.random_choice(rng, grid, cfg)
        assert np.all(np.abs(N.values) <= cfg.freq_max)
        f2 = grid.refine(2)
        N2 = S.refine_choice(N, f2)
        assert N2.values.shape[:dim] == f2.shape


def test_random_rtree():
    cfg = RunConfig.desk(1)
    tiles = S.window_tiles(cfg)
    from dyadsum.geometry import is_rtree

    for i in range(5):
        rt = S.random_rtree(S.trial_rng(0, "tree", i), tiles, 2)
        assert is_rtree(rt.tree, 2) and len(rt.tree) <= rt.full


def test_report_reproducible_in_process():
    cfg = RunConfig.desk(1, trials=2, max_tiles=80)
    a = X.E5_shell_counting(cfg).dumps()
    b = X.E5_shell_counting(cfg).dumps()
    assert a == b
    c = X.E5_shell_counting(cfg.replace(seed=1)).dumps()
    assert a != c


@pytest.fixture
def small_conf(tmp_path):
    p = tmp_path / "small.conf"
    p.write_text("trials=2\nmax_tiles=60\n")
    return p


def test_cli_apply_fast_and_oracle(tmp_path, capsys):
    import subprocess
    import sys
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "scripts" / "make_inputs.py"
    subprocess.run([sys.executable, str(script), "--max-tiles", "80", "--out", str(tmp_path)], check=True, capture_output=True)
    base = ["apply", "--tiles", str(tmp_path / "tiles.json"), "--field", str(tmp_path / "F.field"),
            "--choice", str(tmp_path / "N.choice"), "--r", "2"]
    assert main(base + ["--out", str(tmp_path / "fast.field")]) == 0
    assert main(base + ["--oracle", "--out", str(tmp_path / "oracle.field")]) == 0
    a = read_field(tmp_path / "fast.field").samples
    b = read_field(tmp_path / "oracle.field").samples
    assert np.abs(a - b).max() <= 1e-10 * np.abs(b).max()
    out = capsys.readouterr().out.strip().splitlines()
    assert json.loads(out[-1])["tiles"] == 80


def test_cli_decompose_certify(tmp_path, small_conf, capsys):
    assert main(["decompose", "--certify", "--config", str(small_conf), "--out", str(tmp_path)]) == 0
    dec = json.loads((tmp_path / "decomposition.json").read_text())
    assert dec["n_tiles"] == 60
    assert (tmp_path / "certificates.csv").read_text().startswith("property,")
    assert json.loads(capsys.readouterr().out)["failures"] == 0


def test_cli_cz(tmp_path, small_conf):
    assert main(["cz", "--config", str(small_conf), "--top", "1:0", "--q", "1.5", "--c", "0.5", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "cz.json").read_text())
    assert rep["top"] == {"k": 1, "m": [0]}


def test_cli_verify_scan_calibrate(tmp_path, small_conf):
    assert main(["verify", "--experiment", "E5", "--config", str(small_conf), "--out", str(tmp_path)]) == 0
    assert main(["scan", "--experiment", "E2", "--config", str(small_conf), "--out", str(tmp_path)]) == 0
    assert main(["calibrate-kappa", "--config", str(small_conf), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "kappa.conf").read_text().startswith("kappa=")
    for name in ("E5.json", "E2.json", "E2_scan.csv", "calibrate_kappa.json"):
        assert (tmp_path / name).exists()
    with pytest.raises(SystemExit):
        main(["verify", "--experiment", "E9", "--out", str(tmp_path)])


def test_cli_seed_changes_report(tmp_path, small_conf):
    main(["verify", "--experiment", "E5", "--config", str(small_conf), "--out", str(tmp_path / "a"), "--seed", "0"])
    main(["verify", "--experiment", "E5", "--config", str(small_conf), "--out", str(tmp_path / "b"), "--seed", "1"])
    main(["verify", "--experiment", "E5", "--config", str(small_conf), "--out", str(tmp_path / "c"), "--seed", "0"])
    a, b, c = ((tmp_path / d / "E5.json").read_bytes() for d in "abc")
    assert a == c and a != b
