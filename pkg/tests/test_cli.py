import filecmp
import json
import os

import pytest

from dcslab import __version__
from dcslab.cli import EXIT_FAIL, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE, main
from dcslab.config import RunConfig, build_config, parse_config_text
from dcslab.errors import ConfigError

FAST = ["--replicas", "20", "--set", "arcsine_paths=500", "--set", "tail_paths=200", "--bridges", "2000"]


def test_config_text_and_override():
    vals = parse_config_text("# comment\nseed = 5\nH = 12.5  # inline\noracle = iid-linear\nn_max = none\n")
    assert vals == {"seed": 5, "H": 12.5, "oracle": "iid-linear", "n_max": None}
    cfg = build_config(vals, {"seed": 9})
    assert cfg.seed == 9 and cfg.H == 12.5


@pytest.mark.parametrize("text", ["bogus = 1", "seed 5", "seed = x", "H = -1"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        build_config(parse_config_text(text))


def test_rational_outputs_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["rational", "--out-dir", str(a)]) == EXIT_OK
    assert main(["rational", "--out-dir", str(b)]) == EXIT_OK
    cmp = filecmp.dircmp(a, b)
    assert sorted(os.listdir(a)) == sorted(os.listdir(b)) and not cmp.diff_files
    summary = json.loads((a / "summary.json").read_text())
    assert summary["command"] == "rational" and summary["version"] == __version__
    assert summary["suites"][0]["pass"] is True
    assert (a / "residual_curve.csv").read_text().startswith(f"# dcslab {__version__}; seed=")
    out = capsys.readouterr().out
    assert "rational: PASS" in out


def test_every_file_embeds_config(tmp_path):
    main(["duality", "--out-dir", str(tmp_path), "--instances", "10"])
    for name in os.listdir(tmp_path):
        text = (tmp_path / name).read_text()
        if name.endswith(".json"):
            d = json.loads(text)
            assert d["version"] == __version__ and d["config"]["instances"] == 10
        else:
            assert text.startswith("# dcslab")


def test_json_flag(tmp_path, capsys):
    assert main(["duality", "--out-dir", str(tmp_path), "--instances", "5", "--json"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d["suites"][0]["name"] == "duality"


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("L = 32\nsweeps = 7\n")
    out = tmp_path / "o"
    assert main(["rational", "--config", str(cfg), "--L", "64", "--out-dir", str(out)]) == EXIT_OK
    d = json.loads((out / "summary.json").read_text())["config"]
    assert d["L"] == 64 and d["sweeps"] == 7


def test_usage_errors(tmp_path):
    out = str(tmp_path)
    assert main(["minima", "--m", "64", "--depth", "7", "--out-dir", out]) == EXIT_USAGE
    assert main(["density", "--a", "-1", "--out-dir", out]) == EXIT_USAGE
    assert main(["coupling", "--set", "oracle_scale=1.5", "--out-dir", out]) == EXIT_USAGE
    assert main(["coupling", "--oracle", "nope", "--out-dir", out]) == EXIT_USAGE
    assert main(["rational", "--config", str(tmp_path / "missing.cfg"), "--out-dir", out]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text('{"ground": 2, "mu": [1')
    assert main(["duality", "--instance-file", str(bad), "--out-dir", out]) == EXIT_USAGE


def test_instance_file(tmp_path):
    inst = tmp_path / "i.json"
    inst.write_text(json.dumps({"ground": 2, "mu": ["1/2", "1/2"], "nu": ["1/2", "1/2"], "blocks": [[[0], [0]]]}))
    out = tmp_path / "o"
    assert main(["duality", "--instance-file", str(inst), "--out-dir", str(out)]) == EXIT_OK
    sol = json.loads((out / "instance_solution.json").read_text())
    assert sol["value"] == "1/2" and sol["plan"] == [[0, 0, "1/2"]]


def test_selftest(tmp_path):
    assert main(["selftest", "--out-dir", str(tmp_path)]) == EXIT_OK


def test_statistical_failure_exit_code(tmp_path):
    # 20 replicas cannot meet the fixed |corr| < 0.05 screen
    assert main(["coupling", "--replicas", "20", "--H", "15", "--level", "5", "--out-dir", str(tmp_path)]) == EXIT_FAIL


def test_minima_and_density_small(tmp_path):
    assert main(["minima", *FAST, "--out-dir", str(tmp_path / "m")]) in (EXIT_OK, EXIT_FAIL)
    assert (tmp_path / "m" / "minimizers.csv").exists()
    assert main(["density", *FAST, "--out-dir", str(tmp_path / "d")]) in (EXIT_OK, EXIT_FAIL)
    adj = json.loads((tmp_path / "d" / "adjudication.json").read_text())
    assert set(adj["ks"]) == {"joint", "bare"}


def test_internal_violation_exit_code(tmp_path, monkeypatch):
    from dcslab import suites
    from dcslab.errors import ConsistencyError

    def boom(cfg, out):
        raise ConsistencyError("synthetic")

    monkeypatch.setitem(suites.SUITES, "rational", boom)
    assert main(["rational", "--out-dir", str(tmp_path)]) == EXIT_INTERNAL
