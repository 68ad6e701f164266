import json
import shutil
import subprocess
import textwrap

import numpy as np
import pytest

from hopfluid import cli
from hopfluid.config import RunConfig, canonical_text, parse_config
from hopfluid.errors import ConfigError, ConservationViolated, UnstableStep

DISCRETE = textwrap.dedent(
    """\
    [run]
    mode = discrete
    steps = 40
    output_every = 10

    [lattice]
    sites = 16
    spacing = 0.0625
    gamma = 1.0
    hop_rate = 0.05

    [potential]
    kind = linear
    slope = 0.5

    [density]
    kind = gaussian
    amplitude = 0.4
    center = 0.5
    width = 0.1
    background = 0.1

    [temperature]
    kind = linear
    left = 0.8
    right = 1.2
    """
)

CONTINUUM = DISCRETE.replace("mode = discrete", "mode = continuum")
ORACLE = textwrap.dedent(
    """\
    [run]
    mode = oracle-check
    steps = 3

    [lattice]
    sites = 3
    spacing = 1.0
    energy_quantum = 0.1
    hop_rate = 0.5

    [density]
    kind = table
    values = 0.2, 0.5, 0.7

    [temperature]
    kind = constant
    value = 0.3
    """
)


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------- config


def test_defaults_and_derived_quantum():
    cfg = parse_config(DISCRETE)
    assert cfg.sum_mode == "finite" and cfg.rho_m == 1.0 and cfg.k_cap is None
    assert cfg.energy_quantum == pytest.approx(0.0625)
    assert cfg.tolerances.conservation == 1e-10
    assert cfg.length == pytest.approx(1.0)


def test_every_violation_reported_with_line_numbers():
    bad = DISCRETE.replace("sites = 16", "sites = -3").replace("hop_rate = 0.05", "hop_rate = abc")
    bad += "\n[tolerances]\nbogus = 1\n"
    with pytest.raises(ConfigError) as info:
        parse_config(bad)
    msgs = info.value.violations
    assert len(msgs) >= 3
    assert any(m.startswith("[lattice] sites (line 7)") for m in msgs)
    assert any(m.startswith("[lattice] hop_rate (line 10)") for m in msgs)
    assert any("[tolerances] bogus" in m for m in msgs)


def test_hopping_cutoff_message():
    bad = DISCRETE.replace("gamma = 1.0", "energy_quantum = 20.0")
    with pytest.raises(ConfigError) as info:
        parse_config(bad)
    assert any("2*hop_rate*energy_quantum" in m and "must be < 1" in m for m in info.value.violations)


def test_unknown_section_and_mode():
    with pytest.raises(ConfigError) as info:
        parse_config(DISCRETE.replace("mode = discrete", "mode = warp") + "\n[extra]\na = 1\n")
    text = str(info.value)
    assert "[run] mode" in text and "[extra]" in text


def test_k_cap_above_limit_rejected():
    with pytest.raises(ConfigError, match="k_cap"):
        parse_config(DISCRETE.replace("hop_rate = 0.05", "hop_rate = 0.05\nk_cap = 100000"))


def test_oracle_site_limit():
    with pytest.raises(ConfigError, match="sites"):
        parse_config(ORACLE.replace("sites = 3", "sites = 6").replace("0.2, 0.5, 0.7", "0.1, 0.1, 0.1, 0.1, 0.1, 0.1"))


def test_experiment_keys_checked_against_signature():
    cfg = parse_config("[run]\nmode = soret\n\n[experiment]\nlevels = (8, 16)\n")
    assert cfg.experiment_kwargs() == {"levels": (8, 16)}
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config("[run]\nmode = soret\n\n[experiment]\nnonsense = 1\n")


@pytest.mark.parametrize("text", [DISCRETE, CONTINUUM, ORACLE, "[run]\nmode = dufour\n"])
def test_canonical_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(canonical_text(cfg))
    assert again == cfg
    assert canonical_text(again) == canonical_text(cfg)


# ---------------------------------------------------------------- CLI


@pytest.mark.parametrize(
    "text, files",
    [
        (DISCRETE, ["snapshots.csv"]),
        (CONTINUUM, ["snapshots.csv", "diagnostics_cells.csv", "diagnostics_faces.csv"]),
        (ORACLE, ["transition_matrix.csv", "oracle_marginals.csv"]),
        ("[run]\nmode = soret\n\n[experiment]\nlevels = (8, 16)\n", ["report.txt", "series.csv"]),
        ("[run]\nmode = dufour\n\n[experiment]\nlevels = (16, 64, 256)\n", ["report.txt", "series.csv"]),
        ("[run]\nmode = thermal-drift\n\n[experiment]\nnum_sites = 8\nbudget = 20000\nchange_tol = 1e-11\n",
         ["report.txt", "series.csv"]),
    ],
    ids=["discrete", "continuum", "oracle", "soret", "dufour", "thermal-drift"],
)
def test_each_mode_runs(tmp_path, text, files):
    out = tmp_path / "out"
    assert cli.main([str(write(tmp_path, text)), "--out", str(out)]) == cli.EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"config.ini", "report.json", "manifest.json", *files} <= names
    assert cli.SENTINEL not in names
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_status"] == 0 and "report.json" in manifest["files"]
    assert parse_config((out / "config.ini").read_text()) == parse_config(text)


def test_oracle_mode_reports_agreement(tmp_path):
    out = tmp_path / "o"
    assert cli.main([str(write(tmp_path, ORACLE)), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"]


def test_config_errors_exit_two(tmp_path, capsys):
    bad = DISCRETE.replace("gamma = 1.0", "energy_quantum = 20.0")
    assert cli.main([str(write(tmp_path, bad)), "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert "2*hop_rate*energy_quantum" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_missing_config_is_io_error(tmp_path):
    assert cli.main([str(tmp_path / "nope.ini")]) == cli.EXIT_IO


def test_failure_leaves_sentinel(tmp_path, monkeypatch):
    def broken(cfg, out, meta):
        raise ConservationViolated("drift 1e-3")

    monkeypatch.setitem(cli.RUNNERS, "discrete", broken)
    out = tmp_path / "out"
    assert cli.main([str(write(tmp_path, DISCRETE)), "--out", str(out)]) == cli.EXIT_CONSERVATION
    assert "drift" in (out / cli.SENTINEL).read_text()
    assert json.loads((out / "manifest.json").read_text())["exit_status"] == cli.EXIT_CONSERVATION


def test_exit_code_categories():
    assert cli.exit_code_for(UnstableStep("x")) == cli.EXIT_BOUNDS
    assert cli.exit_code_for(ConfigError(["x"])) == cli.EXIT_CONFIG
    assert cli.exit_code_for(RuntimeError("x")) == cli.EXIT_INTERNAL


def test_repeated_runs_are_byte_identical(tmp_path):
    path = write(tmp_path, CONTINUUM)
    for name in ("a", "b"):
        assert cli.main([str(path), "--out", str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").iterdir():
        if f.name == "manifest.json":
            continue
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["files"] == mb["files"] and ma["config_sha256"] == mb["config_sha256"]


def test_output_root_env_and_mode_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path / "root"))
    path = write(tmp_path, DISCRETE)
    assert cli.main([str(path), "--mode", "continuum", "--out", "rel"]) == 0
    out = tmp_path / "root" / "rel"
    assert parse_config((out / "config.ini").read_text()).mode == "continuum"
    assert (out / "diagnostics_cells.csv").exists()


def test_console_script(tmp_path):
    exe = shutil.which("simulate")
    if exe is None:
        pytest.skip("console script not on PATH")
    path = write(tmp_path, DISCRETE)
    res = subprocess.run([exe, str(path), "--out", str(tmp_path / "cs")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    data = np.genfromtxt(tmp_path / "cs" / "snapshots.csv", delimiter=",", names=True)
    assert data.dtype.names == ("step", "t", "x", "n", "K", "theta")


def test_flat_uniform_discrete_run_has_identical_snapshots(tmp_path):
    text = (DISCRETE.replace("kind = linear\nslope = 0.5", "kind = zero")
            .replace("kind = gaussian\namplitude = 0.4\ncenter = 0.5\nwidth = 0.1\nbackground = 0.1",
                     "kind = constant\nvalue = 0.3")
            .replace("kind = linear\nleft = 0.8\nright = 1.2", "kind = constant\nvalue = 1.0"))
    out = tmp_path / "flat"
    assert cli.main([str(write(tmp_path, text)), "--out", str(out)]) == 0
    data = np.genfromtxt(out / "snapshots.csv", delimiter=",", names=True)
    frames = np.unique(data["step"])
    assert frames.size == 5
    first = data[data["step"] == 0]
    for f in frames[1:]:
        other = data[data["step"] == f]
        assert np.array_equal(other["n"], first["n"]) and np.array_equal(other["K"], first["K"])


def test_dufour_mode_reports_factor_near_two(tmp_path):
    path = write(tmp_path, "[run]\nmode = dufour\n")
    assert cli.main([str(path), "--out", str(tmp_path / "d")]) == 0
    report = json.loads((tmp_path / "d" / "report.json").read_text())
    factor = next(m for m in report["measurements"] if m["name"] == "dufour_factor")
    assert abs(factor["value"] - 2) < 0.04


def test_readme_example_parses():
    import re
    from pathlib import Path

    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = re.search(r"```ini\n(.*?)```", readme, re.S).group(1)
    cfg = parse_config(block)
    assert cfg.mode == "discrete" and cfg.density.kind == "gaussian"
    assert cfg.energy_quantum == pytest.approx(0.015625)
