import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rydholo.cli import main
from rydholo.config import DEFAULTS, load_config, parse_config
from rydholo.model import ConfigurationError

ROOT = Path(__file__).resolve().parents[1]
BENCHMARK = ROOT / "configs" / "benchmark.ini"


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        rows = list(csv.reader(fh))
    assert first.startswith("# config=")
    return json.loads(first[len("# config="):]), rows


def test_benchmark_config_matches_defaults():
    rc = load_config(BENCHMARK)
    for sec, vals in DEFAULTS.items():
        for key, v in vals.items():
            if (sec, key) == ("simulation", "compare_v_mhz"):
                assert rc.section(sec)[key] == 306.0
            else:
                assert rc.section(sec)[key] == v, (sec, key)
    assert rc.resolved()["derived"]["V_solver_mhz_2pi"] == pytest.approx(257.94125, abs=1e-4)


def test_x2pi_flag():
    on = parse_config("[system]\ndelta1_mhz = 50\n").system()
    off = parse_config("[system]\nx2pi = false\ndelta1_mhz = 50\n").system()
    assert on.delta1 == pytest.approx(2 * np.pi * 50e6)
    assert off.delta1 == pytest.approx(50e6)
    # decay never carries 2 pi
    assert off.gamma_decay == on.gamma_decay == pytest.approx(2.4e3)


def test_explicit_gate_angles():
    g = parse_config("[gate]\ngamma = 3.0\ntheta = 1.0\nphi = 0.5\nt_us = 4\n").gate()
    assert (g.gamma, g.theta, g.phi, g.T) == (3.0, 1.0, 0.5, pytest.approx(4e-6))


@pytest.mark.parametrize(
    "text",
    [
        "[nonsense]\nx = 1\n",
        "[system]\nomega11 = 4\n",
        "[system]\nx2pi = maybe\n",
        "[system]\ndelta1_mhz = abc\n",
        "[system]\ndelta1_mhz = inf\n",
        "[gate]\npreset = SWAP\n",
        "[gate]\ngamma = 1.0\n",
        "[simulation]\nmodel = exact\n",
        "[transfer]\nbell_pair = 1\n",
        "[teleport]\ncontrol = 1, x\n",
        "not an ini",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[system]\nomega11_mhz = fast\n")
    assert main(["gate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "omega11_mhz" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main(["gate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_infeasible_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[gate]\nt_us = 0.2\n")
    assert main(["gate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
    assert "stretch" in capsys.readouterr().err


def test_cli_failed_check_exit_code(tmp_path):
    # uniform couplings do not transfer perfectly
    cfg = write(tmp_path, "[transfer]\ncouplings_mhz = 1, 1, 1, 1\nlab_check = false\n")
    out = tmp_path / "o"
    assert main(["transfer", "--config", str(cfg), "--out", str(out)]) == 3
    data = json.loads((out / "transfer.json").read_text(encoding="utf-8"))
    assert data["passed"] is False


def test_cli_bad_forced_outcome(tmp_path):
    cfg = write(tmp_path, "[teleport]\nruns = 2\n")
    assert main(["teleport", "--config", str(cfg), "--out", str(tmp_path / "o"), "--force-outcome", "rr"]) == 2


def test_transfer_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["transfer", "--config", str(BENCHMARK), "--out", str(out)]) == 0
    prov, rows = read_csv(out / "transfer_hops.csv")
    assert prov["command"] == "transfer" and prov["transfer"]["n_atoms"] == 6
    assert rows[0] == ["hop", "window", "pair", "duration_s", "t_end_s", "fidelity", "excitation_number"]
    assert [r[2] for r in rows[1:]] == ["1-4", "1-6"]
    for r in rows[1:]:
        assert float(r[5]) >= 1 - 1e-8
    data = json.loads((out / "transfer.json").read_text(encoding="utf-8"))
    assert list(data) == sorted(data)
    assert data["config"]["system"]["x2pi"] is True
    assert data["duration_over_pi_per_omega"] == pytest.approx(1, abs=1e-9)


def _tree(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("command, extra", [("transfer", []), ("convert", []), ("teleport", ["--seed", "3"])])
def test_outputs_are_deterministic(tmp_path, command, extra):
    cfg = write(tmp_path, "[teleport]\nruns = 20\n[transfer]\nlab_check = false\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([command, "--config", str(cfg), "--out", str(a)] + extra) == 0
    assert main([command, "--config", str(cfg), "--out", str(b)] + extra) == 0
    assert _tree(a) == _tree(b)


def test_teleport_seed_and_forced_outcome(tmp_path):
    cfg = write(tmp_path, "[teleport]\nruns = 8\n")
    out = tmp_path / "o"
    assert main(["teleport", "--config", str(cfg), "--out", str(out), "--seed", "5", "--force-outcome", "0r"]) == 0
    prov, rows = read_csv(out / "teleport_runs.csv")
    assert prov["seed"] == 5
    col = rows[0].index("outcome")
    assert {r[col] for r in rows[1:]} == {"0r"}
    data = json.loads((out / "teleport.json").read_text(encoding="utf-8"))
    assert data["counts"]["0r"] == 8


def test_convert_outputs(tmp_path):
    cfg = write(tmp_path, "[convert]\nkinds = ghz_to_cluster, w_to_cluster\n")
    out = tmp_path / "o"
    assert main(["convert", "--config", str(cfg), "--out", str(out)]) == 0
    _, rows = read_csv(out / "conversions.csv")
    assert rows[0] == ["kind", "source", "target", "branch", "probability", "fidelity", "gate_model"]
    assert len(rows) == 1 + 1 + 2
    data = json.loads((out / "conversions.json").read_text(encoding="utf-8"))
    assert data["passed"] is True
    for kind in ("ghz_to_cluster", "w_to_cluster"):
        assert data["conversions"][kind]["search_reproduces"] is True


def test_gate_effective_and_single_point_sweep_agree(tmp_path):
    text = "[simulation]\nmodel = effective\nsamples = 11\nfidelity_samples = 5\ncompare_v_mhz = none\n[sweep]\neps_min = 0\neps_max = 0\neps_points = 1\n"
    cfg = write(tmp_path, text)
    g, s = tmp_path / "g", tmp_path / "s"
    assert main(["gate", "--config", str(cfg), "--out", str(g)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(s)]) == 0
    summary = json.loads((g / "summary.json").read_text(encoding="utf-8"))
    sweep = json.loads((s / "sweep_laser.json").read_text(encoding="utf-8"))
    assert sweep["values"][0] == pytest.approx(summary["average_fidelity"], abs=1e-10)
    assert sweep["check"]["passed"]
    _, pops = read_csv(g / "populations.csv")
    assert pops[0][0] == "t_s" and len(pops) == 12
    _, sched = read_csv(g / "schedule.csv")
    assert sched[0] == ["t_s", "omega0_re_rad_s", "omega0_im_rad_s", "omega21_re", "omega21_im", "omega22_re", "omega22_im"]
    assert summary["V_source"] == "solver"


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "rydholo.cli", "--help"], capture_output=True, text=True, check=True)
    for cmd in ("gate", "sweep", "transfer", "teleport", "convert"):
        assert cmd in res.stdout
