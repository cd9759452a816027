import json
import subprocess
import sys

import pytest

from dualrd.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 and out.strip() else None), err


def test_constants_duality(capsys):
    code, out, _ = run(capsys, "constants", "duality", "--a", "1", "--b", "3", "--q", "2")
    assert code == 0
    assert out["D"] == 1.0 and out["prefactor"] == 4.0 and out["condition_lhs"] == 0.5
    assert out["anchor"] == "duality.forward_lp_bound"


def test_constants_lemma36_and_hypothesis_exit(capsys):
    code, out, _ = run(capsys, "constants", "lemma36", "--N", "2", "--q0", "2.5")
    assert code == 0 and out["steps"] == 2 and out["terminal"] >= 4
    code, _, err = run(capsys, "constants", "lemma36", "--N", "2", "--q0", "2")
    assert code == 3 and "q0 > (N+2)/2" in err


@pytest.mark.parametrize(
    "argv,key,value",
    [
        (["constants", "lemma33", "--N", "3", "--q", "2"], "terminal", 6.0),
        (["constants", "lemma33", "--N", "2", "--q", "2"], "terminal", "inf"),
        (["constants", "zk", "--N", "2", "--Q", "3", "--z0", "4.5"], "steps_to_target", 1),
        (["constants", "pn", "--p0", "2.5"], "steps_to_target", 2),
        (["constants", "rein", "--N", "2", "--p", "2"], "r_max", "inf"),
        (["constants", "select2d", "--a", "1", "--b", "3", "--C3h", "1"], "p_prime", 1.55),
        (["constants", "interp", "--m", "2", "--r", "2", "--C3h", "1"], "value", 0.5),
    ],
)
def test_constants_values(capsys, argv, key, value):
    code, out, _ = run(capsys, *argv)
    assert code == 0
    assert out[key] == (pytest.approx(value) if isinstance(value, float) else value)


def test_constants_missing_constant_is_config_error(capsys):
    code, _, err = run(capsys, "constants", "duality", "--a", "1", "--b", "3", "--q", "1.5")
    assert code == 2 and "--C3h" in err


def test_prop4_from_network_file(capsys, tmp_path):
    net = tmp_path / "net.toml"
    net.write_text("alpha = [2, 1, 0]\nbeta = [0, 0, 3]\nk = 1.0\nl = 1.0\nd = [1.0, 1.2, 1.1]\n")
    code, out, _ = run(capsys, "constants", "prop4", "--network", str(net), "--C3h", "0.9")
    assert code == 0 and out["Q"] == 3 and out["weak_ok"] is True
    bad = tmp_path / "bad.toml"
    bad.write_text("alpha = [1, 0]\nbeta = [2, 1]\nk = 1.0\nl = 1.0\nd = [1.0, 1.0]\n")
    assert run(capsys, "constants", "prop4", "--network", str(bad))[0] == 3


def test_equilibrium_command(capsys):
    code, out, _ = run(capsys, "equilibrium", "--masses", "1,1,1")
    assert code == 0 and out["values"] == pytest.approx([0.5] * 4)
    assert run(capsys, "equilibrium", "--masses", "1,1")[0] == 2


def test_simulate_writes_run_directory(capsys, tmp_path):
    argv = ["simulate", "--grid", "8x8", "--extent", "4", "--T", "0.5", "--dt", "0.05",
            "--sample-every", "2", "--out", str(tmp_path)]
    code, out, _ = run(capsys, *argv)
    assert code == 0 and out["max_mass_drift"] < 1e-12
    first = (tmp_path / out["run_dir"].split("/")[-1] / "series.csv").read_bytes()
    code, out2, _ = run(capsys, *argv)
    assert out2["run_dir"] == out["run_dir"]
    assert (tmp_path / out["run_dir"].split("/")[-1] / "series.csv").read_bytes() == first
    manifest = json.loads((tmp_path / out["run_dir"].split("/")[-1] / "manifest.json").read_text())
    assert manifest["anchors"] == ["reaction_system.simulation"]


def test_simulate_blow_up_exit_code(capsys, tmp_path):
    net = tmp_path / "auto.json"
    net.write_text(json.dumps({"alpha": [1, 0], "beta": [2, 0], "k": 0.0, "l": 1.0, "d": [1.0, 1.0]}))
    code, _, err = run(capsys, "simulate", "--network", str(net), "--initial", "1,1", "--grid", "8",
                       "--T", "20", "--dt", "0.1", "--ceiling", "5", "--out", str(tmp_path))
    assert code == 4 and "ceiling" in err


def test_estimate_c_and_verify(capsys, tmp_path):
    code, out, _ = run(capsys, "estimate-c", "--m", "2", "--grid", "16", "--samples", "4", "--out", str(tmp_path))
    assert code == 0 and out["provenance"] == "empirical" and out["value"] <= 0.5
    code, out, _ = run(capsys, "verify", "--grid", "16x16", "--T", "0.2", "--dt", "0.05", "--samples", "3",
                       "--out", str(tmp_path))
    assert code == 0 and out["all_hold"] and out["max_ratio"] <= 1


def test_experiment_with_toml_config(capsys, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('grid = "16x16"\nextent = "4"\nT = 2.0\ndt = 0.01\nsample_every = 5\nt_start = 0.5\n')
    code, out, _ = run(capsys, "experiment", "prop2", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 0 and out["status"] == "ok" and out["config"]["T"] == 2.0
    # flags win over the file
    code, out, _ = run(capsys, "experiment", "prop2", "--config", str(cfg), "--T", "1.0", "--out", str(tmp_path))
    assert out["config"]["T"] == 1.0


def test_config_supplies_required_options(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("N = 2\nq0 = 2.5\n")
    code, out, _ = run(capsys, "constants", "lemma36", "--config", str(cfg))
    assert code == 0 and out["steps"] == 2


def test_unknown_config_key_is_rejected(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("N = 2\nflavour = 1\n")
    code, _, err = run(capsys, "constants", "lemma36", "--config", str(cfg))
    assert code == 2 and "flavour" in err


def test_argparse_errors_exit_two(capsys):
    assert main(["constants", "duality", "--a", "1"]) == 2
    assert main(["nonsense"]) == 2


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "dualrd.cli", "constants", "pn", "--p0", "3"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["anchor"] == "degenerate_diffusion.exponent_sequence"
