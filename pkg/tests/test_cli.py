import json
import subprocess
import sys

import numpy as np
import pytest

from hydrarm import io, testbed
from hydrarm.cli import main
from hydrarm.hydraulics import force_balance_residual


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workflow(tmp_path_factory):
    """Noiseless chain through every stage."""
    out = tmp_path_factory.mktemp("clean")
    assert run("--out", out, "simulate-cylinder", "--noise", "0") == 0
    assert run("--out", out, "identify-friction") == 0
    assert run("--out", out, "design-trajectory", "--budget", 150) == 0
    assert run("--out", out, "identify-dynamics", "--simulate", "--noise", "0") == 0
    assert run("--out", out, "report") == 0
    return out


def test_default_cylinder_files(tmp_path):
    assert run("--out", tmp_path, "simulate-cylinder") == 0
    files = sorted((tmp_path / "cylinders").glob("*.csv"))
    assert len(files) == 6
    rec = io.read_cylinder_csv(files[0])
    assert len(rec) == round(3 * 2 * np.pi / 0.05 * 50)
    assert rec.t[1] - rec.t[0] == pytest.approx(0.02)
    assert rec.meta["cylinder"]["m"] == testbed.PISTON_MASSES[0]
    assert len(rec.meta["config_fingerprint"]) == 64


def test_clean_records_balance(workflow):
    for j in range(1, 7):
        rec = io.read_cylinder_csv(workflow / "cylinders" / f"cylinder_j{j}.csv")
        res = force_balance_residual(testbed.cylinder_params(j), rec)
        assert np.abs(res).max() < 1e-10


def test_seed_gives_identical_bytes(tmp_path):
    for d in ("a", "b"):
        assert run("--out", tmp_path / d, "--seed", 7, "simulate-cylinder", "--joints", "2") == 0
    a = (tmp_path / "a" / "cylinders" / "cylinder_j2.csv").read_bytes()
    b = (tmp_path / "b" / "cylinders" / "cylinder_j2.csv").read_bytes()
    assert a == b


def test_friction_recovered_and_estimators_agree(workflow):
    doc = json.loads((workflow / "friction.json").read_text())
    for e in doc["joints"]:
        ref = np.array(testbed.STRIBECK_TABLE[e["joint"] - 1])
        got = np.array([e["selected"][k] for k in ("fc", "fv", "fs")])
        assert np.all(np.abs(got - ref) / np.abs(ref) < 1e-6)
        assert e["batch_rls_max_rel_diff"] < 1e-6
    assert (workflow / "friction_curves" / "curve_j3.csv").read_text().startswith("v,F_d\n")


def test_friction_on_noisy_records(tmp_path):
    assert run("--out", tmp_path, "simulate-cylinder") == 0
    assert run("--out", tmp_path, "identify-friction", "--estimator", "rls") == 0
    doc = json.loads((tmp_path / "friction.json").read_text())
    for e in doc["joints"]:
        ref = np.array(testbed.STRIBECK_TABLE[e["joint"] - 1])
        got = np.array([e["rls"][k] for k in ("fc", "fv", "fs")])
        assert np.all(np.abs(got - ref) / np.abs(ref) < 0.02)


def test_empty_record_file(tmp_path, capsys):
    (tmp_path / "cylinder_j1.csv").write_text("")
    assert run("--out", tmp_path, "identify-friction", "--input", tmp_path / "cylinder_j1.csv") == 1
    assert "empty" in capsys.readouterr().err


def test_rank_deficiency_reported_per_joint(tmp_path, capsys):
    assert run("--out", tmp_path, "simulate-cylinder", "--joints", "1,2") == 0
    assert run("--out", tmp_path, "identify-friction", "--free-mass") == 1
    err = capsys.readouterr().err
    assert "joint 1" in err and "joint 2" in err and "rank deficient" in err


def test_free_mass_with_two_tones(tmp_path):
    assert run("--out", tmp_path, "simulate-cylinder", "--joints", "3",
               "--second-tone", "0.01,0.5") == 0
    assert run("--out", tmp_path, "identify-friction", "--free-mass") == 0
    e = json.loads((tmp_path / "friction.json").read_text())["joints"][0]
    assert abs(e["batch"]["m"] - testbed.PISTON_MASSES[2]) / testbed.PISTON_MASSES[2] < 0.01


def test_design_outputs(workflow, capsys):
    design = json.loads((workflow / "design.json").read_text())
    assert design["feasible"] and np.isfinite(design["kappa"])
    assert design["n_params_full"] == 42
    header = (workflow / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,q1,") and header.endswith("ddq6")


def test_design_reports_42(tmp_path, capsys):
    assert run("--out", tmp_path, "design-trajectory", "--nH", 3, "--budget", 100) == 0
    assert "before boundary elimination: 42" in capsys.readouterr().out


def test_table3_preset_reported(tmp_path, capsys):
    assert run("--out", tmp_path, "design-trajectory", "--preset", "table3") == 0
    out = capsys.readouterr().out
    assert "feasible: False" in out and "violation" in out
    assert json.loads((tmp_path / "design.json").read_text())["preset"] == "table3"


def test_budget_floor(tmp_path, capsys):
    assert run("--out", tmp_path, "design-trajectory", "--budget", 50) == 1
    assert "at least 100" in capsys.readouterr().err


def test_noiseless_identification(workflow):
    doc = json.loads((workflow / "identification.json").read_text())
    assert max(doc["rsd"].values()) < 1e-6
    assert doc["n_base_params"] == 18
    res = (workflow / "residuals" / "residual_j4.csv").read_text().splitlines()
    assert res[0] == "t,tau_measured,tau_predicted" and len(res) == 1001


def test_noisy_identification(workflow, tmp_path):
    out = tmp_path / "noisy"
    assert run("--out", out, "simulate-cylinder") == 0
    assert run("--out", out, "identify-friction") == 0
    assert run("--out", out, "identify-dynamics", "--simulate", "--noise", 0.1, "--seed", 1,
               "--trajectory", workflow / "trajectory.json") == 0
    doc = json.loads((out / "identification.json").read_text())
    assert max(doc["rsd"].values()) < 0.4 and max(doc["rsd_abs_nm"].values()) < 0.4


def test_missing_friction_is_an_error(workflow, tmp_path, capsys):
    args = ("--out", tmp_path, "identify-dynamics", "--simulate",
            "--trajectory", workflow / "trajectory.json")
    assert run(*args) == 1
    assert "--skip-friction" in capsys.readouterr().err
    assert run(*args, "--skip-friction") == 0
    doc = json.loads((tmp_path / "identification.json").read_text())
    assert doc["friction_source"] == "skipped"


def test_dataset_input(workflow, tmp_path):
    assert run("--out", tmp_path, "identify-dynamics", "--dataset", workflow / "dataset.csv",
               "--friction", workflow / "friction.json") == 0
    doc = json.loads((tmp_path / "identification.json").read_text())
    assert max(doc["rsd"].values()) < 1e-6


def test_report_full(workflow):
    text = (workflow / "summary.md").read_text()
    rows = [l for l in text.splitlines() if l.startswith("| ") and "|" in l[2:]]
    base_rows = [l for l in rows if l.split("|")[1].strip().isdigit() and "mr" in l or "Izz" in l]
    assert len(base_rows) == 18
    assert "MISSING" not in text
    again = workflow / "summary.md"
    before = again.read_bytes()
    assert run("--out", workflow, "report") == 0
    assert again.read_bytes() == before


def test_report_partial(tmp_path):
    assert run("--out", tmp_path, "design-trajectory", "--preset", "table3") == 0
    assert run("--out", tmp_path, "report") == 0
    text = (tmp_path / "summary.md").read_text()
    assert "friction: MISSING" in text and "identification: MISSING" in text


def test_report_nothing(tmp_path):
    assert run("--out", tmp_path, "report") == 1


def test_env_var_sets_output(tmp_path, monkeypatch):
    monkeypatch.setenv("HYDRARM_DATA_DIR", str(tmp_path / "env"))
    assert run("simulate-cylinder", "--joints", "1") == 0
    assert (tmp_path / "env" / "cylinders" / "cylinder_j1.csv").exists()


def test_config_file(tmp_path):
    cfg = {"seed": 3, "out": str(tmp_path / "c"),
           "simulate-cylinder": {"joints": [4], "noise": 0, "periods": 1}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert run("--config", tmp_path / "cfg.json", "simulate-cylinder") == 0
    meta = json.loads((tmp_path / "c" / "cylinders" / "cylinder_j4.meta.json").read_text())
    assert meta["seed"] == 3 and meta["noise"] == {} and meta["periods"] == 1
    assert run("--config", tmp_path / "missing.json", "report") == 1


def test_flags_after_subcommand(tmp_path):
    assert run("simulate-cylinder", "--out", tmp_path, "--seed", 2, "--joints", "5") == 0
    assert json.loads((tmp_path / "cylinders" / "cylinder_j5.meta.json").read_text())["seed"] == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["design-trajectory", "--preset", "bogus"])
    assert info.value.code == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hydrarm.cli", "--out", str(tmp_path),
                           "design-trajectory", "--preset", "table3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "[time]" in proc.stderr and "[time]" not in proc.stdout
