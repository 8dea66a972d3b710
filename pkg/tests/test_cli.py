import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from phononbs.cli import main, run
from phononbs.core import OperatingPoint, to_angular
from phononbs.effective_coupling import build_effective_model, resonance_solver

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
FAST = ["sidebands", "spectroscopy", "effective", "chevron", "three-mode", "tomography",
        "calibrate", "oracle-check"]


def config(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def shipped(command):
    return CONFIGS / f"{command.replace('-', '_')}.json"


@pytest.mark.parametrize("command", FAST)
def test_shipped_configs_run(tmp_path, command):
    out = tmp_path / "out"
    assert run(command, shipped(command), out) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == command
    for name in manifest["outputs"]:
        assert (out / name).exists()
    assert "device" in manifest["config"] and "rng_seed" in manifest["config"]


@pytest.mark.parametrize("command", ["three-mode", "tomography", "calibrate", "chevron"])
def test_byte_identical_reruns(tmp_path, command):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(command, shipped(command), a) == 0
    assert run(command, shipped(command), b) == 0
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_seed_override(tmp_path):
    run("three-mode", shipped("three-mode"), tmp_path / "a")
    run("three-mode", shipped("three-mode"), tmp_path / "b", seed=99)
    a = (tmp_path / "a" / "chevron.csv").read_bytes()
    assert a != (tmp_path / "b" / "chevron.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 99


def test_manifest_reruns(tmp_path):
    run("three-mode", shipped("three-mode"), tmp_path / "a")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    cfg = config(tmp_path, manifest["config"], "again.json")
    assert run("three-mode", cfg, tmp_path / "b") == 0
    for name in manifest["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_effective_example(tmp_path):
    assert run("effective", shipped("effective"), tmp_path) == 0
    data = json.loads((tmp_path / "effective.json").read_text())
    g_bc = data["couplings_khz"]["b-c"]
    assert abs(g_bc) == pytest.approx(15.6, rel=0.15)
    assert data["resonance"]["offset_from_fsr_khz"] == pytest.approx(-44, abs=10)


def test_hom_ideal_ratio(tmp_path, device):
    op = OperatingPoint(0.85, "b", to_angular(1.2))
    op = op.with_delta_21(resonance_solver(device, op, ("b", "c")).delta_21_star)
    g = abs(build_effective_model(device, op, ["b", "c"]).g("b", "c"))
    tau = math.pi / (4 * g)
    cfg = config(tmp_path, {
        "operating_point": {"modulation_depth": 0.85, "detuning_tilde_mhz": 1.2},
        "hom": {"gate_times_us": [tau], "decoherence": False, "residual_jc": False}})
    assert run("hom", cfg, tmp_path / "out") == 0
    row = (tmp_path / "out" / "hom.csv").read_text().splitlines()[1].split(",")
    assert float(row[-1]) == pytest.approx(1.0, abs=1e-9)


def test_fit_pipeline(tmp_path):
    three = tmp_path / "three"
    assert run("three-mode", shipped("three-mode"), three) == 0
    cfg = config(tmp_path, {
        "operating_point": {"modulation_depth": 1.43, "detuning_tilde_mhz": 1.0},
        "fit": {"data": "three/chevron.csv", "readout_offset": 0.06, "method": "least-squares"}})
    assert run("fit", cfg, tmp_path / "fit") == 0
    fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
    truth = json.loads((three / "truth.json").read_text())
    for k, v in fit["fitted"].items():
        if k.startswith("g_"):
            assert v == pytest.approx(truth[k], rel=0.05), k
        else:
            assert abs(v - truth[k]) < 2.0, k
        lo, hi = fit["error_bars"][k]
        assert lo <= v <= hi


def error_of(path):
    return json.loads((path / "error.json").read_text())


@pytest.mark.parametrize("data, field", [
    ({"device": "table_s1", "bogus": 1}, "bogus"),
    ({"device": {"profile": "table_s1", "qubit": {"t1_us": -2}}}, None),
    ({"device": "table_s1"}, "drive"),
])
def test_config_errors_exit_2(tmp_path, data, field):
    cfg = config(tmp_path, data)
    assert run("spectroscopy", cfg, tmp_path / "out") == 2
    err = error_of(tmp_path / "out")
    assert err["error"]
    if field:
        assert err["field"].startswith(field)


def test_unparseable_and_missing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    assert run("sidebands", bad, tmp_path / "o1") == 2
    assert "line" in error_of(tmp_path / "o1")
    assert run("sidebands", tmp_path / "missing.json", tmp_path / "o2") == 2
    cfg = config(tmp_path, {"fit": {"data": "absent.csv"}})
    assert run("fit", cfg, tmp_path / "o3") == 2


def test_numerical_failure_exit_3(tmp_path):
    # qubit sitting on the reference mode: sideband collision
    cfg = config(tmp_path, {"operating_point": {"modulation_depth": 0.61, "detuning_tilde_mhz": 0.0},
                            "effective": {"modes": ["b", "c"]}})
    assert run("effective", cfg, tmp_path / "out") == 3
    assert error_of(tmp_path / "out")["error"]


def test_invariant_violation_exit_4(tmp_path, monkeypatch):
    from phononbs import checks

    monkeypatch.setattr(checks, "_mle_check", lambda rng: checks.CheckResult("mle_physical", 1.0, 0.0))
    assert run("oracle-check", shipped("oracle-check"), tmp_path) == 4
    rows = (tmp_path / "oracle_checks.csv").read_text().splitlines()
    assert any(r.startswith("mle_physical") and r.endswith(",0") for r in rows)
    assert error_of(tmp_path)["error"]


def test_oracle_checks_all_pass(tmp_path):
    assert run("oracle-check", shipped("oracle-check"), tmp_path) == 0
    rows = (tmp_path / "oracle_checks.csv").read_text().splitlines()[1:]
    assert len(rows) >= 9 and all(r.endswith(",1") for r in rows)


def test_main_and_console_entry(tmp_path):
    assert main(["sidebands", "--config", str(shipped("sidebands")), "--out", str(tmp_path / "a")]) == 0
    with pytest.raises(SystemExit) as info:
        main(["nonsense", "--config", "x", "--out", "y"])
    assert info.value.code == 2
    proc = subprocess.run([sys.executable, "-m", "phononbs.cli", "calibrate", "--config",
                           str(shipped("calibrate")), "--out", str(tmp_path / "b"), "--threads", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert shutil.which("phononbs") is None or subprocess.run(
        ["phononbs", "--version"], capture_output=True, text=True).stdout.strip()


def test_sidebands_summary(tmp_path):
    run("sidebands", shipped("sidebands"), tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["three_mode_equal_depth"] == pytest.approx(1.43, abs=0.01)
    rows = (tmp_path / "sidebands.csv").read_text().splitlines()
    assert rows[0] == "modulation_depth,n,amplitude"
