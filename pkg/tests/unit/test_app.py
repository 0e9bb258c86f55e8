import json

import numpy as np
import pytest

from memlab.app import main, run_dir
from memlab.checkpoint import read_data, write_data
from memlab.config import load_config
from memlab.models import close_db, init_db, is_complete
from memlab.shortpulse import direct_data

SMALL = """
[run]
mode = "radial"
n = 3
delta = 0.1
t_end = 1.6

[grid]
N = 256

[diagnostics]
stations = 3
history_stride = 2
energy_resolution = 8

[output]
checkpoint_stride = 5
"""


def write_config(tmp_path, text=SMALL):
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


def summary(out, name):
    return json.loads((out / "reports" / f"{name}.json").read_text())


def test_gen_data_zero_amplitude(tmp_path):
    config = write_config(tmp_path, SMALL + "\n[profile]\nc0 = 0.0\nc1 = 0.0\n")
    out = tmp_path / "out"
    assert main(["gen-data", "--config", str(config), "--out", str(out)]) == 0
    state = read_data(out / "runs" / "radial-n3-delta0.1-N256" / "data.memb")
    assert not state.phi.any() and not state.psi.any()
    result = summary(out, "gen-data")
    assert result["exit_code"] == 0
    assert result["runs"][0]["outputs"] == [
        "runs/radial-n3-delta0.1-N256/data.memb",
        "runs/radial-n3-delta0.1-N256/constraints.csv",
    ]
    assert all(check["passed"] for check in result["checks"].values())
    assert "notice" in result
    assert (out / "reports" / "gen-data.txt").read_text().startswith("memlab gen-data")


def test_malformed_delta(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["gen-data", "--config", str(config), "--out", str(tmp_path / "out"), "--delta", "0"]) == 1
    assert "run.delta" in capsys.readouterr().err
    bad = write_config(tmp_path, "[run]\ndelta = 0\n")
    assert main(["gen-data", "--config", str(bad)]) == 1
    assert "run.delta" in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main(["evolve", "--delta", "wide"]) == 1
    assert main(["launch"]) == 1
    assert main(["gen-data", "--config", str(tmp_path / "absent.toml")]) == 1
    assert "not found" in capsys.readouterr().err


def test_evolve_needs_data(tmp_path, capsys):
    config = write_config(tmp_path)
    assert main(["evolve", "--config", str(config), "--out", str(tmp_path / "out")]) == 1
    assert "gen-data" in capsys.readouterr().err
    result = summary(tmp_path / "out", "evolve")
    assert result["runs"][0]["status"] == "failed"


def test_evolve_and_resume_bit_exact(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    common = ["--config", str(config), "--out", str(out)]
    assert main(["gen-data", *common]) == 0
    assert main(["evolve", *common]) == 0
    directory = out / "runs" / "radial-n3-delta0.1-N256"
    for name in ("final.memb", "monitor.csv", "flux.csv", "cones.csv", "region_one.csv", "scalars.csv"):
        assert (directory / name).is_file()
    result = summary(out, "evolve")
    run = result["runs"][0]
    assert run["status"] == "ok" and run["final_t"] == pytest.approx(1.6)
    assert run["min_g"] > 0.5
    assert "runs/radial-n3-delta0.1-N256/final.memb" in run["outputs"]

    full = (directory / "final.memb").read_bytes()
    checkpoints = sorted((out / "checkpoints" / "radial-n3-delta0.1-N256").glob("step_*.memb"))
    assert len(checkpoints) >= 2
    assert main(["evolve", *common, "--resume", str(checkpoints[1])]) == 0
    assert (directory / "final.memb").read_bytes() == full


def test_resume_rejects_foreign_checkpoint(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    common = ["--config", str(config), "--out", str(out)]
    assert main(["gen-data", *common]) == 0
    assert main(["gen-data", *common, "--delta", "0.05"]) == 0
    foreign = out / "runs" / "radial-n3-delta0.05-N256" / "data.memb"
    assert main(["evolve", *common, "--resume", str(foreign)]) == 1


def test_outputs_are_deterministic(tmp_path):
    config = write_config(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["gen-data", "--config", str(config), "--out", str(out)]) == 0
        assert main(["evolve", "--config", str(config), "--out", str(out)]) == 0
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.suffix in (".csv", ".json", ".memb"))
    assert files
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_blow_up_injection(tmp_path):
    path = write_config(tmp_path, SMALL + "\n[profile]\nc0 = 10.0\nc1 = 10.0\n")
    out = tmp_path / "out"
    config = load_config(path).with_overrides(delta=0.2, out=out)
    write_data(run_dir(config, 0.2) / "data.memb", direct_data(0.2, config.profile(), config.grid()))
    assert main(["evolve", "--config", str(path), "--out", str(out), "--delta", "0.2"]) == 2
    result = summary(out, "evolve")
    assert result["exit_code"] == 2
    run = result["runs"][0]
    assert run["status"] == "failed"
    assert run["min_g"] < 0.5
    assert "runs/radial-n3-delta0.2-N256/monitor.csv" in run["outputs"]


def test_verify_list(tmp_path, capsys):
    assert main(["verify", "--list", "--out", str(tmp_path)]) == 0
    listed = capsys.readouterr().out
    assert "geometry:" in listed and "nullforms:" in listed


def test_verify_failures_exit_three(tmp_path):
    config = write_config(tmp_path, '[verify]\nsuites = ["scaling"]\ntolerance_scale = 1e-16\n')
    out = tmp_path / "out"
    assert main(["verify", "--config", str(config), "--out", str(out)]) == 3
    result = summary(out, "verify")
    assert result["suites"] == {"scaling": False}
    assert (out / "reports" / "verify.csv").read_text().startswith("# quantity=invariant suites")


def test_sweep_and_report(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MEMLAB_WORKERS", "1")
    bounds = "\n".join(f"{key} = -100.0" for key in ("L_sup", "Lb_last_slice", "Lb_decay", "region_one", "energy_Lbt", "energy_Lt"))
    text = SMALL.replace("delta = 0.1", "deltas = [0.2, 0.1, 0.05]") + f"\n[thresholds]\nmin_g = 0.01\n\n[thresholds.bounds]\n{bounds}\n"
    config = write_config(tmp_path, text)
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(config), "--out", str(out)]) == 0
    result = summary(out, "sweep")
    assert [run["delta"] for run in result["runs"]] == [0.05, 0.1, 0.2]
    assert all(run["status"] == "ok" for run in result["runs"])
    assert "L_sup" in result["fits"]
    assert (out / "reports" / "fits.csv").is_file()
    init_db(out / "registry.sqlite")
    try:
        assert all(is_complete("radial", 3, d, 256) for d in (0.05, 0.1, 0.2))
    finally:
        close_db()

    # completed runs are not evolved again
    before = (out / "runs" / "radial-n3-delta0.1-N256" / "final.memb").stat().st_mtime_ns
    assert main(["sweep", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "runs" / "radial-n3-delta0.1-N256" / "final.memb").stat().st_mtime_ns == before

    capsys.readouterr()
    assert main(["report", "--config", str(config), "--out", str(out)]) == 0
    assert "memlab sweep" in capsys.readouterr().out


def test_region_one_table(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    common = ["--config", str(config), "--out", str(out)]
    assert main(["gen-data", *common]) == 0
    assert main(["evolve", *common]) == 0
    lines = (out / "runs" / "radial-n3-delta0.1-N256" / "region_one.csv").read_text().splitlines()
    rows = [line.split(",") for line in lines if not line.startswith("#")][1:]
    assert [row[0] for row in rows] == ["-", "dt", "S"]
    assert all(np.isfinite(float(row[2])) for row in rows)


def test_gen_data_rrme_verdicts(tmp_path):
    text = SMALL.replace('t_end = 1.6', 't_end = 1.6\nprovenance = "rrme"')
    text += "\n[thresholds]\nnull_cone = 1e-12\nchart = 0.5\n"
    config = write_config(tmp_path, text)
    out = tmp_path / "out"
    assert main(["gen-data", "--config", str(config), "--out", str(out)]) == 3
    checks = summary(out, "gen-data")["checks"]
    tag = "radial-n3-delta0.1-N256"
    incoming = checks[f"{tag}.null_cone_incoming"]
    assert not incoming["passed"]
    assert incoming["threshold"] == pytest.approx(1e-12)
    assert 0 < incoming["value"] < 1e-3
    assert checks[f"{tag}.jet_bound"]["passed"]
    assert checks[f"{tag}.jet_bound"]["threshold"] == pytest.approx(50.0)
    chart = checks[f"{tag}.chart_consistency"]
    assert chart["passed"] and chart["value"] < 0.5
    assert (out / "runs" / tag / "rrme_energy.csv").is_file()


def test_evolve_scalars_include_commuted_residuals(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    common = ["--config", str(config), "--out", str(out)]
    assert main(["gen-data", *common]) == 0
    assert main(["evolve", *common]) == 0
    lines = (out / "runs" / "radial-n3-delta0.1-N256" / "scalars.csv").read_text().splitlines()
    names = {line.split(",")[0] for line in lines if not line.startswith("#")}
    assert {"commuted_S", "commuted_dt", "region_one"} <= names
