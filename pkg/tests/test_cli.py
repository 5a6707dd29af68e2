import csv
import json
import subprocess
import sys

import pytest

from gibbsmix import bounds as bc
from gibbsmix import builtin_target, lab
from gibbsmix.cli import main
from gibbsmix.kernels import make_grids
from gibbsmix.persist import MANIFEST_NAME, sha256_file

BOUNDS_CFG = {
    "target": {"name": "perturbed_laplace", "dim": 4},
    "kernel": "systematic",
    "bounds": {"fi": "poincare", "q": 1, "C": 1, "omega": 1, "zeta": 0.25},
}
SAMPLE_CFG = {"target": {"name": "gaussian_product", "dim": 2}, "seed": 11, "grid_size": 257, "sample": {"steps": 6, "replicas": 1}}


def _run(tmp_path, cfg, command, name="out", extra=()):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    return code, out


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _check_manifest(out):
    data = json.loads((out / MANIFEST_NAME).read_text())
    listed = {f["path"]: f["sha256"] for f in data["files"]}
    on_disk = {p.name for p in out.iterdir() if p.name != MANIFEST_NAME}
    assert set(listed) == on_disk
    for name, digest in listed.items():
        assert sha256_file(out / name) == digest
    return data


def test_bounds_report(tmp_path):
    code, out = _run(tmp_path, BOUNDS_CFG, "bounds")
    assert code == 0
    rep = json.loads((out / "bound_report.json").read_text())
    assert rep["delta"] == pytest.approx(1 / 48, rel=1e-15)
    assert rep["upsilon_delta"] == pytest.approx(0.005, rel=1e-12)
    rows = dict((r[0], r[1]) for r in _read_csv(out / "bound_report.csv")[1:])
    assert float(rows["delta"]) == rep["delta"]
    data = _check_manifest(out)
    assert data["checks"] == {"bound_report": "pass"} and data["command"] == "bounds"


def test_bounds_missing_constant(tmp_path, capsys):
    cfg = json.loads(json.dumps(BOUNDS_CFG))
    del cfg["bounds"]["C"]
    code, _ = _run(tmp_path, cfg, "bounds")
    assert code == 2
    assert "poincare constant" in capsys.readouterr().err
    code, _ = _run(tmp_path, {"target": {"name": "perturbed_laplace", "dim": 4}}, "bounds", "nofi")
    assert code == 2
    assert "poincare constant" in capsys.readouterr().err


def test_bounds_eps_modes_differ_only_in_eps_fields(tmp_path):
    reports = []
    for mode in ("exact", "asymptotic"):
        cfg = json.loads(json.dumps(BOUNDS_CFG))
        cfg["bounds"]["eps_mode"] = mode
        code, out = _run(tmp_path, cfg, "bounds", mode)
        assert code == 0
        reports.append(json.loads((out / "bound_report.json").read_text()))
    changed = {k for k in reports[0] if reports[0][k] != reports[1][k]}
    assert "eps" in changed
    assert changed <= {"eps_mode", "eps", "phi_block", "phi_lower", "lambda2_lower", "tau_block", "tau_upper"}


def test_sample_zero_steps(tmp_path):
    cfg = dict(SAMPLE_CFG, sample={"steps": 0, "x0": [0.5, -0.25]})
    code, out = _run(tmp_path, cfg, "sample")
    assert code == 0
    rows = _read_csv(out / "trajectory_000.csv")
    assert rows == [["step", "x_1", "x_2"], ["0", "0.5", "-0.25"]]


def test_sample_replicas_and_determinism(tmp_path):
    cfg = dict(SAMPLE_CFG, sample={"steps": 8, "replicas": 4, "thin": 2})
    _, a = _run(tmp_path, cfg, "sample", "a")
    _, b = _run(tmp_path, cfg, "sample", "b")
    files = sorted(p.name for p in a.iterdir() if p.name != MANIFEST_NAME)
    assert files == [f"trajectory_00{i}.csv" for i in range(4)]
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    contents = {(a / n).read_bytes() for n in files}
    assert len(contents) == 4
    _check_manifest(a)


def test_seed_override_and_requirement(tmp_path, capsys):
    cfg = {k: v for k, v in SAMPLE_CFG.items() if k != "seed"}
    code, _ = _run(tmp_path, cfg, "sample", "noseed")
    assert code == 2 and "seed" in capsys.readouterr().err
    _, a = _run(tmp_path, cfg, "sample", "s1", ("--seed", "5"))
    _, b = _run(tmp_path, dict(cfg, seed=5), "sample", "s2")
    assert (a / "trajectory_000.csv").read_bytes() == (b / "trajectory_000.csv").read_bytes()


@pytest.mark.parametrize(
    "cfg",
    [
        dict(SAMPLE_CFG, kernel="bogus"),
        dict(SAMPLE_CFG, tolerances={"calculators": {"rel_tol": 0}}),
        dict(SAMPLE_CFG, unknown=1),
        dict(SAMPLE_CFG, seed=-3),
        {"seed": 1},
    ],
)
def test_config_errors_exit_2(tmp_path, cfg):
    code, _ = _run(tmp_path, cfg, "sample")
    assert code == 2


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["bounds", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["bounds", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    assert main(["frobnicate"]) == 2


def test_couple_identical_pair(tmp_path):
    cfg = {
        "target": {"name": "perturbed_laplace", "dim": 2},
        "seed": 2,
        "grid_size": 257,
        "couple": {"pairs": [[[0.3, 0.1], [0.3, 0.1]], [[0.0, 0.0], [0.02, 0.0]]], "n_reps": 1000},
    }
    code, out = _run(tmp_path, cfg, "couple")
    assert code == 0
    rows = _read_csv(out / "coupling.csv")
    assert rows[0][:7] == ["pair", "x", "y", "distance", "meeting_frequency", "stderr", "tv_upper"]
    assert rows[1][4] == "1" and rows[1][5] == "0"
    _check_manifest(out)


def test_couple_unknown_variant(tmp_path):
    cfg = {"target": {"name": "perturbed_laplace", "dim": 2}, "seed": 2, "kernel": "gibbs_with_momentum"}
    assert _run(tmp_path, cfg, "couple")[0] == 2


def test_couple_certificate_reproduces_lab_check(tmp_path):
    cfg = {
        "target": {"name": "perturbed_laplace", "dim": 4},
        "seed": 17,
        "grid_size": 257,
        "kernel": "systematic",
        "couple": {"n_pairs": 4, "n_reps": 2000, "burn_in": 20, "thin": 2},
    }
    code, out = _run(tmp_path, cfg, "couple")
    summary = json.loads((out / "coupling.json").read_text())
    t = builtin_target("perturbed_laplace", 4)
    cert = bc.close_coupling_ss(3**0.5, 0.5, 4)
    ref = lab.check_close_coupling(t, cert, "systematic", 4, 2000, 17, grids=make_grids(t, 257), burn_in=20, thin=2)
    assert summary["max_tv_ub"] == ref["max_tv_ub"]
    assert summary["passed"] == ref["passed"] and code == (0 if ref["passed"] else 1)
    assert summary["delta"] == pytest.approx(1 / 48, rel=1e-15)


def test_verify_single_suite(tmp_path):
    code, out = _run(tmp_path, {"seed": 3, "verify": {"suites": ["coupon"]}}, "verify")
    assert code == 0
    report = json.loads((out / "verify_coupon.json").read_text())
    assert report["status"] == "pass"
    assert sorted(p.name for p in out.glob("verify_*.json")) == ["verify_coupon.json"]
    _check_manifest(out)


def test_verify_known_discrepancy_exits_zero(tmp_path, capsys):
    code, out = _run(tmp_path, {"seed": 3, "verify": {"suites": ["cheeger"]}}, "verify")
    assert code == 0
    assert "warning" in capsys.readouterr().err
    data = json.loads((out / MANIFEST_NAME).read_text())
    assert data["checks"]["cheeger"] == "known-discrepancy"


def test_verify_failure_exits_one(tmp_path):
    # a tolerance below double rounding cannot be met by the exact-identity checks
    cfg = {"seed": 3, "verify": {"suites": ["structure"]}, "tolerances": {"structure": {"tol": 1e-18}}}
    code, out = _run(tmp_path, cfg, "verify")
    assert code == 1
    assert json.loads((out / "verify_structure.json").read_text())["status"] == "fail"
    assert json.loads((out / MANIFEST_NAME).read_text())["checks"]["structure"] == "fail"


def test_verify_unknown_suite_and_params(tmp_path):
    assert _run(tmp_path, {"seed": 1, "verify": {"suites": ["nope"]}}, "verify", "a")[0] == 2
    assert _run(tmp_path, {"seed": 1, "verify": {"suites": ["coupon"], "params": {"coupon": {"bogus": 1}}}}, "verify", "b")[0] == 2


def test_verify_outputs_are_deterministic(tmp_path):
    cfg = {"seed": 9, "verify": {"suites": ["calculators", "tv_decay", "conductance"]}}
    _, a = _run(tmp_path, cfg, "verify", "a")
    _, b = _run(tmp_path, cfg, "verify", "b")
    for p in a.iterdir():
        if p.name != MANIFEST_NAME:
            assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_console_script_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(BOUNDS_CFG))
    res = subprocess.run(
        [sys.executable, "-m", "gibbsmix.cli", "bounds", "--config", str(cfg), "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "bound_report.json").exists()
