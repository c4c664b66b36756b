import json
import math
import subprocess
import sys

import pytest

from newsvendor_lab.cli import main
from newsvendor_lab.experiment import CSV_COLUMNS, log_grid

MINIMAL = {
    "demand": {"kind": "uniform", "a": 0, "b_bar": 1},
    "cost": {"kind": "linear", "h": 1, "b": 1},
    "policy": {"kind": "saa"},
    "horizon": 1000,
    "replications": 50,
    "seed": 7,
}


def write(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def minimal(tmp_path):
    return write(tmp_path / "cfg.json", MINIMAL)


def test_simulate_smoke(tmp_path, minimal, capsys):
    out = tmp_path / "out"
    assert run("simulate", "--config", minimal, "--out", out, "--workers", 1) == 0
    lines = (out / "trace.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert [int(r.split(",")[0]) for r in lines[1:]] == log_grid(1000).tolist()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 7
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "simulate" and man["seed"] == 7
    assert set(man["outputs"]) == {"trace.csv", "summary.json"}
    assert "cumulative regret" in capsys.readouterr().out


def test_simulate_byte_identical(tmp_path, minimal):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert run("simulate", "--config", minimal, "--out", a, "--workers", 1) == 0
    assert run("simulate", "--config", minimal, "--out", b, "--workers", 2) == 0
    for name in ("trace.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # the manifest alone reproduces the run
    assert run("simulate", "--config", a / "manifest.json", "--out", c, "--workers", 1) == 0
    assert (a / "trace.csv").read_bytes() == (c / "trace.csv").read_bytes()


def test_seed_override(tmp_path, minimal):
    assert run("simulate", "--config", minimal, "--out", tmp_path / "a", "--workers", 1) == 0
    assert run("simulate", "--config", minimal, "--out", tmp_path / "b", "--workers", 1, "--seed", 8) == 0
    assert (tmp_path / "a/trace.csv").read_bytes() != (tmp_path / "b/trace.csv").read_bytes()
    assert json.loads((tmp_path / "b/manifest.json").read_text())["seed"] == 8


def test_config_not_mutated(tmp_path, minimal):
    before = minimal.read_bytes()
    run("simulate", "--config", minimal, "--out", tmp_path / "o", "--workers", 1, "--seed", 3)
    assert minimal.read_bytes() == before


def test_invalid_alpha_exit_2(tmp_path, capsys):
    cfg = dict(MINIMAL, demand={"kind": "hard_instance", "alpha": 0.6, "rho": 0.5, "theta": 0.0})
    path = write(tmp_path / "bad.json", cfg)
    assert run("simulate", "--config", path, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    line = path.read_text().splitlines().index('    "alpha": 0.6,') + 1
    assert f"bad.json:{line}: demand.alpha:" in err
    assert "validity condition" in err and "min(1/2, 2*rho, 2*(1-rho))" in err
    assert not (tmp_path / "o" / "trace.csv").exists()


def test_broken_json_exit_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{"horizon": 10,\n "seed": }\n')
    assert run("simulate", "--config", path, "--out", tmp_path / "o") == 2
    assert "broken.json:2:" in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    path = write(tmp_path / "c.json", dict(MINIMAL, horizn=5))
    assert run("simulate", "--config", path, "--out", tmp_path / "o") == 2
    assert "horizn" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.json", "--out", tmp_path / "o") == 2


def test_bad_workers(tmp_path, minimal):
    assert run("simulate", "--config", minimal, "--out", tmp_path / "o", "--workers", 0) == 2


# scaling


def scaling_cfg(axis="alpha", values=(0.2, 0.4)):
    exp = dict(MINIMAL, demand={"kind": "hard_instance", "alpha": 0.2, "rho": 0.5, "theta": 0.0}, horizon=2000, replications=8)
    return {"axis": axis, "values": list(values), "experiment": exp}


def test_scaling_smoke_and_determinism(tmp_path, capsys):
    path = write(tmp_path / "s.json", scaling_cfg())
    assert run("scaling", "--config", path, "--out", tmp_path / "a", "--workers", 1) == 0
    assert run("scaling", "--config", path, "--out", tmp_path / "b", "--workers", 1) == 0
    fit = json.loads((tmp_path / "a/fit.json").read_text())
    assert fit["axis"] == "alpha" and len(fit["fits"]) == 2
    assert "K4" in fit["upper_bound_constants"]
    for name in ("trace_alpha=0.2.csv", "trace_alpha=0.4.csv", "fit.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "ln T slope" in capsys.readouterr().out


def test_scaling_T_axis(tmp_path):
    path = write(tmp_path / "s.json", scaling_cfg("T", []))
    assert run("scaling", "--config", path, "--out", tmp_path / "a", "--workers", 1) == 0
    assert (tmp_path / "a/trace.csv").exists()


def test_scaling_validation(tmp_path, capsys):
    path = write(tmp_path / "s.json", scaling_cfg(values=(0.2, 0.7)))
    assert run("scaling", "--config", path, "--out", tmp_path / "a") == 2
    assert "alpha=0.7" in capsys.readouterr().err
    path = write(tmp_path / "t.json", scaling_cfg(values=(0.2,)))
    assert run("scaling", "--config", path, "--out", tmp_path / "a") == 2
    path = write(tmp_path / "u.json", {**scaling_cfg(), "axis": "rho"})
    assert run("scaling", "--config", path, "--out", tmp_path / "a") == 2


# lowerbound


def test_lowerbound_report(tmp_path, capsys):
    path = write(tmp_path / "lb.json", {"alpha": 0.2, "T": 1000, "bayes_t": [10], "reps": 1000})
    assert run("lowerbound", "--config", path, "--out", tmp_path / "a") == 0
    rep = json.loads((tmp_path / "a/lowerbound.json").read_text())
    assert rep["prior_fisher"] == pytest.approx(10000 * math.pi**2, rel=1e-15)
    assert rep["prior_fisher_quadrature"] == pytest.approx(10000 * math.pi**2, rel=1e-6)
    assert rep["bayes_mse"][0]["passed"]
    assert len(rep["sweep"]) == 21
    out = capsys.readouterr().out
    assert "empirical MSE" in out
    assert run("lowerbound", "--config", path, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a/lowerbound.json").read_bytes() == (tmp_path / "b/lowerbound.json").read_bytes()


def test_lowerbound_validation(tmp_path, capsys):
    path = write(tmp_path / "lb.json", {"alpha": 0.45, "rho": 0.2})
    assert run("lowerbound", "--config", path, "--out", tmp_path / "a") == 2
    assert "lb.json:2: alpha:" in capsys.readouterr().err
    path = write(tmp_path / "lb2.json", {"reps": 10})
    assert run("lowerbound", "--config", path, "--out", tmp_path / "a") == 2


# verify


def test_verify_lowerbound_scope(capsys):
    assert run("verify", "--scope", "lowerbound") == 0
    out = capsys.readouterr().out
    assert "PASS fisher.upper_bounds" in out
    assert "hard_instance.mass" not in out and "saa.brute_force" not in out


def test_verify_injected_fault(capsys):
    assert run("verify", "--scope", "demand", "--inject-fault", "breakpoint") == 1
    out = capsys.readouterr().out
    assert "FAIL hard_instance.continuity" in out
    assert "FAIL hard_instance.mass" in out


@pytest.mark.slow
def test_verify_all_passes(capsys):
    assert run("verify") == 0
    assert "FAIL" not in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "newsvendor_lab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip().startswith("newsvendor-lab")
