import csv
import json
import os
import subprocess
import sys

import pytest

from ageinvariance.cli import main
from ageinvariance.config import DEFAULT_INI, ConfigError, load_config, parse_config

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def edit(key_line, new_line, text=DEFAULT_INI):
    assert key_line in text
    return text.replace(key_line, new_line)


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_default_config_file_matches_builtin():
    with open(os.path.join(REPO, "configs", "default.ini")) as fh:
        assert fh.read() == DEFAULT_INI


def test_parse_default():
    rc = parse_config(DEFAULT_INI)
    assert rc.grid.n_cells == 1000 and rc.params.kappa == 1.0
    assert rc.params.beta_integral == pytest.approx(3.0)
    assert rc.scheme.epsilon == 0.05 and rc.scheme.tau == 2.0 and rc.seed == 12345


@pytest.mark.parametrize("old,new,key", [
    ("tau = 2", "tau = 2.005", "scheme.tau"),
    ("a_dagger = 2", "a_dagger = 2.003", "model.a_dagger"),
    ("seed = 12345\n", "", "run.seed"),
    ("a_max = 10", "a_max = 3", "grid.a_max"),
    ("a_max = 10", "a_max = 10.005", "grid.a_max"),
    ("kappa = 1", "kappa = -1", "model.kappa"),
    ("mu = 0.5", "mu = abc", "model.mu"),
    ("x0 = bump", "x0 = wiggle", "model.x0"),
    ("probes = 8", "probes = 8\nbogus = 1", "scheme.bogus"),
    ("subtangency_h = 0.08, 0.04, 0.02, 0.01", "subtangency_h = 0.015", "run.subtangency_h"),
    ("levels = 4", "levels = 1", "run.levels"),
])
def test_config_errors_name_the_key(old, new, key):
    with pytest.raises(ConfigError) as info:
        parse_config(edit(old, new))
    assert info.value.key == key


def test_missing_section():
    with pytest.raises(ConfigError) as info:
        parse_config(DEFAULT_INI.split("[run]")[0])
    assert info.value.key == "run"


def test_tables_and_profiles():
    text = edit("beta = const_on_support", "beta = table\nbeta_table = 0:1, 1:0.5, 2:0")
    text = edit("mu = 0.5", "mu = table\nmu_table = 0:0.4, 5:0.8", text)
    rc = parse_config(text)
    assert rc.params.beta_integral == pytest.approx(1.5)
    assert rc.params.mu_sup == 0.8 and rc.params.mu_minus == 0.4
    for prof in ("x0 = exp", "x0 = const\nx0_level = 0.1", "x0 = zero",
                 "x0 = table\nx0_table = 0:0, 1:0.02, 3:0"):
        assert parse_config(edit("x0 = bump", prof)).x0.values.min() >= 0
    with pytest.raises(ConfigError):
        parse_config(edit("beta = const_on_support", "beta = table\nbeta_table = 0:1, 0.005:2"))


def test_seed_override_and_missing_file(tmp_path):
    assert load_config(None, 7).seed == 7
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.ini"))


def _run(args):
    return main(args + ["--quiet"])


def test_simulate_outputs(tmp_path):
    out = str(tmp_path / "o")
    assert _run(["simulate", "--out", out]) == 0
    with open(os.path.join(out, "simulate.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "lp_norm_u", "dist_to_C", "H_norm", "eta_accepted"]
    assert len(rows) == 202
    rep = json.load(open(os.path.join(out, "simulate.json")))
    for key in ("beta_condition", "h0", "paper_regime", "knots", "defect_sup", "terminated_by",
                "config"):
        assert key in rep
    assert set(rep["beta_condition"]) >= {"value", "integral", "bound"}
    assert set(rep["paper_regime"]) >= {"lambda_hat", "gamma_hat", "delta_tau", "satisfied"}
    assert rep["terminated_by"] == "horizon"
    assert rep["paper_regime"]["satisfied"] == (
        rep["paper_regime"]["radius_sup"] <= rep["paper_regime"]["rho"]
        and 0 < rep["paper_regime"]["contraction"] < 1)


def test_simulate_deterministic(tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert _run(["simulate", "--out", a, "--seed", "3"]) == 0
    assert _run(["simulate", "--out", b, "--seed", "3"]) == 0
    for name in ("simulate.csv", "simulate.json"):
        assert open(os.path.join(a, name), "rb").read() == open(os.path.join(b, name), "rb").read()


def test_invariance_report_with_large_beta(tmp_path):
    cfg = write(tmp_path, edit("beta_level = 1.5", "beta_level = 4"))
    out = str(tmp_path / "o")
    assert _run(["invariance-report", "--config", cfg, "--out", out]) == 0
    rep = json.load(open(os.path.join(out, "invariance.json")))
    assert rep["beta_condition"]["value"] is False
    assert rep["beta_condition"]["integral"] == pytest.approx(8.0)


def test_convergence_levels(tmp_path):
    out = str(tmp_path / "o")
    assert _run(["convergence", "--levels", "3", "--out", out]) == 0
    rep = json.load(open(os.path.join(out, "convergence.json")))
    assert len(rep["cauchy"]) == 2 and rep["epsilons"] == [0.1, 0.05, 0.025]
    assert rep["strictly_decreasing"]


@pytest.mark.parametrize("cmd,name", [("oracle-compare", "oracle_compare.json"),
                                      ("subtangency", "subtangency.json"),
                                      ("conv-tests", "conv_tests.json")])
def test_other_subcommands(tmp_path, cmd, name):
    out = str(tmp_path / "o")
    assert _run([cmd, "--out", out]) == 0
    rep = json.load(open(os.path.join(out, name)))
    if cmd == "oracle-compare":
        assert rep["picard_vs_characteristics"] <= 1e-3
    elif cmd == "subtangency":
        assert rep["all_decreasing"]
    else:
        assert rep["oracle_ok"] and rep["cocycle_ok"] and rep["bound_holds"] == 100


def test_config_error_exit_code(tmp_path):
    cfg = write(tmp_path, edit("tau = 2", "tau = 2.005"))
    assert _run(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert _run(["convergence", "--levels", "1", "--out", str(tmp_path / "o")]) == 1


def test_collapse_exits_nonzero_with_partial_csv(tmp_path):
    text = edit("x0_amplitude = 0.05", "x0_amplitude = 0.9")
    text = edit("epsilon = 0.05", "epsilon = 0.0125", text)
    out = str(tmp_path / "o")
    assert _run(["simulate", "--config", write(tmp_path, text), "--out", out]) == 2
    assert os.path.exists(os.path.join(out, "simulate.csv"))
    rep = json.load(open(os.path.join(out, "simulate.json")))
    assert rep["terminated_by"] == "step_size_collapse"


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ageinvariance", "subtangency", "--quiet",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
