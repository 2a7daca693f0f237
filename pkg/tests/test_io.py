import json

import numpy as np
import pytest
from toys import continuous_data

from svyacd.cli import main, sim_config_from_file
from svyacd.data import DataError, Dataset
from svyacd.io import (
    AnalysisConfig,
    ConfigError,
    load_config,
    load_dataset_csv,
    parse_config,
    run_analysis,
    run_config,
    write_dataset_csv,
)

BASE = dict(outcome="y", group="a", weight="w", covariates=("x",), pop_size=100)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_three_rows(tmp_path):
    p = write(tmp_path, "d.csv", "y,a,w,x\n1.5,0,2,0.1\n2.5,1,3,0.2\n3.0,1,4,0.3\n")
    d = load_dataset_csv(p, AnalysisConfig(**BASE))
    assert d.n == 3
    assert d.meta["dropped"] == 0


def test_missing_outcome_dropped(tmp_path):
    p = write(tmp_path, "d.csv", "y,a,w,x\n1,0,2,0.1\n,1,3,0.2\n3,1,4,0.3\n4,0,2,NA\n5,0,2,0.5\n6,1,2,0.6\n")
    d = load_dataset_csv(p, AnalysisConfig(**BASE))
    assert (d.n, d.meta["n_read"], d.meta["dropped"]) == (4, 6, 2)
    p = write(tmp_path, "e.csv", "y,a,w,x\n1,0,2,0.1\n,1,3,0.2\n3,1,4,0.3\n4,0,2,0.4\n5,1,2,0.5\n")
    d = load_dataset_csv(p, AnalysisConfig(**BASE))
    assert (d.n, d.meta["dropped"]) == (4, 1)


def test_unused_missing_column_ignored(tmp_path):
    p = write(tmp_path, "d.csv", "y,a,w,x,junk\n1,0,2,0.1,\n2,1,3,0.2,\n3,1,4,0.3,\n4,0,1,0.4,\n")
    assert load_dataset_csv(p, AnalysisConfig(**BASE)).n == 4


def test_categorical_reference_coding(tmp_path):
    p = write(tmp_path, "d.csv", "y,a,w,c\n1,0,2,b\n2,1,3,a\n3,1,4,b\n4,0,1,a\n")
    cfg = AnalysisConfig(**{**BASE, "covariates": ("c",), "categorical": ("c",)})
    d = load_dataset_csv(p, cfg)
    assert d.columns == ("c[b]",)
    np.testing.assert_array_equal(d.x[:, 0], [1, 0, 1, 0])
    assert d.meta["reference_levels"] == {"c": "a"}


def test_string_group_coding(tmp_path):
    p = write(tmp_path, "d.csv", "y,g,w,x\n1,male,2,0\n2,female,3,1\n3,male,4,2\n4,female,1,3\n")
    cfg = AnalysisConfig(**{**BASE, "group": "g"})
    np.testing.assert_array_equal(load_dataset_csv(p, cfg).a, [1, 0, 1, 0])
    cfg = AnalysisConfig(**{**BASE, "group": "g", "group_level": "female"})
    np.testing.assert_array_equal(load_dataset_csv(p, cfg).a, [0, 1, 0, 1])


@pytest.mark.parametrize("text, match", [
    ("y,a,w\n1,0,2\n2,1,2\n", "not found"),
    ("y,a,w,x\n1,0,2,abc\n2,1,2,1\n3,0,1,1\n4,1,1,1\n", r"'x'.*row 1"),
    ("y,a,w,x\n1,0,2,0\n2,2,2,1\n3,0,1,1\n4,1,1,1\n", "binary"),
    ("y,a,w,x\n,0,2,0\n,1,2,1\n", "no rows remain"),
])
def test_load_errors(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_dataset_csv(write(tmp_path, "d.csv", text), AnalysisConfig(**BASE))


def test_round_trip_bit_exact(tmp_path):
    d = continuous_data(50, seed=9)
    p = tmp_path / "rt.csv"
    write_dataset_csv(d, p)
    cfg = AnalysisConfig(outcome="y", group="a", weight="sel_weight", covariates=("X",))
    back = load_dataset_csv(p, cfg)
    for f in ("y", "a", "x", "sel_weight"):
        assert getattr(back, f).tobytes() == getattr(d, f).tobytes(), f


def test_config_parsing(tmp_path):
    p = write(tmp_path, "c.cfg", "outcome = y\ngroup = a  # the group\nweight = w\n"
                                 "covariates = x1, x2\nmethods = OM, IPW1\nalpha = 0.1\n")
    cfg = load_config(p)
    assert cfg.covariates == ("x1", "x2")
    assert cfg.methods == ("OM", "IPW1")
    assert cfg.alpha == 0.1 and cfg.group == "a"


@pytest.mark.parametrize("raw", [
    dict(outcome="y", group="a"),
    dict(outcome="y", group="a", weight="w", alpha="1.5"),
    dict(outcome="y", group="a", weight="w", methods="OM, FOO"),
    dict(outcome="y", group="a", weight="w", variance="stratified"),
    dict(outcome="y", group="a", weight="w", covariates="x", om_covariates="z"),
])
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_constant_outcome_battery():
    d = continuous_data(200, seed=2)
    d = Dataset(y=np.full(d.n, 2.0), a=d.a, x=d.x, sel_weight=d.sel_weight, columns=d.columns, pop_size=d.pop_size)
    cfg = AnalysisConfig(outcome="y", group="a", weight="w", covariates=("X",),
                         methods=("OM", "SLR", "MR", "SVY_MR", "NAIVE_G"))
    rep = run_analysis(d, cfg)
    assert not rep["failed"]
    for row in rep["results"]:
        assert row["acd"] == pytest.approx(0.0, abs=1e-10)


@pytest.fixture
def sim_files(tmp_path):
    from svyacd.simulate import SimConfig, draw_sample, generate_population

    pop = generate_population(SimConfig.for_setting(8), np.random.default_rng([20240101, 0]))
    d = draw_sample(pop, np.random.default_rng(1))
    data = tmp_path / "s8.csv"
    write_dataset_csv(d, data)
    cfg = write(tmp_path, "a.cfg", f"outcome = y\ngroup = a\nweight = sel_weight\ncovariates = X\npop_size = {pop.x.size}\n")
    return data, cfg


def test_setting8_battery_orderings(sim_files):
    data, cfg = sim_files
    rep = run_config(load_config(cfg), data)
    res = {r["method"]: r for r in rep["results"]}
    prop = [res[m] for m in ("OM", "IPW1", "IPW2")]
    for r1 in prop:
        for r2 in prop:
            assert abs(r1["acd"] - r2["acd"]) <= 3 * np.hypot(r1["se"], r2["se"])
    assert not any(r["ci_low"] <= res["SLR"]["acd"] <= r["ci_high"] for r in prop)


def test_cli_estimate_deterministic(sim_files, tmp_path, capsys):
    data, cfg = sim_files
    assert main(["estimate", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "o1")]) == 0
    assert main(["estimate", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "o2")]) == 0
    for f in ("report.csv", "report.json"):
        assert (tmp_path / "o1" / f).read_bytes() == (tmp_path / "o2" / f).read_bytes()
    rep = json.loads((tmp_path / "o1" / "report.json").read_text())
    assert [r["method"] for r in rep["results"]][:3] == ["OM", "IPW1", "IPW2"]
    assert "dropped 0 (complete-case)" in capsys.readouterr().out


def test_cli_failure_exit_status(tmp_path):
    data = write(tmp_path, "d.csv", "y,a,w,x\n1,0,2,0\n2,1,2,1\n3,0,1,2\n4,1,1,3\n")
    cfg = write(tmp_path, "c.cfg", "outcome = y\ngroup = a\nweight = w\ncovariates = x\n")
    # no pop_size: the proposed estimators cannot resolve pi_bar
    assert main(["estimate", "--data", str(data), "--config", str(cfg)]) == 1
    assert main(["estimate", "--data", str(tmp_path / "nope.csv"), "--config", str(cfg)]) == 2


def test_cli_validate(sim_files, capsys):
    data, cfg = sim_files
    assert main(["validate", "--data", str(data), "--config", str(cfg)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["dropped"] == 0 and info["design_columns"] == ["X"]


def test_cli_simulate(tmp_path):
    cfg = write(tmp_path, "sim.cfg", "N = 20000\nbeta0 = -3\nmethods = OM, IPW2, SLR\n")
    out = tmp_path / "sim"
    rc = main(["simulate", "--config", str(cfg), "--setting", "8", "--reps", "2", "--seed", "5",
               "--out", str(out), "--per-rep"])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["n_reps"] == 2 and rep["config"]["seed"] == 5 and rep["config"]["tauX"] == 1.0
    assert (out / "report.csv").exists() and (out / "per_rep.csv").exists()


def test_sim_config_file(tmp_path):
    cfg = write(tmp_path, "sim.cfg", "setting = 6\non = 0.5\nN = 1000\nsensitivity = 0, 0.5\n")
    c, gammas = sim_config_from_file(cfg)
    assert (c.tauX, c.betaA, c.betaX, c.N) == (0.5, 0.0, 0.5, 1000)
    assert gammas == [0.0, 0.5]
