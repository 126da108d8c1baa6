import json
import os

import numpy as np
import pytest

from blockergm.cli import main, run_study, study_csv
from blockergm.config import Config
from blockergm.errors import ConfigError
from blockergm.graph import load_edge_list, load_membership

SIM_CFG = """
# small simulation config
model.terms = edges, transitive
sim.sizes = 5, 5
sim.theta = 0.0, 0.2, -0.8
sim.burnin = 50
sim.interval = 2
seed = 11
workers = 1
"""

EST_CFG = """
model.terms = edges, transitive
step1.k = 2
step1.restarts = 2
step2.samples = 300
step2.burnin = 50
step2.interval = 2
step2.max_outer = 3
seed = 11
workers = 1
"""


def _run_dir(capsys):
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        Config.from_text("model.terms = edges\nbogus.key = 1\n")


def test_config_parse_error_line():
    with pytest.raises(ConfigError, match="line 2"):
        Config.from_text("seed = 1\nnot a pair\n")


def test_config_typed_getters():
    cfg = Config.from_text("seed = 7\nsim.theta = 1, 2.5, -3\n")
    assert cfg.get_int("seed") == 7
    assert cfg.get_float_list("sim.theta") == [1.0, 2.5, -3.0]
    with pytest.raises(ConfigError):
        cfg.get_int("sim.theta")
    with pytest.raises(ConfigError):
        cfg.get_str("model.terms")


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("definitely not = valid key\n")
    code = main(["simulate", "--config", str(bad), "--out", str(tmp_path)])
    assert code == 2


def test_cli_validation_error_exit_code(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("model.terms = edges\nsim.sizes = 4\nsim.theta = 1, 2, 3\n")
    code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 3  # theta length mismatch


def test_simulate_estimate_phi_roundtrip(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SIM_CFG)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    sim_dir = _run_dir(capsys)
    graph_path = os.path.join(sim_dir, "graph.tsv")
    memb_path = os.path.join(sim_dir, "membership.tsv")
    with open(graph_path) as fh:
        g = load_edge_list(fh)
    assert g.n == 10
    with open(memb_path) as fh:
        z = load_membership(fh)
    assert z.n == 10
    manifest = json.load(open(os.path.join(sim_dir, "manifest.json")))
    assert manifest["command"] == "simulate"
    assert "graph.tsv" in manifest["artifacts"]
    assert os.path.exists(os.path.join(sim_dir, "timings.json"))

    est_cfg = tmp_path / "est.cfg"
    est_cfg.write_text(EST_CFG)
    assert main([
        "estimate", "--graph", graph_path, "--config", str(est_cfg),
        "--out", str(tmp_path), "--truth", memb_path,
    ]) == 0
    est_dir = _run_dir(capsys)
    step1 = json.load(open(os.path.join(est_dir, "step1.json")))
    assert len(step1["pi"]) == 2
    trace = step1["lower_bound_trace"]
    assert all(b - a >= -1e-8 for a, b in zip(trace, trace[1:]))
    theta = json.load(open(os.path.join(est_dir, "theta.json")))
    assert len(theta["theta_hat"]) == 3
    assert len(theta["standard_errors"]) == 3
    assert os.path.exists(os.path.join(est_dir, "phi.json"))

    assert main([
        "phi", "--truth", memb_path,
        "--est", os.path.join(est_dir, "zhat.tsv"),
        "--json", str(tmp_path / "phi.json"),
    ]) == 0
    out = capsys.readouterr().out.strip()
    assert out == "undefined" or -1.0 <= float(out) <= 1.0


def test_estimate_step1_only(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SIM_CFG)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    sim_dir = _run_dir(capsys)
    est_cfg = tmp_path / "est.cfg"
    est_cfg.write_text(EST_CFG)
    assert main([
        "estimate", "--graph", os.path.join(sim_dir, "graph.tsv"),
        "--config", str(est_cfg), "--out", str(tmp_path), "--step1-only",
    ]) == 0
    est_dir = _run_dir(capsys)
    assert os.path.exists(os.path.join(est_dir, "step1.json"))
    assert not os.path.exists(os.path.join(est_dir, "theta.json"))


def test_gof_command(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SIM_CFG)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
    sim_dir = _run_dir(capsys)
    gof_cfg = tmp_path / "gof.cfg"
    gof_cfg.write_text(
        "model.terms = edges, transitive\n"
        "gof.theta = 0.0, 0.2, -0.8\n"
        "gof.samples = 10\n"
        "sim.burnin = 30\nsim.interval = 2\nseed = 4\nworkers = 1\n"
    )
    assert main([
        "gof", "--graph", os.path.join(sim_dir, "graph.tsv"),
        "--memb", os.path.join(sim_dir, "membership.tsv"),
        "--config", str(gof_cfg), "--out", str(tmp_path),
    ]) == 0
    gof_dir = _run_dir(capsys)
    csv_text = open(os.path.join(gof_dir, "gof.csv")).read()
    assert csv_text.startswith("stat,bin,observed,min,q025,median,q975,max,flag")
    report = json.load(open(os.path.join(gof_dir, "gof.json")))
    assert report["bins"] > 0


def test_debug_psi(capsys):
    assert main([
        "debug", "psi", "--terms", "edges,transitive",
        "--size", "3", "--eta", "0,1",
    ]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["psi"] == pytest.approx(np.log(7 + np.exp(3)))


def test_manifest_determinism(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text(SIM_CFG)
    manifests = []
    artifacts = []
    for _ in range(2):
        main(["simulate", "--config", str(cfg), "--out", str(tmp_path)])
        d = _run_dir(capsys)
        manifests.append(open(os.path.join(d, "manifest.json"), "rb").read())
        artifacts.append(open(os.path.join(d, "graph.tsv"), "rb").read())
    assert manifests[0] == manifests[1]
    assert artifacts[0] == artifacts[1]


def test_study_rows_deterministic():
    rows1 = run_study("small-balanced", replicates=2, seed=5, workers=1,
                      s2_overrides={"max_outer_iters": 2},
                      mcmc_overrides={"num_samples": 100, "burn_in": 30},
                      s1_overrides={"num_restarts": 2})
    rows2 = run_study("small-balanced", replicates=2, seed=5, workers=1,
                      s2_overrides={"max_outer_iters": 2},
                      mcmc_overrides={"num_samples": 100, "burn_in": 30},
                      s1_overrides={"num_restarts": 2})
    assert rows1 == rows2
    assert len(rows1) == 2
    assert all(r["status"] == "ok" for r in rows1)
    text = study_csv(rows1)
    assert text.splitlines()[0].startswith("replicate,seed,status,phi")
    assert len(text.splitlines()) == 3
