"""Command-line front end: simulate | estimate | gof | phi | debug | study.

Every run writes its artifacts into ``<out>/<command>-<timestamp>/`` along
with a deterministic ``manifest.json`` (config echo, seed, versions, artifact
digests) and a ``timings.json`` with wall-clock per phase. Exit codes:
0 success, 2 config error, 3 validation error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .config import Config
from .errors import ConfigError, NumericalError, ValidationError
from .evaluation import (
    envelope_csv,
    envelope_table,
    gof_envelope,
    gof_statistics,
    yule_phi,
)
from .graph import (
    Graph,
    Membership,
    dump_edge_list,
    dump_membership,
    load_edge_list,
    load_membership,
)
from .mcmle import Step2Config, run_step2, theta0_from_step1
from .model import ModelSpec
from .sampler import McmcConfig, sample_memberships, simulate_graph
from .seeding import derive_seed, rng_for
from .variational import SbmParams, Step1Config, run_step1

DESIGNS = {
    "small-balanced": {
        "sizes": [10, 10, 10],
        "theta": [-0.434, 0.217, -0.882],
    },
    "small-unbalanced": {
        "sizes": [5, 10, 15],
        "theta": [-0.434, 0.217, -0.882],
    },
    "large-balanced": {
        "sizes": [25] * 100,
        "theta": [-0.621, 0.311, -0.511],
    },
    "large-unbalanced": {
        "sizes": [15, 20, 25, 30, 35] * 20,
        "theta": [-0.621, 0.311, -0.511],
    },
}


def _default_workers() -> int:
    env = os.environ.get("BLOCKERGM_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _model_from_config(cfg: Config) -> ModelSpec:
    terms = cfg.get_str_list("model.terms", "edges,transitive")
    return ModelSpec(
        terms,
        gwd_trunc=cfg.get_int("model.gwd_trunc", 20),
        gwesp_trunc=cfg.get_int("model.gwesp_trunc", 12),
    )


def _step1_config(cfg: Config, seed: int) -> Step1Config:
    return Step1Config(
        K=cfg.get_int("step1.k"),
        gamma=cfg.get_float("step1.gamma", 1e-6),
        max_iters=cfg.get_int("step1.max_iters", 500),
        qp_tol=cfg.get_float("step1.qp_tol", 1e-10),
        num_restarts=cfg.get_int("step1.restarts", 5),
        seed=seed,
        mode=cfg.get_str("step1.mode", "tied"),
        init=cfg.get_str("step1.init", "icm"),
    )


def _step2_config(cfg: Config, seed: int, workers: int, theta0=None) -> Step2Config:
    mcmc = McmcConfig(
        burn_in=cfg.get_int("step2.burnin", 200),
        interval=cfg.get_int("step2.interval", 10),
        num_samples=cfg.get_int("step2.samples", 1000),
        seed=seed,
    )
    return Step2Config(
        mcmc=mcmc,
        theta0=theta0,
        max_outer_iters=cfg.get_int("step2.max_outer", 20),
        trust_radius=cfg.get_float("step2.trust_radius", 0.5),
        tol=cfg.get_float("step2.tol", 1e-3),
        seed=seed,
        workers=workers,
    )


class RunDir:
    """Output directory ``<out>/<command>-<timestamp>/`` plus the manifest."""

    def __init__(self, out: str, command: str):
        stamp = datetime.now(timezone.utc).strftime("%Y%m%d-%H%M%S-%f")
        self.path = os.path.join(out, f"{command}-{stamp}")
        os.makedirs(self.path, exist_ok=False)
        self.command = command
        self.artifacts = {}
        self.timings = {}
        self._t0 = time.perf_counter()
        self._phase_start = self._t0
        self._phase = None

    def phase(self, name: str):
        now = time.perf_counter()
        if self._phase is not None:
            self.timings[self._phase] = round(now - self._phase_start, 6)
        self._phase = name
        self._phase_start = now

    def write(self, name: str, content: str):
        data = content.encode("ascii")
        with open(os.path.join(self.path, name), "wb") as fh:
            fh.write(data)
        self.artifacts[name] = hashlib.sha256(data).hexdigest()

    def finish(self, cfg: Config | None, seed: int, workers: int):
        now = time.perf_counter()
        if self._phase is not None:
            self.timings[self._phase] = round(now - self._phase_start, 6)
            self._phase = None
        self.timings["total"] = round(now - self._t0, 6)
        manifest = {
            "command": self.command,
            "config": cfg.echo() if cfg is not None else {},
            "seed": seed,
            "workers": workers,
            "versions": {
                "blockergm": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": ".".join(str(v) for v in sys.version_info[:3]),
            },
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        body = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        with open(os.path.join(self.path, "manifest.json"), "wb") as fh:
            fh.write(body.encode("ascii"))
        with open(os.path.join(self.path, "timings.json"), "w") as fh:
            json.dump(self.timings, fh, sort_keys=True, indent=2)
        return self.path


def _membership_from_sizes(sizes) -> Membership:
    assignment = np.repeat(np.arange(len(sizes)), sizes)
    return Membership(assignment, len(sizes))


def _sbm_to_json(params: SbmParams):
    if params.mode == "tied":
        return {"mode": "tied", "theta_w": params.theta_w,
                "theta_b": params.theta_b}
    return {"mode": "untied", "eta_matrix": np.asarray(params.eta_matrix).tolist()}


def cmd_simulate(args) -> int:
    cfg = Config.from_file(args.config)
    seed = args.seed if args.seed is not None else cfg.get_int("seed", 0)
    workers = args.workers or cfg.get_int("workers", _default_workers())
    model = _model_from_config(cfg)
    theta = np.asarray(cfg.get_float_list("sim.theta"), dtype=np.float64)
    if theta.size != model.theta_dim:
        raise ValidationError(
            f"sim.theta needs {model.theta_dim} coordinates for {model!r}"
        )
    mcmc = McmcConfig(
        burn_in=cfg.get_int("sim.burnin", 200),
        interval=cfg.get_int("sim.interval", 10),
        num_samples=1, seed=seed,
    )
    rd = RunDir(args.out, "simulate")
    rd.phase("simulate")
    if cfg.has("sim.sizes"):
        sizes = [int(v) for v in cfg.get_float_list("sim.sizes")]
        z = _membership_from_sizes(sizes)
        g, z = simulate_graph(theta, model, mcmc, z=z, workers=workers)
    else:
        pi = cfg.get_float_list("sim.pi")
        n = cfg.get_int("sim.n")
        g, z = simulate_graph(theta, model, mcmc, pi=pi, n=n, workers=workers)
    rd.phase("write")
    rd.write("graph.tsv", dump_edge_list(g))
    rd.write("membership.tsv", dump_membership(z))
    path = rd.finish(cfg, seed, workers)
    print(path)
    return 0


def cmd_estimate(args) -> int:
    cfg = Config.from_file(args.config)
    seed = args.seed if args.seed is not None else cfg.get_int("seed", 0)
    workers = args.workers or cfg.get_int("workers", _default_workers())
    with open(args.graph, "r") as fh:
        g = load_edge_list(fh)
    rd = RunDir(args.out, "estimate")
    rd.phase("step1")
    s1cfg = _step1_config(cfg, derive_seed(seed, "step1"))
    s1 = run_step1(g, s1cfg)
    rd.write("zhat.tsv", dump_membership(s1.z_hat))
    rd.write("step1.json", json.dumps({
        "pi": s1.pi.tolist(),
        "theta1": _sbm_to_json(s1.theta1),
        "lower_bound_trace": [float(v) for v in s1.trace],
        "iterations": s1.iterations,
        "converged": s1.converged,
        "restart": s1.restart,
        "empty_blocks": s1.empty_blocks,
    }, sort_keys=True, indent=2) + "\n")
    if not args.step1_only:
        rd.phase("step2")
        model = _model_from_config(cfg)
        if cfg.has("step2.theta0"):
            theta0 = np.asarray(cfg.get_float_list("step2.theta0"))
        else:
            theta0 = theta0_from_step1(s1, model, s1.z_hat)
        s2cfg = _step2_config(cfg, derive_seed(seed, "step2"), workers, theta0)
        s2 = run_step2(g, s1.z_hat, model, s2cfg)
        rd.write("theta.json", json.dumps({
            "theta_labels": model.theta_labels(),
            "theta_hat": s2.theta_hat.tolist(),
            "standard_errors": s2.standard_errors.tolist(),
            "fisher": s2.fisher.tolist(),
            "ess_trace": [
                {str(k): v for k, v in e.items()} for e in s2.ess_trace
            ],
            "rank_deficient": s2.rank_deficient,
            "converged": s2.converged,
            "outer_iterations": s2.outer_iterations,
            "block_seconds": {str(k): v for k, v in s2.block_seconds.items()},
        }, sort_keys=True, indent=2) + "\n")
    if args.truth:
        with open(args.truth, "r") as fh:
            z_star = load_membership(fh)
        phi = yule_phi(z_star, s1.z_hat)
        rd.write("phi.json", json.dumps(
            {"phi": None if math.isnan(phi) else phi}) + "\n")
    path = rd.finish(cfg, seed, workers)
    print(path)
    return 0


def cmd_phi(args) -> int:
    with open(args.truth, "r") as fh:
        z_star = load_membership(fh)
    with open(args.est, "r") as fh:
        z = load_membership(fh)
    phi = yule_phi(z_star, z)
    text = "undefined" if math.isnan(phi) else f"{phi:.6f}"
    print(text)
    payload = json.dumps({"phi": None if math.isnan(phi) else phi}) + "\n"
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(payload)
    return 0


def cmd_gof(args) -> int:
    cfg = Config.from_file(args.config)
    seed = args.seed if args.seed is not None else cfg.get_int("seed", 0)
    workers = args.workers or cfg.get_int("workers", _default_workers())
    model = _model_from_config(cfg)
    theta = np.asarray(cfg.get_float_list("gof.theta"), dtype=np.float64)
    if theta.size != model.theta_dim:
        raise ValidationError(f"gof.theta needs {model.theta_dim} coordinates")
    nsim = cfg.get_int("gof.samples", 100)
    geo_cap = cfg.get_int("gof.geo_cap", 20)
    sp_cap = cfg.get_int("gof.sp_cap", 25)
    with open(args.graph, "r") as fh:
        g = load_edge_list(fh)
    with open(args.memb, "r") as fh:
        z = load_membership(fh)
    rd = RunDir(args.out, "gof")
    rd.phase("observed")
    observed = gof_statistics(g, z, geo_cap, sp_cap)
    rd.phase("simulate")
    sims = []
    for r in range(nsim):
        mcmc = McmcConfig(burn_in=cfg.get_int("sim.burnin", 200),
                          interval=cfg.get_int("sim.interval", 10),
                          num_samples=1, seed=derive_seed(seed, "gof", r))
        g_sim, _ = simulate_graph(theta, model, mcmc, z=z, workers=workers)
        sims.append(gof_statistics(g_sim, z, geo_cap, sp_cap))
    rd.phase("envelope")
    rows = gof_envelope(observed, sims)
    rd.write("gof.csv", envelope_csv(rows))
    rd.write("gof.txt", envelope_table(rows))
    flagged = [r for r in rows if r.flag]
    rd.write("gof.json", json.dumps({
        "bins": len(rows),
        "flagged": len(flagged),
        "flagged_bins": [f"{r.stat}:{r.bin}:{r.flag}" for r in flagged],
    }, sort_keys=True, indent=2) + "\n")
    path = rd.finish(cfg, seed, workers)
    print(path)
    return 0


def cmd_debug(args) -> int:
    from .exact import exact_expected_stats, exact_log_normalizer

    model = ModelSpec(
        [t.strip() for t in args.terms.split(",")],
        gwd_trunc=args.gwd_trunc, gwesp_trunc=args.gwesp_trunc,
    )
    eta = np.asarray([float(v) for v in args.eta.split(",")])
    if args.action == "psi":
        value = exact_log_normalizer(args.size, eta, model)
        print(json.dumps({"psi": value}))
    else:
        value = exact_expected_stats(args.size, eta, model)
        print(json.dumps({"expected_stats": value.tolist()}))
    return 0


def _study_replicate(task):
    (design_name, rep, master_seed, s1_dict, s2_dict, mcmc_dict) = task
    design = DESIGNS[design_name]
    theta_star = np.asarray(design["theta"], dtype=np.float64)
    model = ModelSpec(["edges", "transitive"])
    z_star = _membership_from_sizes(design["sizes"])
    rep_seed = derive_seed(master_seed, "replicate", rep)
    t0 = time.perf_counter()
    try:
        sim_cfg = McmcConfig(burn_in=mcmc_dict["burn_in"],
                             interval=mcmc_dict["interval"],
                             num_samples=1, seed=derive_seed(rep_seed, "sim"))
        g, _ = simulate_graph(theta_star, model, sim_cfg, z=z_star, workers=1)
        s1 = run_step1(g, Step1Config(seed=derive_seed(rep_seed, "step1"),
                                      **s1_dict))
        phi = yule_phi(z_star, s1.z_hat)
        rng = rng_for(rep_seed, "baseline")
        z_rand = Membership(
            rng.integers(0, z_star.K, size=z_star.n), z_star.K
        )
        phi_base = yule_phi(z_star, z_rand)
        theta0 = theta0_from_step1(s1, model, s1.z_hat)
        mcmc = McmcConfig(burn_in=mcmc_dict["burn_in"],
                          interval=mcmc_dict["interval"],
                          num_samples=mcmc_dict["num_samples"],
                          seed=derive_seed(rep_seed, "step2"))
        s2 = run_step2(g, s1.z_hat, model, Step2Config(
            mcmc=mcmc, theta0=theta0, seed=derive_seed(rep_seed, "step2"),
            workers=1, **s2_dict))
        elapsed = time.perf_counter() - t0
        return {
            "replicate": rep, "seed": rep_seed, "status": "ok",
            "phi": phi, "phi_baseline": phi_base,
            "theta_edges": float(s2.theta_hat[0]),
            "theta_transitive": float(s2.theta_hat[1]),
            "theta_between": float(s2.theta_hat[2]),
            "step1_iters": s1.iterations,
            "step2_iters": s2.outer_iterations,
            "seconds": round(elapsed, 3),
        }
    except Exception as exc:  # noqa: BLE001 - per-replicate isolation
        return {"replicate": rep, "seed": rep_seed, "status": f"error:{exc}",
                "phi": "", "phi_baseline": "", "theta_edges": "",
                "theta_transitive": "", "theta_between": "",
                "step1_iters": "", "step2_iters": "",
                "seconds": round(time.perf_counter() - t0, 3)}


STUDY_FIELDS = ["replicate", "seed", "status", "phi", "phi_baseline",
                "theta_edges", "theta_transitive", "theta_between",
                "step1_iters", "step2_iters", "seconds"]


def run_study(design: str, replicates: int, seed: int, workers: int = 1,
              s1_overrides: dict | None = None,
              s2_overrides: dict | None = None,
              mcmc_overrides: dict | None = None):
    """Simulate -> estimate -> score over independent replicates."""
    if design not in DESIGNS:
        raise ValidationError(f"unknown design {design!r}")
    large = design.startswith("large")
    s1 = {"K": len(DESIGNS[design]["sizes"]), "gamma": 1e-6,
          "max_iters": 300 if large else 500,
          "num_restarts": 2 if large else 5, "mode": "tied"}
    s2 = {"max_outer_iters": 12, "trust_radius": 0.5, "tol": 2e-3}
    mcmc = {"burn_in": 100 if large else 200, "interval": 5,
            "num_samples": 400 if large else 600}
    s1.update(s1_overrides or {})
    s2.update(s2_overrides or {})
    mcmc.update(mcmc_overrides or {})
    tasks = [(design, r, seed, s1, s2, mcmc) for r in range(replicates)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_study_replicate, tasks))
    else:
        rows = [_study_replicate(t) for t in tasks]
    return rows


def study_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=STUDY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def cmd_study(args) -> int:
    rd = RunDir(args.out, "study")
    rd.phase("replicates")
    rows = run_study(args.design, args.replicates, args.seed,
                     workers=args.workers or _default_workers())
    rd.phase("write")
    rd.write("study.csv", study_csv(rows))
    path = rd.finish(None, args.seed, args.workers or _default_workers())
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="blockergm",
        description="Two-step estimation of block-structured random graph models",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a graph from the model")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=".")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int)
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="two-step fit of an observed graph")
    est.add_argument("--graph", required=True)
    est.add_argument("--config", required=True)
    est.add_argument("--out", default=".")
    est.add_argument("--seed", type=int)
    est.add_argument("--workers", type=int)
    est.add_argument("--step1-only", action="store_true")
    est.add_argument("--truth", help="membership file to score against")
    est.set_defaults(func=cmd_estimate)

    phi = sub.add_parser("phi", help="pair-agreement score of two memberships")
    phi.add_argument("--truth", required=True)
    phi.add_argument("--est", required=True)
    phi.add_argument("--json")
    phi.set_defaults(func=cmd_phi)

    gof = sub.add_parser("gof", help="goodness-of-fit envelope report")
    gof.add_argument("--graph", required=True)
    gof.add_argument("--memb", required=True)
    gof.add_argument("--config", required=True)
    gof.add_argument("--out", default=".")
    gof.add_argument("--seed", type=int)
    gof.add_argument("--workers", type=int)
    gof.set_defaults(func=cmd_gof)

    dbg = sub.add_parser("debug", help="exact small-block oracles")
    dbg.add_argument("action", choices=["psi", "expected"])
    dbg.add_argument("--terms", default="edges,transitive")
    dbg.add_argument("--size", type=int, required=True)
    dbg.add_argument("--eta", required=True)
    dbg.add_argument("--gwd-trunc", type=int, default=20)
    dbg.add_argument("--gwesp-trunc", type=int, default=12)
    dbg.set_defaults(func=cmd_debug)

    study = sub.add_parser("study", help="replicated simulate-estimate study")
    study.add_argument("--design", required=True, choices=sorted(DESIGNS))
    study.add_argument("--replicates", type=int, default=50)
    study.add_argument("--seed", type=int, default=0)
    study.add_argument("--out", default=".")
    study.add_argument("--workers", type=int)
    study.set_defaults(func=cmd_study)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
