"""Step 2: Monte Carlo maximum likelihood given the hardened memberships.

The log-likelihood ratio against a reference parameter is the inner product
of the natural-parameter difference with the observed statistics minus a
stabilized log-mean-exp over a statistic sample drawn at the reference.
Local dependence makes the log-mean-exp a sum of independent per-block
terms; the between-edge coordinate is dyad-independent Bernoulli and is
handled in closed form with no Monte Carlo at all.

The outer loop refreshes the sample at the current estimate and maximizes
inside a box trust region (L-BFGS-B with the analytic curved-family
gradient). Standard errors come from the estimated Fisher information
J' Cov(s) J at the final estimate, with Cov(s) taken from a fresh sample.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import NumericalError, ValidationError
from .graph import Graph, Membership, neighborhood_sizes
from .model import (
    ModelSpec,
    natural_parameter_jacobian,
    natural_parameters,
    sufficient_statistics,
)
from .sampler import McmcConfig, SampleBatch, sample_stat_batch
from .seeding import derive_seed
from .variational import SbmParams, Step1Result

__all__ = [
    "Step2Config",
    "Step2Result",
    "mc_loglik_ratio",
    "mc_loglik_grad",
    "run_step2",
    "standard_errors",
    "theta0_from_step1",
]


@dataclass(frozen=True)
class Step2Config:
    mcmc: McmcConfig
    theta0: np.ndarray | None = None
    max_outer_iters: int = 20
    trust_radius: float = 0.5
    tol: float = 1e-3
    seed: int = 0
    workers: int = 1
    ess_floor: float = 0.05

    def __post_init__(self):
        if self.trust_radius <= 0:
            raise ValidationError("trust_radius must be positive")


@dataclass
class Step2Result:
    theta_hat: np.ndarray
    standard_errors: np.ndarray
    fisher: np.ndarray
    ess_trace: list
    theta_trace: list
    block_seconds: dict
    rank_deficient: list
    converged: bool
    outer_iterations: int


def _between_dyads(z: Membership) -> int:
    sizes = neighborhood_sizes(z)
    return z.n * (z.n - 1) // 2 - int(np.sum(sizes * (sizes - 1) // 2))


def _log_mean_exp(v: np.ndarray) -> float:
    m = float(v.max())
    return m + float(np.log(np.mean(np.exp(v - m))))


def _check_batch(batch: SampleBatch, z: Membership, model: ModelSpec):
    if batch.z.n != z.n or not np.array_equal(batch.z.assignment, z.assignment):
        raise ValidationError("batch was generated under a different z")
    for bs in batch.block_stats:
        if bs.shape[1] != model.within_width:
            raise ValidationError("batch statistic layout does not match model")


def mc_loglik_ratio(theta, theta0, observed, batch: SampleBatch,
                    z: Membership, model: ModelSpec) -> float:
    """Monte Carlo estimate of loglik(theta) - loglik(theta0) given z."""
    theta = np.asarray(theta, dtype=np.float64)
    theta0 = np.asarray(theta0, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    _check_batch(batch, z, model)
    d_eta = natural_parameters(theta, z, model) - natural_parameters(theta0, z, model)
    total = 0.0
    for k in range(z.K):
        d_k = d_eta[model.block_slice(k)]
        if not np.any(d_k):
            continue
        s_k = observed[model.block_slice(k)]
        v = batch.block_stats[k] @ d_k
        total += float(d_k @ s_k) - _log_mean_exp(v)
        w = np.exp(v - v.max())
        wsum = w.sum()
        if wsum > 0 and (w.max() / wsum) > 0.999:
            ess = wsum ** 2 / float(w @ w)
            warnings.warn(
                f"importance weights degenerate in block {k}: ESS {ess:.2f} "
                f"of {w.size}"
            )
    bi = model.between_index(z.K)
    log_n = np.log(float(z.n))
    eta_b, eta_b0 = theta[-1] * log_n, theta0[-1] * log_n
    nb = _between_dyads(z)
    total += float(d_eta[bi]) * observed[bi] - nb * (
        np.logaddexp(0.0, eta_b) - np.logaddexp(0.0, eta_b0)
    )
    return total


def _weighted_expectation(theta, theta0, batch: SampleBatch, z: Membership,
                          model: ModelSpec) -> np.ndarray:
    """Importance-weighted E_theta[s] per block; between term exact."""
    d_eta = natural_parameters(theta, z, model) - natural_parameters(theta0, z, model)
    out = np.zeros(model.stat_dim(z.K))
    for k in range(z.K):
        d_k = d_eta[model.block_slice(k)]
        stats = batch.block_stats[k]
        v = stats @ d_k
        w = np.exp(v - v.max())
        out[model.block_slice(k)] = (w @ stats) / w.sum()
    eta_b = theta[-1] * np.log(float(z.n))
    out[model.between_index(z.K)] = _between_dyads(z) * expit(eta_b)
    return out


def mc_loglik_grad(theta, theta0, observed, batch: SampleBatch,
                   z: Membership, model: ModelSpec) -> np.ndarray:
    """Analytic gradient: J(theta)' (s(x) - E_w s(X))."""
    theta = np.asarray(theta, dtype=np.float64)
    J = natural_parameter_jacobian(theta, z, model)
    e_hat = _weighted_expectation(theta, np.asarray(theta0, float), batch, z, model)
    return J.T @ (np.asarray(observed, float) - e_hat)


def batch_ess(theta, batch: SampleBatch, z: Membership, model: ModelSpec):
    """Per-block effective sample size (sum w)^2 / sum w^2 at theta."""
    d_eta = natural_parameters(np.asarray(theta, float), z, model) - \
        natural_parameters(batch.theta0, z, model)
    out = {}
    for k in range(z.K):
        d_k = d_eta[model.block_slice(k)]
        if not np.any(d_k):
            continue
        v = batch.block_stats[k] @ d_k
        w = np.exp(v - v.max())
        out[k] = float(w.sum() ** 2 / (w @ w))
    return out


def theta0_from_step1(step1: Step1Result | SbmParams, model: ModelSpec,
                      z: Membership | None = None) -> np.ndarray:
    """Reference vector: Step 1's edge parameters, zeros elsewhere."""
    params = step1.theta1 if isinstance(step1, Step1Result) else step1
    theta0 = np.zeros(model.theta_dim)
    if params.mode == "tied":
        tw, tb = params.theta_w, params.theta_b
    else:
        eta = np.asarray(params.eta_matrix)
        K = eta.shape[0]
        if z is not None:
            sizes = np.maximum(neighborhood_sizes(z), 2)
            n = z.n
        else:
            sizes = np.full(K, 2)
            n = 2 * K
        tw = float(np.median(np.diag(eta) / np.log(sizes)))
        if K > 1:
            off = eta[~np.eye(K, dtype=bool)]
            tb = float(np.median(off) / np.log(float(n)))
        else:
            tb = 0.0
    off = 0
    for t, sl in zip(model.within_terms, model.theta_slices()):
        if t.kind == "edges":
            theta0[sl.start] = tw
        off += t.theta_width
    theta0[-1] = tb
    return theta0


def _fisher_information(theta, z: Membership, model: ModelSpec,
                        batch: SampleBatch) -> np.ndarray:
    """J' Cov(s) J with Cov(s) block-diagonal from the fresh sample."""
    J = natural_parameter_jacobian(np.asarray(theta, float), z, model)
    info = np.zeros((model.theta_dim, model.theta_dim))
    for k in range(z.K):
        stats = batch.block_stats[k]
        if stats.shape[0] < 2 or not np.any(stats):
            continue
        cov = np.cov(stats, rowvar=False).reshape(
            model.within_width, model.within_width
        )
        J_k = J[model.block_slice(k)]
        info += J_k.T @ cov @ J_k
    eta_b = theta[-1] * np.log(float(z.n))
    p = float(expit(eta_b))
    var_b = _between_dyads(z) * p * (1.0 - p)
    j_b = J[model.between_index(z.K)]
    info += var_b * np.outer(j_b, j_b)
    return info


def standard_errors(fisher: np.ndarray):
    """Square roots of the pseudo-inverse diagonal, plus rank-deficiency flags."""
    fisher = np.asarray(fisher, dtype=np.float64)
    if fisher.ndim != 2 or fisher.shape[0] != fisher.shape[1]:
        raise ValidationError("Fisher information must be square")
    if not np.allclose(fisher, fisher.T, atol=1e-8):
        raise ValidationError("Fisher information must be symmetric")
    inv = np.linalg.pinv(fisher, hermitian=True)
    diag = np.diag(inv).copy()
    scale = max(float(np.abs(diag).max()), 1.0)
    if np.any(diag < -1e-10 * scale):
        raise NumericalError("negative variance after Fisher inversion")
    diag = np.maximum(diag, 0.0)
    rank = np.linalg.matrix_rank(fisher, hermitian=True)
    deficient = []
    if rank < fisher.shape[0]:
        null_mass = np.abs(np.eye(fisher.shape[0]) - inv @ fisher).diagonal()
        deficient = [int(i) for i in np.flatnonzero(null_mass > 1e-6)]
    return np.sqrt(diag), deficient


def run_step2(g: Graph, z_hat: Membership, model: ModelSpec,
              cfg: Step2Config) -> Step2Result:
    """Outer loop of sample-and-maximize steps inside a box trust region."""
    observed = sufficient_statistics(g, z_hat, model)
    if cfg.theta0 is not None:
        theta0 = np.asarray(cfg.theta0, dtype=np.float64).copy()
        if theta0.shape != (model.theta_dim,):
            raise ValidationError("theta0 has the wrong length")
    else:
        theta0 = np.zeros(model.theta_dim)
    ess_trace = []
    theta_trace = [theta0.copy()]
    block_seconds = {}
    converged = False
    radius = cfg.trust_radius
    outer_done = 0
    for outer in range(cfg.max_outer_iters):
        t0 = time.perf_counter()
        mcmc = McmcConfig(
            burn_in=cfg.mcmc.burn_in, interval=cfg.mcmc.interval,
            num_samples=cfg.mcmc.num_samples,
            seed=derive_seed(cfg.seed, "step2", outer),
        )
        batch = sample_stat_batch(z_hat, theta0, model, mcmc,
                                  workers=cfg.workers, init_graph=g)
        block_seconds[outer] = time.perf_counter() - t0

        def neg(th):
            val = mc_loglik_ratio(th, theta0, observed, batch, z_hat, model)
            return -val

        def neg_grad(th):
            return -mc_loglik_grad(th, theta0, observed, batch, z_hat, model)

        theta_hat = None
        for attempt in range(4):
            bounds = [(t - radius, t + radius) for t in theta0]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = minimize(neg, theta0, jac=neg_grad, method="L-BFGS-B",
                               bounds=bounds)
            if np.all(np.isfinite(res.x)) and np.isfinite(res.fun):
                theta_hat = res.x
                break
            radius *= 0.5
        if theta_hat is None:
            raise NumericalError(
                f"objective not finite after trust-region shrinks at outer "
                f"iteration {outer}; last theta0 {theta0}"
            )
        ess = batch_ess(theta_hat, batch, z_hat, model)
        ess_trace.append(ess)
        min_ess = min(ess.values()) if ess else float(cfg.mcmc.num_samples)
        move = float(np.max(np.abs(theta_hat - theta0)))
        theta0 = theta_hat.copy()
        theta_trace.append(theta0.copy())
        outer_done = outer + 1
        if min_ess < cfg.ess_floor * cfg.mcmc.num_samples:
            # weights too degenerate to trust the move: resample at the new
            # reference (next outer iteration does exactly that)
            continue
        if move < cfg.tol:
            converged = True
            break
    fisher_cfg = McmcConfig(
        burn_in=cfg.mcmc.burn_in, interval=cfg.mcmc.interval,
        num_samples=cfg.mcmc.num_samples,
        seed=derive_seed(cfg.seed, "step2", "fisher"),
    )
    t0 = time.perf_counter()
    fresh = sample_stat_batch(z_hat, theta0, model, fisher_cfg,
                              workers=cfg.workers, init_graph=g)
    block_seconds["fisher"] = time.perf_counter() - t0
    fisher = _fisher_information(theta0, z_hat, model, fresh)
    se, deficient = standard_errors(fisher)
    return Step2Result(
        theta_hat=theta0, standard_errors=se, fisher=fisher,
        ess_trace=ess_trace, theta_trace=theta_trace,
        block_seconds=block_seconds, rank_deficient=deficient,
        converged=converged, outer_iterations=outer_done,
    )
