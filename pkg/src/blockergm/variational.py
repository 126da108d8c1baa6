"""Step 1: minorization-maximization variational estimation of the
block structure under the dyad-independent approximation.

The lower bound treats memberships as independent multinomials with
responsibilities alpha. Each iteration maximizes a node-separable quadratic
minorizer of the bound over the simplex (one small QP per node, solved by
dual bisection / water-filling), then refits the mixing proportions and the
dyad parameters, and finally hardens alpha by row-wise argmax.

Two dyad parameterizations are supported:

* ``untied`` - one logit per block pair (the classic block-model form); the
  dyad log-probabilities are constants given the pair, so the minorization
  and Jensen inequalities are exact.
* ``tied`` - size-dependent: eta_kk = theta_w * ln(soft size k), eta_kl =
  theta_b * ln(n). Soft sizes are the alpha column sums clamped at 2. The
  quadratic minorizer then holds with the size map frozen at the current
  iterate, which is how the iteration uses it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit, xlogy

from .errors import NumericalError, ValidationError
from .graph import ALPHA_FLOOR, Graph, Membership, SoftMembership
from .seeding import rng_for

__all__ = [
    "SbmParams",
    "Step1Config",
    "Step1Result",
    "lower_bound",
    "minorizer_value",
    "update_alpha",
    "update_pi",
    "update_theta1",
    "run_step1",
]


@dataclass(frozen=True)
class SbmParams:
    """Dyad parameters of the Step-1 block model."""

    mode: str                      # "tied" | "untied"
    theta_w: float = 0.0           # tied within scalar
    theta_b: float = 0.0           # tied between scalar
    eta_matrix: np.ndarray | None = None  # untied (K, K) symmetric logits

    def dyad_eta(self, n: int, sizes) -> np.ndarray:
        """(K, K) natural-parameter matrix given block sizes."""
        if self.mode == "untied":
            return np.asarray(self.eta_matrix, dtype=np.float64)
        sizes = np.maximum(np.asarray(sizes, dtype=np.float64), 2.0)
        K = sizes.size
        eta = np.full((K, K), self.theta_b * np.log(float(n)))
        np.fill_diagonal(eta, self.theta_w * np.log(sizes))
        return eta


@dataclass(frozen=True)
class Step1Config:
    K: int
    gamma: float = 1e-6
    max_iters: int = 500
    qp_tol: float = 1e-10
    num_restarts: int = 5
    seed: int = 0
    mode: str = "tied"
    init: str = "icm"

    def __post_init__(self):
        if self.K < 1:
            raise ValidationError("K must be >= 1")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if self.mode not in ("tied", "untied"):
            raise ValidationError("mode must be 'tied' or 'untied'")
        if self.init not in ("icm", "random", "degree"):
            raise ValidationError("init must be icm, random, or degree")


@dataclass
class Step1Result:
    alpha: SoftMembership
    z_hat: Membership
    pi: np.ndarray
    theta1: SbmParams
    trace: list                  # lower-bound value per iteration
    param_trace: list = field(default_factory=list)  # (theta1, pi) per iterate
    iterations: int = 0
    converged: bool = False
    restart: int = 0
    empty_blocks: list = field(default_factory=list)


def _alpha_array(alpha) -> np.ndarray:
    if isinstance(alpha, SoftMembership):
        return alpha.alpha
    return np.asarray(alpha, dtype=np.float64)


def floor_simplex(x: np.ndarray, eps: float = ALPHA_FLOOR) -> np.ndarray:
    """Affine projection onto {x >= eps, sum x = 1} for row-stochastic x."""
    K = x.shape[-1]
    return (1.0 - K * eps) * x + eps


def soft_sizes(alpha) -> np.ndarray:
    """Column sums of alpha clamped at 2 (the tied map needs sizes >= 2)."""
    return np.maximum(_alpha_array(alpha).sum(axis=0), 2.0)


def _logprob_matrices(theta1: SbmParams, n: int, sizes):
    eta = theta1.dyad_eta(n, sizes)
    lse = np.logaddexp(0.0, eta)
    return eta - lse, -lse  # L1 = log p, L0 = log(1 - p)


def _graph_sums(alpha: np.ndarray, g: Graph, L1, L0):
    """Sum over dyads of the bilinear dyad log-probability form."""
    A = alpha.sum(axis=0)
    G = alpha.T @ alpha
    allpairs = 0.5 * (A @ L0 @ A - float((G * L0).sum()))
    if g.num_edges:
        P = alpha @ (L1 - L0)
        ei, ej = g.edges[:, 0], g.edges[:, 1]
        edge_term = float(np.einsum("ij,ij->", P[ei], alpha[ej]))
    else:
        edge_term = 0.0
    return edge_term + allpairs


def lower_bound(alpha, theta1: SbmParams, pi, g: Graph, sizes=None) -> float:
    """Variational lower bound on the observed-data log-likelihood.

    ``sizes`` overrides the tied-mode soft block sizes (used to evaluate the
    bound with the size map frozen at another iterate); defaults to the soft
    sizes of ``alpha`` itself.
    """
    alpha = _alpha_array(alpha)
    pi = np.asarray(pi, dtype=np.float64)
    if abs(pi.sum() - 1.0) > 1e-8 or np.any(pi < 0):
        raise ValidationError("pi must lie on the simplex")
    if sizes is None:
        sizes = soft_sizes(alpha)
    L1, L0 = _logprob_matrices(theta1, g.n, sizes)
    graph_term = _graph_sums(alpha, g, L1, L0)
    with np.errstate(divide="ignore", invalid="ignore"):
        prior = float(xlogy(alpha, pi[None, :]).sum())
    entropy = -float(xlogy(alpha, alpha).sum())
    return graph_term + prior + entropy


def _qp_coefficients(alpha_t: np.ndarray, theta1, pi_t, g: Graph, sizes):
    """Per-node quadratic/linear coefficients of the separable minorizer.

    M(alpha) = sum_ik quad_ik * alpha_ik^2 + lin_ik * alpha_ik, with the
    dyad log-probabilities held at ``sizes``.
    """
    if np.any(alpha_t < ALPHA_FLOOR * 0.999):
        raise ValidationError("alpha^(t) entries below the floor")
    L1, L0 = _logprob_matrices(theta1, g.n, sizes)
    A = alpha_t.sum(axis=0)
    field_ = (A[None, :] - alpha_t) @ L0
    if g.num_edges:
        nbr = np.zeros_like(alpha_t)
        ei, ej = g.edges[:, 0], g.edges[:, 1]
        np.add.at(nbr, ei, alpha_t[ej])
        np.add.at(nbr, ej, alpha_t[ei])
        field_ += nbr @ (L1 - L0)
    quad = field_ / (2.0 * alpha_t) - 1.0 / alpha_t
    lin = np.log(pi_t)[None, :] - np.log(alpha_t) + 1.0
    return quad, lin


def minorizer_value(alpha, theta1: SbmParams, pi_t, alpha_t, g: Graph,
                    sizes=None) -> float:
    """Quadratic minorizer of the lower bound anchored at ``alpha_t``.

    Touches the bound at ``alpha = alpha_t`` and lies below it everywhere
    (dyad log-probabilities evaluated at ``sizes``, default the soft sizes of
    the anchor).
    """
    alpha = _alpha_array(alpha)
    alpha_t = _alpha_array(alpha_t)
    pi_t = np.asarray(pi_t, dtype=np.float64)
    if sizes is None:
        sizes = soft_sizes(alpha_t)
    quad, lin = _qp_coefficients(alpha_t, theta1, pi_t, g, sizes)
    return float((quad * alpha ** 2 + lin * alpha).sum())


def _simplex_qp_rows(quad: np.ndarray, lin: np.ndarray, tol: float):
    """Rowwise maximize sum_k q x^2 + b x over the simplex (q < 0).

    KKT water-filling: x_k(lam) = max(0, (b_k - lam) / (-2 q_k)) with the
    multiplier lam solved by bisection on sum_k x_k = 1.
    """
    if np.any(quad >= 0):
        raise NumericalError(
            "nonconcave node QP: a dyad log-probability exceeded 0"
        )
    neg2q = -2.0 * quad
    lo = (lin + 2.0 * quad).min(axis=1)   # x_k = 1 alone -> sum >= 1
    hi = lin.max(axis=1)                  # all x_k = 0 -> sum = 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.maximum(lin - mid[:, None], 0.0) / neg2q
        total = s.sum(axis=1)
        high = total > 1.0
        lo = np.where(high, mid, lo)
        hi = np.where(high, hi, mid)
        if np.all(hi - lo < tol * np.maximum(1.0, np.abs(hi))):
            break
    lam = 0.5 * (lo + hi)
    x = np.maximum(lin - lam[:, None], 0.0) / neg2q
    x /= x.sum(axis=1, keepdims=True)
    return x


def update_alpha(alpha_t, theta1: SbmParams, pi_t, g: Graph,
                 qp_tol: float = 1e-10, sizes=None) -> SoftMembership:
    """One minorize-maximize sweep: n independent simplex QPs.

    Solved jointly (vectorized Jacobi), floored, and renormalized; a node's
    update is kept only if it does not decrease its separable minorizer
    term, so M never decreases.
    """
    alpha_t = _alpha_array(alpha_t)
    pi_t = np.asarray(pi_t, dtype=np.float64)
    if sizes is None:
        sizes = soft_sizes(alpha_t)
    quad, lin = _qp_coefficients(alpha_t, theta1, pi_t, g, sizes)
    x = _simplex_qp_rows(quad, lin, qp_tol)
    x = floor_simplex(x)
    new_val = (quad * x ** 2 + lin * x).sum(axis=1)
    old_val = (quad * alpha_t ** 2 + lin * alpha_t).sum(axis=1)
    keep_old = new_val < old_val
    if np.any(keep_old):
        x[keep_old] = alpha_t[keep_old]
    return SoftMembership(x)


def update_pi(alpha) -> np.ndarray:
    """Column means of alpha; on the simplex by construction."""
    return _alpha_array(alpha).mean(axis=0)


def _weighted_cells(alpha: np.ndarray, g: Graph):
    """Weighted edge counts and dyad totals per block pair (K, K)."""
    A = alpha.sum(axis=0)
    G = alpha.T @ alpha
    W = np.outer(A, A) - G       # ordered-pair totals, i != j
    W = 0.5 * (W + W.T)
    if g.num_edges:
        ei, ej = g.edges[:, 0], g.edges[:, 1]
        E = alpha[ei].T @ alpha[ej]
        E = 0.5 * (E + E.T) * 2.0  # symmetrize ordered-pair edge weights
    else:
        E = np.zeros_like(W)
    # diagonal cells: each unordered dyad counted once
    E = E.copy()
    W = W.copy()
    np.fill_diagonal(E, np.diag(E) / 2.0)
    np.fill_diagonal(W, np.diag(W) / 2.0)
    return E, W


def update_theta1(alpha, g: Graph, mode: str = "tied", sizes=None,
                  cap: float | None = None) -> SbmParams:
    """Maximize the bound over the dyad parameters at fixed alpha.

    Untied: closed-form logits of weighted block-pair densities. Tied:
    Newton on the within scalar (concave weighted Bernoulli log-likelihood),
    closed form for the between scalar. Separated cells are clamped at the
    cap with a warning.
    """
    alpha = _alpha_array(alpha)
    n, K = alpha.shape
    E, W = _weighted_cells(alpha, g)
    if mode == "untied":
        cap_nat = 10.0 if cap is None else cap
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(W > 0, E / np.maximum(W, 1e-300), 0.5)
        dens = np.clip(dens, 0.0, 1.0)
        eta = logit(np.clip(dens, expit(-cap_nat), expit(cap_nat)))
        separated = (W > 1e-12) & ((E < 1e-12) | (W - E < 1e-12))
        if np.any(separated):
            warnings.warn("separated block-pair cell; logit clamped")
        return SbmParams(mode="untied", eta_matrix=eta)

    log_n = np.log(float(n))
    cap_t = (10.0 / log_n) if cap is None else cap
    if sizes is None:
        sizes = soft_sizes(alpha)
    log_sz = np.log(np.maximum(sizes, 2.0))
    Ew = np.diag(E)
    Ww = np.diag(W)
    # Newton on the within scalar
    tw = 0.0
    for _ in range(100):
        s = expit(tw * log_sz)
        score = float((log_sz * (Ew - Ww * s)).sum())
        if abs(score) < 1e-8:
            break
        hess = -float((log_sz ** 2 * Ww * s * (1 - s)).sum())
        if hess > -1e-300:
            tw = cap_t if score > 0 else -cap_t
            warnings.warn("within parameter clamped at the cap")
            break
        tw_new = float(np.clip(tw - score / hess, -cap_t, cap_t))
        if tw_new == tw and abs(tw) == cap_t:
            warnings.warn("within parameter clamped at the cap")
            break
        tw = tw_new
    Eb = float(E.sum() - Ew.sum())
    Wb = float(W.sum() - Ww.sum())
    if Wb <= 0 or K == 1:
        tb = 0.0
    else:
        dens_b = min(max(Eb / Wb, expit(-10.0)), expit(10.0))
        if Eb < 1e-12 or (Wb - Eb) < 1e-12:
            warnings.warn("between cell separated; parameter clamped")
        tb = float(logit(dens_b) / log_n)
    return SbmParams(mode="tied", theta_w=tw, theta_b=tb)


def _icm_labels(g: Graph, K: int, rng, passes: int = 20,
                ratio: float = 16.0) -> np.ndarray:
    """Asynchronous coordinate ascent on the dyad-independent log-likelihood
    over hard memberships, starting from random labels.

    Each node moves to the block maximizing its dyad log-likelihood given the
    other labels; the within/between densities are refit from the labels
    after every pass (the initial contrast assumes assortative structure).
    Used as the Step-1 initializer: a uniformly random soft start provably
    sticks at the label-symmetric fixed point of the MM map.
    """
    n = g.n
    adj = g.adjacency_lists()
    deg = g.degrees()
    d = g.num_edges / max(n * (n - 1) / 2, 1)
    f_w = max((n / K - 1) / max(n - 1, 1), 1e-9)
    p_b = min(max(d / (f_w * ratio + 1 - f_w), 1e-5), 0.5)
    p_w = min(ratio * p_b, 0.95)
    labels = rng.integers(0, K, n)
    sizes = np.bincount(labels, minlength=K).astype(np.int64)
    for _ in range(passes):
        c_edge = float(logit(p_w) - logit(p_b))
        c_size = float(np.log1p(np.exp(logit(p_w))) - np.log1p(np.exp(logit(p_b))))
        moves = 0
        for i in rng.permutation(n):
            if deg[i]:
                cnt = np.bincount(labels[adj[i]], minlength=K)
            else:
                cnt = np.zeros(K, dtype=np.int64)
            s = sizes.copy()
            s[labels[i]] -= 1
            k_new = int(np.argmax(cnt * c_edge - s * c_size))
            if k_new != labels[i]:
                sizes[labels[i]] -= 1
                sizes[k_new] += 1
                labels[i] = k_new
                moves += 1
        if g.num_edges:
            within = int(np.count_nonzero(
                labels[g.edges[:, 0]] == labels[g.edges[:, 1]]
            ))
        else:
            within = 0
        wt = int(np.sum(sizes * (sizes - 1) // 2))
        bt = n * (n - 1) // 2 - wt
        p_w = min(max(within / max(wt, 1), 1e-4), 0.99)
        p_b = min(max((g.num_edges - within) / max(bt, 1), 1e-6), 0.5)
        if moves == 0:
            break
    return labels


def initialize_alpha(g: Graph, K: int, rng, strategy: str = "icm",
                     hardness: float = 0.9) -> np.ndarray:
    """Initial responsibilities for one restart.

    ``icm``: hard labels from :func:`_icm_labels`, softened to ``hardness``.
    ``degree``: degree-quantile warm start (nodes binned by degree rank).
    ``random``: rows proportional to Uniform(0, 1) draws.
    """
    n = g.n
    if strategy == "random":
        alpha = rng.uniform(0.0, 1.0, size=(n, K))
        alpha /= alpha.sum(axis=1, keepdims=True)
        return floor_simplex(alpha)
    if strategy == "degree":
        order = np.argsort(g.degrees(), kind="stable")
        labels = np.empty(n, dtype=np.int64)
        labels[order] = (np.arange(n) * K) // max(n, 1)
    elif strategy == "icm":
        labels = _icm_labels(g, K, rng)
    else:
        raise ValidationError(f"unknown init strategy {strategy!r}")
    alpha = np.full((n, K), (1.0 - hardness) / max(K - 1, 1))
    alpha[np.arange(n), labels] = hardness if K > 1 else 1.0
    alpha /= alpha.sum(axis=1, keepdims=True)
    return floor_simplex(alpha)


def run_step1(g: Graph, cfg: Step1Config) -> Step1Result:
    """Full Step 1: restarts of the MM loop, then hardening by argmax."""
    best: Step1Result | None = None
    for restart in range(cfg.num_restarts):
        rng = rng_for(cfg.seed, "step1", restart)
        strategy = "degree" if (cfg.init == "icm" and cfg.num_restarts > 2
                                and restart == cfg.num_restarts - 1) else cfg.init
        alpha = initialize_alpha(g, cfg.K, rng, strategy=strategy)
        pi = update_pi(alpha)
        theta1 = update_theta1(alpha, g, mode=cfg.mode)
        ll = lower_bound(alpha, theta1, pi, g)
        trace = [ll]
        params = [(theta1, pi.copy())]
        converged = False
        for _ in range(cfg.max_iters):
            sizes_t = soft_sizes(alpha)
            alpha_new = update_alpha(alpha, theta1, pi, g, cfg.qp_tol,
                                     sizes=sizes_t).alpha
            pi_new = update_pi(alpha_new)
            theta_new = update_theta1(alpha_new, g, mode=cfg.mode)
            ll_new = lower_bound(alpha_new, theta_new, pi_new, g)
            if ll_new < ll:
                # tied-mode size map moved against the surrogate; stop at
                # the current iterate to keep the recorded trace monotone
                converged = True
                break
            alpha, pi, theta1 = alpha_new, pi_new, theta_new
            improvement = abs(ll_new - ll)
            ll = ll_new
            trace.append(ll)
            params.append((theta1, pi.copy()))
            if improvement / max(abs(ll), 1e-300) < cfg.gamma:
                converged = True
                break
        soft = SoftMembership(alpha)
        z_hat = soft.harden()
        counts = np.bincount(z_hat.assignment, minlength=cfg.K)
        res = Step1Result(
            alpha=soft, z_hat=z_hat, pi=pi, theta1=theta1, trace=trace,
            param_trace=params, iterations=len(trace) - 1,
            converged=converged, restart=restart,
            empty_blocks=[int(k) for k in np.flatnonzero(counts == 0)],
        )
        if best is None or trace[-1] > best.trace[-1]:
            best = res
    return best
