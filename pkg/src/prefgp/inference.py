"""Shared inference machinery: Laplace marginal likelihood, evidence-based
hyperparameter search, and Gaussian variational inference with a structured
(block lower-triangular) covariance factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import log_ndtr

from prefgp.kernels import GramMatrix, jittered_cholesky
from prefgp.tmvn_sampler import TruncationRegion, _mvn_logcdf

LOG_2PI = float(np.log(2.0 * np.pi))


class InferenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# indicator softening and marginal likelihood
# ---------------------------------------------------------------------------


def soft_indicator_logjoint(
    region: TruncationRegion,
    u: np.ndarray,
    gram: GramMatrix,
    temperature: float = 1e-2,
) -> float:
    """Sigmoid-softened indicator likelihood plus Gaussian prior log density.

    sum_s log Phi((c - W u)_s / tau) + log N(u; 0, K).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    u = np.asarray(u, float)
    slack = (region.c - region.W @ u) / temperature
    loglik = float(np.sum(log_ndtr(slack)))
    alpha = cho_solve((gram.chol, True), u)
    logprior = -0.5 * float(u @ alpha) - 0.5 * gram.size * LOG_2PI - 0.5 * gram.logdet()
    return loglik + logprior


def soft_indicator_logjoint_grad(
    region: TruncationRegion,
    u: np.ndarray,
    gram: GramMatrix,
    temperature: float = 1e-2,
) -> np.ndarray:
    u = np.asarray(u, float)
    slack = (region.c - region.W @ u) / temperature
    # d/dt log Phi(t) = phi(t)/Phi(t), computed in the log domain
    ratio = np.exp(-0.5 * slack**2 - 0.5 * LOG_2PI - log_ndtr(slack))
    return -(region.W.T @ ratio) / temperature - cho_solve((gram.chol, True), u)


@dataclass
class LaplaceResult:
    mode: np.ndarray
    log_marginal: float
    hessian_logdet: float
    converged: bool
    iterations: int


def _numeric_grad(f: Callable, x: np.ndarray) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(len(x)):
        h = 1e-6 * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _numeric_hessian(grad: Callable, x: np.ndarray) -> np.ndarray:
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        h = 1e-5 * (1.0 + abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def laplace_log_marginal(
    logjoint: Callable[[np.ndarray], float],
    dim: int,
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    x0: Optional[np.ndarray] = None,
    max_iter: int = 200,
    tol: float = 1e-6,
) -> LaplaceResult:
    """Gaussian integral approximation around the mode of ``logjoint``.

    Damped Newton steps to find the mode, then
    log p ~ logjoint(mode) + (dim/2) log 2pi - 1/2 log det(-H).
    """
    if grad is None:
        grad = lambda x: _numeric_grad(logjoint, x)
    x = np.zeros(dim) if x0 is None else np.asarray(x0, float).copy()
    f = logjoint(x)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = grad(x)
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        H = _numeric_hessian(grad, x)
        negH = -H
        scale = max(1.0, float(np.max(np.abs(np.diag(negH)))))
        try:
            cholH, _ = jittered_cholesky(negH, scale)
            step = cho_solve((cholH, True), g)
        except Exception:
            step = g / scale
        t = 1.0
        improved = False
        for _ in range(40):
            x_new = x + t * step
            f_new = logjoint(x_new)
            if np.isfinite(f_new) and f_new > f - 1e-12:
                x, f = x_new, f_new
                improved = True
                break
            t *= 0.5
        if not improved:
            break
    H = _numeric_hessian(grad, x)
    negH = -H
    scale = max(1.0, float(np.max(np.abs(np.diag(negH)))))
    cholH, _ = jittered_cholesky(negH + 1e-10 * scale * np.eye(dim), scale)
    hess_logdet = 2.0 * float(np.sum(np.log(np.diag(cholH))))
    log_marginal = float(f) + 0.5 * dim * LOG_2PI - 0.5 * hess_logdet
    return LaplaceResult(
        mode=x,
        log_marginal=log_marginal,
        hessian_logdet=hess_logdet,
        converged=converged,
        iterations=it,
    )


def probit_log_evidence(region: TruncationRegion, gram: GramMatrix, noise_scale: float) -> float:
    """Exact model evidence for probit-softened linear-constraint likelihoods.

    P(data) = P(W u + eps <= c) = Phi_m(c; 0, W K W^T + s^2 I), the Gaussian
    orthant integral; usable for the indicator models in the small-noise
    limit.  Falls back on nothing: callers choose Laplace for large m.
    """
    W = region.W
    cov = W @ gram.values @ W.T + noise_scale**2 * np.eye(region.m)
    return _mvn_logcdf(region.c, cov)


@dataclass
class HyperparamSearchResult:
    best_log_params: np.ndarray
    best_value: float
    flat: bool
    n_evaluations: int
    value_range: float


def optimize_hyperparams(
    evaluate: Callable[[np.ndarray], float],
    x0_log: np.ndarray,
    bounds_log: Sequence[tuple],
    budget: int = 200,
    restarts: int = 3,
    seed: int = 0,
) -> HyperparamSearchResult:
    """Derivative-free maximization of a marginal-likelihood surrogate over
    log-parameters (Nelder-Mead inside a box, multi-start)."""
    from scipy.optimize import minimize

    x0_log = np.atleast_1d(np.asarray(x0_log, float))
    lo = np.array([b[0] for b in bounds_log], float)
    hi = np.array([b[1] for b in bounds_log], float)
    rng = np.random.default_rng(seed)
    evals: list[float] = []

    def neg(x):
        xc = np.clip(x, lo, hi)
        penalty = float(np.sum((x - xc) ** 2))
        try:
            v = float(evaluate(xc))
        except Exception:
            v = -np.inf
        if np.isfinite(v):
            evals.append(v)
        return -(v - penalty) if np.isfinite(v) else 1e12

    best_x, best_v = x0_log.copy(), -np.inf
    starts = [x0_log] + [rng.uniform(lo, hi) for _ in range(max(0, restarts - 1))]
    for start in starts:
        res = minimize(
            neg,
            start,
            method="Nelder-Mead",
            options={"maxfev": budget, "xatol": 1e-3, "fatol": 1e-4},
        )
        if -res.fun > best_v:
            best_v = -res.fun
            best_x = np.clip(res.x, lo, hi)
    if not evals:
        raise InferenceError("hyperparameter search: every evaluation failed")
    value_range = float(np.max(evals) - np.min(evals))
    return HyperparamSearchResult(
        best_log_params=best_x,
        best_value=float(best_v),
        flat=value_range < 0.01,
        n_evaluations=len(evals),
        value_range=value_range,
    )


# ---------------------------------------------------------------------------
# variational inference
# ---------------------------------------------------------------------------


@dataclass
class VariationalPosterior:
    """Gaussian q(u) = N(mean, B B^T) with B block lower-triangular.

    ``block_index[k]`` lists the latent coordinates of block k (need not be
    contiguous), ``block_factors[k]`` is that block's lower-triangular
    factor.  Dense across a block, independent across blocks.
    """

    mean: np.ndarray
    block_index: np.ndarray
    block_factors: np.ndarray
    elbo_trace: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal((n, self.block_index.shape[0], self.block_index.shape[1]))
        return self._push(eps), eps

    def _push(self, eps: np.ndarray) -> np.ndarray:
        draws = np.tile(self.mean, (eps.shape[0], 1))
        moved = np.einsum("kij,nkj->nki", self.block_factors, eps)
        draws[:, self.block_index.reshape(-1)] += moved.reshape(eps.shape[0], -1)
        return draws

    def dense_factor(self) -> np.ndarray:
        n = self.dim
        B = np.zeros((n, n))
        for idx, blk in zip(self.block_index, self.block_factors):
            B[np.ix_(idx, idx)] = blk
        return B

    def covariance(self) -> np.ndarray:
        B = self.dense_factor()
        return B @ B.T

    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.sum(self.dense_factor() ** 2, axis=1))


def kl_to_prior(q: VariationalPosterior, prior: GramMatrix) -> float:
    B = q.dense_factor()
    KinvB = cho_solve((prior.chol, True), B)
    trace = float(np.sum(B * KinvB))
    alpha = cho_solve((prior.chol, True), q.mean)
    logdet_q = 2.0 * float(
        np.sum(np.log(np.abs(np.einsum("kii->ki", q.block_factors))))
    )
    return 0.5 * (trace + float(q.mean @ alpha) - q.dim + prior.logdet() - logdet_q)


def _kl_gradients(q: VariationalPosterior, prior: GramMatrix):
    B = q.dense_factor()
    KinvB = cho_solve((prior.chol, True), B)
    grad_mean = cho_solve((prior.chol, True), q.mean)
    grad_blocks = np.zeros_like(q.block_factors)
    bs = q.block_index.shape[1]
    tril = np.tril(np.ones((bs, bs), bool))
    for k, idx in enumerate(q.block_index):
        blk = q.block_factors[k]
        inv_t = np.linalg.inv(blk).T
        g = KinvB[np.ix_(idx, idx)] - inv_t
        grad_blocks[k] = np.where(tril, g, 0.0)
    return grad_mean, grad_blocks


def elbo(
    loglik: Callable[[np.ndarray], float],
    prior: GramMatrix,
    q: VariationalPosterior,
    n_mc: int = 32,
    seed: int = 0,
) -> float:
    """Monte-Carlo E_q[log lik] minus the closed-form KL(q || prior)."""
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    rng = np.random.default_rng(seed)
    draws, _ = q.sample(n_mc, rng)
    ll = float(np.mean([loglik(u) for u in draws]))
    return ll - kl_to_prior(q, prior)


def vi_fit(
    loglik_and_grad: Callable[[np.ndarray], tuple],
    prior: GramMatrix,
    block_index: np.ndarray,
    steps: int = 3000,
    learning_rate: float = 1e-2,
    n_mc: int = 8,
    seed: int = 0,
    init_mean: Optional[np.ndarray] = None,
) -> VariationalPosterior:
    """Stochastic gradient ascent on the ELBO (Adam updates, reparameterized
    gradients); the rate decays by x0.1 at 2/3 of the run.  NaNs trigger a
    halved-rate restart, at most 3 times."""
    block_index = np.asarray(block_index, int)
    n = prior.size
    rate = learning_rate
    last_err: Optional[str] = None
    for attempt in range(4):
        try:
            return _vi_fit_once(
                loglik_and_grad, prior, block_index, steps, rate, n_mc, seed, init_mean
            )
        except FloatingPointError as err:
            last_err = str(err)
            rate *= 0.5
    raise InferenceError(f"variational fit diverged after 3 halved-rate restarts: {last_err}")


def _vi_fit_once(loglik_and_grad, prior, block_index, steps, rate, n_mc, seed, init_mean):
    n = prior.size
    n_blocks, bs = block_index.shape
    # The mean is optimized through the dual variable a with mean = K a, which
    # preconditions the KL gradient (K^-1 mean becomes a) and keeps the
    # updates stable when the prior Gram is nearly singular.
    if init_mean is None:
        dual = np.zeros(n)
    else:
        dual = cho_solve((prior.chol, True), np.asarray(init_mean, float))
    mean = prior.values @ dual
    tril = np.tril(np.ones((bs, bs)))
    blocks = np.tile(0.5 * np.eye(bs), (n_blocks, 1, 1))
    q = VariationalPosterior(mean=mean, block_index=block_index, block_factors=blocks)
    rng = np.random.default_rng(seed)
    eval_seed = 0 if seed is None else seed + 1_000_003

    def full_loglik(u):
        return loglik_and_grad(u)[0]

    m_m = np.zeros_like(mean)
    v_m = np.zeros_like(mean)
    m_b = np.zeros_like(blocks)
    v_b = np.zeros_like(blocks)
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    flat = block_index.reshape(-1)
    for step in range(1, steps + 1):
        lr = rate if step <= (2 * steps) // 3 else rate * 0.1
        draws, eps = q.sample(n_mc, rng)
        g_mean = np.zeros(n)
        g_blocks = np.zeros_like(blocks)
        for s in range(n_mc):
            _, g = loglik_and_grad(draws[s])
            g_mean += g
            gb = g[flat].reshape(n_blocks, bs)
            g_blocks += np.einsum("ki,kj->kij", gb, eps[s])
        g_mean /= n_mc
        g_blocks = g_blocks / n_mc * tril
        _, kl_gb = _kl_gradients(q, prior)
        # dELBO/da = K (E[grad loglik] - K^-1 mean) = K E[grad loglik] - mean
        g_dual = prior.values @ g_mean - q.mean
        g_blocks -= kl_gb
        if not (np.all(np.isfinite(g_dual)) and np.all(np.isfinite(g_blocks))):
            raise FloatingPointError(f"non-finite gradient at step {step}")
        # keep second-moment accumulators representable under rare spikes
        np.clip(g_dual, -1e10, 1e10, out=g_dual)
        np.clip(g_blocks, -1e10, 1e10, out=g_blocks)
        # Adam ascent
        m_m = beta1 * m_m + (1 - beta1) * g_dual
        v_m = beta2 * v_m + (1 - beta2) * g_dual**2
        m_b = beta1 * m_b + (1 - beta1) * g_blocks
        v_b = beta2 * v_b + (1 - beta2) * g_blocks**2
        corr1 = 1 - beta1**step
        corr2 = 1 - beta2**step
        dual = dual + lr * (m_m / corr1) / (np.sqrt(v_m / corr2) + eps_adam)
        q.mean = prior.values @ dual
        blocks_new = q.block_factors + lr * (m_b / corr1) / (np.sqrt(v_b / corr2) + eps_adam)
        diag = np.einsum("kii->ki", blocks_new)
        np.clip(diag, 1e-6, None, out=diag)
        q.block_factors = blocks_new * tril
        if step % 25 == 0 or step == steps:
            value = elbo(full_loglik, prior, q, n_mc=32, seed=eval_seed)
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite ELBO at step {step}")
            q.elbo_trace.append(value)
    return q


def finite_diff_gradcheck(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    h_scale: float = 1e-5,
) -> float:
    """Max relative error between ``grad`` and central finite differences."""
    x = np.asarray(point, float)
    g = np.asarray(grad(x), float)
    worst = 0.0
    for i in range(len(x)):
        h = h_scale * (1.0 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        fd = (f(x + e) - f(x - e)) / (2 * h)
        denom = max(1e-8, abs(g[i]) + abs(fd))
        worst = max(worst, abs(g[i] - fd) / denom)
    return worst
