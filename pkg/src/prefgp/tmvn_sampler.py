"""Sampling from linearly constrained Gaussians and SUN distributions.

The workhorse is elliptical slice sampling restricted to a polytope
{u : W u <= c}: each iteration intersects the sampling ellipse with every
half-space in closed form and draws uniformly from the feasible arc union,
so no proposal is ever rejected.  SUN draws are built additively from an
unconstrained Gaussian part plus a truncated-Gaussian part pushed through
the skewness matrix.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_ndtr

from prefgp.kernels import jittered_cholesky

_TWO_PI = 2.0 * np.pi


class InfeasibleRegionError(ValueError):
    pass


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TruncationRegion:
    """Constraint system {u : W u <= c}."""

    W: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, float))
        c = np.atleast_1d(np.asarray(self.c, float))
        if W.shape[0] < 1:
            raise ValueError("a truncation region needs at least one constraint row")
        if c.shape[0] != W.shape[0]:
            raise ValueError("constraint vector length does not match row count")
        norms = np.linalg.norm(W, axis=1)
        if np.any(norms == 0):
            raise ValueError("every constraint row must be nonzero")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def contains(self, u: np.ndarray, tol: float = 1e-10) -> bool:
        return bool(np.all(self.W @ u <= self.c + tol))


@dataclass(frozen=True)
class SunParams:
    """Parameters of a unified skew-normal: z = xi + r0 + Delta Gamma^-1 r1
    with r0 ~ N(0, Omega - Delta Gamma^-1 Delta^T) and r1 a draw from
    N(0, Gamma) truncated to r1 + gamma >= 0."""

    xi: np.ndarray
    Omega: np.ndarray
    Delta: np.ndarray
    gamma: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, float))
        Omega = np.atleast_2d(np.asarray(self.Omega, float))
        Delta = np.atleast_2d(np.asarray(self.Delta, float))
        gamma = np.atleast_1d(np.asarray(self.gamma, float))
        Gamma = np.atleast_2d(np.asarray(self.Gamma, float))
        p, s = Delta.shape
        if Omega.shape != (p, p) or xi.shape != (p,) or Gamma.shape != (s, s) or gamma.shape != (s,):
            raise ValueError("inconsistent SUN parameter dimensions")
        M = np.block([[Omega, Delta], [Delta.T, Gamma]])
        eig_min = float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))
        scale = max(1.0, float(np.max(np.abs(M))))
        if eig_min < -1e-8 * scale:
            raise ValueError("joint SUN matrix [[Omega, Delta],[Delta^T, Gamma]] is not PSD")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "Delta", Delta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "Gamma", Gamma)

    @property
    def p(self) -> int:
        return self.Delta.shape[0]

    @property
    def s(self) -> int:
        return self.Delta.shape[1]


@dataclass(frozen=True)
class PosteriorSamples:
    """n_samples x dim matrix of draws; the universal prediction currency."""

    values: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.atleast_2d(np.asarray(self.values, float)))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def save(self, path) -> None:
        header = {
            "n_samples": int(self.n_samples),
            "dim": int(self.dim),
            "seed": None if self.seed is None else int(self.seed),
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            fh.write(np.asfortranarray(self.values).tobytes(order="F"))

    @staticmethod
    def load(path) -> "PosteriorSamples":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        values = np.frombuffer(raw, dtype=float).reshape(
            (header["n_samples"], header["dim"]), order="F"
        )
        return PosteriorSamples(values=values.copy(), seed=header["seed"])


def _lp_interior_point(W: np.ndarray, c: np.ndarray, norms: np.ndarray) -> Optional[np.ndarray]:
    """Max-margin interior point of {u : W u <= c} via a linear program.

    Maximizes t subject to W u + t * ||row|| <= c with box-bounded u; returns
    None when the program is infeasible or the optimal margin is nonpositive.
    """
    from scipy.optimize import linprog

    n = W.shape[1]
    bound = 10.0 * max(1.0, float(np.max(np.abs(c))))
    res = linprog(
        c=np.concatenate([np.zeros(n), [-1.0]]),
        A_ub=np.hstack([W, norms[:, None]]),
        b_ub=c,
        bounds=[(-bound, bound)] * n + [(0.0, None)],
        method="highs",
    )
    if not res.success or res.x is None or res.x[-1] <= 0.0:
        return None
    return res.x[:n]


def find_feasible_point(region: TruncationRegion, chol: Optional[np.ndarray] = None) -> np.ndarray:
    """Point with W u <= c - 1e-8*||row|| via relaxed half-space projections.

    Runs Motzkin-style iterations (project onto the most violated shifted
    half-space) for up to 5000 steps, retrying with smaller interior margins
    when the fattened system looks empty.
    """
    W, c = region.W, region.c
    norms = np.linalg.norm(W, axis=1)
    required = 1e-8 * norms
    scale = np.maximum(1.0, np.abs(c))
    for shrink in (1e-2, 1e-4, 1e-6, 0.0):
        margin = required + shrink * scale * norms
        target = c - margin
        u = np.zeros(region.dim)
        for _ in range(5000):
            viol = W @ u - target
            worst = int(np.argmax(viol))
            if viol[worst] <= 0:
                if np.all(W @ u <= c - required):
                    return u
                break
            # over-relaxed projection onto the violated half-space
            u = u - 1.5 * viol[worst] / norms[worst] ** 2 * W[worst]
    # projection iterations stalled; fall back to a max-margin linear program
    u = _lp_interior_point(W, c, norms)
    if u is not None and np.all(W @ u <= c - required):
        return u
    viol = W @ np.zeros(region.dim) - c
    worst = int(np.argmax(viol))
    raise InfeasibleRegionError(
        "no feasible point found: constraints look inconsistent "
        f"(most violated row {worst}: W[{worst}] u <= {c[worst]:.6g}); "
        "for strict preferences this signals an asymmetry or "
        "negative-transitivity violation"
    )


def _feasible_arcs(a: np.ndarray, b: np.ndarray, rhs: np.ndarray):
    """Arc union {phi : a_i cos(phi) + b_i sin(phi) <= rhs_i for all i}.

    Returns (starts, lengths) of disjoint feasible arcs in [0, 2pi), or None
    when the union is numerically empty.
    """
    radius = np.hypot(a, b)
    alpha = np.arctan2(b, a)
    active = radius > rhs + 1e-14  # rows never binding on the ellipse drop out
    if np.any(radius[active] < -rhs[active]):
        return None
    if not np.any(active):
        return np.array([0.0]), np.array([_TWO_PI])
    ratio = np.clip(rhs[active] / radius[active], -1.0, 1.0)
    theta = np.arccos(ratio)
    # forbidden arc for each active row: phi in (alpha - theta, alpha + theta)
    cuts = np.concatenate([(alpha[active] - theta) % _TWO_PI, (alpha[active] + theta) % _TWO_PI])
    cuts = np.sort(np.unique(np.concatenate([cuts, [0.0]])))
    edges = np.concatenate([cuts, [_TWO_PI + cuts[0]]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    ok = np.all(
        np.outer(np.cos(mids), a[active]).T + np.outer(np.sin(mids), b[active]).T
        <= rhs[active][:, None] + 1e-12,
        axis=0,
    )
    if not np.any(ok):
        return None
    starts = edges[:-1][ok]
    lengths = (edges[1:] - edges[:-1])[ok]
    return starts, lengths


def liness_sample(
    mean: np.ndarray,
    chol: np.ndarray,
    region: TruncationRegion,
    n_samples: int,
    burn_in: int = 500,
    thinning: int = 1,
    seed: int = 0,
    initial: Optional[np.ndarray] = None,
) -> PosteriorSamples:
    """Rejection-free elliptical slice sampling of N(mean, chol chol^T)
    restricted to the region.  Deterministic given the seed; every emitted
    sample satisfies W u <= c + 1e-10."""
    mean = np.atleast_1d(np.asarray(mean, float))
    dim = mean.shape[0]
    if region.dim != dim:
        raise ValueError("region dimension does not match the mean")
    rng = np.random.default_rng(seed)
    # work in the centered variable z = u - mean
    W = region.W
    b = region.c - W @ mean
    centered = TruncationRegion(W, b)
    if initial is not None:
        z = np.asarray(initial, float) - mean
        if not centered.contains(z):
            raise InfeasibleRegionError("provided initial point violates the region")
    else:
        z = find_feasible_point(centered)
    Wz = W @ z
    out = np.empty((n_samples, dim))
    kept = 0
    it = 0
    total = burn_in + n_samples * thinning
    while kept < n_samples:
        it += 1
        restarts = 0
        while True:
            nu = chol @ rng.standard_normal(dim)
            arcs = _feasible_arcs(Wz, W @ nu, b)
            if arcs is not None:
                break
            restarts += 1
            if restarts > 100:
                raise SamplingError("feasible arc empty after 100 fresh ellipse restarts")
        starts, lengths = arcs
        t = rng.uniform(0.0, float(np.sum(lengths)))
        cum = np.cumsum(lengths)
        k = int(np.searchsorted(cum, t, side="right"))
        k = min(k, len(starts) - 1)
        phi = starts[k] + (t - (cum[k] - lengths[k]))
        z_new = z * np.cos(phi) + nu * np.sin(phi)
        Wz_new = W @ z_new
        if np.all(Wz_new <= b + 1e-10):
            z, Wz = z_new, Wz_new
        # else: keep the current point; boundary round-off only
        if it > burn_in and (it - burn_in) % thinning == 0:
            out[kept] = mean + z
            kept += 1
    if not np.all(out @ W.T <= region.c + 1e-10):
        raise SamplingError("emitted sample violates the truncation region")
    return PosteriorSamples(values=out, seed=seed)


def sun_sample(params: SunParams, n_samples: int, seed: int = 0) -> PosteriorSamples:
    """Draws from the SUN distribution via its additive decomposition."""
    p, s = params.p, params.s
    GtG = 0.5 * (params.Gamma + params.Gamma.T)
    if np.allclose(params.Delta, 0.0):
        chol0, _ = jittered_cholesky(params.Omega, max(1.0, float(np.max(np.diag(params.Omega)))))
        rng = np.random.default_rng(seed)
        r0 = rng.standard_normal((n_samples, p)) @ chol0.T
        return PosteriorSamples(values=params.xi + r0, seed=seed)
    cholG, _ = jittered_cholesky(GtG, max(1.0, float(np.max(np.diag(GtG)))))
    # r1 >= -gamma  <=>  -I r1 <= gamma
    region = TruncationRegion(-np.eye(s), params.gamma)
    r1 = liness_sample(np.zeros(s), cholG, region, n_samples, seed=seed).values
    GinvD = cho_solve((cholG, True), params.Delta.T)  # Gamma^-1 Delta^T, s x p
    cov0 = params.Omega - params.Delta @ GinvD
    cov0 = 0.5 * (cov0 + cov0.T)
    chol0, _ = jittered_cholesky(cov0, max(1.0, float(np.max(np.abs(np.diag(params.Omega))))))
    rng = np.random.default_rng(None if seed is None else seed + 1)
    r0 = rng.standard_normal((n_samples, p)) @ chol0.T
    values = params.xi + r0 + r1 @ GinvD
    return PosteriorSamples(values=values, seed=seed)


def sun_logpdf(params: SunParams, z: np.ndarray) -> float:
    """Log density of the SUN distribution at ``z`` (small s only).

    log phi_p(z - xi; Omega) + log Phi_s(gamma + Delta^T Omega^-1 (z - xi);
    Gamma - Delta^T Omega^-1 Delta) - log Phi_s(gamma; Gamma).
    """
    z = np.atleast_1d(np.asarray(z, float))
    diff = z - params.xi
    cholO, _ = jittered_cholesky(params.Omega, max(1.0, float(np.max(np.diag(params.Omega)))))
    alpha = cho_solve((cholO, True), diff)
    log_norm = (
        -0.5 * params.p * np.log(_TWO_PI)
        - float(np.sum(np.log(np.diag(cholO))))
        - 0.5 * float(diff @ alpha)
    )
    OinvD = cho_solve((cholO, True), params.Delta)
    mean_cond = params.gamma + params.Delta.T @ alpha
    cov_cond = params.Gamma - params.Delta.T @ OinvD
    log_num = _mvn_logcdf(mean_cond, cov_cond)
    log_den = _mvn_logcdf(params.gamma, params.Gamma)
    return log_norm + log_num - log_den


def _mvn_logcdf(upper: np.ndarray, cov: np.ndarray, n_points: int = 1 << 13) -> float:
    """log P(Z <= upper) for Z ~ N(0, cov).

    Sequential-conditioning quasi Monte Carlo over a seeded scrambled Sobol
    sequence: each coordinate is integrated as a normal CDF conditional on
    the previous ones, so the integrand has unit dimension less than the
    problem and the estimate is deterministic for fixed inputs."""
    from scipy.special import logsumexp, ndtri
    from scipy.stats import qmc

    upper = np.atleast_1d(np.asarray(upper, float))
    cov = np.atleast_2d(np.asarray(cov, float))
    m = upper.shape[0]
    if m == 1:
        return float(log_ndtr(upper[0] / np.sqrt(max(cov[0, 0], 1e-300))))
    cov = 0.5 * (cov + cov.T)
    scale = max(1.0, float(np.max(np.diag(cov))))
    L, _ = jittered_cholesky(cov + 1e-10 * scale * np.eye(m), scale)
    sobol = qmc.Sobol(d=m - 1, scramble=True, seed=0)
    W = sobol.random(n_points)
    log_f = np.full(n_points, float(log_ndtr(upper[0] / L[0, 0])))
    log_e = log_f.copy()
    Y = np.zeros((n_points, m - 1))
    for i in range(1, m):
        u = np.clip(W[:, i - 1] * np.exp(log_e), 1e-300, 1.0 - 1e-16)
        Y[:, i - 1] = ndtri(u)
        t = (upper[i] - Y[:, :i] @ L[i, :i]) / L[i, i]
        log_e = log_ndtr(t)
        log_f += log_e
    return float(logsumexp(log_f) - np.log(n_points))


def predictive_conditional(
    gram_train,
    k_star_train: np.ndarray,
    k_star_star: np.ndarray,
    u_train_samples: PosteriorSamples,
    seed: int = 0,
) -> PosteriorSamples:
    """GP conditional at query points, one draw per training draw.

    mean_s = K(X*,X) K^-1 u_s, shared covariance
    K(X*,X*) - K(X*,X) K^-1 K(X,X*).
    """
    k_star_train = np.atleast_2d(np.asarray(k_star_train, float))
    k_star_star = np.atleast_2d(np.asarray(k_star_star, float))
    p = k_star_train.shape[0]
    if p == 0:
        return PosteriorSamples(values=np.empty((u_train_samples.n_samples, 0)), seed=seed)
    Kinv_kt = cho_solve((gram_train.chol, True), k_star_train.T)  # r x p
    means = u_train_samples.values @ Kinv_kt  # n x p
    cov = k_star_star - k_star_train @ Kinv_kt
    cov = 0.5 * (cov + cov.T)
    scale = max(1e-12, float(np.max(np.abs(np.diag(k_star_star)))))
    chol_c, _ = jittered_cholesky(cov + 1e-12 * scale * np.eye(p), scale)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((u_train_samples.n_samples, p)) @ chol_c.T
    return PosteriorSamples(values=means + noise, seed=seed)
