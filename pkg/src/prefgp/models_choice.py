"""Choice-function learning with d latent utilities.

Two set-valued likelihoods: "rational" treats the chosen set as the Pareto
set of strongly undominated options, "pseudo_rational" as the union of
per-utility argmaxes.  Both are smooth probit relaxations, fitted with
Gaussian variational inference over the stacked latent utilities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import log_ndtr

from prefgp import model_io
from prefgp.data import Choice, DatasetError, ItemTable, StatementSet
from prefgp.inference import VariationalPosterior, vi_fit
from prefgp.kernels import KernelSpec, block_diag_gram, cross_gram, gram_matrix
from prefgp.tmvn_sampler import PosteriorSamples, predictive_conditional

LOG_FLOOR = 1e-300
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ChoiceModelSpec:
    d: int
    rationality: str
    sigma: float
    kernels: tuple

    def __post_init__(self):
        if self.d < 1:
            raise DatasetError("need at least one latent utility")
        if self.rationality not in ("rational", "pseudo_rational"):
            raise DatasetError(f"unknown rationality {self.rationality!r}")
        if self.sigma <= 0:
            raise DatasetError("probit scale sigma must be positive")
        kernels = tuple(self.kernels)
        if len(kernels) != self.d:
            raise DatasetError(f"expected {self.d} kernels, got {len(kernels)}")
        object.__setattr__(self, "kernels", kernels)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "rationality": self.rationality,
            "sigma": self.sigma,
            "kernels": [k.to_json() for k in self.kernels],
        }

    @staticmethod
    def from_json(obj: dict) -> "ChoiceModelSpec":
        return ChoiceModelSpec(
            d=int(obj["d"]),
            rationality=obj["rationality"],
            sigma=float(obj["sigma"]),
            kernels=tuple(KernelSpec.from_json(k) for k in obj["kernels"]),
        )


def _choices_only(statements) -> list:
    out = [s for s in statements if isinstance(s, Choice)]
    if len(out) != len(list(statements)):
        raise DatasetError("choice models accept Choice statements only")
    if not out:
        raise DatasetError("no choice statements")
    return out


def _phi_ratio(t: np.ndarray) -> np.ndarray:
    """phi(t)/Phi(t), stable for very negative t."""
    return np.exp(-0.5 * t**2 - 0.5 * LOG_2PI - log_ndtr(t))


def _as_matrix(u_stack: np.ndarray, r: int, d: int) -> np.ndarray:
    u = np.asarray(u_stack, float)
    if u.shape != (r * d,):
        raise DatasetError(f"latent vector must have length r*d = {r * d}")
    return u.reshape(d, r)  # utility-major stacking


def _log_pref(U: np.ndarray, o: int, v: int, sigma: float):
    """log prod_i Phi((u_i(o)-u_i(v))/sigma) and the per-utility ratios."""
    t = (U[:, o] - U[:, v]) / sigma
    return float(np.sum(log_ndtr(t))), _phi_ratio(t) / sigma


def _chosen_pairs_factor(U, C, sigma, grad):
    """C-sharp factor: each unordered chosen pair must be incomparable."""
    total = 0.0
    for o, v in combinations(sorted(C), 2):
        lp_ov, ratio_ov = _log_pref(U, o, v, sigma)
        lp_vo, ratio_vo = _log_pref(U, v, o, sigma)
        p_ov, p_vo = np.exp(lp_ov), np.exp(lp_vo)
        # 1 - p_ov - p_vo without cancellation: at most one of the two
        # probabilities can be near 1, so subtract that one via expm1.
        if lp_ov >= lp_vo:
            F = -np.expm1(lp_ov) - p_vo
        else:
            F = -np.expm1(lp_vo) - p_ov
        F = max(F, LOG_FLOOR)
        total += np.log(F)
        if grad is not None:
            # dP(o,v)/du_i(o) = P * ratio_i, antisymmetric in (o, v)
            g = (p_ov * ratio_ov - p_vo * ratio_vo) / F
            grad[:, o] -= g
            grad[:, v] += g
    return total


def rational_choice_loglik_grad(items_r: int, statements, u_stack, sigma: float, d: int):
    """Log likelihood and gradient of the Pareto-relaxed choice model."""
    U = _as_matrix(u_stack, items_r, d)
    grad = np.zeros_like(U)
    total = 0.0
    for s in _choices_only(statements):
        C, R = sorted(s.C), sorted(s.R)
        total += _chosen_pairs_factor(U, C, sigma, grad)
        for v in R:
            # v is rejected because some chosen option dominates it
            lps, ratios = zip(*(_log_pref(U, o, v, sigma) for o in C))
            p = np.exp(np.array(lps))  # P(o > v) per chosen o
            one_minus = np.maximum(1.0 - p, 1e-14)
            Q = float(np.prod(one_minus))
            # 1 - Q without cancellation when every p is tiny
            F = max(-np.expm1(float(np.sum(np.log(one_minus)))), LOG_FLOOR)
            total += np.log(F)
            for idx, (o, ratio) in enumerate(zip(C, ratios)):
                g = (Q / one_minus[idx]) * p[idx] * ratio / F
                grad[:, o] += g
                grad[:, v] -= g
    return total, grad.reshape(-1)


def pseudo_rational_choice_loglik_grad(items_r: int, statements, u_stack, sigma: float, d: int):
    """Log likelihood and gradient of the argmax-union choice model."""
    U = _as_matrix(u_stack, items_r, d)
    grad = np.zeros_like(U)
    total = 0.0
    for s in _choices_only(statements):
        C, R = sorted(s.C), sorted(s.R)
        total += _chosen_pairs_factor(U, C, sigma, grad)
        for v in R:
            # per utility: v must not beat every chosen option
            t = (U[:, [v]] - U[:, C]) / sigma  # d x |C|
            logG = np.sum(log_ndtr(t), axis=1)
            G = np.exp(logG)
            F = np.maximum(-np.expm1(logG), LOG_FLOOR)
            total += float(np.sum(np.log(F)))
            ratios = _phi_ratio(t) / sigma  # d x |C|
            coef = (G / F)[:, None] * ratios
            grad[:, v] -= np.sum(coef, axis=1)
            grad[:, C] += coef
    return total, grad.reshape(-1)


def rational_choice_loglik(D, u_stack, sigma: float, d: int) -> float:
    items, statements = D
    return rational_choice_loglik_grad(items.r, statements, u_stack, sigma, d)[0]


def pseudo_rational_choice_loglik(D, u_stack, sigma: float, d: int) -> float:
    items, statements = D
    return pseudo_rational_choice_loglik_grad(items.r, statements, u_stack, sigma, d)[0]


def pareto_choice_oracle(utilities: Dict, A) -> frozenset:
    """Options in A not strictly dominated (on every coordinate) by another
    member of A."""
    A = sorted(A)
    if not A:
        raise DatasetError("empty choice set")
    chosen = []
    for o in A:
        uo = np.asarray(utilities[o], float)
        dominated = any(np.all(np.asarray(utilities[a], float) > uo) for a in A if a != o)
        if not dominated:
            chosen.append(o)
    return frozenset(chosen)


def pseudo_rational_oracle(utilities: Dict, A) -> frozenset:
    """Union over utilities of the argmax set within A."""
    A = sorted(A)
    if not A:
        raise DatasetError("empty choice set")
    U = np.array([np.atleast_1d(np.asarray(utilities[o], float)) for o in A])
    chosen = set()
    for k in range(U.shape[1]):
        best = np.max(U[:, k])
        chosen.update(A[idx] for idx in np.flatnonzero(U[:, k] == best))
    return frozenset(chosen)


@dataclass
class FittedChoiceModel:
    spec: ChoiceModelSpec
    items: ItemTable
    statements: StatementSet
    q: VariationalPosterior
    gram: object
    seed: int = 0

    @property
    def r(self) -> int:
        return self.items.r

    def utility_matrix_samples(self, n_samples: int, seed: int) -> np.ndarray:
        """(n, d, r) draws of the utilities at the training items."""
        rng = np.random.default_rng(seed)
        draws, _ = self.q.sample(n_samples, rng)
        return draws.reshape(n_samples, self.spec.d, self.r)

    def utility_samples_at(self, X_star, n_samples: int, seed: int) -> np.ndarray:
        """(n, d, p) utility draws at new feature rows via the GP conditional
        of each utility given a variational draw at the training items."""
        feats = np.atleast_2d(np.asarray(getattr(X_star, "features", X_star), float))
        train = self.utility_matrix_samples(n_samples, seed)
        out = np.empty((n_samples, self.spec.d, feats.shape[0]))
        for a in range(self.spec.d):
            gram_a = gram_matrix(self.items.features, self.spec.kernels[a])
            k_st = cross_gram(feats, self.items.features, self.spec.kernels[a])
            k_ss = cross_gram(feats, feats, self.spec.kernels[a])
            cond = predictive_conditional(
                gram_a,
                k_st,
                k_ss,
                PosteriorSamples(values=train[:, a, :]),
                seed=(seed or 0) + 17 * (a + 1),
            )
            out[:, a, :] = cond.values
        return out

    def save(self, path) -> None:
        meta = {
            "class": "choice",
            "spec": self.spec.to_json(),
            "ids": list(self.items.ids),
            "statements": [{"A": sorted(s.A), "C": sorted(s.C)} for s in self.statements],
            "item_hash": self.items.content_hash(),
            "seed": self.seed,
            "block_shape": list(self.q.block_index.shape),
        }
        arrays = {
            "features": self.items.features,
            "q_mean": self.q.mean,
            "q_blocks": self.q.block_factors,
            "q_index": self.q.block_index,
            "elbo_trace": np.asarray(self.q.elbo_trace, float),
        }
        model_io.save_blocks(path, meta, arrays)

    @staticmethod
    def load(path) -> "FittedChoiceModel":
        meta, arrays = model_io.load_blocks(path)
        if meta["class"] != "choice":
            raise DatasetError(f"not a choice model file: class={meta['class']!r}")
        spec = ChoiceModelSpec.from_json(meta["spec"])
        items = ItemTable(ids=tuple(meta["ids"]), features=arrays["features"])
        statements = StatementSet(
            tuple(Choice(frozenset(s["A"]), frozenset(s["C"])) for s in meta["statements"])
        )
        q = VariationalPosterior(
            mean=arrays["q_mean"],
            block_index=arrays["q_index"].astype(int),
            block_factors=arrays["q_blocks"],
            elbo_trace=list(arrays["elbo_trace"]),
        )
        gram = block_diag_gram(items.features, spec.kernels, spec.d)
        return FittedChoiceModel(
            spec=spec, items=items, statements=statements, q=q, gram=gram, seed=meta["seed"]
        )


def fit_choice_model(
    items: ItemTable,
    statements: StatementSet,
    spec: ChoiceModelSpec,
    steps: int = 1500,
    n_mc: int = 8,
    learning_rate: float = 2e-2,
    seed: int = 0,
) -> FittedChoiceModel:
    _choices_only(statements)
    statements.validate_against(items)
    gram = block_diag_gram(items.features, spec.kernels, spec.d)
    r, d = items.r, spec.d
    # one dense d x d covariance block per item row
    block_index = np.array([[a * r + i for a in range(d)] for i in range(r)], int)
    if spec.rationality == "rational":
        fn = lambda u: rational_choice_loglik_grad(r, statements, u, spec.sigma, d)
    else:
        fn = lambda u: pseudo_rational_choice_loglik_grad(r, statements, u, spec.sigma, d)
    q = vi_fit(
        fn,
        gram,
        block_index,
        steps=steps,
        learning_rate=learning_rate,
        n_mc=n_mc,
        seed=seed,
    )
    return FittedChoiceModel(
        spec=spec, items=items, statements=statements, q=q, gram=gram, seed=seed
    )


def predict_choice(
    model: FittedChoiceModel, A_star, n_samples: int = 1000, seed: int = 0
) -> tuple:
    """Subset distribution of the choice from A_star under the posterior.

    Applies the model's oracle to each posterior utility draw; returns
    (probabilities keyed by sorted tuple, modal chosen set).
    """
    A = sorted(int(a) for a in A_star)
    if len(A) < 1:
        raise DatasetError("empty query set")
    if len(A) > 12:
        raise DatasetError("query sets above 12 options are not enumerated; split the set")
    if any(not 0 <= a < model.r for a in A):
        raise DatasetError("query references an unknown item index")
    oracle = (
        pareto_choice_oracle if model.spec.rationality == "rational" else pseudo_rational_oracle
    )
    draws = model.utility_matrix_samples(n_samples, seed)
    counts: Dict[tuple, int] = {}
    for s in range(n_samples):
        util_map = {a: draws[s, :, a] for a in A}
        key = tuple(sorted(oracle(util_map, A)))
        counts[key] = counts.get(key, 0) + 1
    probs = {key: cnt / n_samples for key, cnt in counts.items()}
    modal = frozenset(max(probs, key=lambda k: (probs[k], k)))
    return probs, modal
