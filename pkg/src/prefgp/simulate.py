"""Synthetic data generators used by the CLI, tests, and demos.

Three built-in ground-truth families:
  thermal  -- a tri-modal comfort curve over temperatures 10..25 with local
              peaks near 12, 15, and 20 (one latent utility)
  dessert  -- three seasonal dessert utilities over day-of-year in [0, 1]
  cupcake  -- two antagonistic utilities over one feature, crossing mid-domain

Each family can be observed through several error models: exact comparisons,
just-noticeable-difference comparisons, probit errors, common per-item
Gaussian noise, full orderings, and Pareto / pseudo-rational choice sets.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from prefgp.data import Choice, DatasetError, Indiff, ItemTable, Ordering, Pref, StatementSet
from prefgp.models_choice import pareto_choice_oracle, pseudo_rational_oracle

# The 19 error-free temperature comparisons used throughout the object-model
# demos: preferred temperature first.
D19_PAIRS = (
    (12, 10),
    (13, 25),
    (14, 13),
    (15, 22),
    (15, 23),
    (16, 11),
    (19, 15),
    (19, 21),
    (19, 22),
    (19, 24),
    (20, 10),
    (20, 14),
    (20, 21),
    (20, 24),
    (20, 25),
    (21, 13),
    (21, 25),
    (23, 25),
    (24, 25),
)

# Temperatures appearing in the pairs plus 18, which is present in the item
# table but referenced by no statement (17 is absent entirely).
THERMAL_TEMPS = (10, 11, 12, 13, 14, 15, 16, 18, 19, 20, 21, 22, 23, 24, 25)

DESSERT_LABELS = ("brownie", "fruitcake", "icecream")


def thermal_utility(x) -> np.ndarray:
    """Tri-modal comfort curve; consistent with every pair in D19_PAIRS."""
    x = np.asarray(x, float)
    return (
        0.3 * np.exp(-((x - 12.0) ** 2) / 2.0)
        + 0.6 * np.exp(-((x - 15.0) ** 2) / 1.5)
        + 1.0 * np.exp(-((x - 19.8) ** 2) / 2.5)
    )


def thermal_items() -> ItemTable:
    return ItemTable(
        ids=tuple(THERMAL_TEMPS),
        features=np.array(THERMAL_TEMPS, float)[:, None],
    )


def d19_statements() -> StatementSet:
    items = thermal_items()
    return StatementSet(
        tuple(Pref(items.index_of(a), items.index_of(b)) for a, b in D19_PAIRS)
    )


def dessert_utilities(x) -> np.ndarray:
    """Rows: (brownie, fruitcake, icecream) seasonal utilities at x = day/365."""
    x = np.asarray(x, float)
    brownie = 1.2 * np.exp(-(x**2) / (2 * 0.15**2))
    fruitcake = 1.5 * np.exp(-((x - 0.28) ** 2) / (2 * 0.18**2))
    icecream = 1.8 * np.exp(-((x - 0.5) ** 2) / (2 * 0.18**2))
    return np.stack([brownie, fruitcake, icecream], axis=-1)


def cupcake_utilities(x) -> np.ndarray:
    """Two antagonistic taste dimensions crossing near the domain middle."""
    x = np.asarray(x, float)
    return np.stack([1.0 - x, x], axis=-1)


def _random_pairs(rng: np.random.Generator, r: int, m: int) -> list:
    """m distinct unordered index pairs."""
    all_pairs = [(i, j) for i in range(r) for j in range(i + 1, r)]
    if m > len(all_pairs):
        raise DatasetError(f"cannot draw {m} distinct pairs from {r} items")
    chosen = rng.choice(len(all_pairs), size=m, replace=False)
    return [all_pairs[k] for k in chosen]


def thermal_dataset(
    mode: str = "exact",
    n_pairs: int = 19,
    seed: int = 0,
    sigma: float = 0.05,
    delta: float = 0.025,
    exclude_pairs: Sequence[tuple] = ((18, 20),),
) -> tuple:
    """Comparison data from the thermal curve.

    mode "exact": the 19 canonical pairs first, then extra random consistent
    pairs; "probit": independent comparison errors with scale sigma;
    "jnd": strict/indifferent split at threshold delta; "common_noise": one
    noise realisation per temperature, shared across all pairs touching it.
    """
    items = thermal_items()
    truth = thermal_utility(items.features[:, 0])
    rng = np.random.default_rng(seed)
    excluded = {frozenset(p) for p in exclude_pairs}
    statements: list = []
    if mode == "exact":
        base = [(items.index_of(a), items.index_of(b)) for a, b in D19_PAIRS[:n_pairs]]
        statements.extend(Pref(i, j) for i, j in base)
        seen = {frozenset((i, j)) for i, j in base}
        while len(statements) < n_pairs:
            i, j = _random_pairs(rng, items.r, 1)[0]
            key = frozenset((i, j))
            pair_ids = frozenset((items.ids[i], items.ids[j]))
            if key in seen or pair_ids in excluded or truth[i] == truth[j]:
                continue
            seen.add(key)
            statements.append(Pref(i, j) if truth[i] > truth[j] else Pref(j, i))
    elif mode == "probit":
        for i, j in _random_pairs(rng, items.r, n_pairs):
            noisy = truth[i] - truth[j] + sigma * rng.standard_normal()
            statements.append(Pref(i, j) if noisy > 0 else Pref(j, i))
    elif mode == "jnd":
        for i, j in _random_pairs(rng, items.r, n_pairs):
            gap = truth[i] - truth[j]
            if abs(gap) <= delta:
                statements.append(Indiff(i, j))
            else:
                statements.append(Pref(i, j) if gap > 0 else Pref(j, i))
    elif mode == "common_noise":
        noise = sigma * rng.standard_normal(items.r)
        observed = truth + noise
        pairs = _random_pairs(rng, items.r, min(n_pairs, items.r * (items.r - 1) // 2))
        for i, j in pairs:
            statements.append(Pref(i, j) if observed[i] > observed[j] else Pref(j, i))
    else:
        raise DatasetError(f"unknown thermal mode {mode!r}")
    return items, StatementSet(tuple(statements))


def dessert_dataset(
    n_days: int = 50,
    seed: int = 0,
    noise: float = 0.0,
) -> tuple:
    """Full orderings of the three desserts at random days; returns
    (covariates, statements, labels)."""
    rng = np.random.default_rng(seed)
    days = np.sort(rng.uniform(0.0, 1.0, size=n_days))
    U = dessert_utilities(days)
    if noise > 0:
        U = U + noise * rng.standard_normal(U.shape)
    covariates = ItemTable(ids=tuple(range(n_days)), features=days[:, None])
    statements = tuple(
        Ordering(row, tuple(np.argsort(-U[row]))) for row in range(n_days)
    )
    return covariates, StatementSet(statements), list(DESSERT_LABELS)


def cupcake_dataset(
    n_items: int = 60,
    n_statements: int = 200,
    subset_size: int = 3,
    seed: int = 0,
    rationality: str = "rational",
    utilities: Optional[Callable] = None,
) -> tuple:
    """Choice sets from the two-utility cupcake curves.

    rationality "rational" labels each subset with its Pareto-undominated
    set, "pseudo_rational" with the union of per-utility argmaxes.
    """
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-0.25, 1.25, size=n_items)
    U = (utilities or cupcake_utilities)(xs)
    items = ItemTable(ids=tuple(range(n_items)), features=xs[:, None])
    util_map = {idx: U[idx] for idx in range(n_items)}
    oracle = pareto_choice_oracle if rationality == "rational" else pseudo_rational_oracle
    if rationality not in ("rational", "pseudo_rational"):
        raise DatasetError(f"unknown rationality {rationality!r}")
    statements = []
    for _ in range(n_statements):
        A = frozenset(rng.choice(n_items, size=subset_size, replace=False).tolist())
        statements.append(Choice(A, oracle(util_map, A)))
    return items, StatementSet(tuple(statements))


def ellipse_pool(n: int = 50, seed: int = 0) -> tuple:
    """Pool of ellipses described by (eccentricity, axis misalignment).

    Returns (ItemTable, true d=2 utilities): utility 1 rewards small
    eccentricity, utility 2 rewards axis alignment.
    """
    rng = np.random.default_rng(seed)
    ecc = rng.uniform(0.0, 0.95, size=n)
    tilt = rng.uniform(0.0, np.pi / 2, size=n)
    feats = np.stack([ecc, tilt], axis=1)
    items = ItemTable(ids=tuple(range(n)), features=feats)
    truth = np.stack([1.0 - 2.0 * ecc, 1.0 - 2.0 * tilt / (np.pi / 2)], axis=1)
    return items, truth
