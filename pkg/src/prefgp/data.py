"""Dataset schemas, ingestion, encodings, and evaluation metrics.

JSON is the canonical interchange format; long-format CSV is supported for
discrete-choice tables (one row per alternative, one chosen row per case).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Pref:
    i: int
    j: int

    def __post_init__(self):
        if self.i == self.j:
            raise DatasetError(f"self-preference on item {self.i}")


@dataclass(frozen=True)
class Indiff:
    i: int
    j: int

    def __post_init__(self):
        if self.i == self.j:
            raise DatasetError(f"self-indifference on item {self.i}")


@dataclass(frozen=True)
class Ordering:
    row: int
    ranking: tuple  # label indices, best first; may be partial

    def __post_init__(self):
        ranking = tuple(int(v) for v in self.ranking)
        if len(set(ranking)) != len(ranking) or len(ranking) < 2:
            raise DatasetError(f"ordering must list at least two distinct labels: {ranking}")
        object.__setattr__(self, "ranking", ranking)


@dataclass(frozen=True)
class Choice:
    A: frozenset
    C: frozenset

    def __post_init__(self):
        A = frozenset(int(v) for v in self.A)
        C = frozenset(int(v) for v in self.C)
        if len(A) < 2:
            raise DatasetError("choice set A needs at least two options")
        if not C or not C.issubset(A):
            raise DatasetError("chosen set C must be a nonempty subset of A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)

    @property
    def R(self) -> frozenset:
        return self.A - self.C


Statement = Union[Pref, Indiff, Ordering, Choice]


@dataclass(frozen=True)
class ItemTable:
    ids: tuple
    features: np.ndarray
    standardization: Optional[dict] = None

    def __post_init__(self):
        ids = tuple(self.ids)
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate item ids")
        features = np.atleast_2d(np.asarray(self.features, float))
        if features.shape[0] != len(ids):
            raise DatasetError("feature row count does not match id count")
        if not np.all(np.isfinite(features)):
            raise DatasetError("non-finite feature values")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", features)

    @property
    def r(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def index_of(self, item_id) -> int:
        try:
            return self.ids.index(item_id)
        except ValueError:
            raise DatasetError(f"unknown item id {item_id!r}") from None

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(json.dumps(list(self.ids), sort_keys=False, default=str).encode())
        h.update(np.ascontiguousarray(self.features).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class StatementSet:
    statements: tuple

    def __post_init__(self):
        object.__setattr__(self, "statements", tuple(self.statements))

    def __len__(self) -> int:
        return len(self.statements)

    def __iter__(self):
        return iter(self.statements)

    def of_type(self, cls) -> list:
        return [s for s in self.statements if isinstance(s, cls)]

    def validate_against(self, items: ItemTable, n_labels: Optional[int] = None) -> None:
        r = items.r
        for s in self.statements:
            if isinstance(s, (Pref, Indiff)):
                for idx in (s.i, s.j):
                    if not 0 <= idx < r:
                        raise DatasetError(f"statement references unknown item index {idx}")
            elif isinstance(s, Ordering):
                if not 0 <= s.row < r:
                    raise DatasetError(f"ordering references unknown covariate row {s.row}")
                if n_labels is not None and any(not 0 <= v < n_labels for v in s.ranking):
                    raise DatasetError(f"ordering label out of range: {s.ranking}")
            elif isinstance(s, Choice):
                if any(not 0 <= idx < r for idx in s.A):
                    raise DatasetError(f"choice references unknown item index in {sorted(s.A)}")


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def _statement_to_json(s: Statement) -> dict:
    if isinstance(s, Pref):
        return {"type": "pref", "i": s.i, "j": s.j}
    if isinstance(s, Indiff):
        return {"type": "indiff", "i": s.i, "j": s.j}
    if isinstance(s, Ordering):
        return {"type": "ordering", "row": s.row, "ranking": list(s.ranking)}
    if isinstance(s, Choice):
        return {"type": "choice", "A": sorted(s.A), "C": sorted(s.C)}
    raise DatasetError(f"unknown statement {s!r}")


def _statement_from_json(obj: dict, pos: int) -> Statement:
    try:
        kind = obj["type"]
        if kind == "pref":
            return Pref(int(obj["i"]), int(obj["j"]))
        if kind == "indiff":
            return Indiff(int(obj["i"]), int(obj["j"]))
        if kind == "ordering":
            return Ordering(int(obj["row"]), tuple(obj["ranking"]))
        if kind == "choice":
            return Choice(frozenset(obj["A"]), frozenset(obj["C"]))
    except KeyError as err:
        raise DatasetError(f"statement {pos}: missing field {err}") from None
    raise DatasetError(f"statement {pos}: unknown type {obj.get('type')!r}")


def load_dataset(path) -> tuple:
    """Read the canonical JSON schema; returns (ItemTable, StatementSet, labels)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_dataset(doc)


def parse_dataset(doc: dict) -> tuple:
    if not isinstance(doc, dict) or "items" not in doc:
        raise DatasetError("dataset document must be an object with an 'items' array")
    ids, rows = [], []
    for pos, item in enumerate(doc["items"]):
        if "id" not in item or "features" not in item:
            raise DatasetError(f"items[{pos}]: need 'id' and 'features'")
        ids.append(item["id"])
        rows.append([float(v) for v in item["features"]])
    try:
        items = ItemTable(ids=tuple(ids), features=np.array(rows, float))
    except Exception as err:
        raise DatasetError(f"invalid item table: {err}") from None
    statements = tuple(
        _statement_from_json(s, pos) for pos, s in enumerate(doc.get("statements", []))
    )
    sset = StatementSet(statements)
    labels = doc.get("labels")
    sset.validate_against(items, None if labels is None else len(labels))
    return items, sset, labels


def save_dataset(path, items: ItemTable, statements: StatementSet, labels=None) -> None:
    doc = {
        "items": [
            {"id": i, "features": list(map(float, f))} for i, f in zip(items.ids, items.features)
        ],
        "statements": [_statement_to_json(s) for s in statements],
    }
    if labels is not None:
        doc["labels"] = list(labels)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# long-format choice CSV (one row per alternative)
# ---------------------------------------------------------------------------


def load_long_csv(
    path,
    case_column: str,
    alt_column: str,
    choice_column: str,
    feature_columns: Sequence[str],
    mode: str = "pairwise",
    row_filter=None,
) -> tuple:
    """Ingest a long-format discrete-choice table.

    Each case contributes either one Choice(A, {chosen}) statement
    (mode="choice") or its expansion into chosen-beats-each-alternative
    pairwise statements (mode="pairwise").  Items are (case, alternative)
    rows; ``row_filter`` drops raw rows before grouping.
    """
    if mode not in ("pairwise", "choice"):
        raise DatasetError(f"unknown mode {mode!r}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError("long CSV needs a header row")
        for col in [case_column, alt_column, choice_column, *feature_columns]:
            if col not in reader.fieldnames:
                raise DatasetError(f"missing column {col!r}")
        raw = [row for row in reader if row_filter is None or row_filter(row)]
    cases: dict = {}
    for row in raw:
        cases.setdefault(row[case_column], []).append(row)
    ids, feats, statements = [], [], []
    for case_id, rows in cases.items():
        indices = {}
        chosen = []
        for row in rows:
            idx = len(ids)
            ids.append(f"{case_id}:{row[alt_column]}")
            feats.append([float(row[c]) for c in feature_columns])
            indices[row[alt_column]] = idx
            if _truthy(row[choice_column]):
                chosen.append(idx)
        if mode == "pairwise":
            if len(chosen) != 1:
                raise DatasetError(
                    f"case {case_id}: expected exactly one chosen row, got {len(chosen)}"
                )
            winner = chosen[0]
            statements.extend(Pref(winner, idx) for idx in indices.values() if idx != winner)
        else:
            if not chosen:
                raise DatasetError(f"case {case_id}: no chosen row")
            statements.append(Choice(frozenset(indices.values()), frozenset(chosen)))
    items = ItemTable(ids=tuple(ids), features=np.array(feats, float))
    return items, StatementSet(tuple(statements))


def _truthy(value: str) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# recommender tiling
# ---------------------------------------------------------------------------


def encode_recsys_pairs(
    user_features: ItemTable,
    interactions: Iterable[tuple],
    n_items: int,
) -> tuple:
    """Tile user features across items, appending the item index as the last
    feature; the row for (item a, user k) sits at a*n_users + k, so the
    preference (user k: item a over item b) becomes row a*n_users+k over row
    b*n_users+k."""
    n_users = user_features.r
    rows = np.empty((n_items * n_users, user_features.n_features + 1))
    ids = []
    for a in range(n_items):
        base = a * n_users
        rows[base : base + n_users, :-1] = user_features.features
        rows[base : base + n_users, -1] = a
        ids.extend(f"item{a}:user{k}" for k in range(n_users))
    statements = []
    for user, preferred, other in interactions:
        if not (0 <= preferred < n_items and 0 <= other < n_items):
            raise DatasetError(f"item index out of range in interaction {(user, preferred, other)}")
        if not 0 <= user < n_users:
            raise DatasetError(f"unknown user {user}")
        statements.append(Pref(preferred * n_users + user, other * n_users + user))
    return ItemTable(ids=tuple(ids), features=rows), StatementSet(tuple(statements))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def kendall_tau_scaled(predicted: Sequence[int], observed: Sequence[int]) -> float:
    """Rescaled Kendall correlation tau' = (tau + 1)/2 in [0, 1].

    Inputs are rank vectors over the same labels; ties are rejected.
    """
    p = np.asarray(predicted)
    o = np.asarray(observed)
    if p.shape != o.shape or p.ndim != 1:
        raise DatasetError("rankings must be equal-length vectors")
    n = len(p)
    if n < 2:
        raise DatasetError("need at least two labels")
    if len(set(p.tolist())) != n or len(set(o.tolist())) != n:
        raise DatasetError("tied rankings are not supported")
    concordant = discordant = 0
    for a in range(n):
        for b in range(a + 1, n):
            s = np.sign(p[a] - p[b]) * np.sign(o[a] - o[b])
            if s > 0:
                concordant += 1
            else:
                discordant += 1
    tau = (concordant - discordant) / (n * (n - 1) / 2)
    return (tau + 1.0) / 2.0


def pairwise_accuracy(probabilities: Sequence[float], statements: Sequence[Pref]) -> float:
    """Fraction of held-out preferences called correctly; P(i beats j) = 0.5
    counts one half."""
    probabilities = list(probabilities)
    statements = list(statements)
    if len(probabilities) != len(statements):
        raise DatasetError("one probability per held-out statement required")
    if not statements:
        raise DatasetError("empty evaluation set")
    score = 0.0
    for p in probabilities:
        if p > 0.5:
            score += 1.0
        elif p == 0.5:
            score += 0.5
    return score / len(statements)


def choice_accuracy(C_hat, R_hat, C, R) -> float:
    C_hat, R_hat, C, R = map(frozenset, (C_hat, R_hat, C, R))
    A = C | R
    if C_hat | R_hat != A or (C_hat & R_hat) or (C & R):
        raise DatasetError("predicted and observed sets must partition the same A")
    hits = sum(1 for o in C if o in C_hat) + sum(1 for v in R if v in R_hat)
    return hits / len(A)


def standardize(table: ItemTable) -> ItemTable:
    """Per-feature zero mean, unit variance; zero-variance features are only
    centered.  The applied transform is recorded for inverse mapping."""
    if table.r < 2:
        raise DatasetError("standardization needs at least two items")
    mean = table.features.mean(axis=0)
    std = table.features.std(axis=0, ddof=0)
    safe = np.where(std > 0, std, 1.0)
    feats = (table.features - mean) / safe
    record = {"mean": mean.tolist(), "std": safe.tolist()}
    return ItemTable(ids=table.ids, features=feats, standardization=record)
