"""Live-elicitation HTTP service.

Runs sessions that serve option sets from an item pool, record human
choices, refit the configured model, and summarize the posterior:

    POST /sessions                 create a session (pool + model spec)
    GET  /sessions/{id}/query      current pending option set
    POST /sessions/{id}/choice     submit the chosen subset
    GET  /sessions/{id}/posterior  per-item utility summaries + metrics

Every session appends newline-delimited JSON events to its own log file;
replaying a log reproduces the fitted model byte-identically under the
same seeds.  Refits run on a background worker by default and never block
query serving; the fitted model is swapped in atomically with a version
bump.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from prefgp.data import Choice, DatasetError, ItemTable, Pref, StatementSet, choice_accuracy
from prefgp.models_choice import ChoiceModelSpec, fit_choice_model, predict_choice
from prefgp.models_label import LabelModelSpec, fit_label_model
from prefgp.models_object import (
    InferenceConfig,
    ObjectModelSpec,
    fit_object_model,
    predict_utility,
)

STRATEGIES = ("random", "max_variance")
N_CANDIDATE_SETS = 50
ROLLING_WINDOW = 40


class ServiceError(ValueError):
    pass


class NotReadyError(RuntimeError):
    pass


def _parse_model_document(doc: dict):
    cls = doc.get("class")
    if cls == "object":
        return cls, ObjectModelSpec.from_json(doc["spec"]), doc.get("inference") or {}
    if cls == "label":
        return cls, LabelModelSpec.from_json(doc["spec"]), doc.get("inference") or {}
    if cls == "choice":
        return cls, ChoiceModelSpec.from_json(doc["spec"]), doc.get("inference") or {}
    raise ServiceError(f"unknown model class {cls!r}")


@dataclass
class ElicitSession:
    """State machine for one elicitation loop.

    All writes go through :meth:`submit_choice` under the session lock;
    the event log records creation, every accepted choice, and every
    refit, which together determine the fitted model bit-for-bit.
    """

    session_id: str
    pool: ItemTable
    model_doc: dict
    query_size: int
    seed: int
    strategy: str
    log_path: Path
    refit_every: int = 1
    sync_refit: bool = False
    display: Optional[list] = None

    statements: List = field(default_factory=list)
    version: int = 0
    model: Optional[object] = None
    pending_query: Optional[dict] = None
    seen_queries: Dict[str, dict] = field(default_factory=dict)
    accuracy_window: List[float] = field(default_factory=list)
    _lock: threading.RLock = field(default_factory=threading.RLock)
    _refit_thread: Optional[threading.Thread] = None
    _query_counter: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ServiceError(f"unknown strategy {self.strategy!r}")
        if not 2 <= self.query_size <= self.pool.r:
            raise ServiceError(
                f"query size must be between 2 and the pool size {self.pool.r}"
            )
        self.model_class, self.model_spec, self.inference = _parse_model_document(self.model_doc)
        self._query_rng = np.random.default_rng(self.seed)

    # ------------------------------------------------------------------ log

    def _log(self, event: dict) -> None:
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True))
            fh.write("\n")

    def log_creation(self) -> None:
        self._log(
            {
                "event": "create",
                "session_id": self.session_id,
                "pool": {
                    "ids": list(self.pool.ids),
                    "features": self.pool.features.tolist(),
                },
                "model": self.model_doc,
                "query_size": self.query_size,
                "seed": self.seed,
                "strategy": self.strategy,
                "refit_every": self.refit_every,
            }
        )

    # ---------------------------------------------------------------- query

    def current_query(self) -> dict:
        with self._lock:
            if self.pending_query is None:
                self.pending_query = self._draw_query()
            return self.pending_query

    def _draw_query(self) -> dict:
        if self.strategy == "max_variance" and self.model is not None:
            options = self._max_variance_options()
        else:
            options = sorted(
                self._query_rng.choice(self.pool.r, size=self.query_size, replace=False).tolist()
            )
        self._query_counter += 1
        query = {
            "query_id": f"q{self._query_counter}",
            "options": [self.pool.ids[k] for k in options],
            "option_indices": options,
            "allow_multiple": self.model_class == "choice",
            "model_version": self.version,
        }
        if self.display is not None:
            query["display"] = [self.display[k] for k in options]
        return query

    def _max_variance_options(self) -> list:
        """Among 50 random candidate sets, pick the one whose pairwise
        utility differences have the largest summed posterior variance."""
        candidates = [
            sorted(self._query_rng.choice(self.pool.r, size=self.query_size, replace=False).tolist())
            for _ in range(N_CANDIDATE_SETS)
        ]
        draws = self._pool_utility_draws(n_samples=200, seed=self.seed + 101 * self.version)
        best, best_score = candidates[0], -np.inf
        for cand in candidates:
            score = 0.0
            for a_pos in range(len(cand)):
                for b_pos in range(a_pos + 1, len(cand)):
                    diff = draws[:, :, cand[a_pos]] - draws[:, :, cand[b_pos]]
                    score += float(np.sum(np.var(diff, axis=0)))
            if score > best_score:
                best, best_score = cand, score
        return best

    def _pool_utility_draws(self, n_samples: int, seed: int) -> np.ndarray:
        """(n, d, pool) posterior utility draws of the current model."""
        model = self.model
        if self.model_class == "object":
            values = predict_utility(model, self.pool.features, n_samples=n_samples, seed=seed).values
            return values[:, None, :]
        if self.model_class == "choice":
            return model.utility_matrix_samples(n_samples, seed)
        return model.utility_samples_at(self.pool.features, n_samples, seed)

    # --------------------------------------------------------------- choice

    def submit_choice(self, query_id: str, chosen_ids: list, idempotency_key: Optional[str] = None) -> dict:
        with self._lock:
            dedupe_key = idempotency_key or query_id
            if dedupe_key in self.seen_queries:
                return self.seen_queries[dedupe_key]
            if self.pending_query is None or query_id != self.pending_query["query_id"]:
                raise ServiceError(f"stale or unknown query id {query_id!r}")
            options = self.pending_query["option_indices"]
            option_ids = self.pending_query["options"]
            try:
                chosen = sorted(option_ids.index(c) for c in chosen_ids)
            except ValueError:
                raise ServiceError("choice includes an option that was not offered") from None
            if not chosen:
                raise ServiceError("empty choice")
            chosen_idx = [options[k] for k in chosen]
            self._score_incoming(options, chosen_idx)
            statements = self._encode(options, chosen_idx)
            self.statements.extend(statements)
            self._log(
                {
                    "event": "choice",
                    "query_id": query_id,
                    "options": options,
                    "chosen": chosen_idx,
                }
            )
            ack = {
                "accepted": True,
                "query_id": query_id,
                "n_statements": len(self.statements),
                "model_version": self.version,
            }
            self.seen_queries[dedupe_key] = ack
            self.pending_query = None
            n_choices = self._query_counter
            if n_choices % self.refit_every == 0:
                self._schedule_refit()
            return ack

    def _encode(self, options: list, chosen_idx: list) -> list:
        """Choice statement for choice models; preference expansion for
        single-utility pairwise models."""
        if self.model_class == "choice":
            return [Choice(frozenset(options), frozenset(chosen_idx))]
        if self.model_class == "object":
            rejected = [o for o in options if o not in chosen_idx]
            return [Pref(c, o) for c in chosen_idx for o in rejected]
        raise ServiceError("label models need per-row orderings, not pool choices")

    def _score_incoming(self, options: list, chosen_idx: list) -> None:
        """Prequential rolling accuracy: score the current model's modal
        prediction against each choice before learning from it."""
        if self.model is None:
            return
        try:
            if self.model_class == "choice":
                _, modal = predict_choice(
                    self.model, options, n_samples=300, seed=self.seed + 7 * len(self.statements)
                )
            else:
                draws = predict_utility(
                    self.model,
                    self.pool.features[options],
                    n_samples=300,
                    seed=self.seed + 7 * len(self.statements),
                )
                modal = frozenset({options[int(np.argmax(draws.values.mean(axis=0)))]})
        except Exception:
            return
        observed_c = frozenset(chosen_idx)
        acc = choice_accuracy(modal, frozenset(options) - modal, observed_c, frozenset(options) - observed_c)
        self.accuracy_window.append(acc)
        if len(self.accuracy_window) > ROLLING_WINDOW:
            del self.accuracy_window[: len(self.accuracy_window) - ROLLING_WINDOW]

    # ---------------------------------------------------------------- refit

    def _schedule_refit(self) -> None:
        n_statements = len(self.statements)
        version = self.version + 1
        fit_seed = self.seed + 1000 * version
        self._log(
            {
                "event": "refit",
                "version": version,
                "n_statements": n_statements,
                "fit_seed": fit_seed,
            }
        )
        if self.sync_refit:
            self._run_refit(n_statements, version, fit_seed)
            return
        if self._refit_thread is not None and self._refit_thread.is_alive():
            self._refit_thread.join()
        self._refit_thread = threading.Thread(
            target=self._run_refit, args=(n_statements, version, fit_seed), daemon=True
        )
        self._refit_thread.start()

    def _run_refit(self, n_statements: int, version: int, fit_seed: int) -> None:
        model = fit_session_model(
            self.model_class,
            self.model_spec,
            self.inference,
            self.pool,
            StatementSet(tuple(self.statements[:n_statements])),
            fit_seed,
        )
        # atomic swap: never regress to an older version
        with self._lock:
            if version > self.version:
                self.model = model
                self.version = version

    def wait_for_refit(self) -> None:
        thread = self._refit_thread
        if thread is not None:
            thread.join()

    # ------------------------------------------------------------- summary

    def posterior_summary(self) -> dict:
        with self._lock:
            if self.model is None:
                raise NotReadyError("no fitted model yet; submit a choice first")
            model, version = self.model, self.version
        draws = self._pool_utility_draws(n_samples=500, seed=self.seed + 13 * version)
        dims = []
        for a in range(draws.shape[1]):
            dims.append(
                {
                    "mean": np.mean(draws[:, a, :], axis=0).tolist(),
                    "p2.5": np.percentile(draws[:, a, :], 2.5, axis=0).tolist(),
                    "p97.5": np.percentile(draws[:, a, :], 97.5, axis=0).tolist(),
                }
            )
        rolling = (
            float(np.mean(self.accuracy_window)) if self.accuracy_window else None
        )
        return {
            "session_id": self.session_id,
            "model_version": version,
            "ids": list(self.pool.ids),
            "utilities": dims,
            "rolling_accuracy": rolling,
            "n_statements": len(self.statements),
            "n_scored": len(self.accuracy_window),
        }


def fit_session_model(model_class, spec, inference, pool, statements, seed):
    if model_class == "object":
        return fit_object_model(pool, statements, spec, InferenceConfig.from_json(inference), seed=seed)
    if model_class == "choice":
        return fit_choice_model(pool, statements, spec, seed=seed, **inference)
    labels = [str(k) for k in range(spec.d)]
    return fit_label_model(labels, pool, statements, spec, seed=seed, **inference)


def replay_log(log_path) -> tuple:
    """Rebuild the final fitted model from a session event log.

    Applies the logged refit events verbatim (same statement prefix, same
    seed), so the returned model is byte-identical to the live one."""
    events = []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    if not events or events[0]["event"] != "create":
        raise ServiceError("log must start with a create event")
    head = events[0]
    pool = ItemTable(ids=tuple(head["pool"]["ids"]), features=np.array(head["pool"]["features"], float))
    model_class, spec, inference = _parse_model_document(head["model"])
    statements: list = []
    model = None
    version = 0
    for event in events[1:]:
        if event["event"] == "choice":
            options, chosen = event["options"], event["chosen"]
            if model_class == "choice":
                statements.append(Choice(frozenset(options), frozenset(chosen)))
            else:
                rejected = [o for o in options if o not in chosen]
                statements.extend(Pref(c, o) for c in chosen for o in rejected)
        elif event["event"] == "refit":
            version = event["version"]
            model = fit_session_model(
                model_class,
                spec,
                inference,
                pool,
                StatementSet(tuple(statements[: event["n_statements"]])),
                event["fit_seed"],
            )
    if model is None:
        raise ServiceError("log contains no refit event")
    return model, version


class SessionStore:
    def __init__(self, log_dir) -> None:
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: Dict[str, ElicitSession] = {}
        self._lock = threading.Lock()

    def create(self, payload: dict) -> ElicitSession:
        pool_doc = payload.get("pool")
        if not pool_doc or "ids" not in pool_doc or "features" not in pool_doc:
            raise ServiceError("pool must provide 'ids' and 'features'")
        try:
            pool = ItemTable(ids=tuple(pool_doc["ids"]), features=np.array(pool_doc["features"], float))
        except DatasetError as err:
            raise ServiceError(str(err)) from None
        session_id = payload.get("session_id") or uuid.uuid4().hex[:12]
        session = ElicitSession(
            session_id=session_id,
            pool=pool,
            model_doc=payload.get("model") or {},
            query_size=int(payload.get("query_size", 3)),
            seed=int(payload.get("seed", 0)),
            strategy=payload.get("strategy", "random"),
            log_path=self.log_dir / f"{session_id}.ndjson",
            refit_every=int(payload.get("refit_every", 1)),
            sync_refit=bool(payload.get("sync_refit", False)),
            display=pool_doc.get("display"),
        )
        session.log_creation()
        with self._lock:
            if session_id in self.sessions:
                raise ServiceError(f"session {session_id!r} already exists")
            self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> ElicitSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ServiceError(f"unknown session {session_id!r}") from None


def create_app(log_dir="elicit_logs"):
    from fastapi import FastAPI, HTTPException

    app = FastAPI(title="preference elicitation service")
    store = SessionStore(log_dir)
    app.state.store = store

    def _get(session_id: str) -> ElicitSession:
        try:
            return store.get(session_id)
        except ServiceError as err:
            raise HTTPException(status_code=404, detail=str(err))

    @app.post("/sessions")
    def create_session(payload: dict):
        try:
            session = store.create(payload)
        except (ServiceError, DatasetError) as err:
            raise HTTPException(status_code=422, detail=str(err))
        return {"session_id": session.session_id, "query": session.current_query()}

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str):
        return _get(session_id).current_query()

    @app.post("/sessions/{session_id}/choice")
    def post_choice(session_id: str, payload: dict):
        session = _get(session_id)
        try:
            return session.submit_choice(
                payload.get("query_id", ""),
                payload.get("chosen", []),
                payload.get("idempotency_key"),
            )
        except ServiceError as err:
            raise HTTPException(status_code=409, detail=str(err))

    @app.get("/sessions/{session_id}/posterior")
    def get_posterior(session_id: str):
        session = _get(session_id)
        if not session.sync_refit:
            session.wait_for_refit()
        try:
            return session.posterior_summary()
        except NotReadyError as err:
            raise HTTPException(status_code=409, detail=str(err))

    return app
