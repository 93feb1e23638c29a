"""Command-line frontend: fit, predict, eval, simulate.

Model specifications are JSON documents of the form
{"class": "object"|"label"|"choice", "spec": {...}, "inference": {...}};
datasets use the canonical JSON schema of :mod:`prefgp.data`.

Exit codes: 0 success, 2 input/validation error, 3 inference failure.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from prefgp.data import (
    Choice,
    DatasetError,
    Ordering,
    Pref,
    StatementSet,
    choice_accuracy,
    kendall_tau_scaled,
    load_dataset,
    pairwise_accuracy,
    save_dataset,
)
from prefgp.inference import InferenceError
from prefgp.kernels import KernelError
from prefgp.model_io import load_blocks
from prefgp.models_choice import ChoiceModelSpec, FittedChoiceModel, fit_choice_model, predict_choice
from prefgp.models_label import (
    FittedLabelModel,
    LabelModelSpec,
    fit_label_model,
    predict_ranking_distribution,
)
from prefgp.models_object import (
    FittedObjectModel,
    InferenceConfig,
    ObjectModelSpec,
    fit_object_model,
    predict_preference_prob,
    predict_utility,
)
from prefgp.tmvn_sampler import InfeasibleRegionError, SamplingError

EXIT_INPUT = 2
EXIT_INFERENCE = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map domain errors onto the stable exit-code contract."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InfeasibleRegionError, SamplingError, InferenceError) as err:
            _fail(EXIT_INFERENCE, str(err))
        except (DatasetError, KernelError, FileNotFoundError, json.JSONDecodeError) as err:
            _fail(EXIT_INPUT, str(err))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1, default=float)
        fh.write("\n")


def _parse_model_document(doc: dict):
    if "class" not in doc or "spec" not in doc:
        raise DatasetError("model spec needs 'class' and 'spec' fields")
    cls = doc["class"]
    if cls == "object":
        return cls, ObjectModelSpec.from_json(doc["spec"]), doc.get("inference") or {}
    if cls == "label":
        return cls, LabelModelSpec.from_json(doc["spec"]), doc.get("inference") or {}
    if cls == "choice":
        return cls, ChoiceModelSpec.from_json(doc["spec"]), doc.get("inference") or {}
    raise DatasetError(f"unknown model class {cls!r}")


def _fit_any(cls, spec, inference, items, statements, labels, seed):
    if cls == "object":
        return fit_object_model(items, statements, spec, InferenceConfig.from_json(inference), seed=seed)
    if cls == "label":
        names = labels if labels is not None else [str(k) for k in range(spec.d)]
        return fit_label_model(names, items, statements, spec, seed=seed, **inference)
    return fit_choice_model(items, statements, spec, seed=seed, **inference)


def _load_model(path):
    meta, _ = load_blocks(path)
    cls = meta.get("class")
    if cls == "object":
        return FittedObjectModel.load(path)
    if cls == "label":
        return FittedLabelModel.load(path)
    if cls == "choice":
        return FittedChoiceModel.load(path)
    raise DatasetError(f"unknown model class {cls!r} in {path}")


@click.group()
def main():
    """Gaussian-process preference, ranking, and choice-function learning."""


@main.command("fit")
@click.option("--dataset", required=True, type=click.Path())
@click.option("--model-spec", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int, show_default=True)
@_guarded
def cmd_fit(dataset, model_spec, out, seed):
    """Fit a model and save it with a JSON report."""
    items, statements, labels = load_dataset(dataset)
    cls, spec, inference = _parse_model_document(_read_json(model_spec))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    model = _fit_any(cls, spec, inference, items, statements, labels, seed)
    wall = time.perf_counter() - t0
    model_path = out_dir / "model.bin"
    model.save(model_path)
    report = {
        "class": cls,
        "feasible": True,
        "seed": seed,
        "n_items": items.r,
        "n_statements": len(statements),
        "wall_time_s": wall,
        "model_path": str(model_path),
    }
    if cls == "object":
        report["log_evidence"] = model.log_evidence
        report["fitted_kernel"] = model.fitted_kernel.to_json()
    elif getattr(model, "q", None) is not None:
        report["elbo"] = model.q.elbo_trace[-1] if model.q.elbo_trace else None
    _write_json(out_dir / "report.json", report)
    click.echo(f"fit ok: {cls} model, {len(statements)} statements, {wall:.1f}s")


@main.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--queries", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int, show_default=True)
@_guarded
def cmd_predict(model_path, queries, out, seed):
    """Answer utility / pairwise / ranking / choice queries from a saved model."""
    model = _load_model(model_path)
    doc = _read_json(queries)
    n_samples = int(doc.get("n_samples", 2000))
    result: dict = {}
    if isinstance(model, FittedObjectModel):
        points = doc.get("points", [])
        if points:
            draws = predict_utility(model, np.array(points, float), n_samples=n_samples, seed=seed)
            result["utilities"] = [
                {
                    "mean": float(np.mean(col)),
                    "p2.5": float(np.percentile(col, 2.5)),
                    "p97.5": float(np.percentile(col, 97.5)),
                }
                for col in draws.values.T
            ]
        pairs = doc.get("pairs", [])
        if pairs:
            result["pairwise"] = [
                {
                    "i": int(i),
                    "j": int(j),
                    "prob": predict_preference_prob(
                        model, model.X.features[int(i)], model.X.features[int(j)], n_samples, seed
                    ),
                }
                for i, j in pairs
            ]
    elif isinstance(model, FittedLabelModel):
        result["rankings"] = []
        for point in doc.get("points", []):
            dist = predict_ranking_distribution(
                model, np.asarray(point, float), n_samples=n_samples, seed=seed
            )
            result["rankings"].append(
                {
                    "point": list(map(float, np.atleast_1d(point))),
                    "distribution": {
                        "".join(str(model.labels[v])[0] for v in order): prob
                        for order, prob in sorted(dist.items(), key=lambda kv: -kv[1])
                    },
                }
            )
    else:
        result["choices"] = []
        for A in doc.get("choices", []):
            dist, modal = predict_choice(model, A, n_samples=n_samples, seed=seed)
            result["choices"].append(
                {
                    "A": sorted(int(a) for a in A),
                    "modal": sorted(modal),
                    "distribution": {",".join(map(str, k)): v for k, v in sorted(dist.items())},
                }
            )
    _write_json(out, result)
    click.echo(f"predict ok: wrote {out}")


def _split_indices(n, train_frac, folds, seed):
    """Seeded 70/30-style splits or k-fold partitions over statement indices."""
    if folds and folds > 1:
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        parts = np.array_split(perm, folds)
        for k, test in enumerate(parts):
            train = np.concatenate([p for i, p in enumerate(parts) if i != k])
            yield k, train, test
    else:
        for k in range(10):
            rng = np.random.default_rng(seed + 1009 * k)
            perm = rng.permutation(n)
            cut = max(1, int(round(train_frac * n)))
            if cut >= n:
                raise DatasetError("split leaves no test statements")
            yield k, perm[:cut], perm[cut:]


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path())
@click.option("--model-spec", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--folds", default=0, type=int, help="k-fold cross validation (overrides --split)")
@click.option("--split", default=0.7, type=float, show_default=True, help="train fraction")
@_guarded
def cmd_eval(dataset, model_spec, out, seed, folds, split):
    """Seeded split / k-fold evaluation with the metric native to the model class."""
    items, statements, labels = load_dataset(dataset)
    cls, spec, inference = _parse_model_document(_read_json(model_spec))
    all_stmts = list(statements)
    if len(all_stmts) < 3:
        raise DatasetError("dataset too small to split")
    scores = []
    for k, train_idx, test_idx in _split_indices(len(all_stmts), split, folds, seed):
        train = StatementSet(tuple(all_stmts[i] for i in train_idx))
        test = [all_stmts[i] for i in test_idx]
        model = _fit_any(cls, spec, inference, items, train, labels, seed + 7919 * k)
        if cls == "object":
            prefs = [s for s in test if isinstance(s, Pref)]
            if not prefs:
                raise DatasetError("held-out set has no preference statements")
            probs = [
                predict_preference_prob(
                    model, items.features[s.i], items.features[s.j], 2000, seed=seed + 13 * k
                )
                for s in prefs
            ]
            scores.append(pairwise_accuracy(probs, prefs))
        elif cls == "label":
            taus = []
            for s in test:
                if not isinstance(s, Ordering) or len(s.ranking) != spec.d:
                    continue
                dist = predict_ranking_distribution(
                    model, items.features[s.row], n_samples=500, seed=seed + 13 * k
                )
                modal = max(dist, key=dist.get)
                pred_rank = np.empty(spec.d, int)
                true_rank = np.empty(spec.d, int)
                pred_rank[list(modal)] = np.arange(spec.d)
                true_rank[list(s.ranking)] = np.arange(spec.d)
                taus.append(kendall_tau_scaled(pred_rank, true_rank))
            if not taus:
                raise DatasetError("held-out set has no full orderings")
            scores.append(float(np.mean(taus)))
        else:
            accs = []
            for s in test:
                if not isinstance(s, Choice):
                    continue
                _, modal = predict_choice(model, s.A, n_samples=500, seed=seed + 13 * k)
                accs.append(choice_accuracy(modal, s.A - modal, s.C, s.R))
            if not accs:
                raise DatasetError("held-out set has no choice statements")
            scores.append(float(np.mean(accs)))
    metric = {"object": "pairwise_accuracy", "label": "kendall_tau_scaled", "choice": "choice_accuracy"}[cls]
    payload = {
        "metric": metric,
        "mean": float(np.mean(scores)),
        "per_split": scores,
        "folds": folds or None,
        "split": None if folds else split,
        "seed": seed,
    }
    _write_json(out, payload)
    click.echo(f"eval ok: {metric} mean {payload['mean']:.4f} over {len(scores)} splits")


@main.command("simulate")
@click.option("--generator", required=True, help="generator spec: JSON string or path to one")
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int, show_default=True)
@_guarded
def cmd_simulate(generator, out, seed):
    """Emit a synthetic dataset from one of the built-in true-utility families."""
    from prefgp import simulate as sim

    if Path(generator).exists():
        gen = _read_json(generator)
    else:
        gen = json.loads(generator)
    if not isinstance(gen, dict) or "family" not in gen:
        raise DatasetError("generator spec must be an object with a 'family' field")
    family = gen["family"]
    labels = None
    if family == "thermal":
        items, statements = sim.thermal_dataset(
            mode=gen.get("mode", "exact"),
            n_pairs=int(gen.get("n_pairs", 19)),
            seed=seed,
            sigma=float(gen.get("sigma", 0.05)),
            delta=float(gen.get("delta", 0.025)),
        )
    elif family == "dessert":
        items, statements, labels = sim.dessert_dataset(
            n_days=int(gen.get("n_days", 50)), seed=seed, noise=float(gen.get("noise", 0.0))
        )
    elif family == "cupcake":
        items, statements = sim.cupcake_dataset(
            n_items=int(gen.get("n_items", 60)),
            n_statements=int(gen.get("n_statements", 200)),
            subset_size=int(gen.get("subset_size", 3)),
            seed=seed,
            rationality=gen.get("rationality", "rational"),
        )
    else:
        raise DatasetError(f"unknown generator family {family!r}")
    save_dataset(out, items, statements, labels)
    click.echo(f"simulate ok: {family}, {len(statements)} statements -> {out}")


if __name__ == "__main__":
    main()
