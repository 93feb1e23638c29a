import json

import numpy as np
import pytest
from click.testing import CliRunner

from prefgp.cli import main

OBJECT_SPEC = {
    "class": "object",
    "spec": {
        "variant": "probit",
        "probit_scale": 0.3,
        "kernel": {"family": "se_ard", "params": {"lengthscales": [1.0], "variance": 1.0}},
    },
    "inference": {"optimize_hyperparams": False, "n_train_samples": 800},
}

CHOICE_SPEC = {
    "class": "choice",
    "spec": {
        "d": 2,
        "rationality": "rational",
        "sigma": 0.3,
        "kernels": [
            {"family": "se_ard", "params": {"lengthscales": [0.5], "variance": 1.0}},
            {"family": "se_ard", "params": {"lengthscales": [0.5], "variance": 1.0}},
        ],
    },
    "inference": {"steps": 200, "n_mc": 4},
}

LABEL_SPEC = {
    "class": "label",
    "spec": {
        "variant": "plackett_luce",
        "noise_var": 1.0,
        "kernels": [
            {"family": "se_ard", "params": {"lengthscales": [0.3], "variance": 1.0}},
            {"family": "se_ard", "params": {"lengthscales": [0.3], "variance": 1.0}},
            {"family": "se_ard", "params": {"lengthscales": [0.3], "variance": 1.0}},
        ],
    },
    "inference": {"steps": 250, "n_train_samples": 400},
}


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture()
def runner():
    return CliRunner()


def _simulate(runner, tmp_path, generator, name, seed=0):
    out = tmp_path / name
    res = runner.invoke(
        main, ["simulate", "--generator", json.dumps(generator), "--out", str(out), "--seed", str(seed)]
    )
    assert res.exit_code == 0, res.output
    return out


def test_fit_predict_object_round_trip(runner, tmp_path):
    ds = _simulate(runner, tmp_path, {"family": "thermal", "mode": "exact", "n_pairs": 19}, "thermal.json")
    spec = _write(tmp_path / "spec.json", OBJECT_SPEC)
    out_dir = tmp_path / "fit"
    res = runner.invoke(main, ["fit", "--dataset", str(ds), "--model-spec", spec, "--out", str(out_dir)])
    assert res.exit_code == 0, res.output
    report = json.loads((out_dir / "report.json").read_text())
    assert report["class"] == "object"
    assert report["feasible"] is True
    assert np.isfinite(report["log_evidence"])

    queries = _write(
        tmp_path / "q.json",
        {"points": [[15.0], [20.0]], "pairs": [[0, 5]], "n_samples": 800},
    )
    pred_out = tmp_path / "pred.json"
    res = runner.invoke(
        main, ["predict", "--model", str(out_dir / "model.bin"), "--queries", queries, "--out", str(pred_out)]
    )
    assert res.exit_code == 0, res.output
    pred = json.loads(pred_out.read_text())
    assert len(pred["utilities"]) == 2
    for u in pred["utilities"]:
        assert u["p2.5"] <= u["mean"] <= u["p97.5"]
    assert 0.0 <= pred["pairwise"][0]["prob"] <= 1.0


def test_fit_is_seed_deterministic(runner, tmp_path):
    ds = _simulate(runner, tmp_path, {"family": "thermal", "mode": "exact", "n_pairs": 19}, "t.json")
    spec = _write(tmp_path / "spec.json", OBJECT_SPEC)
    outs = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        res = runner.invoke(
            main,
            ["fit", "--dataset", str(ds), "--model-spec", spec, "--out", str(out_dir), "--seed", "5"],
        )
        assert res.exit_code == 0, res.output
        outs.append((out_dir / "model.bin").read_bytes())
    assert outs[0] == outs[1]


def test_predict_choice_model(runner, tmp_path):
    ds = _simulate(
        runner, tmp_path, {"family": "cupcake", "n_items": 12, "n_statements": 25}, "cup.json"
    )
    spec = _write(tmp_path / "spec.json", CHOICE_SPEC)
    out_dir = tmp_path / "fit"
    res = runner.invoke(main, ["fit", "--dataset", str(ds), "--model-spec", spec, "--out", str(out_dir)])
    assert res.exit_code == 0, res.output
    queries = _write(tmp_path / "q.json", {"choices": [[0, 5, 11]], "n_samples": 400})
    pred_out = tmp_path / "pred.json"
    res = runner.invoke(
        main, ["predict", "--model", str(out_dir / "model.bin"), "--queries", queries, "--out", str(pred_out)]
    )
    assert res.exit_code == 0, res.output
    pred = json.loads(pred_out.read_text())
    entry = pred["choices"][0]
    assert set(entry["modal"]) <= {0, 5, 11}
    assert sum(entry["distribution"].values()) == pytest.approx(1.0, abs=1e-9)


def test_predict_label_model(runner, tmp_path):
    ds = _simulate(runner, tmp_path, {"family": "dessert", "n_days": 12}, "dessert.json")
    spec = _write(tmp_path / "spec.json", LABEL_SPEC)
    out_dir = tmp_path / "fit"
    res = runner.invoke(main, ["fit", "--dataset", str(ds), "--model-spec", spec, "--out", str(out_dir)])
    assert res.exit_code == 0, res.output
    queries = _write(tmp_path / "q.json", {"points": [[0.25]], "n_samples": 500})
    pred_out = tmp_path / "pred.json"
    res = runner.invoke(
        main, ["predict", "--model", str(out_dir / "model.bin"), "--queries", queries, "--out", str(pred_out)]
    )
    assert res.exit_code == 0, res.output
    pred = json.loads(pred_out.read_text())
    dist = pred["rankings"][0]["distribution"]
    # keys are first-letter ordering strings over brownie/fruitcake/icecream
    assert all(sorted(k) == ["b", "f", "i"] for k in dist)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)


def test_eval_object_model_reports_accuracy(runner, tmp_path):
    ds = _simulate(
        runner, tmp_path, {"family": "thermal", "mode": "probit", "n_pairs": 40, "sigma": 0.05}, "t.json"
    )
    spec = _write(tmp_path / "spec.json", OBJECT_SPEC)
    out = tmp_path / "eval.json"
    res = runner.invoke(
        main,
        ["eval", "--dataset", str(ds), "--model-spec", spec, "--out", str(out), "--folds", "3"],
    )
    assert res.exit_code == 0, res.output
    payload = json.loads(out.read_text())
    assert payload["metric"] == "pairwise_accuracy"
    assert 0.5 <= payload["mean"] <= 1.0
    assert len(payload["per_split"]) == 3


def test_missing_dataset_is_input_error(runner, tmp_path):
    spec = _write(tmp_path / "spec.json", OBJECT_SPEC)
    res = runner.invoke(
        main,
        ["fit", "--dataset", str(tmp_path / "nope.json"), "--model-spec", spec, "--out", str(tmp_path / "o")],
    )
    assert res.exit_code == 2


def test_malformed_model_spec_is_input_error(runner, tmp_path):
    ds = _simulate(runner, tmp_path, {"family": "thermal", "n_pairs": 19}, "t.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    res = runner.invoke(
        main, ["fit", "--dataset", str(ds), "--model-spec", str(bad), "--out", str(tmp_path / "o")]
    )
    assert res.exit_code == 2


def test_contradictory_consistent_fit_is_inference_error(runner, tmp_path):
    ds = tmp_path / "contradiction.json"
    ds.write_text(
        json.dumps(
            {
                "items": [
                    {"id": 0, "features": [0.0]},
                    {"id": 1, "features": [1.0]},
                ],
                "statements": [
                    {"type": "pref", "i": 0, "j": 1},
                    {"type": "pref", "i": 1, "j": 0},
                ],
            }
        )
    )
    spec = _write(
        tmp_path / "spec.json",
        {
            "class": "object",
            "spec": {
                "variant": "consistent",
                "kernel": {"family": "se_ard", "params": {"lengthscales": [1.0], "variance": 1.0}},
            },
            "inference": {"optimize_hyperparams": False},
        },
    )
    res = runner.invoke(
        main, ["fit", "--dataset", str(ds), "--model-spec", spec, "--out", str(tmp_path / "o")]
    )
    assert res.exit_code == 3


def test_unknown_generator_family_is_input_error(runner, tmp_path):
    res = runner.invoke(
        main, ["simulate", "--generator", json.dumps({"family": "weather"}), "--out", str(tmp_path / "x")]
    )
    assert res.exit_code == 2
