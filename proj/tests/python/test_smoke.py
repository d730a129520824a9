import json
import math

import pytest

import dialcart


def test_cartography_statistics():
    probs = [0.2, 0.4, 0.6]
    assert dialcart.confidence(probs) == pytest.approx(0.4)
    assert dialcart.variability(probs) == pytest.approx(math.sqrt(0.08 / 3))
    assert dialcart.correctness([1, 1, 1, 0]) == 0.75
    assert dialcart.bucket(0.75) == "Easy"
    assert dialcart.bucket(0.2499) == "Impossible"
    points = dialcart.data_map([[0.9, 0.8], [0.1, 0.2]], [[1, 1], [0, 0]], ["a", "b"])
    assert [p["bucket"] for p in points] == ["Easy", "Impossible"]


def test_strategies():
    assert dialcart.entropy([0.5, 0.5]) == pytest.approx(math.log(2))
    assert dialcart.least_confidence([0.7, 0.3]) == pytest.approx(0.3)
    assert dialcart.coremse_uncertainty([[0.5, 0.5], [0.5, 0.5]]) == 0.0
    picked = dialcart.select("entropy", [3, 1, 2], 2, predictive=[[0.9, 0.1], [0.5, 0.5], [0.6, 0.4]])
    assert picked == [1, 2]
    ens = [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5], [0.5, 0.5]], [[0.9, 0.1], [0.1, 0.9]]]
    feats = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]]
    assert dialcart.select("coremse", [0, 1, 2], 2, ensembles=ens, features=feats) == [0, 2]


def test_metrics():
    assert dialcart.macro_f1(["a"] * 4, ["a", "a", "b", "b"]) == pytest.approx(1 / 3)
    assert dialcart.cohens_kappa(["1", "1", "0", "0"], ["1", "0", "0", "1"]) == 0.0
    assert dialcart.accuracy(["x", "y"], ["x", "x"]) == 0.5


def test_errors_carry_codes():
    with pytest.raises(dialcart.DialcartError, match="invalid_argument"):
        dialcart.cohens_kappa([], [])
    with pytest.raises(ValueError):
        dialcart.bucket(1.5)


def test_synth_train_simulate():
    data = dialcart.synthesize("uniform", sentences=300, sessions=6, classes=3, seed=1)
    scheme = json.loads(data["scheme"])
    assert len(scheme["tags"]) == 3
    rows = [json.loads(line) for line in data["corpus"].splitlines()]
    assert rows

    texts, tags = [], []
    for row in rows:
        units = dialcart.sentence_units(row["text"])
        for label in row["labels"]:
            texts.append(units[label["sentence_index"]])
            tags.append(label["tag"])
    model = dialcart.train(texts, tags, scheme=data["scheme"], epochs=5, dimension=1024)
    assert model.epoch_loss[-1] < model.epoch_loss[0]
    hits = sum(model.predict(t) == g for t, g in zip(texts, tags))
    assert hits / len(texts) > 0.9
    assert sum(model.predict_proba(texts[0])) == pytest.approx(1.0)
    assert len(model.data_map([str(i) for i in range(len(texts))])) == len(texts)

    rounds = dialcart.simulate(data["corpus"], data["scheme"], strategy="coremse", batch=20, initial=20,
                               rounds=2, epochs=4, dimension=1024)
    assert [r["labeled_count"] for r in rounds] == [20, 40, 60]
    assert rounds[0]["acquired_ids"] == []
    assert sum(rounds[2]["cumulative_per_label"].values()) == 40
