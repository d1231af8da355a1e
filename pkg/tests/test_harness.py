import json

import numpy as np
import pytest

from advstego import cnn
from advstego.distortion import compute_costs
from advstego.harness import (CSV_HEADER, DatasetSpec, DetectionReport, DetectionRow, Experiment,
                              detection_rates, emit_report, experiment_to_dict, read_report, run_protocol,
                              split_indices, synthesize_corpus)

TINY = DatasetSpec(corpus_size=24, image_size=24, payload_rates=(0.4,), split_seed=3)
TINY_TRAIN = cnn.TrainConfig(epochs=1, batch_size=8, seed=1, channels=(2, 3, 4))


@pytest.fixture(scope="module")
def tiny_report():
    return run_protocol(TINY, TINY_TRAIN, "hill")


def test_corpus_deterministic():
    spec = DatasetSpec(corpus_size=20, image_size=32, split_seed=4)
    a, b = synthesize_corpus(spec), synthesize_corpus(spec)
    assert all(x == y for x, y in zip(a, b))
    assert synthesize_corpus(DatasetSpec(corpus_size=20, image_size=32, split_seed=5))[0] != a[0]


def test_corpus_has_wet_and_interior_pixels():
    corpus = synthesize_corpus(DatasetSpec(corpus_size=50, image_size=64))
    pixels = np.concatenate([im.pixels.ravel() for im in corpus])
    assert np.any((pixels == 0) | (pixels == 255))
    assert np.any((pixels > 0) & (pixels < 255))


def test_corpus_cost_maps_not_constant():
    corpus = synthesize_corpus(DatasetSpec(corpus_size=100, image_size=64, split_seed=1))
    for algo in ("hill", "suniward"):
        varied = [np.ptp(compute_costs(im, algo).costs) > 0 for im in corpus]
        assert np.mean(varied) >= 0.95


def test_corpus_minimum_size():
    with pytest.raises(ValueError):
        synthesize_corpus(DatasetSpec(corpus_size=19))


def test_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(payload_rates=(0.6,))
    with pytest.raises(ValueError):
        DatasetSpec(payload_rates=(0.0,))
    assert DatasetSpec().payload_rates == (0.05, 0.1, 0.2, 0.3, 0.4)


def test_split_is_disjoint_and_complete():
    train, test = split_indices(DatasetSpec(corpus_size=500), 500)
    assert len(train) == len(test) == 250
    assert not set(train) & set(test)
    assert sorted(set(train) | set(test)) == list(range(500))


def test_perfect_detector():
    assert detection_rates([False] * 10, [True] * 10) == (0.0, 0.0, 0.0)


def test_constant_detector_is_chance():
    assert detection_rates([True] * 7, [True] * 7)[2] == 0.5
    assert detection_rates([False] * 7, [False] * 7)[2] == 0.5


def test_fair_coin_detector():
    rng = np.random.default_rng(0)
    n = 20000
    p_fa, p_md, p_e = detection_rates(rng.random(n) < 0.5, rng.random(n) < 0.5)
    # four binomial standard deviations of the averaged rate
    assert abs(p_e - 0.5) < 4 * 0.5 / np.sqrt(2 * n)


def test_report_rows_and_pairing(tiny_report):
    assert [r.set for r in tiny_report.rows] == ["plain", "adversarial"]
    plain, adv = tiny_report.row(0.4, "plain"), tiny_report.row(0.4, "adversarial")
    assert plain.n_cover == adv.n_cover == 12
    assert plain.false_alarms == adv.false_alarms
    for r in tiny_report.rows:
        assert r.p_fa == r.false_alarms / r.n_cover
        assert r.p_md == r.missed / r.n_stego
        assert r.p_e == (r.false_alarms / r.n_cover + r.missed / r.n_stego) / 2
        assert 0 <= r.p_e <= 1


def test_emit_and_reread(tmp_path, tiny_report):
    path = tmp_path / "r.csv"
    emit_report(tiny_report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3
    rows = read_report(path)
    assert [r["set"] for r in rows] == ["adversarial", "plain"]
    for r in rows:
        orig = tiny_report.row(r["alpha"], r["set"])
        assert r["p_fa"] == pytest.approx(orig.p_fa, abs=5e-7)
        assert r["p_e"] == pytest.approx((r["p_fa"] + r["p_md"]) / 2, abs=1e-6)


def test_emit_orders_rows(tmp_path):
    rows = [DetectionRow(a, alpha, s, 0.1, 0.2, 0.15, 10, 10, 0)
            for a in ("suniward", "hill") for alpha in (0.4, 0.05) for s in ("plain", "adversarial")]
    path = tmp_path / "o.csv"
    emit_report(DetectionReport(rows=rows), path)
    keys = [(r["algo"], r["alpha"], r["set"]) for r in read_report(path)]
    assert keys == sorted(keys)


def test_emit_unwritable(tmp_path, tiny_report):
    with pytest.raises(OSError):
        emit_report(tiny_report, tmp_path / "nope" / "r.csv")


def test_experiment_json_round_trip(tmp_path):
    doc = {"corpus_size": 30, "image_size": 32, "payload_rates": [0.1, 0.4], "split_seed": 2,
           "train": {"lr": 0.02, "momentum": 0.8, "batch": 8, "epochs": 2, "seed": 4}, "algo": "suniward"}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc))
    exp = Experiment.from_json(path)
    assert exp.dataset.payload_rates == (0.1, 0.4)
    assert exp.train.batch_size == 8 and exp.train.lr == 0.02
    assert exp.algo == "suniward"
    again = Experiment.from_dict(experiment_to_dict(exp))
    assert again.dataset == exp.dataset and again.train == exp.train


def test_protocol_is_deterministic(tiny_report):
    again = run_protocol(TINY, TINY_TRAIN, "hill")
    assert again.rows == tiny_report.rows
    assert again.models == tiny_report.models


def test_protocol_on_supplied_covers():
    covers = synthesize_corpus(DatasetSpec(corpus_size=20, image_size=24, split_seed=9))
    spec = DatasetSpec(corpus_size=20, image_size=24, payload_rates=(0.2,), split_seed=9)
    report = run_protocol(spec, TINY_TRAIN, "suniward", covers=covers)
    assert {r.set for r in report.rows} == {"plain", "adversarial"}
    assert report.rows[0].algo == "suniward"
