import json

import numpy as np
import pytest

from advstego import cnn
from advstego.cli import main
from advstego.harness import CSV_HEADER, _rng, synth_cover
from advstego.image import load_pgm, save_pgm


@pytest.fixture
def cover_path(tmp_path):
    path = tmp_path / "cover.pgm"
    save_pgm(synth_cover(_rng(1, 2), 32), path)
    return path


@pytest.fixture
def model_path(tmp_path):
    path = tmp_path / "model.bin"
    cnn.save_model(cnn.init_model((32, 32), (2, 3, 4), seed=0), path)
    return path


def test_embed_then_extract(tmp_path, cover_path, capsys):
    out = tmp_path / "stego.pgm"
    assert main(["embed", "--cover", str(cover_path), "--message", "cafe01", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["extract", "--stego", str(out), "--nbytes", "3"]) == 0
    assert capsys.readouterr().out.strip() == "cafe01"


def test_embed_with_alpha_pads_message(tmp_path, cover_path, capsys):
    out = tmp_path / "stego.pgm"
    assert main(["embed", "--cover", str(cover_path), "--message", "beef", "--alpha", "0.2",
                 "--out", str(out), "--algo", "suniward", "--h", "6", "--stc-seed", "3"]) == 0
    capsys.readouterr()
    assert main(["extract", "--stego", str(out), "--alpha", "0.2", "--truncate", "2",
                 "--h", "6", "--stc-seed", "3"]) == 0
    assert capsys.readouterr().out.strip() == "beef"


def test_message_file(tmp_path, cover_path, capsys):
    msg = tmp_path / "m.bin"
    msg.write_bytes(b"hi!")
    out = tmp_path / "s.pgm"
    assert main(["embed", "--cover", str(cover_path), "--message-file", str(msg), "--out", str(out)]) == 0
    capsys.readouterr()
    main(["extract", "--stego", str(out), "--nbytes", "3"])
    assert bytes.fromhex(capsys.readouterr().out.strip()) == b"hi!"


def test_missing_required_flag(capsys):
    assert main(["embed", "--message", "00"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "--cover" in err


def test_no_subcommand(capsys):
    assert main([]) == 1


def test_runtime_error_exit_code(tmp_path, capsys):
    code = main(["extract", "--stego", str(tmp_path / "missing.pgm"), "--nbytes", "1"])
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1


def test_payload_too_long(tmp_path, cover_path):
    assert main(["embed", "--cover", str(cover_path), "--message", "00" * 100, "--alpha", "0.05",
                 "--out", str(tmp_path / "x.pgm")]) == 2


def test_adv_embed_plan_and_costs(tmp_path, cover_path, model_path, capsys):
    out, plan, heat = tmp_path / "adv.pgm", tmp_path / "plan.json", tmp_path / "heat.pgm"
    assert main(["adv-embed", "--cover", str(cover_path), "--model", str(model_path), "--message", "a5a5",
                 "--alpha", "0.1", "--out", str(out), "--plan", str(plan), "--dump-costs", str(heat)]) == 0
    doc = json.loads(plan.read_text())
    cover, stego = load_pgm(cover_path), load_pgm(out)
    diff = stego.pixels.astype(int) - cover.pixels.astype(int)
    assert len(doc["positions"]) == np.count_nonzero(diff)
    for (r, c), d in zip(doc["positions"], doc["directions"]):
        assert diff[r, c] == d
    assert load_pgm(heat).shape == cover.shape
    capsys.readouterr()
    main(["extract", "--stego", str(out), "--alpha", "0.1", "--truncate", "2"])
    assert capsys.readouterr().out.strip() == "a5a5"


def test_gradmap(tmp_path, cover_path, model_path):
    out = tmp_path / "g.pgm"
    assert main(["gradmap", "--model", str(model_path), "--image", str(cover_path), "--out", str(out)]) == 0
    signs = load_pgm(out).pixels
    assert set(np.unique(signs)) <= {0, 255}
    model = cnn.load_model(model_path)
    g = cnn.input_gradient(model, load_pgm(cover_path))
    assert np.array_equal(signs == 255, cnn.sign_map(g, load_pgm(cover_path)) == 1)


def _tiny_spec(tmp_path):
    spec = {"corpus_size": 20, "image_size": 24, "payload_rates": [0.4], "split_seed": 1,
            "train": {"lr": 0.01, "momentum": 0.9, "batch": 8, "epochs": 1, "seed": 0, "channels": [2, 3, 4]},
            "algo": "hill"}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


def test_train_writes_model(tmp_path):
    out = tmp_path / "m.bin"
    assert main(["train", "--spec", str(_tiny_spec(tmp_path)), "--alpha", "0.4", "--out", str(out)]) == 0
    assert cnn.load_model(out).input_shape == (24, 24)


def test_evaluate_writes_csv(tmp_path):
    out = tmp_path / "report.csv"
    assert main(["evaluate", "--spec", str(_tiny_spec(tmp_path)), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 3


def test_evaluate_on_corpus_dir(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(20):
        save_pgm(synth_cover(_rng(50, i), 24), corpus / f"{i:03d}.pgm")
    out = tmp_path / "report.csv"
    assert main(["evaluate", "--spec", str(_tiny_spec(tmp_path)), "--corpus-dir", str(corpus),
                 "--out", str(out)]) == 0
    assert out.exists()


def test_parallel_jobs_match_serial(tmp_path):
    spec = _tiny_spec(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["evaluate", "--spec", str(spec), "--out", str(a)]) == 0
    assert main(["evaluate", "--spec", str(spec), "--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
