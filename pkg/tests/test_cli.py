import json
import logging

import pytest

from cpcfg.cli import main

TOY = [
    "(S (NP (DT the) (NN dog)) (VP (VBZ barks)) (. .))",
    "(S (NP (PRP it)) (VP (VBD rained) (ADVP (RB hard))))",
    "(S (NP (NNS dogs)) (VP (VBP bark) (PP (IN at) (NP (DT the) (NN cat)))))",
]


@pytest.fixture
def toy_files(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for split in ("train", "valid", "test"):
        (src / f"{split}.txt").write_text("\n".join(TOY) + "\n")
    return src


def preprocess(src, out, *extra):
    return main(["preprocess", "--train", str(src / "train.txt"), "--valid", str(src / "valid.txt"),
                 "--test", str(src / "test.txt"), "--out", str(out), *extra])


def lines(path):
    return path.read_text().splitlines()


def test_preprocess_toy(toy_files, tmp_path, capsys):
    out = tmp_path / "data"
    assert preprocess(toy_files, out) == 0
    assert len(lines(out / "train.jsonl")) == 3
    assert "train: read 3" in capsys.readouterr().out
    first = json.loads(lines(out / "train.jsonl")[0])
    assert first["tokens"] == ["the", "dog", "barks"]
    vocab = json.loads((out / "vocab.json").read_text())
    assert vocab["itos"][0] == "<unk>"


def test_preprocess_only_punctuation(tmp_path, capsys):
    src = tmp_path / "p.txt"
    src.write_text("(S (. .) (, ,))\n(S (: :))\n")
    assert main(["preprocess", "--train", str(src), "--out", str(tmp_path / "o")]) == 0
    assert lines(tmp_path / "o" / "train.jsonl") == []
    assert "kept 0" in capsys.readouterr().out


def test_preprocess_length_cap_train_only(tmp_path):
    long_tree = "(S " + " ".join(f"(NN w{i})" for i in range(45)) + ")"
    for split in ("train", "valid", "test"):
        (tmp_path / f"{split}.txt").write_text(TOY[0] + "\n" + long_tree + "\n")
    assert preprocess(tmp_path, tmp_path / "o", "--max-train-len", "30") == 0
    assert len(lines(tmp_path / "o" / "train.jsonl")) == 1
    assert len(lines(tmp_path / "o" / "valid.jsonl")) == 2


def test_preprocess_errors(tmp_path, capsys):
    assert main(["preprocess", "--train", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("(S (NP\n")
    assert main(["preprocess", "--train", str(bad), "--out", str(tmp_path)]) == 2
    assert "offset 6" in capsys.readouterr().err
    assert main(["preprocess", "--out", str(tmp_path)]) == 1


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert main(["train", "--out", str(tmp_path)]) == 1
    assert main(["evaluate", "--out", str(tmp_path)]) == 1


@pytest.fixture(scope="module")
def synth_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert main(["synth", "--n-train", "40", "--n-valid", "8", "--n-test", "8", "--max-len", "8", "--seed", "13",
                 "--out", str(root / "raw")]) == 0
    raw = root / "raw"
    assert preprocess(raw, root / "data") == 0
    return root


def train(root, out, *extra):
    return main(["train", "--data", str(root / "data"), "--preset", "small", "--nonterminals", "2",
                 "--preterminals", "3", "--z-dim", "2", "--out", str(out), *extra])


def test_train_two_seeds_and_reproducible(synth_run):
    a, b = synth_run / "a", synth_run / "b"
    assert train(synth_run, a, "--seeds", "2", "--epochs", "1") == 0
    assert (a / "seed0" / "best.ckpt").exists() and (a / "seed1" / "best.ckpt").exists()
    assert train(synth_run, b, "--seeds", "2", "--epochs", "1") == 0
    assert (a / "train_log.jsonl").read_bytes() == (b / "train_log.jsonl").read_bytes()
    assert (a / "seed0" / "best.ckpt").read_bytes() == (b / "seed0" / "best.ckpt").read_bytes()
    assert len(lines(a / "timing.jsonl")) == 2
    stored = json.loads((a / "config.json").read_text())
    c = synth_run / "c"
    assert train(synth_run, c, "--config", str(a / "config.json"), "--seeds", "2") == 0
    assert stored["train"]["epochs"] == 1
    assert (c / "train_log.jsonl").read_bytes() == (a / "train_log.jsonl").read_bytes()


def test_train_shared_has_zero_kl(synth_run, caplog):
    out = synth_run / "shared"
    assert train(synth_run, out, "--epochs", "1", "--share-start", "--share-nonterminal",
                 "--share-preterminal") == 0
    assert all(json.loads(x)["kl"] == 0.0 for x in lines(out / "train_log.jsonl"))
    with caplog.at_level(logging.INFO, logger="cpcfg"):
        assert main(["parse", "--checkpoint", str(out / "seed0" / "best.ckpt"), "--data",
                     str(synth_run / "data" / "test.jsonl"), "--out", str(out / "parsed"), "-v"]) == 0
    assert "z unused" in caplog.text


def test_train_bad_config(synth_run, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"epochz": 2}}))
    assert train(synth_run, tmp_path / "o", "--config", str(cfg)) == 1
    assert train(synth_run, tmp_path / "o", "--epochs", "0") == 1


def test_parse_and_evaluate(synth_run, capsys):
    run = synth_run / "pe"
    assert train(synth_run, run, "--epochs", "1") == 0
    ckpt = str(run / "seed0" / "best.ckpt")
    test = str(synth_run / "data" / "test.jsonl")
    assert main(["parse", "--checkpoint", ckpt, "--data", test, "--out", str(run / "p1")]) == 0
    assert main(["parse", "--checkpoint", ckpt, "--data", test, "--out", str(run / "p2")]) == 0
    for name in ("predictions.jsonl", "predictions.txt"):
        assert (run / "p1" / name).read_bytes() == (run / "p2" / name).read_bytes()
    preds = [json.loads(x) for x in lines(run / "p1" / "predictions.jsonl")]
    assert len(preds) == len(lines(synth_run / "data" / "test.jsonl"))
    for p in preds:
        assert len(p["spans"]) == len(p["tokens"]) - 1
    assert main(["evaluate", "--gold", test, "--pred", str(run / "p1" / "predictions.jsonl"),
                 "--by-length", "--out", str(run / "ev")]) == 0
    report = json.loads((run / "ev" / "report.json").read_text())
    assert 0 <= report["corpus_f1"] <= 100
    rows = lines(run / "ev" / "by_length.csv")
    assert len(rows) == 1 + len(report["by_length"])


def test_parse_two_token_sentence(synth_run, tmp_path):
    run = synth_run / "pe2"
    assert train(synth_run, run, "--epochs", "1") == 0
    rec = {"tokens": ["a", "b"], "pos": ["X", "X"], "ids": [1, 2], "spans": [[0, 2, "S"]]}
    data = tmp_path / "two.jsonl"
    data.write_text(json.dumps(rec) + "\n")
    assert main(["parse", "--checkpoint", str(run / "seed0" / "best.ckpt"), "--data", str(data),
                 "--out", str(tmp_path / "o")]) == 0
    pred = json.loads(lines(tmp_path / "o" / "predictions.jsonl")[0])
    assert [sp[:2] for sp in pred["spans"]] == [[0, 2]]


def test_parse_vocab_mismatch(synth_run, tmp_path):
    run = synth_run / "pe3"
    assert train(synth_run, run, "--epochs", "1") == 0
    other = tmp_path / "vocab.json"
    other.write_text(json.dumps({"itos": ["<unk>", "zzz"], "unk_id": 0}))
    assert main(["parse", "--checkpoint", str(run / "seed0" / "best.ckpt"), "--data",
                 str(synth_run / "data" / "test.jsonl"), "--vocab", str(other), "--out", str(tmp_path)]) == 1
    rec = {"tokens": ["a", "b"], "pos": ["X", "X"], "ids": [1, 10_000], "spans": []}
    data = tmp_path / "oov.jsonl"
    data.write_text(json.dumps(rec) + "\n")
    assert main(["parse", "--checkpoint", str(run / "seed0" / "best.ckpt"), "--data", str(data),
                 "--out", str(tmp_path)]) == 1


def test_evaluate_gold_as_predictions(toy_files, tmp_path):
    data = tmp_path / "data"
    preprocess(toy_files, data)
    gold = [json.loads(x) for x in lines(data / "test.jsonl")]
    (tmp_path / "pred.jsonl").write_text("".join(json.dumps({"tokens": g["tokens"], "spans": g["spans"]}) + "\n"
                                                 for g in gold))
    assert main(["evaluate", "--gold", str(data / "test.jsonl"), "--pred", str(tmp_path / "pred.jsonl"),
                 "--out", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["corpus_f1"] == report["sentence_f1"] == 100.0


def test_evaluate_right_baseline_by_hand(tmp_path):
    src = tmp_path / "t.txt"
    src.write_text("(S (NN a) (VP (VB b) (NP (DT c) (NN d))))\n(S (NP (DT a) (NN b)) (VB c) (NN d))\n")
    main(["preprocess", "--train", str(src), "--test", str(src), "--out", str(tmp_path / "d")])
    assert main(["evaluate", "--gold", str(tmp_path / "d" / "test.jsonl"), "--baseline", "right",
                 "--out", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    # right branching on n=4 predicts {(1,4), (2,4)}: sentence one matches both, sentence two neither
    assert report["corpus_f1"] == pytest.approx(200 * 0.5 * (2 / 3) / (0.5 + 2 / 3))
    assert report["sentence_f1"] == pytest.approx(50.0)


def test_evaluate_random_baseline_reports_spread(toy_files, tmp_path):
    preprocess(toy_files, tmp_path / "d")
    assert main(["evaluate", "--gold", str(tmp_path / "d" / "test.jsonl"), "--baseline", "random",
                 "--baseline-runs", "3", "--out", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["runs"] == 3 and "sentence_f1_std" in report


def test_evaluate_misaligned(toy_files, tmp_path, capsys):
    preprocess(toy_files, tmp_path / "d")
    (tmp_path / "pred.jsonl").write_text(json.dumps({"tokens": ["the", "dog", "barks"], "spans": []}) + "\n")
    assert main(["evaluate", "--gold", str(tmp_path / "d" / "test.jsonl"), "--pred", str(tmp_path / "pred.jsonl"),
                 "--out", str(tmp_path)]) == 2
    assert "index 1" in capsys.readouterr().err
    (tmp_path / "pred.jsonl").write_text(json.dumps({"tokens": ["x"], "spans": []}) + "\n")
    assert main(["evaluate", "--gold", str(tmp_path / "d" / "test.jsonl"), "--pred", str(tmp_path / "pred.jsonl"),
                 "--out", str(tmp_path)]) == 2
    assert "index 0" in capsys.readouterr().err


def test_synth_reproducible_and_preprocessable(tmp_path):
    args = ["synth", "--n-train", "50", "--n-valid", "5", "--n-test", "5", "--seed", "13"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("train.txt", "valid.txt", "test.txt", "grammar.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert preprocess(tmp_path / "a", tmp_path / "d") == 0
    assert len(lines(tmp_path / "d" / "train.jsonl")) == 50


def test_synth_unproductive(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"synth": {"min_mean_len": 1e9, "max_draws": 2}}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 2
