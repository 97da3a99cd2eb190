import pytest

import spen

TINY = dict(
    synth_labels=4,
    synth_vocab=16,
    synth_train=60,
    synth_dev=20,
    synth_test=20,
    synth_max_len=8,
    embed_dim=4,
    hidden=3,
    infnet_hidden=3,
    epochs=2,
    batch_size=16,
    probe_size=10,
    log_timing=False,
)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    metrics = spen.train(
        **TINY,
        model_out=str(d / "m.bin"),
        log_out=str(d / "log.jsonl"),
        metrics_out=str(d / "metrics.json"),
    )
    return d, metrics


def test_train_reports_metrics(trained):
    d, metrics = trained
    assert metrics["mode"] == "compound"
    assert metrics["parameterization"] == "stacked"
    assert 0.0 <= metrics["test"]["accuracy"] <= 100.0
    assert (d / "log.jsonl").read_text().count("\n") == metrics["epochs_run"]


def test_model_predicts_known_labels(trained):
    d, _ = trained
    model = spen.Model(str(d / "m.bin"))
    out = model.predict([["w1", "w2", "w3"], ["w0"]])
    assert [len(s) for s in out] == [3, 1]
    assert all(label in model.labels for s in out for label in s)
    counts = model.param_counts()
    assert counts["trained"] > counts["inference"] > 0


def test_predict_then_evaluate_is_perfect(trained, tmp_path):
    d, _ = trained
    data = tmp_path / "eval.conll"
    pred = tmp_path / "pred.conll"
    spen.gen_synth(str(data), 10, dict(synth_labels=4, synth_vocab=16, seed=3))
    spen.predict(str(d / "m.bin"), str(data), str(pred))
    assert spen.evaluate(str(d / "m.bin"), str(pred))["accuracy"] == 100.0


def test_span_scoring():
    gold = [["S-PER", "O", "B-LOC", "E-LOC", "S-ORG"]]
    pred = [["S-PER", "O", "B-LOC", "E-LOC", "S-PER"]]
    s = spen.span_f1(pred, gold)
    assert s["n_correct"] == 2
    assert round(s["f1"], 2) == 66.67
    assert spen.extract_spans(["B-X", "E-X", "S-Y"]) == [(0, 1, "X"), (2, 2, "Y")]


def test_gradcheck_passes():
    results = spen.gradcheck(0)
    assert len(results) >= 20
    assert all(ok for _, _, ok in results)


def test_config_errors_raise():
    keys = {k for k, _, _ in spen.config_keys()}
    assert "lambda" in keys
    with pytest.raises(spen.SpenError, match="lamda"):
        spen.train(lamda=1)
