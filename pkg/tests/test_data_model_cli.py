import json

import numpy as np
import pytest

from kcrf.chain import LabelAlphabet, LabeledSequence
from kcrf.cli import main
from kcrf.data import format_sequences, load_dataset, parse_lines
from kcrf.exceptions import (ConfigurationError, EmptyDatasetError, ParseError,
                             SchemaError)
from kcrf.inference import forward_backward, viterbi
from kcrf.kernels import KernelSpec
from kcrf.metrics import evaluate
from kcrf.model import KernelCRFModel, cross_validate, fit, fold_assignment
from kcrf.objective import DualObjective, TrainConfig
from kcrf.synthetic import linear_task

AB = LabelAlphabet(["A", "B"])


def write_task(path, seed=0, n=12, length=5, n_features=2):
    data = linear_task(np.random.default_rng(seed), n_sequences=n, length=length,
                       n_features=n_features, weight_scale=2.0)
    path.write_text(format_sequences(data, AB))
    return data


def write_config(path, **kw):
    base = {"degree": 2, "rank_budget": 40, "max_iterations": 200}
    base.update(kw)
    path.write_text(json.dumps(base))
    return path


# parsing

def test_parse_two_blocks():
    ds = parse_lines(["x\t1\t2", "y\t3\t4", "", "y\t5\t6", ""])
    assert len(ds) == 2 and ds.feature_dim == 2
    assert ds.alphabet.names == ("x", "y") or list(ds.alphabet.names) == ["x", "y"]
    np.testing.assert_array_equal(ds.sequences[0].labels, [0, 1])
    np.testing.assert_array_equal(ds.sequences[1].features, [[5.0, 6.0]])


def test_parse_empty_file(tmp_path):
    p = tmp_path / "empty.tsv"
    p.write_text("")
    with pytest.raises(EmptyDatasetError):
        load_dataset(p)
    with pytest.raises(EmptyDatasetError):
        parse_lines(["", "  ", ""])


def test_parse_unlabeled_uses_model_alphabet():
    ds = parse_lines(["?\t1", "?\t2", "", "?\t0"], alphabet=AB)
    assert ds.alphabet is AB
    assert not ds.is_labeled
    assert all(s.labels is None for s in ds.sequences)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(SchemaError, match="line 3"):
        parse_lines(["A\t1\t2", "B\t1\t2", "A\t1"])
    with pytest.raises(ParseError, match="line 2"):
        parse_lines(["A\t1", "B\tnope"])
    with pytest.raises(ParseError, match="line 1"):
        parse_lines(["A"])
    with pytest.raises(ParseError, match="line 1"):
        parse_lines(["?\t1", "A\t2"])
    with pytest.raises(ParseError, match="line 1"):
        parse_lines(["C\t1"], alphabet=AB)


def test_format_roundtrip(rng):
    seqs = [LabeledSequence(rng.standard_normal((3, 2)), [0, 1, 1]),
            LabeledSequence(rng.standard_normal((1, 2)), [1])]
    ds = parse_lines(format_sequences(seqs, AB).splitlines(), alphabet=AB)
    for a, b in zip(seqs, ds.sequences):
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)


# models

def _trained(tmp_path):
    path = tmp_path / "train.tsv"
    write_task(path)
    ds = load_dataset(path)
    model, state = fit(ds, TrainConfig(degree=2, rank_budget=30, window_radius=1))
    return ds, model, state


def test_model_roundtrip_bitwise(tmp_path):
    ds, model, _ = _trained(tmp_path)
    f = tmp_path / "m.json"
    model.save(f)
    loaded = KernelCRFModel.load(f)
    assert json.loads(f.read_text())["format_version"] == 1
    for s in ds.sequences:
        a, b = model.scores(s), loaded.scores(s)
        assert np.array_equal(a.emission, b.emission)
        assert np.array_equal(a.transition, b.transition)
        assert np.array_equal(model.predict(s), loaded.predict(s))


def test_model_load_rejects_garbage(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text("{not json")
    with pytest.raises(ParseError):
        KernelCRFModel.load(f)


def test_model_feature_mismatch_names_dims(tmp_path):
    _, model, _ = _trained(tmp_path)
    with pytest.raises(ValueError, match="2.*3|3.*2"):
        model.scores(LabeledSequence(np.zeros((2, 3))))


def test_model_scores_match_objective(tmp_path):
    ds, model, state = _trained(tmp_path)
    obj = DualObjective(ds.sequences, state.basis, model.spec, 1.0)
    tables = obj.score_tables(state.basis.coeffs, state.basis.transition_coeffs)
    for s, t in zip(ds.sequences, tables):
        np.testing.assert_allclose(model.scores(s).emission, t.emission, atol=1e-10)


# centering

def test_centering_end_to_end(rng):
    data = linear_task(rng, n_sequences=5, length=6, n_features=2)
    cfg = TrainConfig(degree=2, rank_budget=20, max_iterations=50)
    from kcrf.optimizer import train
    state = train(data, cfg.kernel_spec(), cfg, n_labels=2)
    alpha = state.basis.coeffs
    plain = DualObjective(data, state.basis, KernelSpec(degree=2), 1.0)
    centered_basis = state.basis.with_coeffs(alpha / 2, state.basis.transition_coeffs)
    centered = DualObjective(data, centered_basis, KernelSpec(degree=2, center_labels=True), 1.0)
    ta = plain.score_tables(alpha, state.basis.transition_coeffs)
    tb = centered.score_tables(alpha / 2, state.basis.transition_coeffs)
    for a, b in zip(ta, tb):
        ma, mb = forward_backward(a), forward_backward(b)
        np.testing.assert_allclose(ma.unary, mb.unary, atol=1e-8)
        np.testing.assert_allclose(ma.pairwise, mb.pairwise, atol=1e-8)
        assert np.array_equal(viterbi(a), viterbi(b))


# metrics

def test_metrics_trivial():
    gold = [np.array([0, 1, 0, 1]), np.array([1, 0])]
    assert evaluate(gold, gold, 2)["accuracy"] == 1.0
    zeros = [np.zeros(4, int), np.zeros(2, int)]
    assert evaluate(gold, zeros, 2)["accuracy"] == 0.5


def test_metrics_hand_scored():
    # 10 sequences, 20 tokens; counted by hand
    gold = [[0, 1], [1, 1], [0, 0], [1, 0], [0, 1], [1], [0, 1, 1], [1, 0, 0], [0], [1, 1]]
    pred = [[0, 1], [1, 0], [0, 0], [0, 0], [1, 1], [1], [0, 1, 0], [1, 0, 0], [0], [0, 1]]
    m = evaluate([np.array(g) for g in gold], [np.array(p) for p in pred], 2)
    # mistakes: seq1 pos1, seq3 pos0, seq4 pos0, seq6 pos2, seq9 pos0 -> 5 of 20
    assert m["tokens"] == 20 and m["sequences"] == 10
    assert m["accuracy"] == pytest.approx(15 / 20)
    assert m["exact_match"] == pytest.approx(5 / 10)
    # label 0: gold 9, predicted 12, tp 8; label 1: gold 11, predicted 8, tp 7
    assert m["per_label"][0]["support"] == 9 and m["per_label"][1]["support"] == 11
    assert m["per_label"][0]["precision"] == pytest.approx(8 / 12)
    assert m["per_label"][0]["recall"] == pytest.approx(8 / 9)
    assert m["per_label"][1]["precision"] == pytest.approx(7 / 8)
    assert m["per_label"][1]["recall"] == pytest.approx(7 / 11)
    p, r = 7 / 8, 7 / 11
    assert m["per_label"][1]["f1"] == pytest.approx(2 * p * r / (p + r))


# cross-validation

def test_fold_assignment_partitions():
    f = fold_assignment(11, 5)
    np.testing.assert_array_equal(f, np.arange(11) % 5)
    g = fold_assignment(11, 5, seed=3)
    assert sorted(np.bincount(g)) == sorted(np.bincount(f))
    np.testing.assert_array_equal(g, fold_assignment(11, 5, seed=3))


def test_cross_validate_loo_and_determinism(tmp_path):
    path = tmp_path / "d.tsv"
    write_task(path, n=6, length=4)
    ds = load_dataset(path)
    cfg = TrainConfig(rank_budget=10, max_iterations=30)
    rep = cross_validate(ds, cfg, k=6)
    assert [r["test_size"] for r in rep["folds"]] == [1] * 6
    assert sum(r["test_size"] for r in rep["folds"]) == len(ds)
    a = cross_validate(ds, cfg, k=3, seed=5)
    b = cross_validate(ds, cfg, k=3, seed=5)
    assert a == b
    with pytest.raises(ConfigurationError):
        cross_validate(ds, cfg, k=7)


# command line

def test_cli_train_predict_eval(tmp_path, capsys):
    data = tmp_path / "train.tsv"
    write_task(data)
    cfg = write_config(tmp_path / "cfg.json")
    model = tmp_path / "model.json"
    log = tmp_path / "iters.tsv"
    assert main(["train", str(data), "--config", str(cfg), "--model", str(model),
                 "--log", str(log)]) == 0
    out = capsys.readouterr().out
    assert "converged\ttrue" in out
    assert log.read_text().startswith("iteration")
    m = KernelCRFModel.load(model)

    pred_out = tmp_path / "pred.txt"
    assert main(["predict", str(data), "--model", str(model), "--out", str(pred_out)]) == 0
    lines = pred_out.read_text().splitlines()
    src = data.read_text().splitlines()
    assert len(lines) == len(src)
    ds = load_dataset(data)
    expected = [m.alphabet.decode(m.predict(s)) for s in ds.sequences]
    flat = [x for seq in expected for x in seq + [""]]
    assert lines == flat

    assert main(["eval", str(data), "--model", str(model)]) == 0
    report = capsys.readouterr().out
    acc = float(report.splitlines()[0].split("\t")[1])
    gold = np.concatenate([s.labels for s in ds.sequences])
    assert acc == pytest.approx(np.mean(gold == np.concatenate(
        [m.predict(s) for s in ds.sequences])), abs=1e-6)


def test_cli_rank_one_trains(tmp_path, capsys):
    data = tmp_path / "train.tsv"
    write_task(data, n=30)
    accs = {}
    for rank in (1, 200):
        cfg = write_config(tmp_path / f"c{rank}.json", rank_budget=rank)
        model = tmp_path / f"m{rank}.json"
        assert main(["train", str(data), "--config", str(cfg), "--model", str(model)]) == 0
        assert main(["eval", str(data), "--model", str(model)]) == 0
        accs[rank] = float(capsys.readouterr().out.split("token_accuracy\t")[1].split()[0])
    assert accs[1] < accs[200]


def test_cli_predict_skips_empty_blocks(tmp_path, capsys):
    data = tmp_path / "train.tsv"
    write_task(data, n=6)
    model = tmp_path / "m.json"
    main(["train", str(data), "--config", str(write_config(tmp_path / "c.json")),
          "--model", str(model)])
    capsys.readouterr()
    unl = tmp_path / "u.tsv"
    unl.write_text("?\t0.5\t1\n?\t-1\t2\n\n\n?\t0\t0\n")
    assert main(["predict", str(unl), "--model", str(model)]) == 0
    res = capsys.readouterr()
    assert "empty" in res.err
    lines = res.out.splitlines()
    assert len(lines) == 5
    assert lines[2] == "" and lines[3] == ""
    assert all(x in ("A", "B") for x in (lines[0], lines[1], lines[4]))


def test_cli_errors(tmp_path, capsys):
    data = tmp_path / "train.tsv"
    write_task(data, n=4)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"degree": 2, "learning_rate": 0.1}))
    assert main(["train", str(data), "--config", str(bad), "--model", str(tmp_path / "m")]) == 2
    assert "learning_rate" in capsys.readouterr().err

    assert main(["train", str(data)]) == 1
    assert main(["bogus"]) == 1
    assert main(["cv", str(data), "--folds", "1"]) == 1
    assert main(["train", str(tmp_path / "missing.tsv"), "--model", str(tmp_path / "m")]) == 2

    model = tmp_path / "m.json"
    main(["train", str(data), "--config", str(write_config(tmp_path / "c.json")),
          "--model", str(model)])
    wide = tmp_path / "wide.tsv"
    wide.write_text("?\t1\t2\t3\n")
    capsys.readouterr()
    assert main(["predict", str(wide), "--model", str(model)]) == 2
    err = capsys.readouterr().err
    assert "2" in err and "3" in err


def test_cli_cv_deterministic(tmp_path, capsys):
    data = tmp_path / "d.tsv"
    write_task(data, n=8, length=4)
    cfg = write_config(tmp_path / "c.json", rank_budget=10, max_iterations=30)
    outs = []
    for _ in range(2):
        assert main(["cv", str(data), "--config", str(cfg), "--folds", "4", "--seed", "2"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]
    rows = outs[0].splitlines()
    assert rows[0].startswith("fold") and len(rows) == 1 + 4 + 2


def test_cli_cholesky_report(tmp_path, capsys):
    data = tmp_path / "d.tsv"
    write_task(data, n=5, length=4)
    cfg = write_config(tmp_path / "c.json", rank_budget=6)
    assert main(["cholesky-report", str(data), "--config", str(cfg)]) == 0
    rows = [r.split("\t") for r in capsys.readouterr().out.splitlines()]
    assert rows[0] == ["step", "pivot", "residual", "captured_fraction"]
    body = rows[1:]
    assert 1 <= len(body) <= 6
    res = [float(r[2]) for r in body]
    frac = [float(r[3]) for r in body]
    assert all(a >= b for a, b in zip(res, res[1:]))
    assert all(a < b for a, b in zip(frac, frac[1:]))
    assert 0 < frac[-1] <= 1
