import math
from dataclasses import replace

import numpy as np
import pytest

from lstmlab import data as D
from lstmlab import lstm, train as T
from lstmlab.regularization import RegSpec

SMALL = T.TrainConfig(epochs=3, learning_rate=0.01, embedding_dim=4, hidden_dim=4, seq_len=12,
                      batch_size=16, optimizer="adam", seed=0)


@pytest.fixture(scope="module")
def synth():
    full = D.synth_longrange(120, 12, 10, 9, seed=0)
    tr, va = D.split_validation(full, 0.1, seed=0)
    te = D.synth_longrange(40, 12, 10, 9, seed=0, split="test")
    return tr, va, te


def test_sgd_step():
    out = T.sgd_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, 0.1)
    assert out["w"][0] == pytest.approx(0.8, abs=1e-15)
    same = T.sgd_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, 0.0)
    assert same["w"][0] == 1.0
    again = T.sgd_step({"w": np.array([1.0])}, {"w": np.array([2.0])}, 0.1)
    assert again["w"][0] == out["w"][0]
    with pytest.raises(ValueError):
        T.sgd_step({"w": np.ones(2)}, {"w": np.ones(3)}, 0.1)


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = T.clip_by_global_norm(grads, 1.0)
    assert norm == 5.0
    assert math.hypot(clipped["a"][0], clipped["b"][0]) == pytest.approx(1.0)
    untouched, _ = T.clip_by_global_norm(grads, 10.0)
    assert untouched is grads


def test_metrics_error_rate():
    m = T.Metrics("train", 0.873, 0.1)
    assert m.error_rate == 1.0 - 0.873
    assert m.to_dict()["error_rate"] == 1.0 - m.accuracy


def test_config_validation():
    with pytest.raises(ValueError):
        replace(SMALL, perm_mode="random")
    with pytest.raises(ValueError):
        replace(SMALL, hidden_dim=0)
    with pytest.raises(ValueError):
        replace(SMALL, cell="gru")
    defaults = T.TrainConfig()
    assert (defaults.epochs, defaults.learning_rate, defaults.embedding_dim, defaults.hidden_dim,
            defaults.seq_len, defaults.batch_size) == (50, 0.01, 100, 50, 32, 32)
    assert defaults.lr_grid == (0.1, 0.01, 0.001, 0.0001)


def test_evaluate_uniform_predictor():
    ds = D.synth_longrange(100, 6, 6, 2, seed=0)
    params = lstm.init_params(6, 3, 4, 2, seed=0)
    params = params.replace({"V": np.zeros((4, 2))})
    m = T.evaluate(params, ds)
    assert m.mean_loss == pytest.approx(math.log(2), abs=1e-15)
    # argmax ties go to class 0
    assert m.accuracy == pytest.approx(np.mean(ds.arrays()[1] == 0))
    with pytest.raises(ValueError):
        T.evaluate(params, ds.subset([], "test"))


def test_lr_zero_is_static(synth):
    tr, va, _ = synth
    result = T.train_model(replace(SMALL, learning_rate=0.0, optimizer="sgd"), tr, va)
    for split in ("train", "valid"):
        trace = [(m.accuracy, m.mean_loss) for m in result.history if m.split == split]
        assert len(set(trace)) == 1


def test_training_is_deterministic(synth):
    tr, va, _ = synth
    a = T.train_model(SMALL, tr, va)
    b = T.train_model(SMALL, tr, va)
    assert [m.to_json() for m in a.history] == [m.to_json() for m in b.history]
    for k, v in a.params.arrays().items():
        assert np.array_equal(v, getattr(b.params, k))


def test_best_epoch_selection(synth):
    tr, va, _ = synth
    result = T.train_model(replace(SMALL, epochs=6), tr, va)
    valid = [m for m in result.history if m.split == "valid"]
    best = max(m.accuracy for m in valid)
    assert result.best_epoch == min(m.epoch for m in valid if m.accuracy == best)
    assert T.evaluate(result.params, va, SMALL.variant).accuracy == best


def test_records_initialization_epoch(synth):
    tr, va, _ = synth
    result = T.train_model(SMALL, tr, va)
    assert [m.epoch for m in result.history if m.split == "train"] == [0, 1, 2, 3]


def test_nan_guard(synth):
    tr, va, _ = synth
    params = lstm.init_params(len(tr.vocab), 4, 4, 2, seed=0)
    params = params.replace({"V": np.full((4, 2), np.nan)})
    with pytest.raises(T.TrainingDiverged, match="epoch 1, batch 0"):
        T.train_model(SMALL, tr, va, params=params)


def test_large_learning_rate_does_not_learn():
    ds = D.synth_longrange(200, 32, 16, 24, seed=0)
    cfg = T.TrainConfig(epochs=5, learning_rate=10.0, embedding_dim=8, hidden_dim=8, seq_len=32)
    try:
        result = T.train_model(cfg, ds)
    except T.TrainingDiverged:
        return
    losses = [m.mean_loss for m in result.history]
    assert min(losses[1:]) > losses[0]


def test_zero_penalty_is_identity(synth):
    tr, va, _ = synth
    a = T.train_model(SMALL, tr, va)
    b = T.train_model(replace(SMALL, reg=RegSpec.tied(0.0, 0.5)), tr, va)
    assert [m.to_json() for m in a.history] == [m.to_json() for m in b.history]


def test_penalty_shrinks_weights(synth):
    tr, va, _ = synth
    plain = T.train_model(replace(SMALL, epochs=4), tr, va).params
    heavy = T.train_model(replace(SMALL, epochs=4, reg=RegSpec.tied(0.5, 2.0)), tr, va).params
    assert np.linalg.norm(heavy.W_i) < np.linalg.norm(plain.W_i)


def test_permutation_for():
    assert T.permutation_for(SMALL) is None
    assert T.permutation_for(replace(SMALL, perm_mode="tree")).tolist()[-1] == 6
    ng = T.permutation_for(replace(SMALL, perm_mode="ngram", ngram=3)).tolist()
    assert sorted(ng) == list(range(12))


def test_reordering_shortens_path_to_centre_token():
    # centre position is fed last under both reorderings
    n = 32
    for cfg in (replace(SMALL, seq_len=n, perm_mode="tree"), replace(SMALL, seq_len=n, perm_mode="ngram")):
        perm = T.permutation_for(cfg).tolist()
        assert n - 1 - perm.index(n // 2) == 0
    assert n - 1 - list(range(n)).index(n // 2) == 15


def test_steps_from_loss_per_position():
    # position 0 is fed first under every order; position 24 stays within 7 steps
    n = 32
    expected = {"none": {0: 31, 16: 15, 24: 7}, "tree": {0: 31, 16: 0, 24: 1}, "ngram": {0: 30, 16: 0, 24: 2}}
    for mode, want in expected.items():
        perm = T.permutation_for(replace(SMALL, seq_len=n, perm_mode=mode))
        order = list(range(n)) if perm is None else perm.tolist()
        assert {pos: n - 1 - order.index(pos) for pos in want} == want, mode


def test_comparison_report_shape(synth):
    tr, va, te = synth
    report = T.run_comparison(replace(SMALL, epochs=1), tr, va, te,
                              reg_specs=[RegSpec.tied(0.0, 2.0), RegSpec.tied(1e-3, 1.0)])
    assert [r.label for r in report.rows] == list(T.ROW_LABELS)
    assert T.COLUMN_LABELS == ("Training Accuracy", "Testing Accuracy", "Training Error", "Testing Error")
    assert all(len(row) == 5 for row in report.table())
    text = report.render()
    for label in T.ROW_LABELS + T.COLUMN_LABELS:
        assert label in text
    d = report.to_dict()
    assert d["columns"] == list(T.COLUMN_LABELS) and len(d["rows"]) == 4
    assert len(d["rows"][2]["sweep"]) == 2


def test_zero_reg_row_equals_baseline(synth):
    tr, va, te = synth
    report = T.run_comparison(replace(SMALL, epochs=2), tr, va, te, rows=("baseline", "regularization"),
                              reg_specs=[RegSpec.tied(0.0, 2.0)])
    base, reg = report.rows
    assert base.train == reg.train and base.test == reg.test and base.valid == reg.valid


def test_comparison_row_subset_and_errors(synth):
    tr, va, te = synth
    report = T.run_comparison(replace(SMALL, epochs=1), tr, va, te, rows=("baseline", "reorder_ngram"))
    assert [r.label for r in report.rows] == ["Baseline (regular LSTM)", "Input Reordering (2-Gram)"]
    with pytest.raises(ValueError):
        T.run_comparison(SMALL, tr, va, te, rows=("bogus",))


def test_sweep_over_learning_rates(synth):
    tr, va, _ = synth
    entries = T.run_sweep(replace(SMALL, epochs=1), tr, va, [None, RegSpec.tied(1e-3, 1.0)], [0.01, 0.001])
    assert [(e["learning_rate"], e["reg"] is None) for e in entries] == [
        (0.01, True), (0.01, False), (0.001, True), (0.001, False)
    ]
