import numpy as np
import pytest

from contactgraph.data import EncodedSet, write_scores
from contactgraph.errors import DataError, TrainingError
from contactgraph.training import (AdamState, Checkpoint, TrainConfig, adam_step, align_scores,
                                   fusion_predict, train_fusion, train_graph_stream)


def small(**kw):
    base = dict(gcn_hidden=8, embed_dim=6, lstm_hidden=6, batch_size=4, max_epochs=3, seed=3)
    base.update(kw)
    return TrainConfig(**base)


def toy_graph(n=6, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.random((n, n)) + np.eye(n)
    A /= A.sum(axis=1, keepdims=True)
    return A, rng.normal(size=(n, dim))


def encoded(seqs, labels):
    return EncodedSet([f"v#{i}" for i in range(len(seqs))], [np.asarray(s) for s in seqs],
                      np.asarray(labels, dtype=np.int64), [False] * len(seqs))


# -- adam ---------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState(), lr=0.1)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_is_lr_against_gradient():
    p = {"w": np.array([0.0, 0.0])}
    adam_step(p, {"w": np.array([3.0, -0.2])}, AdamState(), lr=0.01)
    np.testing.assert_allclose(p["w"], [-0.01, 0.01], rtol=1e-6)


def test_adam_minimises_square():
    p, state = {"x": np.array(1.0)}, AdamState()
    for _ in range(100):
        adam_step(p, {"x": 2 * p["x"]}, state, lr=0.1)
    assert abs(float(p["x"])) < 0.5


def test_adam_matches_scalar_recurrence():
    x, m, v = 1.0, 0.0, 0.0
    p, state = {"x": np.array(1.0)}, AdamState()
    for t in range(1, 31):
        g = 2 * x
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        adam_step(p, {"x": 2 * p["x"]}, state, lr=0.05)
    assert float(p["x"]) == pytest.approx(x, abs=1e-14)


def test_adam_rejects_nan():
    with pytest.raises(TrainingError, match="non-finite"):
        adam_step({"w": np.ones(2)}, {"w": np.array([1.0, np.nan])}, AdamState(), lr=0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mode="other")
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    assert TrainConfig().learning_rate == 7e-5 and TrainConfig().batch_size == 16


# -- graph stream -------------------------------------------------------------

def test_overfits_single_example():
    A, X = toy_graph()
    data = encoded([[0, 2, 5]], [1])
    ck = train_graph_stream(small(learning_rate=0.02, max_epochs=300, patience=300), A, X, 3, data)
    assert ck.history[-1]["train_loss"] < 0.01


def test_loss_non_increasing_at_small_rate():
    A, X = toy_graph()
    data = encoded([[0, 2, 5]], [1])
    ck = train_graph_stream(small(learning_rate=0.002, max_epochs=60, patience=60), A, X, 3, data)
    losses = [h["train_loss"] for h in ck.history]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_early_stopping_keeps_best_epoch():
    A, X = toy_graph()
    data = encoded([[0], [1], [2], [3]], [0, 1, 0, 1])
    ck = train_graph_stream(small(max_epochs=30, patience=2), A, X, 2, data)
    top1 = [h["val_top1"] for h in ck.history]
    assert len(top1) <= 30 and ck.epoch == 1 + int(np.argmax(top1))
    assert [h["epoch"] for h in ck.history] == list(range(1, len(top1) + 1))


def test_same_seed_gives_identical_checkpoint_bytes(tmp_path):
    A, X = toy_graph()
    data = encoded([[0, 1], [2, 3, 4], [5], [1, 2]], [0, 1, 2, 0])
    for name in ("a", "b"):
        train_graph_stream(small(), A, X, 3, data).save(tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    train_graph_stream(small(seed=4), A, X, 3, data).save(tmp_path / "c")
    assert (tmp_path / "a").read_bytes() != (tmp_path / "c").read_bytes()


def test_checkpoint_round_trip(tmp_path):
    A, X = toy_graph()
    ck = train_graph_stream(small(), A, X, 3, encoded([[0, 1], [2]], [0, 2]))
    ck.save(tmp_path / "ck")
    back = Checkpoint.load(tmp_path / "ck")
    assert back.model == ck.model and back.history == ck.history and back.epoch == ck.epoch
    assert all(np.array_equal(back.params[k], ck.params[k]) for k in ck.params)


def test_two_stage_freezes_embedding_layers():
    A, X = toy_graph()
    data = encoded([[0, 1], [2, 3], [4, 5]], [0, 1, 2])
    targets = (np.array([0, 1]), np.array([[1.0, 0, 0], [0, 0.5, 0.5]]))
    cfg = small(mode="two_stage", pretrain_epochs=2)
    short = train_graph_stream(small(mode="two_stage", pretrain_epochs=2, max_epochs=1), A, X, 3, data,
                               state_targets=targets)
    ck = train_graph_stream(cfg, A, X, 3, data, state_targets=targets)
    init = train_graph_stream(small(max_epochs=0), A, X, 3, data)
    for k in ("gcn_w1", "gcn_w2"):
        assert not np.array_equal(ck.params[k], init.params[k])
        assert np.array_equal(ck.params[k], short.params[k])
    with pytest.raises(DataError):
        train_graph_stream(cfg, A, X, 3, data)


def test_empty_training_sets_rejected():
    A, X = toy_graph()
    with pytest.raises(DataError, match="empty training"):
        train_graph_stream(small(), A, X, 3, encoded([], []))
    every_empty = encoded([[0]], [0])
    every_empty.empty = [True]
    with pytest.raises(DataError, match="every training window"):
        train_graph_stream(small(), A, X, 3, every_empty)


def test_epoch_log_lines_parse():
    A, X = toy_graph()
    lines = []
    train_graph_stream(small(), A, X, 3, encoded([[0, 1], [2]], [0, 2]), epoch_log=lines.append)
    assert len(lines) == 3
    for i, line in enumerate(lines, start=1):
        epoch, loss, top1, top5 = line.split("\t")
        assert int(epoch) == i and float(loss) > 0 and 0 <= float(top1) <= float(top5) <= 1


# -- fusion -------------------------------------------------------------------

def _fusion_inputs(n=120, k=5, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, k, size=n)
    ids = [f"s#{i}" for i in range(n)]
    return rng, ids, y


def test_fusion_learns_from_one_hot_graph_scores():
    rng, ids, y = _fusion_inputs()
    sg = {i: np.eye(5)[c] for i, c in zip(ids, y)}
    sa = {i: rng.dirichlet(np.ones(5)) for i in ids}
    ck = train_fusion(TrainConfig(fusion_epochs=40), sg, sa, dict(zip(ids, y)))
    assert ck.history[-1]["val_top1"] == 1.0


def test_fusion_ignores_uniform_appearance():
    rng, ids, y = _fusion_inputs(n=200)
    # graph scores right about 70% of the time
    noisy = np.where(rng.random(len(y)) < 0.7, y, rng.integers(0, 5, size=len(y)))
    sg = {i: rng.dirichlet(np.ones(5)) * 0.3 + np.eye(5)[c] * 0.7 for i, c in zip(ids, noisy)}
    sa = {i: np.full(5, 0.2) for i in ids}
    ck = train_fusion(TrainConfig(fusion_epochs=30), sg, sa, dict(zip(ids, y)))
    _, g, a = align_scores(sg, sa)
    labels = np.array([dict(zip(ids, y))[i] for i in sorted(ids)])
    graph_top1 = float((g.argmax(axis=1) == labels).mean())
    fused_top1 = float((fusion_predict(ck.params, g, a).argmax(axis=1) == labels).mean())
    assert fused_top1 >= graph_top1 - 0.02


def test_zero_fusion_epochs_gives_uniform_output():
    rng, ids, y = _fusion_inputs(n=10)
    sg = {i: rng.dirichlet(np.ones(5)) for i in ids}
    ck = train_fusion(TrainConfig(fusion_epochs=0), sg, sg, dict(zip(ids, y)))
    out = fusion_predict(ck.params, np.stack(list(sg.values())), np.stack(list(sg.values())))
    np.testing.assert_allclose(out, 0.2, atol=1e-15)


def test_fusion_reads_score_files(tmp_path):
    rng, ids, y = _fusion_inputs(n=20)
    scores = rng.dirichlet(np.ones(5), size=20)
    write_scores(tmp_path / "g.tsv", ids, scores)
    write_scores(tmp_path / "a.tsv", ids, scores[::-1])
    ck = train_fusion(TrainConfig(fusion_epochs=2), tmp_path / "g.tsv", tmp_path / "a.tsv", dict(zip(ids, y)))
    assert ck.kind == "fusion" and ck.params["fuse_w"].shape == (10, 5)


def test_fusion_id_mismatch():
    sg = {"a#0": np.full(2, 0.5), "a#1": np.full(2, 0.5)}
    sa = {"a#0": np.full(2, 0.5), "b#0": np.full(2, 0.5)}
    with pytest.raises(DataError, match="different segments"):
        train_fusion(TrainConfig(), sg, sa, {"a#0": 0, "a#1": 1, "b#0": 0})
    with pytest.raises(DataError, match="no label"):
        train_fusion(TrainConfig(), sg, sg, {"a#0": 0})
