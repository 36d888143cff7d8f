import numpy as np
import pytest

from contactgraph import autodiff as ad
from contactgraph.autodiff import Tape, Tensor, grad_check
from contactgraph.errors import ShapeError
from contactgraph.models import (ModelConfig, aggregate, aggregate_batch, anticipate, extend_inputs,
                                 forward_batch, fuse, gcn_forward, init_fusion_params, init_params, node_embeddings,
                                 pad_sequences, predict_proba)

RNG = np.random.default_rng(7)


def sig(x):
    return 1 / (1 + np.exp(-x))


def lstm_reference(xs, wx, wh, b):
    """Plain loop over the standard cell equations (gate order i, f, o, g)."""
    h = np.zeros(wh.shape[0])
    c = np.zeros(wh.shape[0])
    n = wh.shape[0]
    for x in xs:
        pre = x @ wx + h @ wh + b
        i, f, o, g = sig(pre[:n]), sig(pre[n:2 * n]), sig(pre[2 * n:3 * n]), np.tanh(pre[3 * n:])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def consts(params):
    return {k: Tensor(v) for k, v in params.items()}


def test_gcn_single_isolated_node():
    x = RNG.normal(size=(1, 3))
    w1, w2 = RNG.normal(size=(3, 4)), RNG.normal(size=(4, 2))
    out = gcn_forward(np.ones((1, 1)), x, Tensor(w1), Tensor(w2)).value
    np.testing.assert_allclose(out, np.maximum(x @ w1, 0) @ w2, rtol=1e-14)


def test_gcn_two_nodes_by_hand():
    A = np.array([[0.5, 0.5], [0.0, 1.0]])
    X = np.array([[1.0], [-2.0]])
    out = gcn_forward(A, X, Tensor([[2.0]]), Tensor([[3.0]])).value
    # A X = [-0.5, -2] -> *2 -> relu -> [0, 0]
    np.testing.assert_array_equal(out, [[0.0], [0.0]])
    out = gcn_forward(A, -X, Tensor([[2.0]]), Tensor([[3.0]])).value
    # A(-X) = [0.5, 2] -> [1, 4] -> A.[1,4] = [2.5, 4] -> *3
    np.testing.assert_allclose(out, [[7.5], [12.0]])


def test_gcn_permutation_equivariant():
    A = RNG.random((6, 6))
    A /= A.sum(axis=1, keepdims=True)
    X = RNG.normal(size=(6, 4))
    w1, w2 = Tensor(RNG.normal(size=(4, 5))), Tensor(RNG.normal(size=(5, 3)))
    perm = RNG.permutation(6)
    P = np.eye(6)[perm]
    base = gcn_forward(A, X, w1, w2).value
    moved = gcn_forward(P @ A @ P.T, P @ X, w1, w2).value
    np.testing.assert_allclose(moved, P @ base, atol=1e-12)


def test_gcn_shape_error():
    with pytest.raises(ShapeError):
        gcn_forward(np.eye(3), np.ones((2, 2)), Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))))


def test_aggregate_terminal_and_mean():
    seq = RNG.normal(size=(3, 4))
    np.testing.assert_array_equal(aggregate(seq, "terminal").value, seq[2])
    np.testing.assert_allclose(aggregate(seq[:2], "mean").value, (seq[0] + seq[1]) / 2)


def test_aggregate_empty_sequence():
    with pytest.raises(ValueError):
        aggregate(np.zeros((0, 4)), "mean")


def test_lstm_zero_parameters():
    h = 3
    zero = {"lstm_wx": Tensor(np.zeros((4, 4 * h))), "lstm_wh": Tensor(np.zeros((h, 4 * h))),
            "lstm_b": Tensor(np.zeros(4 * h))}
    out1 = aggregate(RNG.normal(size=(1, 4)), "lstm", zero).value
    np.testing.assert_array_equal(out1, np.zeros(h))
    # with zero weights every gate is 0.5 and the candidate is 0, so c stays 0
    out5 = aggregate(RNG.normal(size=(5, 4)), "lstm", zero).value
    np.testing.assert_array_equal(out5, np.zeros(h))


def test_lstm_matches_reference_loop():
    d, h = 4, 3
    p = {"lstm_wx": RNG.normal(size=(d, 4 * h)), "lstm_wh": RNG.normal(size=(h, 4 * h)),
         "lstm_b": RNG.normal(size=4 * h)}
    xs = RNG.normal(size=(6, d))
    out = aggregate(xs, "lstm", consts(p)).value
    np.testing.assert_allclose(out, lstm_reference(xs, p["lstm_wx"], p["lstm_wh"], p["lstm_b"]), atol=1e-14)
    one = aggregate(xs[:1], "lstm", consts(p)).value
    np.testing.assert_allclose(one, lstm_reference(xs[:1], p["lstm_wx"], p["lstm_wh"], p["lstm_b"]), atol=1e-15)


def test_anticipate_examples():
    agg = Tensor(RNG.normal(size=5))
    np.testing.assert_allclose(anticipate(agg, Tensor(np.zeros((5, 4))), Tensor(np.zeros(4))).value, 0.25)
    p = anticipate(Tensor([1.0]), Tensor([[np.log(3), 0.0]]), Tensor([0.0, 0.0])).value
    np.testing.assert_allclose(p, [0.75, 0.25])
    shifted = anticipate(Tensor([1.0]), Tensor([[np.log(3), 0.0]]), Tensor([7.0, 7.0])).value
    np.testing.assert_allclose(shifted, p, atol=1e-15)


def test_fuse_examples():
    u = Tensor([0.5, 0.5])
    joint = ad.concat([ad.l2_normalize(u), ad.l2_normalize(u)]).value
    np.testing.assert_allclose(joint, [np.sqrt(0.5)] * 4)
    zero = init_fusion_params(2)
    out = fuse(u, u, Tensor(zero["fuse_w"]), Tensor(zero["fuse_b"])).value
    np.testing.assert_array_equal(out, [0.5, 0.5])


def test_fuse_stream_one_passthrough_keeps_argmax():
    n = 6
    W = np.vstack([5.0 * np.eye(n), np.zeros((n, n))])
    for _ in range(20):
        sg, sa = RNG.dirichlet(np.ones(n)), RNG.dirichlet(np.ones(n))
        out = fuse(sg, sa, Tensor(W), Tensor(np.zeros(n))).value
        assert out.argmax() == sg.argmax()
        assert abs(out.sum() - 1) <= 1e-12


def test_fuse_length_mismatch():
    p = init_fusion_params(3)
    with pytest.raises(ShapeError):
        fuse(np.ones(2) / 2, np.ones(2) / 2, Tensor(p["fuse_w"]), Tensor(p["fuse_b"]))


def _toy(aggregation="lstm", use_gcn=True, in_dim=3):
    cfg = ModelConfig(in_dim=in_dim, num_actions=4, gcn_hidden=6, embed_dim=5, lstm_hidden=4,
                      aggregation=aggregation, use_gcn=use_gcn)
    params = init_params(cfg, np.random.default_rng(0))
    A = RNG.random((5, 5)) + np.eye(5)
    A /= A.sum(axis=1, keepdims=True)
    X = RNG.normal(size=(5, in_dim))
    return cfg, params, A, X


def relu_safe_toy(seed, margin=0.1):
    """Unit-scale 5-node problem whose first-layer ReLU inputs all sit >= margin from 0."""
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(in_dim=3, num_actions=4, gcn_hidden=6, embed_dim=5, lstm_hidden=4)
    while True:
        params = {k: rng.normal(scale=0.7, size=v.shape) for k, v in init_params(cfg, rng).items()}
        A = rng.random((5, 5)) + np.eye(5)
        A /= A.sum(axis=1, keepdims=True)
        X = rng.normal(size=(5, 3))
        if np.min(np.abs(A @ X @ params["gcn_w1"])) >= margin:
            return cfg, params, A, X


def test_end_to_end_gradients_through_fusion():
    cfg, params, A, X = relu_safe_toy(0)
    idx, lengths = pad_sequences([np.array([0, 3, 1, 4])])
    sa = RNG.dirichlet(np.ones(4))
    fw, fb = RNG.normal(size=(8, 4)), RNG.normal(size=4)
    # one parameter block at a time, the others held fixed
    for name in sorted(params):
        def f(t, name=name):
            p = consts(params)
            p[name] = t
            emb = node_embeddings(p, cfg, A, X)
            agg = aggregate_batch(p, cfg, emb, idx, lengths)
            sg = anticipate(agg, p["head_w"], p["head_b"])
            out = fuse(sg, Tensor(sa[None, :]), Tensor(fw), Tensor(fb))
            return ad.cross_entropy(out, np.array([2]))
        assert grad_check(f, params[name]) < 1e-4, name


@pytest.mark.parametrize("aggregation", ["lstm", "mean", "terminal"])
@pytest.mark.parametrize("use_gcn", [True, False])
def test_batched_matches_unbatched(aggregation, use_gcn):
    cfg, params, A, X = _toy(aggregation, use_gcn)
    seqs = [RNG.integers(0, 5, size=n) for n in (1, 4, 2, 7, 3)]
    idx, lengths = pad_sequences(seqs)
    batch = forward_batch(consts(params), cfg, A, X, idx, lengths).value
    labels = RNG.integers(0, 4, size=len(seqs))
    batched_loss = float(ad.cross_entropy(Tensor(batch), labels).value)
    single = []
    for s, y in zip(seqs, labels):
        i, n = pad_sequences([s])
        p = forward_batch(consts(params), cfg, A, X, i, n).value
        single.append(float(ad.cross_entropy(Tensor(p), np.array([y])).value))
    assert abs(batched_loss - np.mean(single)) <= 1e-10
    np.testing.assert_allclose(predict_proba(params, cfg, A, X, seqs, chunk=2), batch, atol=1e-14)


def test_projection_used_without_gcn():
    cfg, params, A, X = _toy(use_gcn=False, in_dim=3)
    assert "proj" in params and "gcn_w1" not in params
    same = ModelConfig(in_dim=5, num_actions=4, embed_dim=5, use_gcn=False)
    assert not same.projects_features and "proj" not in init_params(same, RNG)


def test_init_is_bounded_and_seeded():
    cfg = ModelConfig(in_dim=10, num_actions=3)
    a = init_params(cfg, np.random.default_rng(5))
    b = init_params(cfg, np.random.default_rng(5))
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert np.max(np.abs(a["gcn_w1"])) <= np.sqrt(1 / 10)
    assert not np.any(a["head_b"]) and not np.any(a["lstm_b"])


def test_extend_inputs_isolates_new_nodes():
    A, X = np.full((2, 2), 0.5), np.ones((2, 3))
    A2, X2 = extend_inputs(A, X, np.full((1, 3), 2.0))
    assert A2.shape == (3, 3) and A2[2].tolist() == [0, 0, 1] and A2[:2, 2].tolist() == [0, 0]
    assert X2[2].tolist() == [2.0, 2.0, 2.0]


def test_probabilities_are_distributions():
    cfg, params, A, X = _toy()
    seqs = [RNG.integers(0, 5, size=n) for n in range(1, 9)]
    P = predict_proba(params, cfg, A, X, seqs)
    assert np.all(P >= 0) and np.max(np.abs(P.sum(axis=1) - 1)) <= 1e-12


def test_tape_free_inference_has_no_tape():
    cfg, params, A, X = _toy()
    idx, lengths = pad_sequences([np.array([0, 1])])
    out = forward_batch(consts(params), cfg, A, X, idx, lengths)
    assert out.tape is None
    tape = Tape()
    out = forward_batch(ad.params_on(tape, params), cfg, A, X, idx, lengths)
    assert out.tape is tape
