import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import FAST
from contactgraph.config import load_config
from contactgraph.data import (EncodedSet, NodeIndexer, encode_segments, make_segments, read_scores,
                               segment_ids, write_scores)
from contactgraph.errors import DataError, FormatError
from contactgraph.evaluation import (ABLATION_CONFIGS, EvalReport, evaluate_grid, fit_fusion,
                                     render_ablation_tables, run_ablations, score_split)
from contactgraph.graph import build_graph
from contactgraph.metrics import topk_accuracy, topk_predictions
from contactgraph.pipeline import Dataset
from contactgraph.trace import NULL_STATE, ActionAnnotation, ManipulationState, StateSequence, StateSpan

A, B, C = ManipulationState("a"), ManipulationState("b"), ManipulationState(None, "c")


# -- top-k --------------------------------------------------------------------

def test_topk_examples():
    s = np.array([[0.1, 0.5, 0.4]])
    assert topk_accuracy(s, [1], 1) == 1.0
    assert topk_accuracy(s, [2], 1) == 0.0 and topk_accuracy(s, [2], 2) == 1.0


def test_uniform_scores_tie_break_to_lowest_id():
    labels = np.array([0, 1, 0, 2, 0, 3])
    assert topk_accuracy(np.full((6, 4), 0.25), labels, 1) == pytest.approx(0.5)
    assert topk_predictions(np.full((1, 4), 0.25), 3).tolist() == [[0, 1, 2]]


def test_topk_range_errors():
    with pytest.raises(ValueError):
        topk_accuracy(np.ones((1, 3)) / 3, [0], 0)
    with pytest.raises(ValueError):
        topk_accuracy(np.ones((1, 3)) / 3, [0], 4)


# integer-valued so the transforms below stay strictly monotone in floating point;
# ties are still common
score_rows = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 7)),
                    elements=st.integers(-10, 10).map(float))


@given(score_rows, st.data())
def test_topk_properties(scores, data):
    n, k = scores.shape
    labels = np.array(data.draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n)))
    assert topk_accuracy(scores, labels, k) == 1.0
    for j in range(1, k + 1):
        base = topk_accuracy(scores, labels, j)
        # strictly monotone per-row maps keep the ranking
        assert topk_accuracy(np.exp(scores), labels, j) == base
        assert topk_accuracy(3 * scores - 7, labels, j) == base
        if j > 1:
            assert base >= topk_accuracy(scores, labels, j - 1)


# -- segments -----------------------------------------------------------------

def test_segment_ids_count_per_video():
    ann = [ActionAnnotation("v", 0, 5, "x", "y", 0), ActionAnnotation("w", 0, 5, "x", "y", 0),
           ActionAnnotation("v", 9, 12, "x", "y", 0)]
    assert segment_ids(ann) == ["v#0", "w#0", "v#1"]


def test_early_actions_dropped():
    # start 10 s into the video: tau_a = 10 leaves no frames before the window end
    ann = [ActionAnnotation("v", 150, 160, "x", "y", 0)]
    assert make_segments(ann, 10)[1] == 1
    segs, dropped = make_segments(ann, 5)
    assert dropped == 0 and segs[0].segment_id == "v#0"


def test_encoding_uses_null_state_and_keeps_recent():
    seq = StateSequence("v", [StateSpan(A, 20, 29), StateSpan(B, 30, 39), StateSpan(C, 40, 49),
                              StateSpan(A, 50, 59)])
    g = build_graph([seq], [ActionAnnotation("v", 55, 60, "x", "y", 0)])
    # the first action starts before any state is observed
    ann = [ActionAnnotation("v", 10, 15, "x", "y", 0), ActionAnnotation("v", 55, 60, "x", "y", 0)]
    segs, _ = make_segments(ann, 0)
    indexer = NodeIndexer(g)
    enc = encode_segments(segs, {"v": seq}, indexer, max_length=2)
    assert enc.empty == [True, False]
    assert enc.sequences[0].tolist() == [g.num_nodes]
    assert indexer.extra == [NULL_STATE]
    assert enc.sequences[1].tolist() == [g.state_index(C), g.state_index(A)]


def test_encoding_rejects_unknown_video_and_action():
    seq = StateSequence("v", [StateSpan(A, 0, 50)])
    g = build_graph([seq], [ActionAnnotation("v", 30, 40, "x", "y", 0)])
    segs, _ = make_segments([ActionAnnotation("w", 30, 40, "x", "y", 0)], 0)
    with pytest.raises(DataError, match="unknown video"):
        encode_segments(segs, {"v": seq}, NodeIndexer(g))
    segs, _ = make_segments([ActionAnnotation("v", 30, 40, "x", "z", 7)], 0)
    with pytest.raises(DataError, match="outside the graph"):
        encode_segments(segs, {"v": seq}, NodeIndexer(g))


# -- score files --------------------------------------------------------------

def test_score_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    scores = rng.dirichlet(np.ones(4), size=3)
    write_scores(tmp_path / "s.tsv", ["a#0", "a#1", "b#0"], scores)
    back = read_scores(tmp_path / "s.tsv")
    assert list(back) == ["a#0", "a#1", "b#0"]
    np.testing.assert_array_equal(np.stack(list(back.values())), scores)


@pytest.mark.parametrize("text,reason", [
    ("a#0\t0.5,0.5\nb#0\t0.2,0.2\n", "probability"),
    ("a#0\t0.5,0.5\nb#0\t0.5,0.25,0.25\n", "expected"),
    ("a#0\t0.5,0.5\nb#0\t0.5,x\n", "non-numeric"),
    ("a#0\t0.5,0.5\na#0\t0.5,0.5\n", "duplicate"),
    ("a#0\t0.5,0.5\nb#0 0.5,0.5\n", "2 tab-separated"),
])
def test_malformed_score_files(tmp_path, text, reason):
    p = tmp_path / "s.tsv"
    p.write_text(text)
    with pytest.raises(FormatError, match=reason) as info:
        read_scores(p)
    assert info.value.line == 2


# -- reports ------------------------------------------------------------------

def _report():
    r = EvalReport()
    labels = np.array([0, 1, 2, 1])
    r.add("graph", 1.0, np.eye(3)[[0, 1, 2, 0]], labels)
    r.add("graph", 0.0, np.eye(3)[[0, 1, 2, 1]], labels)
    return r


def test_report_tsv_and_read_back(tmp_path):
    r = _report()
    lines = r.to_tsv().splitlines()
    assert lines[0] == "config\ttau_a\ttop1\ttop5\tn"
    assert lines[1] == "graph\t1\t0.750000\t1.000000\t4"
    r.write(tmp_path / "r.tsv")
    assert EvalReport.read(tmp_path / "r.tsv").rows == r.rows


def test_report_rendering():
    r = _report()
    table = r.render().splitlines()
    assert len(table) == 3 and "75.00" in table[1]
    grid = r.render_grid().splitlines()
    assert grid[0].split()[-2:] == ["1", "0"] and grid[1].split()[1:] == ["75.00", "100.00"]


def test_report_rejects_empty_split():
    with pytest.raises(DataError):
        EvalReport().add("graph", 1.0, np.zeros((0, 3)), np.zeros(0, dtype=int))


# -- end to end on a small benchmark ------------------------------------------

@pytest.fixture(scope="module")
def trained(tiny_bench):
    ds = Dataset.load(load_config(tiny_bench / "run.cfg", FAST))
    return ds, ds.train()


def test_grid_has_all_streams(trained):
    ds, ck = trained
    fusion = fit_fusion(ds, ck, ds.cfg.eval.appearance)
    report = evaluate_grid(ds, ck, ds.cfg.eval.tau_grid, ds.cfg.eval.appearance, fusion)
    assert len(report.rows) == 18
    for name in ("graph", "appearance", "fused"):
        assert [r.tau_a for r in report.rows if r.config == name] == [5, 2.5, 1.5, 1, 0.5, 0]
    assert all(0 <= r.top1 <= r.top5 <= 1 for r in report.rows)
    again = evaluate_grid(ds, ck, ds.cfg.eval.tau_grid, ds.cfg.eval.appearance, fusion, threads=3)
    assert again.to_tsv() == report.to_tsv()


def test_scores_independent_of_thread_count(trained):
    ds, ck = trained
    _, one = score_split(ds, ck, "train", 1.0, threads=1)
    _, four = score_split(ds, ck, "train", 1.0, threads=4)
    assert one.tobytes() == four.tobytes()


def test_fused_needs_appearance(trained):
    ds, ck = trained
    with pytest.raises(DataError, match="appearance"):
        evaluate_grid(ds, ck, [1.0], None, ck)
    with pytest.raises(DataError, match="not found"):
        evaluate_grid(ds, ck, [1.0], "missing_{tau}.tsv")


def test_tau_zero_window_ends_at_action_start(trained):
    ds, _ = trained
    enc = ds.encode("test", 0)
    segs = ds.segments("test", 0)
    for seg, seq in zip(segs, enc.sequences):
        spans = [s for s in ds.sequences[seg.video_id].items if s.start_frame < seg.action_start_frame]
        if spans:
            assert ds.indexer.index(spans[-1].state) == seq[-1]


def test_ablation_report_layout(tiny_bench):
    ds = Dataset.load(load_config(tiny_bench / "run.cfg", {**FAST, "train.max_epochs": "1"}))
    trained_names = []
    report = run_ablations(ds, on_trained=lambda name, ck: trained_names.append(name))
    assert [r.config for r in report.rows] == list(ABLATION_CONFIGS)
    # the full model sits in both groups but trains once
    assert len(trained_names) == 6
    text = render_ablation_tables(report)
    assert "LSTM-Aggr." in text and "Mean-Aggr." in text and "Term-State-Class." in text
    assert text.split("\n\n")[1].splitlines()[0].split() == ["embedding", "identity"]


def test_checkpoint_shape_mismatch(trained, tiny_bench):
    ds, ck = trained
    ident = Dataset.load(load_config(tiny_bench / "run.cfg", {**FAST, "features.mode": "identity"}))
    with pytest.raises(DataError, match="checkpoint expects"):
        score_split(ident, ck, "test", 1.0)


def test_encoded_subset():
    enc = EncodedSet(["a", "b", "c"], [np.array([0]), np.array([1]), np.array([2])], np.array([0, 1, 2]),
                     [False, True, False])
    sub = enc.subset([2, 0])
    assert sub.segment_ids == ["c", "a"] and sub.labels.tolist() == [2, 0] and sub.empty == [False, False]
