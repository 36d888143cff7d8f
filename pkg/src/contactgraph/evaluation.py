"""Anticipation-time sweeps, ablation runs, and report rendering."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import make_segments, read_scores
from .errors import DataError
from .metrics import topk_accuracy
from .models import predict_proba
from .pipeline import Dataset, with_features
from .training import Checkpoint, TrainConfig, fusion_predict, train_fusion

log = logging.getLogger(__name__)

__all__ = ["ABLATION_CONFIGS", "EvalReport", "ReportRow", "evaluate_grid", "fit_fusion",
           "make_segments", "render_ablation_tables", "run_ablations", "score_split", "topk_accuracy"]

CHUNK = 64
REPORT_HEADER = ("config", "tau_a", "top1", "top5", "n")


@dataclass(frozen=True)
class ReportRow:
    config: str
    tau_a: float
    top1: float
    top5: float
    n: int


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, config: str, tau: float, scores: np.ndarray, labels: np.ndarray) -> ReportRow:
        if len(labels) == 0:
            raise DataError(f"no evaluation segments for {config} at tau_a={tau:g}")
        k5 = min(5, scores.shape[1])
        row = ReportRow(config, float(tau), topk_accuracy(scores, labels, 1),
                        topk_accuracy(scores, labels, k5), int(len(labels)))
        self.rows.append(row)
        return row

    def get(self, config: str, tau: float | None = None) -> ReportRow:
        for r in self.rows:
            if r.config == config and (tau is None or r.tau_a == float(tau)):
                return r
        raise KeyError((config, tau))

    def to_tsv(self) -> str:
        lines = ["\t".join(REPORT_HEADER)]
        lines += [f"{r.config}\t{r.tau_a:g}\t{r.top1:.6f}\t{r.top5:.6f}\t{r.n}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "EvalReport":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or tuple(lines[0].split("\t")) != REPORT_HEADER:
            raise DataError(f"{path}: not a report file")
        rows = []
        for line in lines[1:]:
            c, t, a, b, n = line.split("\t")
            rows.append(ReportRow(c, float(t), float(a), float(b), int(n)))
        return cls(rows)

    def render(self) -> str:
        cells = [list(REPORT_HEADER)]
        cells += [[r.config, f"{r.tau_a:g}", f"{100 * r.top1:.2f}", f"{100 * r.top5:.2f}", str(r.n)]
                  for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_HEADER))]
        out = []
        for row in cells:
            out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
        return "\n".join(out)

    def render_grid(self) -> str:
        """Top-1 (percent) with one column per anticipation time, largest first."""
        taus = sorted({r.tau_a for r in self.rows}, reverse=True)
        configs = list(dict.fromkeys(r.config for r in self.rows))
        head = ["top-1 @ tau_a"] + [f"{t:g}" for t in taus]
        body = []
        for c in configs:
            vals = {r.tau_a: r.top1 for r in self.rows if r.config == c}
            body.append([c] + [f"{100 * vals[t]:.2f}" if t in vals else "-" for t in taus])
        return _table([head] + body)


def _table(cells: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in cells) for i in range(len(cells[0]))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
                     for row in cells)


# ---------------------------------------------------------------------------
# scoring


def score_sequences(ckpt: Checkpoint, adjacency: np.ndarray, features: np.ndarray,
                    sequences: Sequence[np.ndarray], threads: int = 1) -> np.ndarray:
    """Graph-stream probabilities; fixed chunking keeps results independent of ``threads``."""
    cfg = ckpt.model_config()
    chunks = [sequences[i:i + CHUNK] for i in range(0, len(sequences), CHUNK)]
    if not chunks:
        return np.zeros((0, cfg.num_actions))

    def run(chunk):
        return predict_proba(ckpt.params, cfg, adjacency, features, chunk, chunk=CHUNK)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.vstack(parts)


def score_split(ds: Dataset, ckpt: Checkpoint, split: str, tau: float, threads: int = 1):
    encoded = ds.encode(split, tau)
    ds._check_compatible(ckpt.model_config())
    adjacency, features = ds.inputs()
    return encoded, score_sequences(ckpt, adjacency, features, encoded.sequences, threads)


def appearance_path(pattern: str, tau: float) -> str:
    return pattern.replace("{tau}", f"{float(tau):g}")


def appearance_rows(pattern: str, tau: float, ids: Sequence[str], num_actions: int) -> np.ndarray:
    path = appearance_path(pattern, tau)
    if not Path(path).exists():
        raise DataError(f"appearance score file {path} not found")
    table = read_scores(path)
    missing = [i for i in ids if i not in table]
    if missing:
        raise DataError(f"{path} has no scores for segments {missing[:3]}")
    rows = np.array([table[i] for i in ids]).reshape(len(ids), -1)
    if len(ids) and rows.shape[1] != num_actions:
        raise DataError(f"{path} scores {rows.shape[1]} actions, the graph has {num_actions}")
    return rows


def fit_fusion(ds: Dataset, graph_ckpt: Checkpoint, appearance: str, config: TrainConfig | None = None,
               threads: int = 1) -> Checkpoint:
    """Train the fusion head on validation segments (training segments if there are none)."""
    config = config or ds.cfg.train
    tau = ds.cfg.data.train_tau
    split = "val" if ds.split_annotations("val") else "train"
    encoded, sg = score_split(ds, graph_ckpt, split, tau, threads)
    sa = appearance_rows(appearance, tau, encoded.segment_ids, ds.num_actions)
    ids = encoded.segment_ids
    labels = {sid: int(y) for sid, y in zip(ids, encoded.labels)}
    return train_fusion(config, dict(zip(ids, sg)), dict(zip(ids, sa)), labels)


def evaluate_grid(ds: Dataset, graph_ckpt: Checkpoint, tau_grid: Sequence[float],
                  appearance: str | None = None, fusion_ckpt: Checkpoint | None = None,
                  split: str = "test", threads: int = 1) -> EvalReport:
    """Graph, appearance and fused rows for every anticipation time in ``tau_grid``.

    Observation windows are recomputed for each tau_a. Appearance and fused
    rows need an appearance score pattern; fused rows also need a fusion
    checkpoint.
    """
    if fusion_ckpt is not None and not appearance:
        raise DataError("fused evaluation needs appearance score files (eval.appearance)")
    report = EvalReport()
    for tau in tau_grid:
        encoded, sg = score_split(ds, graph_ckpt, split, tau, threads)
        report.add("graph", tau, sg, encoded.labels)
        if appearance:
            sa = appearance_rows(appearance, tau, encoded.segment_ids, ds.num_actions)
            report.add("appearance", tau, sa, encoded.labels)
            if fusion_ckpt is not None:
                report.add("fused", tau, fusion_predict(fusion_ckpt.params, sg, sa), encoded.labels)
    return report


# ---------------------------------------------------------------------------
# ablations

AGGREGATION_ROWS = (("lstm_aggr", "lstm"), ("terminal_state", "terminal"), ("mean_aggr", "mean"))
FEATURE_ROWS = (("gcn_embedding", True, "embedding"), ("nogcn_embedding", False, "embedding"),
                ("gcn_identity", True, "identity"), ("nogcn_identity", False, "identity"))
ABLATION_CONFIGS = tuple(n for n, _ in AGGREGATION_ROWS) + tuple(n for n, *_ in FEATURE_ROWS)


def ablation_settings(base: TrainConfig) -> dict[str, tuple[TrainConfig, str]]:
    out = {}
    for name, agg in AGGREGATION_ROWS:
        out[name] = (replace(base, aggregation=agg, use_gcn=True), "embedding")
    for name, gcn, feats in FEATURE_ROWS:
        out[name] = (replace(base, aggregation="lstm", use_gcn=gcn), feats)
    return out


def run_ablations(ds: Dataset, base: TrainConfig | None = None, split: str = "test", threads: int = 1,
                  on_trained: Callable[[str, Checkpoint], None] | None = None) -> EvalReport:
    """Train and score the aggregation variants and the GCN x feature-source grid.

    Settings shared by two rows (the full model appears in both groups) are
    trained once.
    """
    base = base or ds.cfg.train
    tau = ds.cfg.data.train_tau
    report = EvalReport()
    cache: dict[tuple, np.ndarray] = {}
    variants = {}
    for name, (cfg, feats) in ablation_settings(base).items():
        key = (tuple(sorted(cfg.to_dict().items())), feats)
        if key not in cache:
            if feats not in variants:
                variants[feats] = with_features(ds, feats)
            variant = variants[feats]
            log.info("ablation %s: training", name)
            ckpt = variant.train(cfg)
            if on_trained is not None:
                on_trained(name, ckpt)
            encoded, scores = score_split(variant, ckpt, split, tau, threads)
            cache[key] = (scores, encoded.labels)
        scores, labels = cache[key]
        report.add(name, tau, scores, labels)
    return report


def render_ablation_tables(report: EvalReport) -> str:
    """Aggregation table followed by the GCN x feature-source grid (top-1 / top-5, percent)."""
    titles = {"lstm_aggr": "LSTM-Aggr.", "terminal_state": "Term-State-Class.", "mean_aggr": "Mean-Aggr."}
    agg = [["aggregation", "top-1", "top-5"]]
    for name, _ in AGGREGATION_ROWS:
        r = report.get(name)
        agg.append([titles[name], f"{100 * r.top1:.2f}", f"{100 * r.top5:.2f}"])
    grid = [["", "embedding", "identity"]]
    for label, gcn in (("GCN", "gcn"), ("No GCN", "nogcn")):
        row = [label]
        for feats in ("embedding", "identity"):
            row.append(f"{100 * report.get(f'{gcn}_{feats}').top1:.2f}")
        grid.append(row)
    return _table(agg) + "\n\n" + _table(grid)
