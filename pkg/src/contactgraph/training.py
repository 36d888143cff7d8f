"""Adam, the graph-stream training loop, and late-fusion training."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .data import EncodedSet, read_scores
from .errors import DataError, TrainingError
from .metrics import topk_accuracy
from .models import (EMBEDDING_PARAMS, ModelConfig, anticipate, forward_batch, fuse,
                     init_fusion_params, init_params, node_embeddings, pad_sequences,
                     predict_proba)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "joint"
    aggregation: str = "lstm"
    use_gcn: bool = True
    learning_rate: float = 7e-5
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    max_sequence_length: int = 128
    pretrain_epochs: int = 5
    fusion_learning_rate: float = 0.01
    fusion_epochs: int = 20
    gcn_hidden: int = 256
    embed_dim: int = 128
    lstm_hidden: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        if self.mode not in ("joint", "two_stage"):
            raise ValueError(f"mode must be 'joint' or 'two_stage', got {self.mode!r}")
        if self.aggregation not in ("lstm", "mean", "terminal"):
            raise ValueError(f"aggregation must be lstm, mean or terminal, got {self.aggregation!r}")
        for name in ("learning_rate", "fusion_learning_rate", "batch_size", "max_sequence_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_epochs", "patience", "pretrain_epochs", "fusion_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def model_config(self, in_dim: int, num_actions: int) -> ModelConfig:
        return ModelConfig(in_dim=in_dim, num_actions=num_actions, gcn_hidden=self.gcn_hidden,
                           embed_dim=self.embed_dim, lstm_hidden=self.lstm_hidden,
                           aggregation=self.aggregation, use_gcn=self.use_gcn, dropout=self.dropout)


@dataclass
class Checkpoint:
    kind: str
    params: dict[str, np.ndarray]
    model: dict
    train: dict
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    def save(self, path) -> None:
        meta = {"kind": self.kind, "model": self.model, "train": self.train,
                "epoch": self.epoch, "history": self.history}
        ad.save_tensors(path, dict(sorted(self.params.items())), meta)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        params, meta = ad.load_tensors(path)
        try:
            return cls(meta["kind"], params, meta["model"], meta["train"], meta["epoch"], meta["history"])
        except KeyError as exc:
            raise DataError(f"checkpoint {path} lacks metadata field {exc}") from None

    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.model)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction for every name in ``grads``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name!r} at step {state.step + 1}")
    state.step += 1
    t = state.step
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# graph stream


def batch_loss(params: Mapping[str, np.ndarray], cfg: ModelConfig, adjacency, features,
               sequences, labels, trainable=None, dropout_rng=None):
    """Mean cross-entropy for one padded batch; returns (loss value, grads)."""
    tape = ad.Tape()
    p = ad.params_on(tape, params, trainable)
    idx, lengths = pad_sequences(sequences)
    probs = forward_batch(p, cfg, adjacency, features, idx, lengths, dropout_rng)
    loss = ad.cross_entropy(probs, labels)
    if not np.isfinite(loss.value):
        raise TrainingError("loss became non-finite")
    tape.backward(loss)
    return float(loss.value), {k: t.grad for k, t in p.items() if t.requires_grad}


def evaluate_encoded(params, cfg: ModelConfig, adjacency, features, data: EncodedSet) -> tuple[float, float]:
    if len(data) == 0:
        return 0.0, 0.0
    scores = predict_proba(params, cfg, adjacency, features, data.sequences)
    k5 = min(5, cfg.num_actions)
    return topk_accuracy(scores, data.labels, 1), topk_accuracy(scores, data.labels, k5)


def _pretrain_embeddings(params, cfg: ModelConfig, adjacency, features, targets, config: TrainConfig,
                         rng: np.random.Generator) -> None:
    """Fit node embeddings to each state's p(action | state) row, then discard the head."""
    nodes, dist = targets
    if len(nodes) == 0 or config.pretrain_epochs == 0:
        return
    head_rng = np.random.default_rng([config.seed, 2])
    bound = np.sqrt(1.0 / cfg.embedding_dim)
    work = {k: params[k] for k in EMBEDDING_PARAMS if k in params}
    if not work:
        return
    work["pre_w"] = head_rng.uniform(-bound, bound, (cfg.embedding_dim, cfg.num_actions))
    work["pre_b"] = np.zeros(cfg.num_actions)
    state = AdamState()
    for _ in range(config.pretrain_epochs):
        order = rng.permutation(len(nodes))
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            tape = ad.Tape()
            p = ad.params_on(tape, work)
            emb = node_embeddings(p, cfg, adjacency, features)
            probs = anticipate(ad.select_row(emb, nodes[rows]), p["pre_w"], p["pre_b"])
            loss = ad.cross_entropy(probs, dist[rows])
            tape.backward(loss)
            adam_step(work, {k: t.grad for k, t in p.items()}, state, config.learning_rate)
    for k in EMBEDDING_PARAMS:
        if k in params:
            params[k] = work[k]


def train_graph_stream(config: TrainConfig, adjacency: np.ndarray, features: np.ndarray,
                       num_actions: int, train: EncodedSet, val: EncodedSet | None = None,
                       state_targets: tuple[np.ndarray, np.ndarray] | None = None,
                       epoch_log: Callable[[str], None] | None = None) -> Checkpoint:
    """Train GCN + aggregator + action head with early stopping on val top-1.

    ``adjacency``/``features`` must already include any extra nodes the
    encoded sequences refer to. In ``two_stage`` mode ``state_targets``
    (from :func:`graph.state_action_targets`) drive the embedding pretraining.
    """
    if len(train) == 0:
        raise DataError("empty training set")
    if train.empty and all(train.empty):
        raise DataError("every training window is empty")
    cfg = config.model_config(features.shape[1], num_actions)
    params = init_params(cfg, np.random.default_rng([config.seed, 0]))
    order_rng = np.random.default_rng([config.seed, 1])
    drop_rng = np.random.default_rng([config.seed, 3])
    trainable = None
    if config.mode == "two_stage" and any(k in params for k in EMBEDDING_PARAMS):
        if state_targets is None:
            raise DataError("two_stage training needs state-action targets")
        _pretrain_embeddings(params, cfg, adjacency, features, state_targets, config, order_rng)
        trainable = [k for k in params if k not in EMBEDDING_PARAMS]

    opt = AdamState()
    history: list[dict] = []
    best = (-1.0, 0, {k: v.copy() for k, v in params.items()})
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = order_rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            loss, grads = batch_loss(params, cfg, adjacency, features,
                                     [train.sequences[i] for i in rows], train.labels[rows],
                                     trainable, drop_rng)
            adam_step(params, grads, opt, config.learning_rate)
            losses.append(loss * len(rows))
        train_loss = float(np.sum(losses) / len(train))
        monitor = val if val is not None and len(val) else train
        top1, top5 = evaluate_encoded(params, cfg, adjacency, features, monitor)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_top1": top1, "val_top5": top5})
        if epoch_log is not None:
            epoch_log(format_log_line(history[-1]))
        log.info("epoch %d loss %.6f val top1 %.4f top5 %.4f", epoch, train_loss, top1, top5)
        if top1 > best[0]:
            best = (top1, epoch, {k: v.copy() for k, v in params.items()})
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return Checkpoint("graph", best[2], cfg.to_dict(), config.to_dict(), best[1], history)


def format_log_line(entry: Mapping) -> str:
    return f"{entry['epoch']}\t{entry['train_loss']!r}\t{entry['val_top1']!r}\t{entry['val_top5']!r}"


# ---------------------------------------------------------------------------
# fusion


def _as_scores(source) -> dict[str, np.ndarray]:
    return source if isinstance(source, Mapping) else read_scores(source)


def align_scores(graph_scores, appearance_scores, ids=None):
    """Stack both score sets over a shared id order; ids must match exactly."""
    g, a = _as_scores(graph_scores), _as_scores(appearance_scores)
    if set(g) != set(a):
        missing = sorted(set(g) ^ set(a))[:3]
        raise DataError(f"score files cover different segments (e.g. {missing})")
    ids = sorted(g) if ids is None else list(ids)
    unknown = [i for i in ids if i not in g]
    if unknown:
        raise DataError(f"no scores for segments {unknown[:3]}")
    return ids, np.array([g[i] for i in ids]), np.array([a[i] for i in ids])


def fusion_predict(params: Mapping[str, np.ndarray], sg: np.ndarray, sa: np.ndarray) -> np.ndarray:
    return fuse(sg, sa, ad.Tensor(params["fuse_w"]), ad.Tensor(params["fuse_b"])).value


def train_fusion(config: TrainConfig, graph_scores, appearance_scores, labels: Mapping[str, int]) -> Checkpoint:
    """Fit only the fusion head on frozen stream outputs.

    ``graph_scores``/``appearance_scores`` are score-file paths or
    ``{segment_id: probabilities}`` mappings; ``labels`` maps segment ids to
    class positions.
    """
    ids, sg, sa = align_scores(graph_scores, appearance_scores)
    missing = [i for i in ids if i not in labels]
    if missing:
        raise DataError(f"no label for segments {missing[:3]}")
    y = np.array([labels[i] for i in ids], dtype=np.int64)
    num_actions = sg.shape[1]
    params = init_fusion_params(num_actions)
    rng = np.random.default_rng([config.seed, 4])
    opt = AdamState()
    history = []
    for epoch in range(1, config.fusion_epochs + 1):
        order = rng.permutation(len(ids))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            tape = ad.Tape()
            p = ad.params_on(tape, params)
            loss = ad.cross_entropy(fuse(sg[rows], sa[rows], p["fuse_w"], p["fuse_b"]), y[rows])
            tape.backward(loss)
            adam_step(params, {k: t.grad for k, t in p.items()}, opt, config.fusion_learning_rate)
            total += float(loss.value) * len(rows)
        scores = fusion_predict(params, sg, sa)
        history.append({"epoch": epoch, "train_loss": total / len(ids),
                        "val_top1": topk_accuracy(scores, y, 1),
                        "val_top5": topk_accuracy(scores, y, min(5, num_actions))})
    model = {"num_actions": num_actions}
    return Checkpoint("fusion", params, model, config.to_dict(), config.fusion_epochs, history)
