"""Graph stream network and the late-fusion head.

Parameters live in plain ``dict[str, np.ndarray]``; forward functions take
the same dict wrapped as tensors (see :func:`autodiff.params_on`) so one
code path serves training and value-only inference.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

AGGREGATIONS = ("lstm", "mean", "terminal")


@dataclass
class ModelConfig:
    in_dim: int
    num_actions: int
    gcn_hidden: int = 256
    embed_dim: int = 128
    lstm_hidden: int = 128
    aggregation: str = "lstm"
    use_gcn: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")

    @property
    def projects_features(self) -> bool:
        return not self.use_gcn and self.in_dim != self.embed_dim

    @property
    def embedding_dim(self) -> int:
        if self.use_gcn or self.projects_features:
            return self.embed_dim
        return self.in_dim

    @property
    def aggregate_dim(self) -> int:
        return self.lstm_hidden if self.aggregation == "lstm" else self.embedding_dim

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) matrices, zero biases."""
    p: dict[str, np.ndarray] = {}
    if cfg.use_gcn:
        p["gcn_w1"] = _uniform(rng, cfg.in_dim, (cfg.in_dim, cfg.gcn_hidden))
        p["gcn_w2"] = _uniform(rng, cfg.gcn_hidden, (cfg.gcn_hidden, cfg.embed_dim))
    elif cfg.projects_features:
        p["proj"] = _uniform(rng, cfg.in_dim, (cfg.in_dim, cfg.embed_dim))
    d, h = cfg.embedding_dim, cfg.lstm_hidden
    if cfg.aggregation == "lstm":
        p["lstm_wx"] = _uniform(rng, d, (d, 4 * h))
        p["lstm_wh"] = _uniform(rng, h, (h, 4 * h))
        p["lstm_b"] = np.zeros(4 * h)
    p["head_w"] = _uniform(rng, cfg.aggregate_dim, (cfg.aggregate_dim, cfg.num_actions))
    p["head_b"] = np.zeros(cfg.num_actions)
    return p


EMBEDDING_PARAMS = ("gcn_w1", "gcn_w2", "proj")


def gcn_forward(adjacency, features, w1: Tensor, w2: Tensor) -> Tensor:
    """Two propagation layers: ``A relu(A X W1) W2`` (no output nonlinearity)."""
    a = ad._lift(adjacency)
    x = ad._lift(features)
    if a.shape[0] != a.shape[1] or a.shape[1] != x.shape[0]:
        raise ShapeError(f"adjacency {a.shape} incompatible with features {x.shape}")
    h1 = ad.relu(ad.matmul(ad.matmul(a, x), w1))
    return ad.matmul(ad.matmul(a, h1), w2)


def node_embeddings(params: Mapping[str, Tensor], cfg: ModelConfig, adjacency, features) -> Tensor:
    if cfg.use_gcn:
        return gcn_forward(adjacency, features, params["gcn_w1"], params["gcn_w2"])
    x = ad._lift(features)
    if cfg.projects_features:
        return ad.matmul(x, params["proj"])
    return x


def pad_sequences(seqs: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad node index sequences with 0; returns (indices B x T, lengths)."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if np.any(lengths < 1):
        raise ValueError("cannot aggregate an empty sequence")
    idx = np.zeros((len(seqs), int(lengths.max())), dtype=np.int64)
    for b, s in enumerate(seqs):
        idx[b, :len(s)] = s
    return idx, lengths


def lstm_final_state(params: Mapping[str, Tensor], embeddings: Tensor, idx: np.ndarray,
                     lengths: np.ndarray) -> Tensor:
    """Final hidden state of a single-layer LSTM run oldest to newest.

    Gate order in the packed weights is input, forget, output, candidate.
    Padded steps leave (h, c) untouched, so each row stops at its length.
    """
    wh, b = params["lstm_wh"], params["lstm_b"]
    hid = wh.shape[0]
    batch, steps = idx.shape
    # input projection once per node instead of once per step
    projected = ad.matmul(embeddings, params["lstm_wx"])
    h = Tensor(np.zeros((batch, hid)))
    c = Tensor(np.zeros((batch, hid)))
    for t in range(steps):
        pre = ad.add(ad.add(ad.select_row(projected, idx[:, t]), ad.matmul(h, wh)), b)
        i = ad.sigmoid(ad.columns(pre, 0, hid))
        f = ad.sigmoid(ad.columns(pre, hid, 2 * hid))
        o = ad.sigmoid(ad.columns(pre, 2 * hid, 3 * hid))
        g = ad.tanh(ad.columns(pre, 3 * hid, 4 * hid))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        if np.all(lengths > t):
            c, h = c_new, h_new
        else:
            live = np.repeat((lengths > t).astype(np.float64)[:, None], hid, axis=1)
            c = ad.blend(live, c_new, c)
            h = ad.blend(live, h_new, h)
    return h


def aggregate_batch(params: Mapping[str, Tensor], cfg: ModelConfig, embeddings: Tensor,
                    idx: np.ndarray, lengths: np.ndarray) -> Tensor:
    if cfg.aggregation == "lstm":
        return lstm_final_state(params, embeddings, idx, lengths)
    if cfg.aggregation == "terminal":
        return ad.select_row(embeddings, idx[np.arange(len(lengths)), lengths - 1])
    batch, steps = idx.shape
    weights = np.zeros((batch, batch * steps))
    for b, n in enumerate(lengths):
        weights[b, b * steps:b * steps + n] = 1.0 / n
    gathered = ad.select_row(embeddings, idx.reshape(-1))
    return ad.matmul(Tensor(weights), gathered)


def aggregate(embedding_sequence, mode: str, params: Mapping[str, Tensor] | None = None) -> Tensor:
    """Summarise one sequence of node embeddings (rows, oldest first)."""
    seq = ad._lift(embedding_sequence)
    if seq.value.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("aggregate needs a non-empty sequence of embedding rows")
    n = seq.shape[0]
    cfg = ModelConfig(in_dim=seq.shape[1], num_actions=1, embed_dim=seq.shape[1],
                      aggregation=mode, use_gcn=False)
    idx = np.arange(n)[None, :]
    out = aggregate_batch(params or {}, cfg, seq, idx, np.array([n]))
    return ad.select_row(out, 0)


def anticipate(aggregated: Tensor, head_w: Tensor, head_b: Tensor) -> Tensor:
    """Softmax over actions from an aggregated history (vector or batch)."""
    squeeze = aggregated.value.ndim == 1
    x = ad.as_row(aggregated) if squeeze else aggregated
    probs = ad.softmax(ad.add(ad.matmul(x, head_w), head_b))
    return ad.select_row(probs, 0) if squeeze else probs


def forward_batch(params: Mapping[str, Tensor], cfg: ModelConfig, adjacency, features,
                  idx: np.ndarray, lengths: np.ndarray,
                  dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Action probabilities (B x |A|) for padded node index sequences."""
    emb = node_embeddings(params, cfg, adjacency, features)
    agg = aggregate_batch(params, cfg, emb, idx, lengths)
    if cfg.dropout > 0 and dropout_rng is not None:
        keep = (dropout_rng.random(agg.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
        agg = ad.mul(agg, Tensor(keep))
    return anticipate(agg, params["head_w"], params["head_b"])


def predict_proba(params: Mapping[str, np.ndarray], cfg: ModelConfig, adjacency, features,
                  sequences: Sequence[np.ndarray], chunk: int = 64) -> np.ndarray:
    """Value-only inference in fixed-size chunks (result independent of batching elsewhere)."""
    consts = {k: Tensor(v) for k, v in params.items()}
    emb = node_embeddings(consts, cfg, adjacency, features)
    out = np.zeros((len(sequences), cfg.num_actions))
    for start in range(0, len(sequences), chunk):
        idx, lengths = pad_sequences(sequences[start:start + chunk])
        agg = aggregate_batch(consts, cfg, emb, idx, lengths)
        out[start:start + len(lengths)] = anticipate(agg, consts["head_w"], consts["head_b"]).value
    return out


def extend_inputs(adjacency: np.ndarray, features: np.ndarray, extra: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Append isolated self-loop nodes for states the graph has never seen.

    A propagation layer on such a node reduces to ``relu(x W1) W2``.
    """
    k = len(extra)
    if k == 0:
        return adjacency, features
    z = adjacency.shape[0]
    a = np.zeros((z + k, z + k))
    a[:z, :z] = adjacency
    a[z:, z:] = np.eye(k)
    return a, np.vstack([features, extra])


# ---------------------------------------------------------------------------
# fusion


def init_fusion_params(num_actions: int) -> dict[str, np.ndarray]:
    """Zero weights, so an untrained fusion head outputs the uniform distribution."""
    return {"fuse_w": np.zeros((2 * num_actions, num_actions)), "fuse_b": np.zeros(num_actions)}


def fuse(scores_graph, scores_appearance, fuse_w: Tensor, fuse_b: Tensor) -> Tensor:
    """Softmax of an affine map of the two L2-normalised score vectors."""
    sg, sa = ad._lift(scores_graph), ad._lift(scores_appearance)
    n = fuse_w.shape[1]
    if sg.shape != sa.shape or sg.shape[-1] != n:
        raise ShapeError(f"score shapes {sg.shape}, {sa.shape} do not match {n} actions")
    joint = ad.concat([ad.l2_normalize(sg), ad.l2_normalize(sa)], axis=-1)
    return anticipate(joint, fuse_w, fuse_b)
