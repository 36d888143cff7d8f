"""Glue from input files to trained models and score tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import RunConfig
from .data import EncodedSet, EvalSegment, NodeIndexer, encode_segments, make_segments
from .errors import DataError
from .features import EmbeddingTable, build_feature_matrix, parse_embedding_file
from .graph import ActivityGraph, build_graph, normalize_adjacency, state_action_targets
from .models import ModelConfig, predict_proba
from .trace import (ActionAnnotation, DetectionStream, StateSequence, action_vocabulary,
                    parse_annotation_file, parse_splits_file, parse_trace_file,
                    sequences_from_traces)
from .training import Checkpoint, TrainConfig, train_graph_stream

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


def _require(value: str, name: str) -> str:
    if not value:
        raise DataError(f"no {name} given (set data.{name} in the config or pass --{name})")
    return value


def load_sequences(cfg: RunConfig) -> tuple[DetectionStream, dict[str, StateSequence]]:
    stream = parse_trace_file(_require(cfg.data.traces, "traces"))
    return stream, sequences_from_traces(stream, cfg.data.history_seconds, cfg.data.fps)


def load_annotations(cfg: RunConfig) -> list[ActionAnnotation]:
    return parse_annotation_file(_require(cfg.data.annotations, "annotations"))


def load_splits(cfg: RunConfig, videos: Sequence[str]) -> dict[str, str]:
    """Video -> split; without a splits file every video counts as training data."""
    if not cfg.data.splits:
        return {v: "train" for v in videos}
    splits = parse_splits_file(cfg.data.splits)
    missing = sorted(set(videos) - set(splits))
    if missing:
        raise DataError(f"videos {missing[:3]} have no split assignment")
    return splits


def load_table(cfg: RunConfig) -> EmbeddingTable | None:
    if cfg.features.mode == "identity":
        return None
    return parse_embedding_file(_require(cfg.data.embeddings, "embeddings"))


def graph_from_inputs(cfg: RunConfig, sequences: dict[str, StateSequence],
                      annotations: Sequence[ActionAnnotation], splits: dict[str, str]) -> ActivityGraph:
    vocab = action_vocabulary((a.verb, a.noun) for a in annotations)
    actions = {aid: pair for pair, aid in vocab.items()}
    unknown = sorted({a.video_id for a in annotations} - set(sequences))
    if unknown:
        raise DataError(f"annotations reference videos without traces: {unknown[:3]}")
    train_ann = [a for a in annotations if splits.get(a.video_id) == "train"]
    seqs = [sequences[v] for v in sorted(sequences)]
    return build_graph(seqs, train_ann, actions, cfg.graph.action_edge_direction)


@dataclass
class Dataset:
    """Everything needed to train and score the graph stream."""

    cfg: RunConfig
    sequences: dict[str, StateSequence]
    annotations: list[ActionAnnotation]
    splits: dict[str, str]
    graph: ActivityGraph
    table: EmbeddingTable | None
    indexer: NodeIndexer = field(init=False)
    features: np.ndarray = field(init=False)
    adjacency: np.ndarray = field(init=False)

    def __post_init__(self):
        self.features = build_feature_matrix(self.graph, self.table, self.cfg.features.count_duplicate_nouns)
        self.adjacency = normalize_adjacency(self.graph)
        self.indexer = NodeIndexer(self.graph, self.table, self.cfg.features.count_duplicate_nouns)

    @classmethod
    def load(cls, cfg: RunConfig, graph: ActivityGraph | None = None) -> "Dataset":
        _, sequences = load_sequences(cfg)
        annotations = load_annotations(cfg)
        splits = load_splits(cfg, sorted(sequences))
        if graph is None:
            graph = graph_from_inputs(cfg, sequences, annotations, splits)
        return cls(cfg, sequences, annotations, splits, graph, load_table(cfg))

    @property
    def num_actions(self) -> int:
        return len(self.graph.actions)

    @property
    def action_labels(self) -> list[str]:
        return [f"{v} {n}" for v, n in (self.graph.actions[a] for a in self.graph.action_ids)]

    def split_annotations(self, split: str) -> list[ActionAnnotation]:
        return [a for a in self.annotations if self.splits.get(a.video_id) == split]

    def segments(self, split: str, tau: float) -> list[EvalSegment]:
        segs, dropped = make_segments(self.split_annotations(split), tau,
                                      self.cfg.data.observation_seconds, self.cfg.data.fps)
        if dropped:
            log.info("%s split, tau %g: dropped %d segments whose window ends before frame 0",
                     split, tau, dropped)
        return segs

    def encode(self, split: str, tau: float) -> EncodedSet:
        return encode_segments(self.segments(split, tau), self.sequences, self.indexer,
                               self.cfg.data.fps, self.cfg.train.max_sequence_length)

    def inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency and features extended by any states seen only while encoding."""
        return self.indexer.inputs(self.adjacency, self.features)

    def train(self, train_cfg: TrainConfig | None = None, epoch_log=None) -> Checkpoint:
        train_cfg = train_cfg or self.cfg.train
        tau = self.cfg.data.train_tau
        train_set = self.encode("train", tau)
        val_set = self.encode("val", tau)
        adjacency, features = self.inputs()
        targets = state_action_targets(self.graph) if train_cfg.mode == "two_stage" else None
        return train_graph_stream(train_cfg, adjacency, features, self.num_actions, train_set,
                                  val_set if len(val_set) else None, targets, epoch_log)

    def score(self, ckpt: Checkpoint, encoded: EncodedSet) -> np.ndarray:
        cfg = ckpt.model_config()
        self._check_compatible(cfg)
        adjacency, features = self.inputs()
        if len(encoded) == 0:
            return np.zeros((0, cfg.num_actions))
        return predict_proba(ckpt.params, cfg, adjacency, features, encoded.sequences)

    def _check_compatible(self, cfg: ModelConfig) -> None:
        if cfg.num_actions != self.num_actions or cfg.in_dim != self.features.shape[1]:
            raise DataError(f"checkpoint expects {cfg.in_dim}-dim features and {cfg.num_actions} actions; "
                            f"data has {self.features.shape[1]} and {self.num_actions}")


def with_features(ds: Dataset, mode: str) -> Dataset:
    """Same data and graph with embedding or identity node features."""
    if ds.cfg.features.mode == mode:
        return ds
    from copy import deepcopy

    cfg = deepcopy(ds.cfg)
    cfg.features.mode = mode
    table = load_table(cfg) if mode == "embedding" else None
    return Dataset(cfg, ds.sequences, ds.annotations, ds.splits, ds.graph, table)
