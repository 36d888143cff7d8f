"""Anticipation segments and their encoding as graph node index sequences."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, FormatError
from .features import EmbeddingTable, extra_state_features
from .graph import ActivityGraph
from .models import extend_inputs
from .trace import (NULL_STATE, ActionAnnotation, ManipulationState, StateSequence,
                    observation_window, window_states)


@dataclass(frozen=True)
class EvalSegment:
    segment_id: str
    video_id: str
    action_start_frame: int
    anticipation_seconds: float
    observation_seconds: float
    action_id: int

    def __post_init__(self):
        if self.anticipation_seconds < 0 or self.observation_seconds <= 0:
            raise ValueError("need anticipation_seconds >= 0 and observation_seconds > 0")


def segment_ids(annotations: Sequence[ActionAnnotation]) -> list[str]:
    """``<video>#<k>`` where k counts the video's annotations in file order."""
    seen: dict[str, int] = defaultdict(int)
    ids = []
    for a in annotations:
        ids.append(f"{a.video_id}#{seen[a.video_id]}")
        seen[a.video_id] += 1
    return ids


def make_segments(annotations: Sequence[ActionAnnotation], anticipation_seconds: float,
                  observation_seconds: float = 60.0, fps: float = 15.0) -> tuple[list[EvalSegment], int]:
    """One segment per annotation; returns (segments, number dropped).

    Annotations whose observation window would end at or before frame 0
    are dropped.
    """
    segments, dropped = [], 0
    for sid, a in zip(segment_ids(annotations), annotations):
        _, end = observation_window(a.start_frame, anticipation_seconds, observation_seconds, fps)
        if end <= 0:
            dropped += 1
            continue
        segments.append(EvalSegment(sid, a.video_id, a.start_frame, anticipation_seconds,
                                    observation_seconds, a.action_id))
    return segments, dropped


class NodeIndexer:
    """Maps states to rows of the GCN inputs.

    States absent from the graph get appended as isolated extra nodes; the
    null state stands in for empty observation windows.
    """

    def __init__(self, graph: ActivityGraph, table: EmbeddingTable | None = None,
                 count_duplicate_nouns: bool = False):
        self.graph = graph
        self.table = table
        self.count_duplicate_nouns = count_duplicate_nouns
        self.extra: list[ManipulationState] = []
        self._extra_index: dict[ManipulationState, int] = {}

    def index(self, state: ManipulationState) -> int:
        i = self.graph.state_index(state)
        if i is not None:
            return i
        if state not in self._extra_index:
            self._extra_index[state] = self.graph.num_nodes + len(self.extra)
            self.extra.append(state)
        return self._extra_index[state]

    def inputs(self, adjacency: np.ndarray, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = extra_state_features(self.extra, self.table, features.shape[1], self.count_duplicate_nouns)
        return extend_inputs(adjacency, features, rows)


@dataclass
class EncodedSet:
    segment_ids: list[str]
    sequences: list[np.ndarray]
    labels: np.ndarray
    empty: list[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sequences)

    def subset(self, rows) -> "EncodedSet":
        rows = list(rows)
        return EncodedSet([self.segment_ids[i] for i in rows], [self.sequences[i] for i in rows],
                          self.labels[np.asarray(rows, dtype=np.int64)],
                          [self.empty[i] for i in rows] if self.empty else [])


def encode_segments(segments: Sequence[EvalSegment], sequences: Mapping[str, StateSequence],
                    indexer: NodeIndexer, fps: float = 15.0, max_length: int = 128) -> EncodedSet:
    """Observed states per segment as node indices, most recent last.

    Windows longer than ``max_length`` keep their newest states; an empty
    window becomes the single null state.
    """
    graph = indexer.graph
    label_of = {aid: k for k, aid in enumerate(graph.action_ids)}
    ids, seqs, labels, empty = [], [], [], []
    for seg in segments:
        seq = sequences.get(seg.video_id)
        if seq is None:
            raise DataError(f"segment {seg.segment_id} references unknown video {seg.video_id!r}")
        if seg.action_id not in label_of:
            raise DataError(f"segment {seg.segment_id} has action {seg.action_id} outside the graph vocabulary")
        window = window_states(seq, seg.action_start_frame, seg.anticipation_seconds,
                               seg.observation_seconds, fps)
        states = window.states()[-max_length:] or [NULL_STATE]
        empty.append(not window.items)
        ids.append(seg.segment_id)
        seqs.append(np.array([indexer.index(s) for s in states], dtype=np.int64))
        labels.append(label_of[seg.action_id])
    return EncodedSet(ids, seqs, np.array(labels, dtype=np.int64), empty)


# ---------------------------------------------------------------------------
# score files


def write_scores(path, ids: Sequence[str], scores: np.ndarray) -> None:
    lines = [f"{sid}\t" + ",".join(f"{p:.17g}" for p in row) for sid, row in zip(ids, scores)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_scores(path) -> dict[str, np.ndarray]:
    """``segment_id<TAB>p1,...,pA`` rows; each row must sum to 1 within 1e-6."""
    path = str(path)
    out: dict[str, np.ndarray] = {}
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise FormatError(f"expected 2 tab-separated fields, got {len(fields)}", path, lineno)
            sid, values = fields
            try:
                row = np.array([float(v) for v in values.split(",")])
            except ValueError:
                raise FormatError("non-numeric probability", path, lineno) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{len(row)} scores where {width} expected", path, lineno)
            if np.any(row < 0) or abs(row.sum() - 1.0) > 1e-6:
                raise FormatError("scores are not a probability vector", path, lineno)
            if sid in out:
                raise FormatError(f"duplicate segment id {sid!r}", path, lineno)
            out[sid] = row
    return out
