"""Word-embedding tables and the node feature matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import FormatError
from .graph import ActivityGraph
from .trace import ManipulationState

SUBTOKEN_SEP = ":"


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def lookup(self, token: str) -> np.ndarray:
        """Vector for a token; out-of-vocabulary tokens map to zeros."""
        vec = self.vectors.get(token.lower())
        return np.zeros(self.dim) if vec is None else vec


def parse_embedding_file(path) -> EmbeddingTable:
    """Read ``token v1 ... vm`` lines (plain word-vector text layout, no header)."""
    path = str(path)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token = parts[0].lower()
            if len(parts) < 2:
                raise FormatError(f"token {token!r} has no vector", path, lineno)
            if dim is None:
                dim = len(parts) - 1
            elif len(parts) - 1 != dim:
                raise FormatError(f"dimension {len(parts) - 1} differs from {dim}", path, lineno)
            if token in vectors:
                raise FormatError(f"duplicate token {token!r}", path, lineno)
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise FormatError(f"non-numeric value in vector for {token!r}", path, lineno) from None
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"non-finite value in vector for {token!r}", path, lineno)
            vectors[token] = vec
    if dim is None:
        raise FormatError("embedding file is empty", path)
    return EmbeddingTable(dim, vectors)


def write_embedding_file(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in sorted(table.vectors):
            fh.write(token + " " + " ".join(f"{v:.17g}" for v in table.vectors[token]) + "\n")


def noun_vector(noun: str, table: EmbeddingTable) -> np.ndarray:
    """Mean over ``:``-separated sub-tokens."""
    parts = [p for p in noun.split(SUBTOKEN_SEP) if p]
    if not parts:
        return np.zeros(table.dim)
    return np.mean([table.lookup(p) for p in parts], axis=0)


def state_features(state: ManipulationState, table: EmbeddingTable,
                   count_duplicate_nouns: bool = False) -> np.ndarray:
    nouns = state.nouns()
    if not count_duplicate_nouns:
        nouns = sorted(set(nouns))
    if not nouns:
        return np.zeros(table.dim)
    return np.mean([noun_vector(n, table) for n in nouns], axis=0)


def action_features(verb: str, noun: str, table: EmbeddingTable) -> np.ndarray:
    return 0.5 * (table.lookup(verb) + noun_vector(noun, table))


def build_feature_matrix(graph: ActivityGraph, table: EmbeddingTable | None = None,
                         count_duplicate_nouns: bool = False) -> np.ndarray:
    """Rows follow graph node order; ``table=None`` gives the identity matrix."""
    if table is None:
        return np.eye(graph.num_nodes)
    rows = [state_features(s, table, count_duplicate_nouns) for s in graph.states]
    rows += [action_features(*graph.actions[a], table) for a in graph.action_ids]
    return np.array(rows).reshape(graph.num_nodes, table.dim)


def extra_state_features(states, table: EmbeddingTable | None, dim: int,
                         count_duplicate_nouns: bool = False) -> np.ndarray:
    """Feature rows for states missing from the graph.

    In identity mode such states have no column of their own and get zeros.
    """
    if table is None:
        return np.zeros((len(states), dim))
    return np.array([state_features(s, table, count_duplicate_nouns) for s in states]).reshape(len(states), dim)


def table_from_mapping(vectors: Mapping[str, np.ndarray]) -> EmbeddingTable:
    vecs = {k.lower(): np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
    dims = {v.shape[0] for v in vecs.values()}
    if len(dims) != 1:
        raise ValueError("vectors must share one dimension")
    return EmbeddingTable(dims.pop(), vecs)
