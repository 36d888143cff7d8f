"""Consolidated state/action graph with probability-weighted edges."""

from __future__ import annotations

import hashlib
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, FormatError
from .trace import ActionAnnotation, ManipulationState, StateSequence

log = logging.getLogger(__name__)

GRAPH_MAGIC = "EGO-OMG-GRAPH v1"
STATE_TO_ACTION = "state_to_action"
ACTION_TO_STATE = "action_to_state"


@dataclass
class ActivityGraph:
    """Nodes are state tuples followed by action ids; edges carry weights.

    ``actions`` maps action id to its (verb, noun) pair.
    """

    states: list[ManipulationState] = field(default_factory=list)
    actions: dict[int, tuple[str, str]] = field(default_factory=dict)
    edges: dict[tuple[int, int], float] = field(default_factory=dict)
    direction: str = STATE_TO_ACTION

    def __post_init__(self):
        self._state_index = {s: i for i, s in enumerate(self.states)}
        self.action_ids = sorted(self.actions)
        n = len(self.states)
        self._action_index = {a: n + i for i, a in enumerate(self.action_ids)}

    @property
    def num_nodes(self) -> int:
        return len(self.states) + len(self.actions)

    @property
    def num_states(self) -> int:
        return len(self.states)

    def state_index(self, state: ManipulationState) -> int | None:
        return self._state_index.get(state)

    def action_index(self, action_id: int) -> int:
        return self._action_index[action_id]

    def is_state(self, node: int) -> bool:
        return node < len(self.states)

    def node_label(self, node: int) -> str:
        if self.is_state(node):
            return self.states[node].key()
        aid = self.action_ids[node - len(self.states)]
        verb, noun = self.actions[aid]
        return f"{verb} {noun}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActivityGraph):
            return NotImplemented
        return (self.states == other.states and self.actions == other.actions
                and self.edges == other.edges and self.direction == other.direction)

    def check(self, tol: float = 1e-9) -> None:
        """Raise ``DataError`` when an invariant does not hold."""
        n = len(self.states)
        trans: dict[int, float] = defaultdict(float)
        act: dict[int, float] = defaultdict(float)
        for node in range(self.num_nodes):
            if self.edges.get((node, node)) != 1.0:
                raise DataError(f"node {node} lacks a unit self edge")
        for (src, dst), w in self.edges.items():
            if not 0.0 <= w <= 1.0:
                raise DataError(f"edge {src}->{dst} weight {w} outside [0, 1]")
            if src == dst:
                continue
            if src < n and dst < n:
                trans[src] += w
            elif src < n <= dst:
                act[src] += w
            elif dst < n <= src:
                act[dst] += w
            else:
                raise DataError(f"edge {src}->{dst} joins two action nodes")
        for group, sums in (("transition", trans), ("action", act)):
            for node, total in sums.items():
                if abs(total - 1.0) > tol:
                    raise DataError(f"{group} weights of state {node} sum to {total!r}")


# ---------------------------------------------------------------------------
# estimation


def count_transitions(sequences: Iterable[StateSequence]) -> Counter:
    counts: Counter = Counter()
    for seq in sequences:
        states = seq.states()
        counts.update(zip(states, states[1:]))
    return counts


def _normalise(counts: Mapping[tuple, int]) -> dict[tuple, float]:
    totals: Counter = Counter()
    for (src, _), c in counts.items():
        totals[src] += c
    return {(src, dst): c / totals[src] for (src, dst), c in counts.items()}


def estimate_transitions(
        sequences: Iterable[StateSequence]) -> dict[tuple[ManipulationState, ManipulationState], float]:
    """Pooled maximum-likelihood ``p(next | state)`` over all sequences."""
    return _normalise(count_transitions(sequences))


def count_action_cooccurrence(sequences: Iterable[StateSequence],
                              annotations: Iterable[ActionAnnotation]) -> Counter:
    by_video = {seq.video_id: seq for seq in sequences}
    counts: Counter = Counter()
    for ann in annotations:
        seq = by_video.get(ann.video_id)
        if seq is None:
            raise DataError(f"annotation references unknown video {ann.video_id!r}")
        for state, s, e in seq.items:
            # action [start, stop) against inclusive span [s, e]
            if ann.start_frame <= e and s < ann.stop_frame:
                counts[(state, ann.action_id)] += 1
    return counts


def estimate_action_edges(sequences: Iterable[StateSequence],
                          annotations: Iterable[ActionAnnotation]) -> dict[tuple[ManipulationState, int], float]:
    """``p(action | state)`` from actions overlapping each state's span."""
    return _normalise(count_action_cooccurrence(sequences, annotations))


def build_graph(sequences: Sequence[StateSequence], annotations: Sequence[ActionAnnotation] = (),
                actions: Mapping[int, tuple[str, str]] | None = None,
                direction: str = STATE_TO_ACTION) -> ActivityGraph:
    """Assemble the graph.

    ``sequences`` should cover every split; ``annotations`` feed the
    state-action edges and should come from the training split only.
    ``actions`` is the full action vocabulary (defaults to the actions seen
    in ``annotations``).
    """
    if direction not in (STATE_TO_ACTION, ACTION_TO_STATE):
        raise ValueError(f"unknown action edge direction {direction!r}")
    sequences = list(sequences)
    if actions is None:
        actions = {a.action_id: (a.verb, a.noun) for a in annotations}
    states = sorted({st for seq in sequences for st in seq.states()}, key=ManipulationState.sort_key)
    if not states:
        log.warning("building a graph without any state nodes")
    graph = ActivityGraph(states=states, actions=dict(actions), direction=direction)
    edges = {(i, i): 1.0 for i in range(graph.num_nodes)}
    for (a, b), w in estimate_transitions(sequences).items():
        edges[(graph.state_index(a), graph.state_index(b))] = w
    for (s, aid), w in estimate_action_edges(sequences, annotations).items():
        if aid not in graph.actions:
            raise DataError(f"action id {aid} missing from the action vocabulary")
        si, ai = graph.state_index(s), graph.action_index(aid)
        edges[(si, ai) if direction == STATE_TO_ACTION else (ai, si)] = w
    graph.edges = dict(sorted(edges.items()))
    return graph


def normalize_adjacency(graph: ActivityGraph) -> np.ndarray:
    """Dense row-stochastic adjacency: each row divided by its out-weight."""
    z = graph.num_nodes
    a = np.zeros((z, z))
    for (src, dst), w in graph.edges.items():
        a[src, dst] = w
    sums = a.sum(axis=1, keepdims=True)
    return a / np.where(sums > 0, sums, 1.0)


def state_action_targets(graph: ActivityGraph) -> tuple[np.ndarray, np.ndarray]:
    """State nodes with action edges and their p(action | state) rows."""
    n = graph.num_states
    rows: dict[int, np.ndarray] = {}
    for (src, dst), w in graph.edges.items():
        if src == dst:
            continue
        if src < n <= dst:
            s, a = src, dst - n
        elif dst < n <= src:
            s, a = dst, src - n
        else:
            continue
        rows.setdefault(s, np.zeros(len(graph.actions)))[a] = w
    nodes = np.array(sorted(rows), dtype=np.int64)
    targets = np.array([rows[i] for i in nodes]).reshape(len(nodes), len(graph.actions))
    return nodes, targets


# ---------------------------------------------------------------------------
# serialization


def _graph_body(graph: ActivityGraph) -> list[str]:
    lines = [f"direction\t{graph.direction}", f"nodes\t{graph.num_nodes}"]
    for i, s in enumerate(graph.states):
        lines.append(f"{i}\tS\t{s.key()}")
    for aid in graph.action_ids:
        verb, noun = graph.actions[aid]
        lines.append(f"{graph.action_index(aid)}\tA\t{aid}\t{verb}\t{noun}")
    lines.append(f"edges\t{len(graph.edges)}")
    for (src, dst), w in sorted(graph.edges.items()):
        lines.append(f"{src}\t{dst}\t{w:.17g}")
    return lines


def serialize_graph(graph: ActivityGraph, path) -> None:
    body = "\n".join(_graph_body(graph)) + "\n"
    digest = hashlib.sha256(body.encode()).hexdigest()
    Path(path).write_text(f"{GRAPH_MAGIC}\nsha256\t{digest}\n{body}", encoding="utf-8")


def deserialize_graph(path) -> ActivityGraph:
    path = str(path)
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != GRAPH_MAGIC:
        found = lines[0] if lines else ""
        if found.startswith("EGO-OMG-GRAPH"):
            raise FormatError(f"unsupported graph version {found!r}", path, 1)
        raise FormatError(f"expected header {GRAPH_MAGIC!r}", path, 1)
    if len(lines) < 2 or not lines[1].startswith("sha256\t"):
        raise FormatError("expected 'sha256<TAB><hex>' line", path, 2)
    pos = 2

    def take(expect: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise FormatError(f"missing {expect!r} line", path, pos + 1)
        fields = lines[pos].split("\t")
        if fields[0] != expect:
            raise FormatError(f"expected {expect!r} line, got {lines[pos]!r}", path, pos + 1)
        pos += 1
        return fields

    def count(fields: list[str]) -> int:
        if len(fields) != 2 or not fields[1].isdigit():
            raise FormatError(f"malformed {fields[0]!r} line", path, pos)
        return int(fields[1])

    fields = take("direction")
    if len(fields) != 2 or fields[1] not in (STATE_TO_ACTION, ACTION_TO_STATE):
        raise FormatError("malformed direction line", path, pos)
    direction = fields[1]
    n_nodes = count(take("nodes"))
    states: list[ManipulationState] = []
    actions: dict[int, tuple[str, str]] = {}
    for i in range(n_nodes):
        if pos >= len(lines):
            raise FormatError("node section truncated", path, pos + 1)
        f = lines[pos].split("\t")
        pos += 1
        if not f[0].isdigit() or int(f[0]) != i:
            raise FormatError(f"expected node index {i}", path, pos)
        if f[1:2] == ["S"] and len(f) == 3:
            if actions:
                raise FormatError("state node after action nodes", path, pos)
            try:
                states.append(ManipulationState.from_key(f[2]))
            except ValueError as exc:
                raise FormatError(str(exc), path, pos) from None
        elif f[1:2] == ["A"] and len(f) == 5:
            try:
                aid = int(f[2])
            except ValueError:
                raise FormatError(f"bad action id {f[2]!r}", path, pos) from None
            if aid in actions or (actions and aid < max(actions)):
                raise FormatError(f"action id {aid} out of order", path, pos)
            actions[aid] = (f[3], f[4])
        else:
            raise FormatError(f"malformed node line {lines[pos - 1]!r}", path, pos)
    n_edges = count(take("edges"))
    edges: dict[tuple[int, int], float] = {}
    for _ in range(n_edges):
        if pos >= len(lines):
            raise FormatError("edge section truncated", path, pos + 1)
        f = lines[pos].split("\t")
        pos += 1
        if len(f) != 3:
            raise FormatError(f"malformed edge line {lines[pos - 1]!r}", path, pos)
        try:
            src, dst, w = int(f[0]), int(f[1]), float(f[2])
        except ValueError:
            raise FormatError(f"malformed edge line {lines[pos - 1]!r}", path, pos) from None
        if not (0 <= src < n_nodes and 0 <= dst < n_nodes):
            raise FormatError(f"edge {src}->{dst} references a missing node", path, pos)
        if not 0.0 <= w <= 1.0:
            raise FormatError(f"edge weight {w!r} outside [0, 1]", path, pos)
        if (src, dst) in edges:
            raise FormatError(f"duplicate edge {src}->{dst}", path, pos)
        edges[(src, dst)] = w
    if pos != len(lines):
        raise FormatError("unexpected content after edge section", path, pos + 1)
    # structure first so malformed lines are reported where they occur
    body = "\n".join(lines[2:]) + "\n"
    if hashlib.sha256(body.encode()).hexdigest() != lines[1].split("\t", 1)[1]:
        raise FormatError("checksum mismatch", path, 2)
    return ActivityGraph(states=states, actions=actions, edges=edges, direction=direction)
