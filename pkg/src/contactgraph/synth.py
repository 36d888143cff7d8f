"""Synthetic activity grammars, trace generation, and brute-force oracles.

A grammar is a Markov chain over explicit manipulation states with a
per-state action emission distribution. Each visit lasts a sampled number
of detection steps and may emit one action annotation starting
``action_offset`` steps into the visit.

Generated states follow a per-hand convention that keeps the contact
filter satisfiable without noise: a hand is either empty ``(-, -)``,
reaching ``(-, Y)`` (anticipating Y), or holding ``(X, X)``. A held object
is therefore anticipated by the same hand in the very record that reports
the contact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError
from .features import EmbeddingTable, write_embedding_file
from .graph import STATE_TO_ACTION, ActivityGraph
from .trace import (NONE_TOKEN, ActionAnnotation, DetectionRecord, DetectionStream,
                    ManipulationState, StateSequence, StateSpan, action_vocabulary,
                    write_annotation_file, write_splits_file, write_trace_file)

GRAMMAR_MAGIC = "CONTACT-GRAMMAR v1"

DEFAULT_OBJECTS = ("knife", "pan", "spoon", "cutting:board", "cup", "plate", "tap",
                   "sponge", "bowl", "fork", "pot", "lid")
DEFAULT_VERBS = ("take", "put", "cut", "wash", "open", "close", "pour", "stir")


@dataclass
class ActivityGrammar:
    objects: list[str]
    states: list[ManipulationState]
    actions: list[tuple[str, str]]
    transitions: np.ndarray
    emissions: np.ndarray
    dwell_mean: float = 8.0
    min_dwell: int = 1
    max_dwell: int = 0  # 0 means uncapped
    action_offset: int = 0
    action_steps: int = 4
    distractor_rate: float = 0.0
    dropout_rate: float = 0.0
    stride: int = 2

    def validate(self) -> None:
        n, k = len(self.states), len(self.actions)
        if n == 0:
            raise ValueError("grammar needs at least one state")
        if len(set(self.states)) != n:
            raise ValueError("grammar states must be distinct")
        if len(set(self.actions)) != k:
            raise ValueError("grammar actions must be distinct")
        P = self.transitions
        if P.shape != (n, n) or np.any(P < 0):
            raise ValueError(f"transition matrix must be non-negative {n}x{n}")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if np.any(np.diag(P) != 0):
            raise ValueError("self transitions are invisible after deduplication; diagonal must be 0")
        E = self.emissions
        if E.shape != (n, k) or np.any(E < 0) or np.any(E.sum(axis=1) > 1.0 + 1e-12):
            raise ValueError(f"emission matrix must be {n}x{k} with row sums <= 1")
        if not (self.min_dwell >= 1 and self.dwell_mean >= self.min_dwell):
            raise ValueError("need 1 <= min_dwell <= dwell_mean")
        if self.max_dwell and self.max_dwell < self.min_dwell:
            raise ValueError("max_dwell below min_dwell")
        if not (0 <= self.distractor_rate <= 1 and 0 <= self.dropout_rate <= 1):
            raise ValueError("noise rates must lie in [0, 1]")
        if self.stride < 1 or self.action_steps < 1 or self.action_offset < 0:
            raise ValueError("stride and action_steps must be >= 1, action_offset >= 0")
        known = set(self.objects)
        for s in self.states:
            for noun in s.nouns():
                if noun not in known:
                    raise ValueError(f"state uses unknown object {noun!r}")

    def noise_free(self) -> "ActivityGrammar":
        return replace(self, distractor_rate=0.0, dropout_rate=0.0)


# ---------------------------------------------------------------------------
# grammar construction


def _hand_slots(rng: np.random.Generator, objects: Sequence[str]) -> tuple:
    form = rng.integers(3)
    if form == 0:
        return None, None
    obj = objects[rng.integers(len(objects))]
    return (None, obj) if form == 1 else (obj, obj)


def random_states(n: int, objects: Sequence[str], rng: np.random.Generator) -> list[ManipulationState]:
    states: list[ManipulationState] = []
    seen = set()
    while len(states) < n:
        cr, ar = _hand_slots(rng, objects)
        cl, al = _hand_slots(rng, objects)
        s = ManipulationState(cr, cl, ar, al)
        if s not in seen:
            seen.add(s)
            states.append(s)
    return states


def random_grammar(n_states: int = 10, n_actions: int = 5, seed: int = 0, successors: int | None = None,
                   deterministic_emissions: bool = True, objects: Sequence[str] = DEFAULT_OBJECTS,
                   verbs: Sequence[str] = DEFAULT_VERBS, **timing) -> ActivityGrammar:
    """Random grammar; ``successors=None`` spreads each row over all other states.

    With ``deterministic_emissions`` state i always emits action i mod
    n_actions, so the current state determines the upcoming action.
    """
    rng = np.random.default_rng([seed, 17])
    states = random_states(n_states, list(objects), rng)
    pairs: set[tuple[str, str]] = set()
    while len(pairs) < n_actions:
        pairs.add((verbs[rng.integers(len(verbs))], objects[rng.integers(len(objects))]))
    actions = sorted(pairs)
    P = np.zeros((n_states, n_states))
    for i in range(n_states):
        others = [j for j in range(n_states) if j != i]
        if not others:
            raise ValueError("need at least two states")
        k = len(others) if successors is None else min(successors, len(others))
        chosen = rng.choice(others, size=k, replace=False)
        w = rng.uniform(0.5, 1.5, size=k) if successors is not None else np.ones(k)
        P[i, chosen] = w / w.sum()
    P /= P.sum(axis=1, keepdims=True)
    if deterministic_emissions:
        E = np.zeros((n_states, n_actions))
        E[np.arange(n_states), np.arange(n_states) % n_actions] = 1.0
    else:
        E = rng.dirichlet(np.ones(n_actions), size=n_states)
    g = ActivityGrammar(list(objects), states, actions, P, E, **timing)
    g.validate()
    return g


def cycle_grammar(objects: Sequence[str] = DEFAULT_OBJECTS[:4], **timing) -> ActivityGrammar:
    """Deterministic reach-grasp cycle over the given objects (right hand)."""
    states = []
    for obj in objects:
        states.append(ManipulationState(None, None, obj, None))
        states.append(ManipulationState(obj, None, obj, None))
    n = len(states)
    P = np.zeros((n, n))
    P[np.arange(n), (np.arange(n) + 1) % n] = 1.0
    actions = sorted({("take", o) for o in objects})
    E = np.zeros((n, len(actions)))
    for i, s in enumerate(states):
        if s.contact_right is not None:
            E[i, actions.index(("take", s.contact_right))] = 1.0
    g = ActivityGrammar(list(objects), states, actions, P, E, **timing)
    g.validate()
    return g


def two_state_grammar(**timing) -> ActivityGrammar:
    a = ManipulationState(None, None, "cup", None)
    b = ManipulationState("cup", None, "cup", None)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    E = np.array([[0.0], [1.0]])
    g = ActivityGrammar(["cup"], [a, b], [("take", "cup")], P, E, **timing)
    g.validate()
    return g


# ---------------------------------------------------------------------------
# grammar files


def _fmt(x: float) -> str:
    return repr(float(x))


def write_grammar(path, g: ActivityGrammar) -> None:
    lines = [GRAMMAR_MAGIC]
    for key in ("dwell_mean", "min_dwell", "max_dwell", "action_offset", "action_steps",
                "distractor_rate", "dropout_rate", "stride"):
        lines.append(f"{key} = {getattr(g, key)!r}")
    lines.append("objects = " + " ".join(g.objects))
    lines.append(f"states {len(g.states)}")
    lines += [" ".join(NONE_TOKEN if x is None else x for x in s) for s in g.states]
    lines.append(f"actions {len(g.actions)}")
    lines += [f"{v} {n}" for v, n in g.actions]
    for name, mat in (("transitions", g.transitions), ("emissions", g.emissions)):
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        lines += [" ".join(_fmt(x) for x in row) for row in mat]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_INT_KEYS = {"min_dwell", "max_dwell", "action_offset", "action_steps", "stride"}
_FLOAT_KEYS = {"dwell_mean", "distractor_rate", "dropout_rate"}


def read_grammar(path) -> ActivityGrammar:
    """Parse the grammar text format written by :func:`write_grammar`."""
    path = str(path)
    raw = Path(path).read_text(encoding="utf-8").split("\n")
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(raw) if ln.strip() and not ln.strip().startswith("#")]
    if not lines or lines[0][1] != GRAMMAR_MAGIC:
        raise FormatError(f"expected header {GRAMMAR_MAGIC!r}", path, lines[0][0] if lines else 1)
    pos = 1
    kv: dict = {}
    objects: list[str] = []
    states, actions, mats = [], [], {}

    def block(name: str, ncols: int | None = None):
        nonlocal pos
        lineno, text = lines[pos]
        parts = text.split()
        try:
            dims = [int(x) for x in parts[1:]]
        except ValueError:
            raise FormatError(f"bad {name} block header", path, lineno) from None
        pos += 1
        rows = []
        for _ in range(dims[0] if dims else 0):
            if pos >= len(lines):
                raise FormatError(f"{name} block truncated", path, lineno)
            rows.append(lines[pos])
            pos += 1
        return dims, rows

    while pos < len(lines):
        lineno, text = lines[pos]
        if "=" in text:
            key, _, value = (t.strip() for t in text.partition("="))
            try:
                if key == "objects":
                    objects = value.split()
                elif key in _INT_KEYS:
                    kv[key] = int(value)
                elif key in _FLOAT_KEYS:
                    kv[key] = float(value)
                else:
                    raise FormatError(f"unknown key {key!r}", path, lineno)
            except ValueError:
                raise FormatError(f"bad value for {key!r}", path, lineno) from None
            pos += 1
            continue
        head = text.split()[0]
        if head == "states":
            _, rows = block("states")
            for ln, row in rows:
                parts = row.split()
                if len(parts) != 4:
                    raise FormatError("state rows need 4 slots", path, ln)
                states.append(ManipulationState(*(None if p == NONE_TOKEN else p for p in parts)))
        elif head == "actions":
            _, rows = block("actions")
            for ln, row in rows:
                parts = row.split()
                if len(parts) != 2:
                    raise FormatError("action rows need 'verb noun'", path, ln)
                actions.append((parts[0], parts[1]))
        elif head in ("transitions", "emissions"):
            dims, rows = block(head)
            if len(dims) != 2:
                raise FormatError(f"{head} header needs two dimensions", path, lineno)
            mat = []
            for ln, row in rows:
                try:
                    vals = [float(x) for x in row.split()]
                except ValueError:
                    raise FormatError(f"non-numeric {head} entry", path, ln) from None
                if len(vals) != dims[1]:
                    raise FormatError(f"{head} row has {len(vals)} entries, expected {dims[1]}", path, ln)
                mat.append(vals)
            mats[head] = np.array(mat).reshape(dims[0], dims[1])
        else:
            raise FormatError(f"unexpected line {text!r}", path, lineno)
    for need in ("transitions", "emissions"):
        if need not in mats:
            raise FormatError(f"missing {need} block", path)
    g = ActivityGrammar(objects, states, actions, mats["transitions"], mats["emissions"], **kv)
    try:
        g.validate()
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
    return g


# ---------------------------------------------------------------------------
# generation


@dataclass
class SyntheticData:
    grammar: ActivityGrammar
    stream: DetectionStream
    annotations: list[ActionAnnotation]
    true_sequences: dict[str, StateSequence]
    graph: ActivityGraph
    splits: dict[str, str] = field(default_factory=dict)


def video_name(i: int) -> str:
    return f"S{i:04d}"


def _dwell(g: ActivityGrammar, rng: np.random.Generator) -> int:
    extra_mean = g.dwell_mean - g.min_dwell
    d = g.min_dwell
    if extra_mean > 0:
        d += int(rng.geometric(1.0 / (extra_mean + 1.0))) - 1
    if g.max_dwell:
        d = min(d, g.max_dwell)
    return d


def _top5(obj: str | None, g: ActivityGrammar, rng: np.random.Generator) -> tuple[str, ...]:
    if obj is None:
        return ()
    out = [obj]
    for _ in range(4):
        if g.distractor_rate and rng.random() < g.distractor_rate:
            pool = [o for o in g.objects if o not in out]
            if pool:
                out.append(pool[rng.integers(len(pool))])
    return tuple(out)


def _ant(obj: str | None, g: ActivityGrammar, rng: np.random.Generator) -> str | None:
    if obj is not None and g.dropout_rate and rng.random() < g.dropout_rate:
        return None
    return obj


def generating_graph(g: ActivityGrammar) -> ActivityGraph:
    """The grammar itself as an activity graph (true P and p(action | state))."""
    order = sorted(range(len(g.states)), key=lambda i: g.states[i].sort_key())
    states = [g.states[i] for i in order]
    vocab = action_vocabulary(g.actions)
    actions = {vid: pair for pair, vid in vocab.items()}
    graph = ActivityGraph(states=states, actions=actions)
    edges = {(i, i): 1.0 for i in range(graph.num_nodes)}
    for new_i, old_i in enumerate(order):
        for new_j, old_j in enumerate(order):
            if g.transitions[old_i, old_j] > 0:
                edges[(new_i, new_j)] = float(g.transitions[old_i, old_j])
        row = g.emissions[old_i]
        if row.sum() > 0:
            for k, pair in enumerate(g.actions):
                if row[k] > 0:
                    edges[(new_i, graph.action_index(vocab[pair]))] = float(row[k] / row.sum())
    graph.edges = dict(sorted(edges.items()))
    return graph


def generate_traces(grammar: ActivityGrammar, n_videos: int, steps_per_video: int, seed: int = 0,
                    first_video: int = 0) -> SyntheticData:
    """Sample videos from ``grammar``; every video draws from its own seeded stream."""
    grammar.validate()
    g = grammar
    n = len(g.states)
    vocab = action_vocabulary(g.actions)
    stream = DetectionStream()
    annotations: list[ActionAnnotation] = []
    truth: dict[str, StateSequence] = {}
    for v in range(first_video, first_video + n_videos):
        vid = video_name(v)
        rng = np.random.default_rng([seed, v])
        s = int(rng.integers(n))
        step = 0
        records: list[DetectionRecord] = []
        seq = StateSequence(vid)
        while step < steps_per_video:
            d = min(_dwell(g, rng), steps_per_video - step)
            state = g.states[s]
            for t in range(step, step + d):
                records.append(DetectionRecord(
                    vid, t * g.stride,
                    _top5(state.contact_right, g, rng), _top5(state.contact_left, g, rng),
                    _ant(state.anticipated_right, g, rng), _ant(state.anticipated_left, g, rng)))
            first, last = step * g.stride, (step + d - 1) * g.stride
            seq.items.append(StateSpan(state, first, last))
            mass = g.emissions[s].sum()
            # a visit cut short by the end of the video emits nothing
            if mass > 0 and rng.random() < mass and g.action_offset < d:
                k = int(rng.choice(len(g.actions), p=g.emissions[s] / mass))
                start = (step + g.action_offset) * g.stride
                stop = min(start + g.action_steps * g.stride, last + 1)
                verb, noun = g.actions[k]
                annotations.append(ActionAnnotation(vid, start, stop, verb, noun, vocab[(verb, noun)]))
            step += d
            s = int(rng.choice(n, p=g.transitions[s]))
        stream.videos[vid] = records
        truth[vid] = seq
    return SyntheticData(g, stream, annotations, truth, generating_graph(g))


def random_embeddings(tokens, dim: int, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng([seed, 23])
    vecs = {}
    for tok in sorted(set(tokens)):
        vecs[tok] = rng.normal(size=dim)
    return EmbeddingTable(dim, vecs)


def vocabulary_tokens(g: ActivityGrammar) -> list[str]:
    toks = set()
    for obj in g.objects:
        toks.update(p for p in obj.split(":") if p)
    for verb, noun in g.actions:
        toks.add(verb)
        toks.update(p for p in noun.split(":") if p)
    return sorted(toks)


def appearance_scores(segment_ids: Sequence[str], labels: Sequence[int], num_actions: int,
                      accuracy: float, seed: int = 0, peak: float = 2.0) -> dict[str, np.ndarray]:
    """Stand-in appearance-stream softmax scores with a target top-1 rate.

    Each row peaks on the true label with probability ``accuracy`` and on
    a random other label otherwise, on top of Gaussian logit noise.
    """
    out = {}
    for i, (sid, y) in enumerate(zip(segment_ids, labels)):
        rng = np.random.default_rng([seed, 29, i])
        logits = 0.3 * rng.normal(size=num_actions)
        target = y
        if num_actions > 1 and rng.random() >= accuracy:
            target = (y + 1 + int(rng.integers(num_actions - 1))) % num_actions
        logits[target] += peak
        e = np.exp(logits - logits.max())
        out[sid] = e / e.sum()
    return out


# ---------------------------------------------------------------------------
# oracles (independent of graph/trace code paths)


def oracle_dedup(raw: Sequence) -> list:
    """Keep element j when it is the last one or differs from element j+1."""
    out = []
    for j in range(len(raw)):
        if j == len(raw) - 1 or raw[j] != raw[j + 1]:
            out.append(raw[j])
    return out


def _oracle_key(state) -> tuple:
    return tuple((slot is not None, slot or "") for slot in state)


def oracle_graph(sequences: Sequence[StateSequence], annotations: Sequence[ActionAnnotation],
                 actions: dict | None = None, direction: str = STATE_TO_ACTION) -> ActivityGraph:
    """Exhaustive counting re-implementation of graph construction (tests only)."""
    nodes: list = []
    for seq in sequences:
        for item in seq.items:
            if item[0] not in nodes:
                nodes.append(item[0])
    nodes.sort(key=_oracle_key)
    if actions is None:
        actions = {}
        for a in annotations:
            actions[a.action_id] = (a.verb, a.noun)
    action_ids = sorted(actions)
    n = len(nodes)
    edges = {}
    for i in range(n + len(action_ids)):
        edges[(i, i)] = 1.0
    for i, src in enumerate(nodes):
        successors: dict = {}
        total = 0
        for seq in sequences:
            for k in range(len(seq.items) - 1):
                if seq.items[k][0] == src:
                    nxt = seq.items[k + 1][0]
                    successors[nxt] = successors.get(nxt, 0) + 1
                    total += 1
        for dst, c in successors.items():
            edges[(i, nodes.index(dst))] = c / total
    by_video = {}
    for seq in sequences:
        by_video[seq.video_id] = seq
    for i, st in enumerate(nodes):
        hits: dict = {}
        total = 0
        for ann in annotations:
            for item in by_video[ann.video_id].items:
                overlap = not (ann.stop_frame <= item[1] or ann.start_frame > item[2])
                if item[0] == st and overlap:
                    hits[ann.action_id] = hits.get(ann.action_id, 0) + 1
                    total += 1
        for aid, c in hits.items():
            a_node = n + action_ids.index(aid)
            key = (i, a_node) if direction == STATE_TO_ACTION else (a_node, i)
            edges[key] = c / total
    return ActivityGraph(states=nodes, actions=dict(actions), edges=dict(sorted(edges.items())),
                         direction=direction)


def random_dataset(seed: int, max_sequences: int = 1000, max_length: int = 12, n_states: int = 8,
                   n_actions: int = 4, annotation_rate: float = 0.5):
    """Random state sequences with overlapping annotations, for oracle cross-checks.

    Returns (sequences, annotations, action vocabulary). Sequence lengths,
    spans and annotation extents are all random, including zero-length
    sequences and annotations overlapping several spans.
    """
    rng = np.random.default_rng([seed, 31])
    objects = ["pan", "knife", "cutting:board", "cup"]
    pool = random_states(n_states, objects, rng)
    actions = {i: (f"v{i % 3}", objects[i % len(objects)]) for i in range(n_actions)}
    sequences, annotations = [], []
    for k in range(int(rng.integers(0, max_sequences + 1))):
        seq = StateSequence(f"r{k:05d}")
        frame = int(rng.integers(0, 5))
        prev = None
        for _ in range(int(rng.integers(0, max_length + 1))):
            state = pool[rng.integers(len(pool))]
            if state == prev:
                continue
            length = int(rng.integers(1, 20))
            seq.items.append(StateSpan(state, frame, frame + length - 1))
            frame += length + int(rng.integers(0, 3))
            prev = state
        sequences.append(seq)
        if frame > 1:
            for _ in range(int(rng.poisson(annotation_rate * max(1, len(seq.items))))):
                start = int(rng.integers(0, frame))
                stop = start + int(rng.integers(1, 30))
                aid = int(rng.integers(n_actions))
                annotations.append(ActionAnnotation(seq.video_id, start, stop, *actions[aid], aid))
    return sequences, annotations, actions


# ---------------------------------------------------------------------------
# benchmark assembly

PRESETS = {
    # current state fixes the next action; several successors per state
    "learnable": dict(n_states=10, n_actions=5, successors=3, deterministic_emissions=True,
                      dwell_mean=16.0, min_dwell=12, max_dwell=40, action_offset=10,
                      action_steps=4, distractor_rate=0.3, dropout_rate=0.0),
    # the next action depends on the latest state only, and successors are
    # uniform, so windows that end before the emitting state carry little
    # signal; the long offset keeps that state visible up to ~4 s ahead
    "recency": dict(n_states=10, n_actions=5, successors=None, deterministic_emissions=True,
                    dwell_mean=36.0, min_dwell=32, max_dwell=60, action_offset=30,
                    action_steps=4, distractor_rate=0.3, dropout_rate=0.0),
}


@dataclass
class BenchmarkSpec:
    preset: str = "learnable"
    n_train: int = 200
    n_val: int = 25
    n_test: int = 50
    steps_per_video: int = 240
    embedding_dim: int = 32
    seed: int = 0
    appearance_accuracy: float = 0.6
    appearance_decay: float = 0.08


def make_benchmark(spec: BenchmarkSpec) -> SyntheticData:
    params = dict(PRESETS[spec.preset])
    grammar = random_grammar(seed=spec.seed, **params)
    total = spec.n_train + spec.n_val + spec.n_test
    data = generate_traces(grammar, total, spec.steps_per_video, seed=spec.seed)
    splits = {}
    for i in range(total):
        split = "train" if i < spec.n_train else "val" if i < spec.n_train + spec.n_val else "test"
        splits[video_name(i)] = split
    data.splits = splits
    return data


def appearance_accuracy_at(spec: BenchmarkSpec, tau: float) -> float:
    return max(0.0, spec.appearance_accuracy - spec.appearance_decay * tau)


def tau_label(tau: float) -> str:
    return f"{float(tau):g}"


def write_benchmark(out_dir, spec: BenchmarkSpec, taus: Sequence[float] = (5, 2.5, 1.5, 1, 0.5, 0),
                    fps: float = 15.0) -> SyntheticData:
    """Write traces, annotations, splits, grammar, embeddings, appearance scores, and a config."""
    from .data import make_segments, segment_ids, write_scores  # local: data imports models

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = make_benchmark(spec)
    write_grammar(out / "grammar.txt", data.grammar)
    write_trace_file(out / "traces.tsv", data.stream)
    write_annotation_file(out / "annotations.tsv", data.annotations)
    write_splits_file(out / "splits.tsv", data.splits)
    write_embedding_file(out / "embeddings.txt",
                         random_embeddings(vocabulary_tokens(data.grammar), spec.embedding_dim, spec.seed))
    vocab_pos = {aid: k for k, aid in enumerate(sorted({a.action_id for a in data.annotations}))}
    n_actions = len(vocab_pos)
    ids = segment_ids(data.annotations)
    label_of = {sid: vocab_pos[a.action_id] for sid, a in zip(ids, data.annotations)}
    for tau in taus:
        segs, _ = make_segments(data.annotations, tau, fps=fps)
        seg_ids = [s.segment_id for s in segs]
        scores = appearance_scores(seg_ids, [label_of[s] for s in seg_ids], n_actions,
                                   appearance_accuracy_at(spec, tau), seed=spec.seed)
        write_scores(out / f"appearance_tau{tau_label(tau)}.tsv", seg_ids, np.array([scores[s] for s in seg_ids]))
    (out / "run.cfg").write_text(benchmark_config_text(taus, fps), encoding="utf-8")
    return data


def benchmark_config_text(taus: Sequence[float], fps: float) -> str:
    grid = ",".join(tau_label(t) for t in taus)
    return "\n".join([
        "# paths are relative to this file",
        "data.traces = traces.tsv",
        "data.annotations = annotations.tsv",
        "data.splits = splits.tsv",
        "data.embeddings = embeddings.txt",
        f"data.fps = {fps:g}",
        "eval.appearance = appearance_tau{tau}.tsv",
        f"eval.tau_grid = {grid}",
    ]) + "\n"
