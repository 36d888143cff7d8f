"""Detection traces, action annotations and manipulation-state sequences.

Object classes are carried as their noun tokens; :class:`ObjectVocabulary`
assigns stable integer ids when a numeric view is needed.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import DataError, FormatError

NONE_TOKEN = "-"
MAX_TOP5 = 5
DEFAULT_FPS = 15.0
DEFAULT_STRIDE = 2


@dataclass(frozen=True)
class ObjectClass:
    id: int
    noun: str


class ObjectVocabulary:
    """Nouns sorted lexicographically and numbered from 0."""

    def __init__(self, nouns: Iterable[str]):
        self.nouns = sorted(set(nouns))
        self._ids = {n: i for i, n in enumerate(self.nouns)}

    def __len__(self) -> int:
        return len(self.nouns)

    def __getitem__(self, noun: str) -> ObjectClass:
        return ObjectClass(self._ids[noun], noun)

    def __contains__(self, noun: str) -> bool:
        return noun in self._ids


class ManipulationState(NamedTuple):
    """Objects in contact with / anticipated by each hand; ``None`` when empty."""

    contact_right: Optional[str] = None
    contact_left: Optional[str] = None
    anticipated_right: Optional[str] = None
    anticipated_left: Optional[str] = None

    @property
    def is_null(self) -> bool:
        return all(slot is None for slot in self)

    def key(self) -> str:
        return "|".join(NONE_TOKEN if s is None else s for s in self)

    @classmethod
    def from_key(cls, key: str) -> "ManipulationState":
        parts = key.split("|")
        if len(parts) != 4 or any(not p for p in parts):
            raise ValueError(f"bad state key {key!r}")
        return cls(*(None if p == NONE_TOKEN else p for p in parts))

    def sort_key(self) -> tuple:
        return tuple((0, "") if s is None else (1, s) for s in self)

    def nouns(self) -> list[str]:
        return [s for s in self if s is not None]


NULL_STATE = ManipulationState()


@dataclass(frozen=True)
class DetectionRecord:
    video_id: str
    frame: int
    contact_right_top5: tuple[str, ...] = ()
    contact_left_top5: tuple[str, ...] = ()
    anticipated_right: Optional[str] = None
    anticipated_left: Optional[str] = None

    def to_line(self) -> str:
        def top5(xs):
            return ",".join(xs) if xs else NONE_TOKEN

        def one(x):
            return NONE_TOKEN if x is None else x

        return "\t".join([self.video_id, str(self.frame), top5(self.contact_right_top5),
                          top5(self.contact_left_top5), one(self.anticipated_right),
                          one(self.anticipated_left)])


@dataclass
class DetectionStream:
    videos: dict[str, list[DetectionRecord]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(v) for v in self.videos.values())


class TimedState(NamedTuple):
    frame: int
    state: ManipulationState


@dataclass
class ContactStream:
    """Resolved 4-tuple per detection step, grouped by video."""

    videos: dict[str, list[TimedState]] = field(default_factory=dict)


class StateSpan(NamedTuple):
    state: ManipulationState
    start_frame: int
    end_frame: int


@dataclass
class StateSequence:
    video_id: str
    items: list[StateSpan] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def states(self) -> list[ManipulationState]:
        return [it.state for it in self.items]


@dataclass(frozen=True)
class ActionAnnotation:
    video_id: str
    start_frame: int
    stop_frame: int
    verb: str
    noun: str
    action_id: int = -1


# ---------------------------------------------------------------------------
# parsing


def _read_lines(path) -> Iterable[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def _token(value: str, what: str, path, lineno) -> str:
    if not value or any(c.isspace() for c in value) or "," in value:
        raise FormatError(f"invalid {what} token {value!r}", str(path), lineno)
    return value


def _parse_top5(value: str, what: str, path, lineno) -> tuple[str, ...]:
    if value == NONE_TOKEN:
        return ()
    items = value.split(",")
    if len(items) > MAX_TOP5:
        raise FormatError(f"{what} has {len(items)} entries (max {MAX_TOP5})", str(path), lineno)
    for item in items:
        if not item or item == NONE_TOKEN or any(c.isspace() for c in item):
            raise FormatError(f"invalid {what} entry {item!r}", str(path), lineno)
    if len(set(items)) != len(items):
        raise FormatError(f"{what} contains duplicate classes", str(path), lineno)
    return tuple(items)


def _parse_slot(value: str, what: str, path, lineno) -> Optional[str]:
    if value == NONE_TOKEN:
        return None
    return _token(value, what, path, lineno)


def _parse_int(value: str, what: str, path, lineno) -> int:
    try:
        n = int(value)
    except ValueError:
        raise FormatError(f"{what} {value!r} is not an integer", str(path), lineno) from None
    if n < 0:
        raise FormatError(f"{what} {n} is negative", str(path), lineno)
    return n


def parse_trace_line(line: str, path="<trace>", lineno: int = 0) -> DetectionRecord:
    fields = line.split("\t")
    if len(fields) != 6:
        raise FormatError(f"expected 6 tab-separated fields, got {len(fields)}", str(path), lineno)
    vid = _token(fields[0], "video_id", path, lineno)
    frame = _parse_int(fields[1], "frame", path, lineno)
    return DetectionRecord(
        video_id=vid,
        frame=frame,
        contact_right_top5=_parse_top5(fields[2], "contact_right_top5", path, lineno),
        contact_left_top5=_parse_top5(fields[3], "contact_left_top5", path, lineno),
        anticipated_right=_parse_slot(fields[4], "anticipated_right", path, lineno),
        anticipated_left=_parse_slot(fields[5], "anticipated_left", path, lineno),
    )


def parse_trace_file(path) -> DetectionStream:
    """Read a detection trace; records stay grouped by video in frame order.

    Frames must strictly increase within each video in file order; videos
    may interleave.
    """
    stream = DetectionStream()
    for lineno, line in _read_lines(path):
        rec = parse_trace_line(line, path, lineno)
        records = stream.videos.setdefault(rec.video_id, [])
        if records and rec.frame <= records[-1].frame:
            raise FormatError(
                f"frame {rec.frame} does not increase after {records[-1].frame} in video {rec.video_id}",
                str(path), lineno)
        records.append(rec)
    return stream


def write_trace_file(path, stream: DetectionStream) -> None:
    lines = ["# video_id\tframe\tcontact_right_top5\tcontact_left_top5\tanticipated_right\tanticipated_left"]
    for vid in sorted(stream.videos):
        lines.extend(r.to_line() for r in stream.videos[vid])
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_annotation_file(path) -> list[ActionAnnotation]:
    """Read ``video_id start stop verb noun`` rows and number the actions.

    Action ids enumerate the distinct (verb, noun) pairs of the file in
    sorted order.
    """
    raw = []
    for lineno, line in _read_lines(path):
        fields = line.split("\t")
        if len(fields) != 5:
            raise FormatError(f"expected 5 tab-separated fields, got {len(fields)}", str(path), lineno)
        vid = _token(fields[0], "video_id", path, lineno)
        start = _parse_int(fields[1], "start_frame", path, lineno)
        stop = _parse_int(fields[2], "stop_frame", path, lineno)
        if start >= stop:
            raise FormatError(f"start_frame {start} is not before stop_frame {stop}", str(path), lineno)
        verb = _token(fields[3], "verb", path, lineno)
        noun = _token(fields[4], "noun", path, lineno)
        raw.append((vid, start, stop, verb, noun))
    vocab = action_vocabulary((r[3], r[4]) for r in raw)
    return [ActionAnnotation(v, s, e, vb, n, vocab[(vb, n)]) for v, s, e, vb, n in raw]


def action_vocabulary(pairs: Iterable[tuple[str, str]]) -> dict[tuple[str, str], int]:
    return {pair: i for i, pair in enumerate(sorted(set(pairs)))}


def write_annotation_file(path, annotations: Sequence[ActionAnnotation]) -> None:
    lines = ["# video_id\tstart_frame\tstop_frame\tverb\tnoun"]
    lines += [f"{a.video_id}\t{a.start_frame}\t{a.stop_frame}\t{a.verb}\t{a.noun}" for a in annotations]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_splits_file(path) -> dict[str, str]:
    """``video_id<TAB>split`` rows, split one of train/val/test."""
    splits: dict[str, str] = {}
    for lineno, line in _read_lines(path):
        fields = line.split("\t")
        if len(fields) != 2:
            raise FormatError(f"expected 2 tab-separated fields, got {len(fields)}", str(path), lineno)
        vid, split = fields
        if split not in ("train", "val", "test"):
            raise FormatError(f"unknown split {split!r}", str(path), lineno)
        if vid in splits:
            raise FormatError(f"video {vid!r} listed twice", str(path), lineno)
        splits[vid] = split
    return splits


def write_splits_file(path, splits: dict[str, str]) -> None:
    lines = [f"{vid}\t{splits[vid]}" for vid in sorted(splits)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# state extraction


def window_frames(history_seconds: float, fps: float) -> int:
    if fps <= 0 or history_seconds <= 0:
        raise ValueError("fps and history_seconds must be positive")
    return math.ceil(round(history_seconds * fps, 9))


def _resolve(top5: Sequence[str], recent: Counter) -> Optional[str]:
    for noun in top5:
        if recent[noun] > 0:
            return noun
    return None


def filter_contacts(stream: DetectionStream, history_seconds: float = 7.0,
                    fps: float = DEFAULT_FPS) -> ContactStream:
    """Keep a hand's contact only if that hand anticipated it recently.

    The resolved contact is the best-ranked top-5 entry that the same hand
    anticipated in a record with frame in ``(f - W, f]``, where
    ``W = ceil(history_seconds * fps)``; the current record counts.
    """
    width = window_frames(history_seconds, fps)
    out = ContactStream()
    for vid, records in stream.videos.items():
        seen_r: Counter = Counter()
        seen_l: Counter = Counter()
        window: deque[DetectionRecord] = deque()
        resolved = []
        for rec in records:
            window.append(rec)
            if rec.anticipated_right is not None:
                seen_r[rec.anticipated_right] += 1
            if rec.anticipated_left is not None:
                seen_l[rec.anticipated_left] += 1
            while window[0].frame <= rec.frame - width:
                old = window.popleft()
                if old.anticipated_right is not None:
                    seen_r[old.anticipated_right] -= 1
                if old.anticipated_left is not None:
                    seen_l[old.anticipated_left] -= 1
            state = ManipulationState(
                _resolve(rec.contact_right_top5, seen_r),
                _resolve(rec.contact_left_top5, seen_l),
                rec.anticipated_right,
                rec.anticipated_left,
            )
            resolved.append(TimedState(rec.frame, state))
        out.videos[vid] = resolved
    return out


def extract_states(timed: Sequence[TimedState], video_id: str = "") -> StateSequence:
    """Collapse runs of identical consecutive states into spans."""
    seq = StateSequence(video_id)
    items = seq.items
    for frame, state in timed:
        if items and items[-1].state == state:
            items[-1] = items[-1]._replace(end_frame=frame)
        else:
            items.append(StateSpan(state, frame, frame))
    return seq


def extract_all(contacts: ContactStream) -> dict[str, StateSequence]:
    return {vid: extract_states(ts, vid) for vid, ts in contacts.videos.items()}


def sequences_from_traces(stream: DetectionStream, history_seconds: float = 7.0,
                          fps: float = DEFAULT_FPS) -> dict[str, StateSequence]:
    return extract_all(filter_contacts(stream, history_seconds, fps))


def observation_window(action_start_frame: int, anticipation_seconds: float,
                       observation_seconds: float = 60.0, fps: float = DEFAULT_FPS) -> tuple[int, int]:
    """Half-open integer frame window ``[start, end)`` preceding an action."""
    if action_start_frame < 0:
        raise ValueError("action_start_frame must be non-negative")
    if anticipation_seconds < 0 or observation_seconds <= 0 or fps <= 0:
        raise ValueError("need anticipation >= 0, observation > 0, fps > 0")
    # rounding guards against 1.5*15 style float noise before ceil
    end = math.ceil(round(action_start_frame - anticipation_seconds * fps, 9))
    start = math.ceil(round(action_start_frame - (observation_seconds + anticipation_seconds) * fps, 9))
    return max(0, start), end


def window_states(seq: StateSequence, action_start_frame: int, anticipation_seconds: float,
                  observation_seconds: float = 60.0, fps: float = DEFAULT_FPS) -> StateSequence:
    start, end = observation_window(action_start_frame, anticipation_seconds, observation_seconds, fps)
    if end <= 0:
        raise DataError(f"observation window ends at frame {end}, before the video starts")
    out = StateSequence(seq.video_id)
    for state, s, e in seq.items:
        if s >= end:
            break
        if e < start:
            continue
        out.items.append(StateSpan(state, max(s, start), min(e, end - 1)))
    return out


def stride_profile(stream: DetectionStream) -> Counter:
    """Histogram of frame gaps between consecutive records."""
    gaps: Counter = Counter()
    for records in stream.videos.values():
        for a, b in zip(records, records[1:]):
            gaps[b.frame - a.frame] += 1
    return gaps
