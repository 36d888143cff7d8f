"""Run configuration: flat ``section.key = value`` files plus flag overrides."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .errors import FormatError
from .graph import ACTION_TO_STATE, STATE_TO_ACTION
from .training import TrainConfig

DEFAULT_TAU_GRID = (5.0, 2.5, 1.5, 1.0, 0.5, 0.0)


@dataclass
class DataConfig:
    traces: str = ""
    annotations: str = ""
    splits: str = ""
    embeddings: str = ""
    fps: float = 15.0
    history_seconds: float = 7.0
    observation_seconds: float = 60.0
    train_tau: float = 1.0


@dataclass
class GraphConfig:
    action_edge_direction: str = STATE_TO_ACTION


@dataclass
class FeatureConfig:
    mode: str = "embedding"  # or "identity"
    count_duplicate_nouns: bool = False


@dataclass
class EvalConfig:
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID
    # score file pattern; "{tau}" expands to e.g. 2.5 or 0
    appearance: str = ""


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    threads: int = 1

    def validate(self) -> None:
        # fields may have been assigned one by one after construction
        self.train.__post_init__()
        if self.data.fps <= 0 or self.data.history_seconds <= 0 or self.data.observation_seconds <= 0:
            raise ValueError("fps, history_seconds and observation_seconds must be positive")
        if self.graph.action_edge_direction not in (STATE_TO_ACTION, ACTION_TO_STATE):
            raise ValueError(f"graph.action_edge_direction must be {STATE_TO_ACTION!r} or {ACTION_TO_STATE!r}")
        if self.features.mode not in ("embedding", "identity"):
            raise ValueError("features.mode must be 'embedding' or 'identity'")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if any(t < 0 for t in self.eval.tau_grid):
            raise ValueError("anticipation times must be non-negative")


_PATH_KEYS = {("data", "traces"), ("data", "annotations"), ("data", "splits"), ("data", "embeddings"),
              ("eval", "appearance")}


def parse_tau_grid(text: str) -> tuple[float, ...]:
    try:
        grid = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"bad anticipation grid {text!r}; expected comma-separated seconds") from None
    if not grid:
        raise ValueError("empty anticipation grid")
    return grid


def _coerce(kind, text: str):
    if kind in (bool, "bool"):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    if kind in ("tuple[float, ...]",):
        return parse_tau_grid(text)
    return text


def set_option(cfg: RunConfig, dotted: str, text: str, base: Path | None = None) -> None:
    """Assign ``section.key`` from its string form, converting by the field's type."""
    if dotted == "run.threads" or dotted == "threads":
        cfg.threads = int(text)
        return
    if dotted == "run.seed":
        dotted = "train.seed"
    section, _, key = dotted.partition(".")
    target = getattr(cfg, section, None) if section in ("data", "graph", "features", "train", "eval") else None
    if target is None or not key:
        raise KeyError(f"unknown option {dotted!r}")
    types = {f.name: f.type for f in fields(target)}
    if key not in types:
        raise KeyError(f"unknown option {dotted!r}")
    value = _coerce(types[key], text.strip())
    if base is not None and (section, key) in _PATH_KEYS and value and not Path(value).is_absolute():
        value = str(base / value)
    setattr(target, key, value)


def load_config(path=None, overrides: Mapping[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        path = str(path)
        base = Path(path).resolve().parent
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read config: {exc.strerror}", path) from None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError("expected 'section.key = value'", path, lineno)
            key, _, value = (t.strip() for t in line.partition("="))
            try:
                set_option(cfg, key, value, base)
            except (KeyError, ValueError) as exc:
                raise FormatError(str(exc).strip("'\""), path, lineno) from None
    for key, value in (overrides or {}).items():
        set_option(cfg, key, value)
    cfg.validate()
    return cfg


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def write_config(path, cfg: RunConfig) -> None:
    lines = []
    for section in ("data", "graph", "features", "train", "eval"):
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_render(getattr(obj, f.name))}")
    lines.append(f"run.threads = {cfg.threads}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
