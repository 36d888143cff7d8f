"""Action anticipation from a graph of hand-object manipulation states.

Pipeline: detection traces -> contact filter -> deduplicated state
sequences -> weighted state/action graph -> GCN node embeddings -> LSTM
over the observed state history -> softmax over actions, optionally fused
with external appearance-stream scores.
"""

from .errors import ContactGraphError, DataError, FormatError, ShapeError, TapeError, TrainingError
from .graph import ActivityGraph, build_graph, deserialize_graph, normalize_adjacency, serialize_graph
from .trace import (ActionAnnotation, DetectionRecord, ManipulationState, StateSequence,
                    extract_states, filter_contacts, parse_trace_file, window_states)

__version__ = "0.1.0"

__all__ = [
    "ActionAnnotation", "ActivityGraph", "ContactGraphError", "DataError", "DetectionRecord", "FormatError",
    "ManipulationState", "ShapeError", "StateSequence", "TapeError", "TrainingError", "build_graph",
    "deserialize_graph", "extract_states", "filter_contacts", "normalize_adjacency", "parse_trace_file",
    "serialize_graph", "window_states",
]
