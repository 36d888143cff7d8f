from __future__ import annotations

import numpy as np


def topk_predictions(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores per row; ties go to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def topk_accuracy(scores, labels, k: int) -> float:
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n_classes = scores.shape[1]
    if k < 1 or k > n_classes:
        raise ValueError(f"k={k} outside [1, {n_classes}]")
    if len(labels) != len(scores):
        raise ValueError(f"{len(labels)} labels for {len(scores)} score rows")
    if len(labels) == 0:
        return 0.0
    hits = (topk_predictions(scores, k) == labels[:, None]).any(axis=1)
    return float(hits.mean())
