"""
ROC curves and AUC over labeled scores

A sample is called positive when its score is at or above the threshold.
Timing deltas (lower means hit) are negated before scoring.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DegenerateLabels, InvalidConfig

logger = logging.getLogger(__name__)

ROC_FIELDS = ['threshold', 'tpr', 'fpr']


@dataclass
class RocConfig:
    """[roc] section."""

    shared_tokens: List[int] = field(default_factory=lambda: [1, 2, 4, 8])
    prompt_length: int = 64
    trials: int = 4000
    profile_lengths: List[int] = field(default_factory=lambda: [1, 10, 50, 100, 150, 200])
    semantic_targets: int = 10
    reference_fraction: float = 0.2
    semantic_threshold: float = 0.8

    def validate(self) -> None:
        if not self.shared_tokens or any(k < 1 for k in self.shared_tokens):
            raise InvalidConfig("roc.shared_tokens must be positive")
        if max(self.shared_tokens) > self.prompt_length:
            raise InvalidConfig("roc.prompt_length must cover the largest shared prefix")
        if self.trials < 1 or self.semantic_targets < 1:
            raise InvalidConfig("roc.trials and roc.semantic_targets must be positive")
        if not 0.0 < self.reference_fraction < 1.0:
            raise InvalidConfig("roc.reference_fraction must be in (0, 1)")


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


def _validated(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise InvalidConfig(f"Got {s.size} scores for {y.size} labels")
    if not y.any() or y.all():
        raise DegenerateLabels("ROC needs both positive and negative samples")
    return s, y


def roc(scores: Sequence[float], labels: Sequence[int]) -> Tuple[List[RocPoint], float]:
    """
    Sweep the threshold over every distinct score.

    Args:
        scores: Higher means more likely positive
        labels: 1 for positive, 0 for negative

    Returns:
        (points from (0, 0) to (1, 1) in increasing FPR, trapezoidal AUC)

    Raises:
        DegenerateLabels: If only one label is present
    """
    s, y = _validated(scores, labels)
    order = np.argsort(-s, kind='stable')
    s, y = s[order], y[order]

    # last index of each run of equal scores
    distinct = np.where(np.diff(s))[0]
    ends = np.concatenate([distinct, [s.size - 1]])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    tpr = np.concatenate([[0.0], tp / y.sum()])
    fpr = np.concatenate([[0.0], fp / (~y).sum()])
    thresholds = np.concatenate([[np.inf], s[ends]])

    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = [RocPoint(float(t), float(a), float(b)) for t, a, b in zip(thresholds, tpr, fpr)]
    return points, auc


def operating_point(scores: Sequence[float], labels: Sequence[int], threshold: float) -> RocPoint:
    """TPR and FPR of the rule score >= threshold."""
    s, y = _validated(scores, labels)
    called = s >= threshold
    return RocPoint(threshold, float(called[y].mean()), float(called[~y].mean()))


def best_tpr_at(points: Sequence[RocPoint], max_fpr: float) -> float:
    """Highest TPR among points whose FPR does not exceed max_fpr."""
    return max((p.tpr for p in points if p.fpr <= max_fpr), default=0.0)


def roc_rows(points: Sequence[RocPoint]) -> List[dict]:
    return [{'threshold': 'inf' if np.isinf(p.threshold) else f"{p.threshold:.9g}",
             'tpr': f"{p.tpr:.6f}", 'fpr': f"{p.fpr:.6f}"} for p in points]


def read_samples(path: str) -> Tuple[List[float], List[int]]:
    """
    Read labeled samples from CSV.

    Accepts a `score` column (higher = positive) or a `delta_ms` column
    (lower = hit), plus a `label` column of 0/1.

    Raises:
        InvalidConfig: On missing columns or unreadable values
    """
    scores: List[float] = []
    labels: List[int] = []
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        if 'label' not in fields or not ({'score', 'delta_ms'} & set(fields)):
            raise InvalidConfig(f"{path} needs a 'label' column and a 'score' or 'delta_ms' column")
        try:
            for row in reader:
                if 'score' in fields:
                    scores.append(float(row['score']))
                else:
                    scores.append(-float(row['delta_ms']))
                labels.append(int(row['label']))
        except ValueError as e:
            raise InvalidConfig(f"Bad value in {path}: {e}") from e
    logger.info("Read %d samples from %s", len(scores), path)
    return scores, labels
