"""
Timing probe

Attacker-side measurement:
1. Measures TTFT of a target prompt and of a miss reference in one window
2. Calls a single sample a hit when target - reference falls below theta
3. Repeats n times (restoring cache state before each sample) and calls
   the position a hit when at least k samples were hits
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .client import EngineClient
from .errors import InvalidConfig

logger = logging.getLogger(__name__)

HIT = 'hit'
MISS = 'miss'

Evictor = Callable[[], None]

SAMPLE_FIELDS = ['position', 'guess_token', 'sample_idx', 'ttft_target_ms', 'ttft_ref_ms', 'delta_ms', 'decision']


@dataclass
class TimingSample:
    ttft_target: float
    ttft_miss_ref: float
    delta: float

    @classmethod
    def of(cls, ttft_target: float, ttft_miss_ref: float) -> 'TimingSample':
        return cls(ttft_target, ttft_miss_ref, ttft_target - ttft_miss_ref)


@dataclass
class VoteConfig:
    """[vote] section."""

    n: int = 10
    k: int = 5
    theta: float = field(default=-0.2e-3, metadata={'unit': 'ms'})

    def validate(self) -> None:
        if not 1 <= self.k <= self.n:
            raise InvalidConfig(f"vote needs 1 <= k <= n, got k={self.k}, n={self.n}")


@dataclass
class VoteOutcome:
    decision: str
    hits: int
    samples: List[TimingSample] = field(default_factory=list)

    @property
    def is_hit(self) -> bool:
        return self.decision == HIT


# Called with (sample index, sample, single-sample decision) for per-sample reports.
SampleRecorder = Callable[[int, TimingSample, str], None]


def measure_pair(client: EngineClient, target_prompt: str, miss_ref_prompt: str) -> TimingSample:
    """
    Measure a target and its miss reference back to back (max_tokens=1).

    Raises:
        TransportError: If the client cannot reach the engine
    """
    ttft_target = client.direct_ttft(target_prompt)
    ttft_ref = client.direct_ttft(miss_ref_prompt)
    return TimingSample.of(ttft_target, ttft_ref)


def classify_single(sample: TimingSample, theta: float) -> str:
    return HIT if sample.delta < theta else MISS


def decide(decisions: Sequence[str], k: int) -> str:
    """Hit when at least k of the single-sample decisions are hits."""
    return HIT if sum(1 for d in decisions if d == HIT) >= k else MISS


def vote(client: EngineClient, target: str, ref: str, cfg: VoteConfig,
         evictor: Optional[Evictor] = None, recorder: Optional[SampleRecorder] = None) -> VoteOutcome:
    """
    n-of-k vote over repeated measurements.

    Args:
        client: Engine client
        target: Target prompt text
        ref: Miss-reference prompt text
        cfg: Vote configuration
        evictor: Restores cache state before each sample (evict, then re-trigger)
        recorder: Receives every sample for per-sample reporting

    Returns:
        VoteOutcome with the decision and the samples taken
    """
    decisions = []
    samples = []
    for idx in range(cfg.n):
        if evictor is not None:
            evictor()
        sample = measure_pair(client, target, ref)
        decision = classify_single(sample, cfg.theta)
        samples.append(sample)
        decisions.append(decision)
        if recorder is not None:
            recorder(idx, sample, decision)
    outcome = VoteOutcome(decide(decisions, cfg.k), decisions.count(HIT), samples)
    logger.debug("Vote %s (%d/%d hits)", outcome.decision, outcome.hits, cfg.n)
    return outcome


def binomial_tail(p: float, n: int, k: int) -> float:
    """P(X >= k) for X ~ Binomial(n, p)."""
    return sum(math.comb(n, i) * p ** i * (1.0 - p) ** (n - i) for i in range(k, n + 1))


def vote_rates(p_hit: float, p_fp: float, n: int, k: int) -> Tuple[float, float]:
    """Voted (tpr, fpr) for independent single-sample rates."""
    return binomial_tail(p_hit, n, k), binomial_tail(p_fp, n, k)


@dataclass
class ThresholdCalibration:
    theta: float
    tpr: float
    fpr: float


def calibrate_threshold(hit_deltas: Sequence[float], miss_deltas: Sequence[float]) -> ThresholdCalibration:
    """
    Pick theta maximizing TPR - FPR for the rule "hit iff delta < theta".

    Candidate thresholds are the midpoints between consecutive distinct
    deltas plus one value beyond each end.

    Raises:
        InvalidConfig: If either delta set is empty
    """
    hits = np.sort(np.asarray(hit_deltas, dtype=np.float64))
    misses = np.sort(np.asarray(miss_deltas, dtype=np.float64))
    if hits.size == 0 or misses.size == 0:
        raise InvalidConfig("Threshold calibration needs both hit and miss samples")

    values = np.unique(np.concatenate([hits, misses]))
    candidates = np.concatenate([[values[0] - 1.0], (values[:-1] + values[1:]) / 2.0, [values[-1] + 1.0]])
    tpr = np.searchsorted(hits, candidates, side='left') / hits.size
    fpr = np.searchsorted(misses, candidates, side='left') / misses.size
    best = int(np.argmax(tpr - fpr))
    return ThresholdCalibration(float(candidates[best]), float(tpr[best]), float(fpr[best]))


def sample_row(position: int, guess_token: str, sample_idx: int, sample: TimingSample, decision: str) -> dict:
    """Per-sample CSV row."""
    return {
        'position': position,
        'guess_token': guess_token,
        'sample_idx': sample_idx,
        'ttft_target_ms': f"{sample.ttft_target * 1000.0:.6f}",
        'ttft_ref_ms': f"{sample.ttft_miss_ref * 1000.0:.6f}",
        'delta_ms': f"{sample.delta * 1000.0:.6f}",
        'decision': decision,
    }
