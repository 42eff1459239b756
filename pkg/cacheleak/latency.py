"""
Latency oracle

Synthesizes time-to-first-token values from cache outcomes:
1. Prefill: fixed overhead plus a per-token cost for cached and uncached tokens
2. Semantic cache: a fast hit path and a slow full-generation path
3. Documents: prefill over a long upload

Every value gets additive Gaussian noise truncated so the result is never
negative. All durations are seconds.
"""

import logging
import math
from dataclasses import dataclass, field
from statistics import NormalDist

from .errors import InvalidConfig
from .rng import SeededRNG

logger = logging.getLogger(__name__)


def _duration(default: float, unit: str):
    """Dataclass field for a duration stored in seconds and configured in `unit`."""
    return field(default=default, metadata={'unit': unit})


@dataclass
class LatencyParams:
    """[latency] section. Durations are seconds; config keys carry their unit suffix."""

    t_miss_per_token: float = _duration(0.45e-3, 'ms')
    t_hit_per_token: float = _duration(0.22e-6, 'us')
    t_base: float = _duration(2e-3, 'ms')
    t_decode_per_token: float = _duration(9e-3, 'ms')
    noise_sigma: float = _duration(0.05e-3, 'ms')
    semantic_hit_latency: float = _duration(0.14, 's')
    semantic_miss_latency: float = _duration(2.5, 's')
    rng_seed: int = 0

    def validate(self) -> None:
        durations = {
            'latency.t_miss_per_token': self.t_miss_per_token,
            'latency.t_hit_per_token': self.t_hit_per_token,
            'latency.t_base': self.t_base,
            'latency.t_decode_per_token': self.t_decode_per_token,
            'latency.noise_sigma': self.noise_sigma,
            'latency.semantic_hit_latency': self.semantic_hit_latency,
            'latency.semantic_miss_latency': self.semantic_miss_latency,
        }
        for name, value in durations.items():
            if value < 0:
                raise InvalidConfig(f"{name} must be non-negative")
        if self.t_hit_per_token >= self.t_miss_per_token:
            raise InvalidConfig("latency.t_hit_per_token must be smaller than latency.t_miss_per_token")

    @property
    def token_gap(self) -> float:
        """Extra prefill cost of one uncached token."""
        return self.t_miss_per_token - self.t_hit_per_token


def _noisy(params: LatencyParams, base: float, rng: SeededRNG) -> float:
    if params.noise_sigma <= 0:
        return base
    return base + max(rng.gauss(0.0, params.noise_sigma), -base)


def prefill_ttft(params: LatencyParams, hit_tokens: int, miss_tokens: int, rng: SeededRNG) -> float:
    """
    TTFT of a prefill over hit_tokens cached and miss_tokens uncached tokens.

    Args:
        params: Latency parameters
        hit_tokens: Tokens served from the prefix cache
        miss_tokens: Tokens computed from scratch
        rng: Session noise stream (untouched when noise_sigma is 0)

    Returns:
        Seconds, never negative
    """
    base = (params.t_base
            + hit_tokens * params.t_hit_per_token
            + miss_tokens * params.t_miss_per_token)
    return _noisy(params, base, rng)


def semantic_ttft(params: LatencyParams, hit: bool, rng: SeededRNG) -> float:
    base = params.semantic_hit_latency if hit else params.semantic_miss_latency
    return _noisy(params, base, rng)


def document_ttft(params: LatencyParams, doc_tokens: int, hit: bool, rng: SeededRNG) -> float:
    """TTFT of summarizing a document that is either fully cached or not cached at all."""
    if hit:
        return prefill_ttft(params, doc_tokens, 0, rng)
    return prefill_ttft(params, 0, doc_tokens, rng)


def semantic_threshold(params: LatencyParams) -> float:
    """Midpoint between the semantic hit and miss latencies."""
    return (params.semantic_hit_latency + params.semantic_miss_latency) / 2.0


@dataclass
class NoiseCalibration:
    """
    Noise level and threshold for a single-trial hit/miss classifier.

    The classifier compares the TTFT difference between a target and a miss
    reference; a hit shifts the mean by -gap, and the difference of two
    independent draws has standard deviation sigma * sqrt(2).
    """

    sigma: float
    theta: float
    tpr: float
    fpr: float
    gap: float


def calibrate_noise(params: LatencyParams, tpr: float = 0.88, fpr: float = 0.10,
                    gap_tokens: int = 1) -> NoiseCalibration:
    """
    Pick noise_sigma and theta so the single-trial classifier sits at (tpr, fpr).

    Args:
        params: Latency parameters (the token gap is taken from them)
        tpr: Target true positive rate
        fpr: Target false positive rate
        gap_tokens: Number of uncached tokens that separate hit from miss

    Returns:
        NoiseCalibration with sigma and theta in seconds

    Raises:
        InvalidConfig: If the operating point is unreachable (tpr <= fpr)
    """
    if not (0.0 < fpr < tpr < 1.0):
        raise InvalidConfig(f"Operating point needs 0 < fpr < tpr < 1, got tpr={tpr}, fpr={fpr}")
    unit = NormalDist()
    gap = gap_tokens * params.token_gap
    z_fpr = unit.inv_cdf(fpr)
    z_tpr = unit.inv_cdf(tpr)
    # hit iff delta < theta: fpr = Phi(theta/s), tpr = Phi((theta + gap)/s)
    spread = gap / (z_tpr - z_fpr)
    theta = z_fpr * spread
    calibration = NoiseCalibration(
        sigma=spread / math.sqrt(2.0),
        theta=theta,
        tpr=tpr,
        fpr=fpr,
        gap=gap,
    )
    logger.debug("Calibrated noise sigma=%.6f s theta=%.6f s", calibration.sigma, calibration.theta)
    return calibration


def single_trial_rates(params: LatencyParams, theta: float, gap_tokens: int = 1):
    """
    Analytic (tpr, fpr) of the single-trial classifier at threshold theta.

    Returns:
        Tuple (tpr, fpr)
    """
    spread = params.noise_sigma * math.sqrt(2.0)
    gap = gap_tokens * params.token_gap
    if spread == 0:
        return (1.0 if -gap < theta else 0.0), (1.0 if 0.0 < theta else 0.0)
    unit = NormalDist()
    return unit.cdf((theta + gap) / spread), unit.cdf(theta / spread)
