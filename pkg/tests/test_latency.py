import math
from statistics import NormalDist

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cacheleak.errors import InvalidConfig
from cacheleak.latency import (LatencyParams, calibrate_noise, document_ttft, prefill_ttft, semantic_threshold,
                               semantic_ttft, single_trial_rates)
from cacheleak.rng import SeededRNG

QUIET = LatencyParams(noise_sigma=0.0)


@given(st.integers(min_value=0, max_value=5000), st.integers(min_value=0, max_value=5000))
def test_prefill_is_affine_without_noise(hits, misses):
    expected = QUIET.t_base + hits * QUIET.t_hit_per_token + misses * QUIET.t_miss_per_token
    assert prefill_ttft(QUIET, hits, misses, SeededRNG(0)) == pytest.approx(expected, abs=1e-12)


def test_one_token_gap():
    rng = SeededRNG(0)
    delta = prefill_ttft(QUIET, 10, 1, rng) - prefill_ttft(QUIET, 11, 0, rng)
    assert delta == pytest.approx(QUIET.token_gap, abs=1e-12)
    assert QUIET.token_gap == pytest.approx(0.44978e-3, abs=1e-9)


def test_noise_never_goes_negative():
    params = LatencyParams(noise_sigma=1.0)
    rng = SeededRNG(1)
    assert all(prefill_ttft(params, 0, 1, rng) >= 0.0 for _ in range(500))


def test_noise_is_seeded():
    params = LatencyParams()
    a = [prefill_ttft(params, 3, 4, SeededRNG(9)) for _ in range(3)]
    b = [prefill_ttft(params, 3, 4, SeededRNG(9)) for _ in range(3)]
    assert a == b


def test_semantic_paths():
    rng = SeededRNG(0)
    assert semantic_ttft(QUIET, True, rng) == pytest.approx(0.14)
    assert semantic_ttft(QUIET, False, rng) == pytest.approx(2.5)
    assert semantic_threshold(QUIET) == pytest.approx(1.32)


def test_document_hit_is_faster():
    rng = SeededRNG(0)
    assert document_ttft(QUIET, 12000, True, rng) < 2.0 < document_ttft(QUIET, 12000, False, rng)


def test_calibration_hits_the_operating_point():
    cal = calibrate_noise(LatencyParams())
    assert cal.sigma == pytest.approx(0.1295e-3, abs=1e-6)
    assert cal.theta == pytest.approx(-0.2347e-3, abs=1e-6)
    params = LatencyParams(noise_sigma=cal.sigma)
    tpr, fpr = single_trial_rates(params, cal.theta)
    assert tpr == pytest.approx(0.88, abs=1e-9)
    assert fpr == pytest.approx(0.10, abs=1e-9)


def test_calibration_matches_normal_quantiles():
    cal = calibrate_noise(LatencyParams(), tpr=0.9, fpr=0.05)
    spread = cal.sigma * math.sqrt(2.0)
    assert NormalDist().cdf(cal.theta / spread) == pytest.approx(0.05, abs=1e-9)


def test_unreachable_operating_point():
    with pytest.raises(InvalidConfig):
        calibrate_noise(LatencyParams(), tpr=0.1, fpr=0.2)


def test_hit_cost_must_be_below_miss_cost():
    with pytest.raises(InvalidConfig):
        LatencyParams(t_hit_per_token=1e-3, t_miss_per_token=1e-3).validate()
