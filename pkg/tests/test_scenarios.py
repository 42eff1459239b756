import csv

import pytest

from cacheleak.config import load_config
from cacheleak.psa import SUMMARY_FIELDS
from cacheleak.scenarios import ROC_SUMMARY_FIELDS, run

SMALL = {
    'corpus.n_prompts': '20',
    'corpus.victim_fraction': '0.1',
    'corpus.min_length': '5',
    'corpus.max_length': '8',
    'kv_cache.capacity_tokens': '256',
    'vote.n': '3',
    'vote.k': '2',
    'psa.eviction_count': '3',
    'psa.eviction_tokens': '100',
    'psa.max_guesses_per_position': '3',
    'psa.victims': '1',
    'psa.calibrate_noise': 'false',
    'latency.noise_sigma_ms': '0',
    'pna.rounds': '2',
    'pna.eviction': 'flush',
    'doc.lengths': '5000',
    'doc.interested': '4',
    'doc.uploads': '2',
    'doc.repetitions': '1',
    'doc.kv_capacity_tokens': '100000',
    'ksweep.k_values': '1,2',
    'ksweep.victims': '1',
    'ksweep.max_guesses_per_position': '5',
    'anonymize.sentences': '20',
    'anonymize.sharing_pairs': '10',
    'anonymize.pna_rounds': '1',
    'roc.shared_tokens': '1,2',
    'roc.prompt_length': '16',
    'roc.trials': '20',
    'roc.profile_lengths': '1,10',
    'roc.semantic_targets': '2',
}


def small_config(scenario, output_dir, **extra):
    values = dict(SMALL, scenario=scenario, output_dir=str(output_dir))
    values.update(extra)
    return load_config(overrides=values, environ={})


def read_header(path):
    with open(path, newline='', encoding='utf-8') as f:
        return next(csv.reader(f))


def test_psa_without_noise_has_no_false_accepts(tmp_path):
    result = run(small_config('psa', tmp_path))
    assert read_header(tmp_path / "summary.csv") == SUMMARY_FIELDS
    assert (tmp_path / "trace.jsonl").exists()
    assert (tmp_path / "samples.csv").exists()
    by_name = {c.name: c for c in result.checks}
    assert by_name['no false accepts without noise'].passed


# Larger attacker split and the default vote; slow but exercises the real budgets.
PSA_REGIME = {
    'corpus.n_prompts': '3000',
    'corpus.victim_fraction': '0.01',
    'corpus.min_length': '40',
    'corpus.max_length': '50',
    'vote.n': '10',
    'vote.k': '5',
    'psa.max_guesses_per_position': '80',
    'psa.victims': '3',
}


def test_psa_without_noise_meets_accuracy_and_query_targets(tmp_path):
    result = run(small_config('psa', tmp_path, **PSA_REGIME))
    failed = [(c.name, c.detail) for c in result.checks if not c.passed]
    assert failed == []
    assert {c.name for c in result.checks} == {
        'accuracy >= 0.85', 'queries per recovered token in [50, 400]', 'no false accepts without noise'}


@pytest.mark.parametrize("scenario", ['psa', 'ksweep', 'roc-semantic'])
def test_summary_is_reproducible(tmp_path, scenario):
    run(small_config(scenario, tmp_path / "a"))
    run(small_config(scenario, tmp_path / "b"))
    first = (tmp_path / "a" / "summary.csv").read_bytes()
    assert first == (tmp_path / "b" / "summary.csv").read_bytes()


def test_pna_writes_rounds_and_probes(tmp_path):
    result = run(small_config('pna', tmp_path))
    assert read_header(tmp_path / "summary.csv") == ['probe_count', 'tpr', 'fpr_type2', 'fpr_type3', 'fpr_type4']
    assert len(result.summary_rows) == 5
    assert len((tmp_path / "trace.jsonl").read_text().splitlines()) == 5
    assert result.checks[0].passed


def test_pna_meets_its_targets_over_enough_rounds(tmp_path):
    result = run(small_config('pna', tmp_path, **{'pna.rounds': '60'}))
    failed = [(c.name, c.detail) for c in result.checks if not c.passed]
    assert failed == []
    tprs = [float(row['tpr']) for row in result.summary_rows]
    assert tprs == sorted(tprs)


@pytest.mark.parametrize('sigma_ms', ['0', '0.05'])
def test_doc_scenario_separates_uploads(tmp_path, sigma_ms):
    result = run(small_config('doc', tmp_path, **{'latency.noise_sigma_ms': sigma_ms}))
    assert result.passed
    assert read_header(tmp_path / "probes.csv")[0] == 'repetition'


def test_ksweep_reports_one_row_per_k(tmp_path):
    result = run(small_config('ksweep', tmp_path))
    assert [row['K'] for row in result.summary_rows] == [1, 2]


def test_ksweep_trends_hold_across_granularities(tmp_path):
    # the first block is K-1 long, so 22 tokens leave 0, 1, 2, 3 trailing for K = 1..4
    overrides = {
        'corpus.n_prompts': '3000',
        'corpus.victim_fraction': '0.02',
        'corpus.min_length': '22',
        'corpus.max_length': '22',
        'ksweep.k_values': '1,2,3,4',
        'ksweep.victims': '60',
        'ksweep.max_guesses_per_position': '80',
    }
    result = run(small_config('ksweep', tmp_path, **overrides))
    failed = [(c.name, c.detail) for c in result.checks if not c.passed]
    assert failed == []
    recovery = [float(row['recovery_rate']) for row in result.summary_rows]
    assert recovery[0] == 1.0


def test_anonymize_round_trip_and_overhead(tmp_path):
    result = run(small_config('anonymize', tmp_path, **{'anonymize.pna_rounds': '20'}))
    by_name = {c.name: c for c in result.checks}
    assert by_name['round trip exact'].passed
    assert by_name['sharing increases with anonymization'].passed
    assert by_name['attribute advantage < 0.05'].passed, by_name['attribute advantage < 0.05'].detail
    assert read_header(tmp_path / "overhead.csv") == ['sentences', 'mean_overhead_ms', 'semantic_hit_ms', 'ratio']


def test_roc_kv_timing_law(tmp_path):
    result = run(small_config('roc-kv', tmp_path))
    assert read_header(tmp_path / "summary.csv") == ROC_SUMMARY_FIELDS
    by_name = {c.name: c for c in result.checks}
    assert by_name['per-token gap independent of length'].passed
    assert by_name['vote TPR >= 0.99 and FPR <= 0.01'].passed
    assert (tmp_path / "profile.csv").exists()


def test_roc_semantic_separates_attribute_changes(tmp_path):
    result = run(small_config('roc-semantic', tmp_path))
    series = [row['series'] for row in result.summary_rows]
    assert series == ['both_differ', 'one_differ']
    aucs = {row['series']: float(row['auc']) for row in result.summary_rows}
    assert aucs['both_differ'] >= aucs['one_differ']
    failed = [(c.name, c.detail) for c in result.checks if not c.passed]
    assert failed == []
