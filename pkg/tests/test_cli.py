import csv
import os

import pytest

from cacheleak.cli import EXIT_ASSERT, EXIT_ERROR, EXIT_OK, build_parser, main


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """Keep .env files and CACHELEAK_* variables of the host out of the tests."""
    monkeypatch.chdir(tmp_path)
    for name in list(os.environ):
        if name.startswith('CACHELEAK_'):
            monkeypatch.delenv(name)


def test_every_config_key_is_a_flag():
    args = build_parser().parse_args(['attack', 'psa', '--vote-n', '4', '--latency-t-base-ms', '1.5'])
    assert getattr(args, 'set:vote.n') == '4'
    assert getattr(args, 'set:latency.t_base_ms') == '1.5'


def test_roc_from_samples_file(tmp_path, capsys):
    samples = tmp_path / "samples.csv"
    with open(samples, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['score', 'label'])
        writer.writerows([[0.9, 1], [0.7, 1], [0.4, 0], [0.1, 0]])
    out = tmp_path / "out"
    assert main(['roc', '--input', str(samples), '--output-dir', str(out)]) == EXIT_OK
    assert (out / "roc.csv").exists()
    assert "AUC: 1.0000" in capsys.readouterr().out


def test_roc_needs_a_kind_or_input():
    assert main(['roc']) == EXIT_ASSERT


def test_invalid_config_is_an_error(capsys):
    assert main(['attack', 'psa', '--vote-k', '50']) == EXIT_ERROR
    assert "ERROR:" in capsys.readouterr().out


def test_failed_check_with_assert_exits_2(tmp_path):
    # a doc threshold below every hit TTFT makes every probe a miss
    argv = ['attack', 'doc', '--output-dir', str(tmp_path / "doc"), '--doc-lengths', '200',
            '--doc-interested', '4', '--doc-uploads', '2', '--doc-repetitions', '1',
            '--doc-threshold-s', '0.0001', '--latency-noise-sigma-ms', '0']
    assert main(argv) == EXIT_OK
    assert main(argv + ['--assert']) == EXIT_ASSERT


def test_mitigate_ksweep_writes_summary(tmp_path):
    argv = ['mitigate', 'ksweep', '--output-dir', str(tmp_path / "k"),
            '--ksweep-k-values', '1,2', '--ksweep-victims', '1', '--ksweep-max-guesses-per-position', '5',
            '--corpus-n-prompts', '20', '--corpus-victim-fraction', '0.1',
            '--corpus-min-length', '5', '--corpus-max-length', '8',
            '--psa-calibrate-noise', 'false', '--latency-noise-sigma-ms', '0']
    assert main(argv) == EXIT_OK
    assert (tmp_path / "k" / "summary.csv").exists()


def test_check_command_runs_in_process(capsys):
    assert main(['check']) == EXIT_OK
    assert "Test Results: 4/4 passed" in capsys.readouterr().out
