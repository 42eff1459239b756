import pytest

from cacheleak.config import ExperimentConfig, config_keys, env_values, load_config, to_dict
from cacheleak.errors import InvalidConfig

TOML = """
scenario = "pna"
seed = 11

[latency]
t_base_ms = 3.0
noise_sigma_ms = 0.1

[vote]
n = 6
k = 3

[pna]
sigma_budget = 0.05
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "experiment.toml"
    path.write_text(TOML)
    return str(path)


def test_defaults_validate():
    cfg = load_config(environ={})
    assert cfg.scenario == 'psa'
    assert cfg.kv_cache.capacity_tokens == 2048
    assert cfg.psa.vote is cfg.vote


def test_file_values_are_scaled_to_seconds(config_file):
    cfg = load_config(config_file, environ={})
    assert cfg.scenario == 'pna'
    assert cfg.seed == 11
    assert cfg.latency.t_base == pytest.approx(3e-3)
    assert cfg.latency.noise_sigma == pytest.approx(1e-4)
    assert cfg.pna.greedy.sigma_budget == pytest.approx(0.05)
    assert cfg.psa.vote.n == 6


def test_precedence_file_env_flags(config_file):
    environ = {'CACHELEAK_SEED': '12', 'CACHELEAK_VOTE_N': '8'}
    cfg = load_config(config_file, overrides={'vote.n': '4'}, environ=environ)
    assert cfg.seed == 12
    assert cfg.vote.n == 4


def test_list_and_bool_values_from_strings():
    cfg = load_config(overrides={'ksweep.k_values': '1, 3', 'psa.cross_verify': 'false'}, environ={})
    assert cfg.ksweep.k_values == [1, 3]
    assert cfg.psa.cross_verify is False


def test_unknown_key_is_rejected():
    with pytest.raises(InvalidConfig):
        load_config(overrides={'latency.t_base': '2'}, environ={})


def test_bad_value_is_rejected():
    with pytest.raises(InvalidConfig):
        load_config(overrides={'vote.n': 'ten'}, environ={})
    with pytest.raises(InvalidConfig):
        load_config(overrides={'psa.cross_verify': 'maybe'}, environ={})


def test_failed_validation_is_reported():
    with pytest.raises(InvalidConfig):
        load_config(overrides={'vote.k': '20'}, environ={})
    with pytest.raises(InvalidConfig):
        load_config(overrides={'scenario': 'nope'}, environ={})


def test_missing_or_broken_file(tmp_path):
    with pytest.raises(InvalidConfig):
        load_config(str(tmp_path / "absent.toml"), environ={})
    broken = tmp_path / "broken.toml"
    broken.write_text("[latency\n")
    with pytest.raises(InvalidConfig):
        load_config(str(broken), environ={})


def test_keys_carry_units_and_flags():
    keys = {k.dotted: k for k in config_keys()}
    assert 'latency.t_hit_per_token_us' in keys
    assert keys['latency.t_hit_per_token_us'].scale == pytest.approx(1e-6)
    assert keys['pna.sigma_budget'].flag == '--pna-sigma-budget'
    assert keys['psa.settle_delay_s'].env_name == 'CACHELEAK_PSA_SETTLE_DELAY_S'
    assert 'psa.vote' not in keys


def test_env_values_ignore_unrelated_variables():
    assert env_values({'CACHELEAK_NOPE': '1', 'HOME': '/root', 'CACHELEAK_SEED': '3'}) == {'seed': '3'}


def test_to_dict_reports_config_units():
    values = to_dict(ExperimentConfig())
    assert values['latency.t_miss_per_token_ms'] == pytest.approx(0.45)
    assert values['semantic_cache.threshold'] == 0.8


def test_shipped_config_loads():
    from pathlib import Path

    path = Path(__file__).resolve().parent.parent / "configs" / "experiment.toml"
    cfg = load_config(str(path), environ={})
    assert cfg.seed == 7
    assert cfg.server.admin is True
