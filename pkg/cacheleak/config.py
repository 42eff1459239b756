"""
Experiment configuration

Values are resolved in this order, later wins:
1. Dataclass defaults
2. TOML file (--config)
3. CACHELEAK_* environment variables (a .env file is loaded first)
4. Command-line flags (--section-key)

Durations are seconds in code; in files, environment and flags their keys
carry the unit suffix declared on the field (t_base_ms, settle_delay_s).
"""

import dataclasses
import logging
import os
import tomllib
import typing
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

from dotenv import load_dotenv

from .anonymizer import AnonymizeConfig
from .corpus import CorpusConfig
from .engine import ServerConfig
from .errors import InvalidConfig
from .kgran import KSweepConfig
from .latency import LatencyParams
from .pna import DocConfig, PnaConfig
from .prefix_cache import PrefixCacheConfig
from .probe import VoteConfig
from .psa import PsaConfig
from .roc import RocConfig
from .semantic_cache import SemanticCacheConfig

logger = logging.getLogger(__name__)

SCENARIOS = ('psa', 'pna', 'doc', 'ksweep', 'anonymize', 'roc-kv', 'roc-semantic')
ENV_PREFIX = 'CACHELEAK_'
UNIT_SCALE = {'s': 1.0, 'ms': 1e-3, 'us': 1e-6}
TOP_LEVEL = ('scenario', 'seed', 'output_dir', 'debug')

# Nested sections bound elsewhere; psa.vote always mirrors [vote].
BOUND_FIELDS = {('psa', 'vote')}


@dataclass
class ExperimentConfig:
    scenario: str = 'psa'
    seed: int = 0
    output_dir: str = 'results'
    debug: bool = False
    latency: LatencyParams = field(default_factory=LatencyParams)
    kv_cache: PrefixCacheConfig = field(default_factory=PrefixCacheConfig)
    semantic_cache: SemanticCacheConfig = field(default_factory=SemanticCacheConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    vote: VoteConfig = field(default_factory=VoteConfig)
    psa: PsaConfig = field(default_factory=PsaConfig)
    pna: PnaConfig = field(default_factory=PnaConfig)
    doc: DocConfig = field(default_factory=DocConfig)
    ksweep: KSweepConfig = field(default_factory=KSweepConfig)
    anonymize: AnonymizeConfig = field(default_factory=AnonymizeConfig)
    roc: RocConfig = field(default_factory=RocConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    def __post_init__(self):
        self.psa.vote = self.vote

    def validate(self) -> None:
        """
        Raises:
            InvalidConfig: If the scenario or any section is invalid
        """
        if self.scenario not in SCENARIOS:
            raise InvalidConfig(f"Unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        self.psa.vote = self.vote
        for name in section_names():
            getattr(self, name).validate()


def section_names() -> List[str]:
    return [f.name for f in dataclasses.fields(ExperimentConfig) if f.name not in TOP_LEVEL]


@dataclass(frozen=True)
class ConfigKey:
    """One settable value: `section.key` in files, --section-key on the command line."""

    section: str
    key: str
    path: Tuple[str, ...]
    type: Any
    scale: float

    @property
    def dotted(self) -> str:
        return f"{self.section}.{self.key}" if self.section else self.key

    @property
    def flag(self) -> str:
        return '--' + self.dotted.replace('.', '-').replace('_', '-')

    @property
    def env_name(self) -> str:
        return ENV_PREFIX + self.dotted.replace('.', '_').upper()


def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _section_keys(section: str, cls: type, prefix: Tuple[str, ...]) -> Iterator[ConfigKey]:
    hints = typing.get_type_hints(cls)
    for f in dataclasses.fields(cls):
        if (section, f.name) in BOUND_FIELDS:
            continue
        tp = hints[f.name]
        if _is_dataclass_type(tp):
            # nested settings live flat in the parent section
            yield from _section_keys(section, tp, prefix + (f.name,))
            continue
        unit = f.metadata.get('unit')
        key = f"{f.name}_{unit}" if unit else f.name
        yield ConfigKey(section, key, prefix + (f.name,), tp, UNIT_SCALE[unit] if unit else 1.0)


def config_keys() -> List[ConfigKey]:
    """Every settable key, top-level keys first."""
    hints = typing.get_type_hints(ExperimentConfig)
    keys = [ConfigKey('', name, (name,), hints[name], 1.0) for name in TOP_LEVEL]
    for name in section_names():
        keys.extend(_section_keys(name, hints[name], (name,)))
    return keys


def _coerce(key: ConfigKey, value: Any) -> Any:
    """Convert a TOML value or a string to the key's type, applying the unit scale."""
    tp = key.type
    origin = typing.get_origin(tp)
    try:
        if origin in (list, List):
            (item_type,) = typing.get_args(tp)
            if isinstance(value, str):
                value = [v for v in (p.strip() for p in value.split(',')) if v]
            return [item_type(v) for v in value]
        if tp is bool:
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                    raise ValueError(f"not a boolean: {value!r}")
                return lowered in ('true', '1', 'yes')
            return bool(value)
        if tp is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"not an integer: {value!r}")
            return int(value)
        if tp is float:
            return float(value) * key.scale
        return str(value)
    except (TypeError, ValueError) as e:
        raise InvalidConfig(f"Bad value for {key.dotted}: {e}") from e


def _assign(config: ExperimentConfig, key: ConfigKey, value: Any) -> None:
    target: Any = config
    for name in key.path[:-1]:
        target = getattr(target, name)
    setattr(target, key.path[-1], _coerce(key, value))


def _flatten_toml(data: Mapping[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for name, value in data.items():
        if isinstance(value, dict):
            for key, inner in value.items():
                flat[f"{name}.{key}"] = inner
        else:
            flat[name] = value
    return flat


def apply_values(config: ExperimentConfig, values: Mapping[str, Any], source: str) -> None:
    """
    Apply dotted-key values to a config.

    Raises:
        InvalidConfig: On unknown keys or unconvertible values
    """
    keys = {k.dotted: k for k in config_keys()}
    for dotted, value in values.items():
        key = keys.get(dotted)
        if key is None:
            raise InvalidConfig(f"Unknown setting {dotted!r} in {source}")
        _assign(config, key, value)


def read_toml(path: str) -> Dict[str, Any]:
    """
    Raises:
        InvalidConfig: If the file is missing or not valid TOML
    """
    try:
        with open(path, 'rb') as f:
            return _flatten_toml(tomllib.load(f))
    except FileNotFoundError as e:
        raise InvalidConfig(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise InvalidConfig(f"Config file {path} is not valid TOML: {e}") from e


def env_values(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """CACHELEAK_* variables that name a known key, as dotted keys."""
    environ = os.environ if environ is None else environ
    values = {}
    for key in config_keys():
        if key.env_name in environ:
            values[key.dotted] = environ[key.env_name]
    return values


def load_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None,
                environ: Optional[Mapping[str, str]] = None, use_dotenv: bool = True) -> ExperimentConfig:
    """
    Resolve the experiment configuration.

    Args:
        path: Optional TOML file
        overrides: Dotted-key values from the command line
        environ: Environment mapping (defaults to os.environ)
        use_dotenv: Load a .env file into the environment first

    Returns:
        Validated ExperimentConfig

    Raises:
        InvalidConfig: On unknown keys, bad values or failed validation
    """
    if use_dotenv and environ is None:
        load_dotenv()
    config = ExperimentConfig()
    if path:
        apply_values(config, read_toml(path), path)
        logger.debug("Loaded config file %s", path)
    apply_values(config, env_values(environ), 'environment')
    if overrides:
        apply_values(config, overrides, 'command line')
    config.validate()
    return config


def to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Resolved settings as dotted key -> value in config-file units."""
    result = {}
    for key in config_keys():
        value: Any = config
        for name in key.path:
            value = getattr(value, name)
        if key.type is float and key.scale != 1.0:
            value = value / key.scale
        result[key.dotted] = value
    return result
