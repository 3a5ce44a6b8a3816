"""
Solver Configuration
Built-in defaults, key=value config files and HEAFA_ environment overrides
"""

import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv

from engine import EngineConfig
from errors import ConfigError
from search import OperatorConfig
from surrogate import SurrogateConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = 'HEAFA_'
LOG_FORMAT = '[%(asctime)s] %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f"expected true/false, got '{raw}'")


def _parse_optional_int(raw: str) -> Optional[int]:
    if raw.strip().lower() in ('', 'none', 'auto'):
        return None
    return int(raw)


def _parse_level(raw: str) -> str:
    level = raw.strip().upper()
    if level not in LOG_LEVELS:
        raise ValueError(f"expected one of {LOG_LEVELS}")
    return level


PARSERS: Dict[str, Callable[[str], Any]] = {
    'population': int,
    't_max': int,
    't_nip_max': int,
    'elite_fraction': float,
    'pc_min': float,
    'pc_max': float,
    'pm_min': float,
    'pm_max': float,
    'hidden_nodes': _parse_optional_int,
    'activation': str.strip,
    'normalize_targets': _parse_bool,
    'local_search': _parse_bool,
    'ls_compare': str.strip,
    'depot_index': str.strip,
    'restart_threshold': float,
    'restart_fraction': float,
    'workers': int,
    'log_level': _parse_level,
}


def default_settings() -> Dict[str, Any]:
    engine = EngineConfig()
    return {
        'population': engine.population_size,
        't_max': engine.t_max,
        't_nip_max': engine.t_nip_max,
        'elite_fraction': engine.elite_fraction,
        'pc_min': engine.operators.pc_min,
        'pc_max': engine.operators.pc_max,
        'pm_min': engine.operators.pm_min,
        'pm_max': engine.operators.pm_max,
        'hidden_nodes': engine.surrogate.hidden_nodes,
        'activation': engine.surrogate.activation,
        'normalize_targets': engine.surrogate.normalize_targets,
        'local_search': engine.local_search,
        'ls_compare': engine.ls_compare,
        'depot_index': engine.depot_index,
        'restart_threshold': engine.restart_threshold,
        'restart_fraction': engine.restart_fraction,
        'workers': engine.workers,
        'log_level': 'INFO',
    }


def parse_value(key: str, raw: Any) -> Any:
    if key not in PARSERS:
        raise ConfigError(f"Unknown configuration key '{key}'", key=key)
    if not isinstance(raw, str):
        return raw
    try:
        return PARSERS[key](raw)
    except ValueError as e:
        raise ConfigError(f"Invalid value for '{key}': {e}", key=key) from e


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Parse a key=value config file

    Raises:
        FileNotFoundError: path does not exist
        ConfigError: unknown key, key without value or unparsable value
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")

    settings = {}
    for key, raw in dotenv_values(path).items():
        key = key.strip().lower()
        if raw is None:
            raise ConfigError(f"Config key '{key}' has no value", key=key)
        settings[key] = parse_value(key, raw)
    logger.debug(f"Loaded {len(settings)} settings from {path}")
    return settings


def read_environment(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """Collect HEAFA_<KEY> overrides for every recognised key"""
    environ = os.environ if environ is None else environ
    settings = {}
    for key in PARSERS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None and raw != '':
            settings[key] = parse_value(key, raw)
    return settings


def load_settings(config_path: Optional[Union[str, Path]] = None,
                  overrides: Optional[Mapping[str, Any]] = None,
                  environ: Optional[Mapping[str, str]] = None,
                  use_dotenv: bool = True) -> Dict[str, Any]:
    """
    Merge the configuration layers

    Precedence, lowest first: defaults, config file, environment, overrides.
    Overrides whose value is None are ignored.

    Args:
        config_path: Optional key=value file
        overrides: Explicit values, normally the CLI flags
        environ: Environment mapping; os.environ when omitted
        use_dotenv: Load a .env file into os.environ first
    """
    if use_dotenv and environ is None:
        load_dotenv()

    settings = default_settings()
    if config_path:
        settings.update(read_config_file(config_path))
    settings.update(read_environment(environ))
    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = parse_value(key, value)
    return settings


def build_engine_config(settings: Mapping[str, Any], seed: int = 0, mode: str = 'hea_fa') -> EngineConfig:
    """Turn merged settings into the library's config dataclasses"""
    operators = OperatorConfig(
        pc_min=settings['pc_min'],
        pc_max=settings['pc_max'],
        pm_min=settings['pm_min'],
        pm_max=settings['pm_max'],
    )
    surrogate = SurrogateConfig(
        hidden_nodes=settings['hidden_nodes'],
        activation=settings['activation'],
        normalize_targets=settings['normalize_targets'],
    )
    return EngineConfig(
        population_size=settings['population'],
        t_max=settings['t_max'],
        t_nip_max=settings['t_nip_max'],
        elite_fraction=settings['elite_fraction'],
        seed=seed,
        mode=mode,
        operators=operators,
        surrogate=surrogate,
        local_search=settings['local_search'],
        ls_compare=settings['ls_compare'],
        depot_index=settings['depot_index'],
        restart_threshold=settings['restart_threshold'],
        restart_fraction=settings['restart_fraction'],
        workers=settings['workers'],
    )


def configure_logging(level: str = 'INFO') -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        force=True,
    )
