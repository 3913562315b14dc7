"""
Configuration module for gapmor.
Handles TOML parsing, setting precedence and sweep specifications.
"""

import toml
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .reduction import BALANCINGS, INITS, METHODS

CONFIG_FILENAME = "gapmor.toml"

METRICS = ("h2gap", "linfgap")
FORMATS = ("csv", "markdown")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

DEFAULTS: Dict[str, Any] = {
    'tol': 1e-6,
    'max_iter': 100,
    'seed': 0,
    'methods': list(METHODS),
    'orders': None,
    'metrics': ['h2gap'],
    'format': 'csv',
    'workers': 1,
    'balancing': 'lc-lo',
    'init': 'spectrum',
    'log_level': None,
    'nx': 20,
}


class ConfigError(Exception):
    """Base exception for configuration errors."""
    pass


class InvalidSweepError(ConfigError):
    """Raised when a sweep specification violates its constraints."""
    pass


@dataclass
class SweepSpec:
    """
    Everything a sweep needs besides the system itself.

    Attributes:
        source: System file path, or None for the generated benchmark
        methods: Reduction methods to run
        orders: Reduced orders, each in [1, n)
        metrics: Gap metrics to evaluate
    """
    source: Optional[str]
    methods: List[str]
    orders: List[int]
    metrics: List[str]
    tol: float = 1e-6
    max_iter: int = 100
    seed: int = 0
    fmt: str = "csv"
    workers: int = 1
    balancing: str = "lc-lo"
    init: str = "spectrum"
    nx: int = 20


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load and parse a gapmor.toml configuration file.

    Args:
        path: Explicit config path; when None, gapmor.toml in the working
            directory is used if it exists

    Returns:
        Parsed configuration dictionary (empty when no file is found)

    Raises:
        ConfigError: If an explicit path is missing or the TOML is invalid
    """
    if path is None:
        config_path = Path.cwd() / CONFIG_FILENAME
        if not config_path.exists():
            return {}
    else:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, 'r') as f:
            return toml.load(f)
    except toml.TomlDecodeError as e:
        raise ConfigError(f"Invalid TOML syntax in {config_path}: {e}")


def parse_orders(value: Union[str, int, List[int], None]) -> List[int]:
    """
    Parse reduced orders from "1-12", "1,2,5", "1-3,8" or a list.

    Raises:
        ConfigError: If the value is empty or malformed
    """
    if value is None:
        raise ConfigError("No reduced orders given")
    if isinstance(value, int):
        return [value]
    if isinstance(value, (list, tuple)):
        orders = [int(v) for v in value]
    else:
        orders = []
        for part in str(value).split(','):
            part = part.strip()
            if not part:
                continue
            try:
                if '-' in part:
                    lo, hi = (int(x) for x in part.split('-', 1))
                    if hi < lo:
                        raise ConfigError(f"Empty order range: {part}")
                    orders.extend(range(lo, hi + 1))
                else:
                    orders.append(int(part))
            except ValueError:
                raise ConfigError(f"Invalid order specification: {part}")
    if not orders:
        raise ConfigError("No reduced orders given")
    return sorted(set(orders))


def parse_list(value: Union[str, List[str], None]) -> List[str]:
    """Split a comma-separated string (or pass a list through)."""
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(',') if v.strip()]
    return [str(v) for v in value]


def validate_config(config: Dict[str, Any]) -> List[str]:
    """
    Validate a configuration and return any warnings.

    Args:
        config: Parsed configuration dictionary

    Returns:
        List of warning messages (empty if valid)
    """
    warnings = []

    for key in config:
        if key not in DEFAULTS:
            warnings.append(f"Unknown key '{key}'")

    tol = config.get('tol')
    if tol is not None and (not isinstance(tol, (int, float)) or tol <= 0):
        warnings.append(f"'tol' must be a positive number, got {tol!r}")

    for key in ('max_iter', 'workers', 'nx'):
        value = config.get(key)
        if value is not None and (not isinstance(value, int) or value < 1):
            warnings.append(f"'{key}' must be a positive integer, got {value!r}")

    seed = config.get('seed')
    if seed is not None and (not isinstance(seed, int) or seed < 0):
        warnings.append(f"'seed' must be a nonnegative integer, got {seed!r}")

    for key, allowed in (('methods', METHODS), ('metrics', METRICS)):
        for item in parse_list(config.get(key)):
            if item not in allowed:
                warnings.append(f"Unknown entry '{item}' in '{key}'")

    for key, allowed in (('format', FORMATS), ('balancing', BALANCINGS), ('init', INITS)):
        value = config.get(key)
        if value is not None and value not in allowed:
            warnings.append(f"'{key}' must be one of {', '.join(allowed)}, got {value!r}")

    level = config.get('log_level')
    if level is not None and str(level).upper() not in LOG_LEVELS:
        warnings.append(f"Unknown log level '{level}'")

    if config.get('orders') is not None:
        try:
            parse_orders(config['orders'])
        except (ConfigError, ValueError) as e:
            warnings.append(f"Invalid 'orders': {e}")

    return warnings


def resolve_settings(config: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Merge defaults, config file values and command-line overrides.

    Overrides whose value is None (or an empty tuple from a repeatable
    option) are treated as not given.
    """
    settings = dict(DEFAULTS)
    settings.update({k: v for k, v in config.items() if k in DEFAULTS})
    for key, value in (overrides or {}).items():
        if value is None or value == ():
            continue
        settings[key] = value
    return settings


def build_sweep_spec(settings: Dict[str, Any], n: int, source: Optional[str] = None) -> SweepSpec:
    """
    Build and check a SweepSpec for a system of order n.

    Raises:
        InvalidSweepError: If a SweepSpec constraint is violated
    """
    try:
        orders = parse_orders(settings.get('orders'))
    except ConfigError as e:
        raise InvalidSweepError(str(e))
    bad = [r for r in orders if not 1 <= r < n]
    if bad:
        raise InvalidSweepError(f"Orders must satisfy 1 <= r < {n}, got {bad}")

    methods = parse_list(settings.get('methods'))
    metrics = parse_list(settings.get('metrics'))
    if not methods:
        raise InvalidSweepError("At least one method is required")
    if not metrics:
        raise InvalidSweepError("At least one metric is required")
    for item in methods:
        if item not in METHODS:
            raise InvalidSweepError(f"Unknown method '{item}'")
    for item in metrics:
        if item not in METRICS:
            raise InvalidSweepError(f"Unknown metric '{item}'")

    fmt = settings.get('format', 'csv')
    if fmt not in FORMATS:
        raise InvalidSweepError(f"Unknown format '{fmt}'")
    if settings.get('balancing', 'lc-lo') not in BALANCINGS:
        raise InvalidSweepError(f"Unknown balancing '{settings.get('balancing')}'")
    if settings.get('init', 'spectrum') not in INITS:
        raise InvalidSweepError(f"Unknown initialization '{settings.get('init')}'")
    if settings['tol'] <= 0 or settings['max_iter'] < 1 or settings['workers'] < 1:
        raise InvalidSweepError("tol, max_iter and workers must be positive")

    return SweepSpec(
        source=source,
        methods=[m for m in METHODS if m in methods],
        orders=orders,
        metrics=[m for m in METRICS if m in metrics],
        tol=float(settings['tol']),
        max_iter=int(settings['max_iter']),
        seed=int(settings['seed']),
        fmt=fmt,
        workers=int(settings['workers']),
        balancing=settings['balancing'],
        init=settings['init'],
        nx=int(settings['nx']),
    )
