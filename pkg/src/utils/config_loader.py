import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Type, TypeVar

import yaml
from pydantic import BaseModel, ValidationError

from src.core.errors import ConfigError


ModelT = TypeVar("ModelT", bound=BaseModel)

GLOBAL_CONFIG_PATH = Path('configs/global_config.yaml')


class ConfigLoader:
    @staticmethod
    def load_global_config(path: str | os.PathLike[str] | None = None) -> Dict[str, Any]:
        cfg_path = Path(path) if path is not None else GLOBAL_CONFIG_PATH
        if not cfg_path.exists():
            cfg: Dict[str, Any] = {
                'system': {'name': 'sparse-ct', 'version': '0.1.0', 'environment': 'development'},
                'logging': {'level': 'INFO', 'dir': 'logs'},
                'runtime': {'threads': None, 'runs_dir': 'runs'},
            }
        else:
            with cfg_path.open('r') as f:
                cfg = yaml.safe_load(f) or {}
            if not isinstance(cfg, dict):
                raise ConfigError(f'global config {cfg_path} must be a mapping, got {type(cfg).__name__}')
        for section in ('system', 'logging', 'runtime'):
            if cfg.get(section) is None:
                cfg[section] = {}
            if not isinstance(cfg[section], dict):
                raise ConfigError(f"global config '{section}' section must be a mapping", key=section)
        # env overrides
        system = cfg['system']
        system['environment'] = os.getenv('ENVIRONMENT', system.get('environment', 'development'))
        log = cfg['logging']
        log['level'] = os.getenv('LOG_LEVEL', log.get('level', 'INFO'))
        runtime = cfg['runtime']
        threads = os.getenv('CT_SPARSE_THREADS')
        if threads:
            runtime['threads'] = threads
        runtime['runs_dir'] = os.getenv('CT_SPARSE_RUNS_DIR', runtime.get('runs_dir', 'runs'))
        experiment = cfg.get('experiment')
        if experiment is not None and not isinstance(experiment, dict):
            raise ConfigError("global config 'experiment' section must be a mapping", key='experiment')
        return cfg


# -- RunConfig: flat ``dotted.key = value`` files ------------------------------------------

def _parse_scalar(text: str) -> Any:
    lowered = text.lower()
    if lowered == 'none':
        return None
    if lowered in ('true', 'false'):
        return lowered == 'true'
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _parse_value(text: str) -> Any:
    text = text.strip()
    if ',' in text:
        return [_parse_scalar(part.strip()) for part in text.split(',') if part.strip()]
    return _parse_scalar(text)


def _format_value(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        # a trailing comma keeps one-element lists as lists
        return ','.join(_format_value(v) for v in value) + (',' if len(value) < 2 else '')
    return str(value)


def flatten(data: Mapping[str, Any], prefix: str = '') -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in data.items():
        full = f'{prefix}.{key}' if prefix else key
        if isinstance(value, Mapping):
            out.update(flatten(value, full))
        else:
            out[full] = value
    return out


def set_dotted(tree: Dict[str, Any], key: str, value: Any) -> None:
    """Assign into a nested dict; every path segment must already exist."""
    parts = key.split('.')
    node: Any = tree
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node or not isinstance(node[part], dict):
            raise ConfigError(f'unknown config key {key!r}', key=key)
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f'unknown config key {key!r}', key=key)
    if value is None and isinstance(node[parts[-1]], str):
        # 'none' is also a legal literal of text fields (attention = none)
        value = 'none'
    node[parts[-1]] = value


def parse_run_config(text: str) -> Dict[str, Any]:
    """Parse ``key = value`` lines into a flat {dotted key: value} dict."""
    entries: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'line {lineno}: expected "key = value", got {raw.strip()!r}')
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f'line {lineno}: empty key')
        entries[key] = _parse_value(value)
    return entries


def serialize_run_config(model: BaseModel) -> str:
    flat = flatten(model.model_dump(mode='json'))
    return ''.join(f'{key} = {_format_value(value)}\n' for key, value in flat.items())


def _error_key(exc: ValidationError) -> str | None:
    errors = exc.errors()
    if not errors:
        return None
    return '.'.join(str(p) for p in errors[0].get('loc', ()) if not isinstance(p, int)) or None


def build_model(model_cls: Type[ModelT], base: Mapping[str, Any], overrides: Mapping[str, Any]) -> ModelT:
    """Validate ``base`` with flat dotted ``overrides`` applied; failures become ConfigError."""
    tree = json.loads(json.dumps(base))
    for key, value in overrides.items():
        set_dotted(tree, key, value)
    try:
        return model_cls.model_validate(tree)
    except ValidationError as exc:
        key = _error_key(exc)
        raise ConfigError(f'invalid configuration at {key or "<root>"}: {exc.errors()[0]["msg"]}', key=key) from exc


def config_hash(model: BaseModel) -> str:
    canonical = json.dumps(model.model_dump(mode='json'), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


__all__ = [
    'ConfigLoader',
    'parse_run_config',
    'serialize_run_config',
    'build_model',
    'config_hash',
    'flatten',
    'set_dotted',
]
