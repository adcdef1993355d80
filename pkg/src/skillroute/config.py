"""Service configuration: defaults < config file < environment < explicit overrides.

The config file is a JSON object whose keys mirror :class:`ServiceConfig`
fields. Environment variables use the ``SKILLROUTE_`` prefix (upper-cased
field name); credentials for LLM providers are environment-only and never
belong in a config file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from skillroute.core import ArgumentError

ENV_PREFIX = "SKILLROUTE_"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8100
    bundles: tuple[str, ...] = ()
    fleet_path: str | None = None
    journal_path: str | None = None
    review_threshold: float = 0.65
    request_limit_bytes: int = 16384
    log_level: str = "info"

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ArgumentError(f"port must be in (0, 65536), got {self.port}")
        if self.request_limit_bytes < 1:
            raise ArgumentError("request_limit_bytes must be >= 1")
        if not 0.0 <= self.review_threshold <= 1.0:
            raise ArgumentError("review_threshold must lie in [0, 1]")


_FIELD_NAMES = {f.name for f in fields(ServiceConfig)}


def _coerce(name: str, value: object) -> object:
    if name == "port" or name == "request_limit_bytes":
        return int(value)
    if name == "review_threshold":
        return float(value)
    if name == "bundles":
        if isinstance(value, str):
            return tuple(p for p in value.split(os.pathsep) if p)
        return tuple(str(p) for p in value)
    if name in ("fleet_path", "journal_path"):
        return str(value) if value is not None else None
    return str(value)


def load_service_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    **overrides,
) -> ServiceConfig:
    """Assemble a ServiceConfig; unknown file keys are a hard error.

    Precedence, lowest to highest: dataclass defaults, config file, environment
    (``SKILLROUTE_<FIELD>``), keyword overrides (CLI flags).
    """
    env = os.environ if env is None else env
    values: dict[str, object] = {}

    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ArgumentError("config file must hold a JSON object")
        unknown = sorted(set(raw) - _FIELD_NAMES)
        if unknown:
            raise ArgumentError(f"unknown config keys: {unknown}")
        for name, value in raw.items():
            values[name] = _coerce(name, value)

    for name in _FIELD_NAMES:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = _coerce(name, env[env_key])

    for name, value in overrides.items():
        if name not in _FIELD_NAMES:
            raise ArgumentError(f"unknown config override: {name}")
        if value is not None:
            values[name] = _coerce(name, value)

    return ServiceConfig(**values)
