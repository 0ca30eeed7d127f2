"""Configuration layer: .env loading, logging setup and the validated config tree.

Precedence is defaults < JSON config file < CLI flags. Config files may use
nested sections ({"augment": {"copies": 2}}) or dotted keys
({"augment.copies": 2}); both are merged the same way.
"""
import json
import logging
import os
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import UsageError

load_dotenv()

LOG_ENV = "MOTIONROCKET_LOG"
CONFIG_ENV = "MOTIONROCKET_CONFIG"
SAMPLE_RATE_HZ = 48.0

logger = logging.getLogger(__name__)


def configure_logging(level: str | None = None) -> None:
    """Configure root logging once, from the argument or MOTIONROCKET_LOG."""
    level_name = (level or os.getenv(LOG_ENV) or "INFO").upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        raise UsageError(f"unknown log level '{level_name}'")
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def default_alpha_grid() -> list[float]:
    return [float(a) for a in np.logspace(-3, 3, 10)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AugmentConfig(_Section):
    """Jitter and time-warp parameters used on training splits."""

    jitter_sigma: float = Field(0.03, ge=0.0)
    # True: noise std = jitter_sigma * per-channel std of the window.
    jitter_relative: bool = True
    warp_knots: int = Field(4, ge=2)
    warp_sigma: float = Field(0.2, ge=0.0)
    copies: int = Field(1, ge=0)
    seed: int = 0


class TrainSettings(_Section):
    features: int = Field(10_000, ge=84)
    seed: int = 0
    alpha_grid: list[float] = Field(default_factory=default_alpha_grid, min_length=1)
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _positive_alphas(self):
        if any(a <= 0 or not np.isfinite(a) for a in self.alpha_grid):
            raise ValueError("alpha_grid values must be finite and > 0")
        return self


class EvalSettings(_Section):
    folds: int = Field(10, ge=2)
    seed: int = 42
    jobs: int = Field(1, ge=1)


class GenSettings(_Section):
    per_class: int | None = Field(None, ge=1)
    total: int | None = Field(648, ge=7)
    noise_std: float = Field(0.05, ge=0.0)
    seed: int = 7


class ServerConfig(_Section):
    """Live loop settings (ingest socket, OSC target, windowing, backpressure)."""

    listen: str = "0.0.0.0:7400"
    osc: str = "127.0.0.1:57120"
    model_path: Path | None = None
    window_seconds: float = Field(2.0, gt=0.0)
    hop_seconds: float = Field(2.0, gt=0.0)
    probability_floor: float = Field(0.0, ge=0.0, le=1.0)
    latency_log: Path | None = None
    gap_tolerance_ms: float = Field(250.0, gt=0.0)
    reorder_ms: float = Field(100.0, ge=0.0)
    ring_capacity: int = Field(8, ge=1)
    osc_address: str = "/motion"
    # label -> OSC address; labels not listed use osc_address
    cue_map: dict[int, str] = Field(default_factory=dict)
    record_path: Path | None = None
    http: str | None = None

    @model_validator(mode="after")
    def _check_hop(self):
        if self.hop_seconds > self.window_seconds * 4:
            raise ValueError("hop_seconds must be <= 4 * window_seconds")
        for address in [self.osc_address, *self.cue_map.values()]:
            if not address.startswith("/"):
                raise ValueError(f"OSC address '{address}' must start with '/'")
        return self

    @property
    def window_len(self) -> int:
        return int(round(self.window_seconds * SAMPLE_RATE_HZ))

    @property
    def hop_len(self) -> int:
        return max(1, int(round(self.hop_seconds * SAMPLE_RATE_HZ)))


class CliConfig(_Section):
    """Fully-resolved configuration for one CLI run."""

    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    train: TrainSettings = Field(default_factory=TrainSettings)
    eval: EvalSettings = Field(default_factory=EvalSettings)
    gen: GenSettings = Field(default_factory=GenSettings)
    serve: ServerConfig = Field(default_factory=ServerConfig)


def parse_hostport(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected host:port, got '{value}'")
    return host or "0.0.0.0", int(port)


def _expand_dotted(values: dict[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in values.items():
        parts = key.split(".")
        cursor = nested
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
            if not isinstance(cursor, dict):
                raise UsageError(f"config key '{key}' conflicts with a scalar value")
        if isinstance(value, dict) and isinstance(cursor.get(parts[-1]), dict):
            cursor[parts[-1]] = _merge(cursor[parts[-1]], _expand_dotted(value))
        else:
            cursor[parts[-1]] = _expand_dotted(value) if isinstance(value, dict) else value
    return nested


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config_file(path: str | Path | None) -> dict[str, Any]:
    path = path or os.getenv(CONFIG_ENV)
    if not path:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise UsageError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return _expand_dotted(raw)


def resolve_config(file_values: dict[str, Any], overrides: dict[str, Any]) -> CliConfig:
    """Merge config-file values and dotted CLI overrides into a validated CliConfig."""
    merged = _merge(_expand_dotted(file_values), _expand_dotted(overrides))
    try:
        return CliConfig.model_validate(merged)
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}") from e
