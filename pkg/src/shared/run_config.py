"""
Run configuration: every parameter of a CLI run, fully serialized into
each output's provenance block.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

from src.shared.env_loader import env_int, load_env_file
from src.shared.errors import SchemaError
from src.shared.jsonio import config_hash, read_document

FIT_MODES = {"L2", "L1", "MINIMAX"}


@dataclass
class RunConfig:
    """Parameters shared by all commands; command-specific ones default off."""
    depth: int = 6
    eps: float = 0.2
    c_audit: float = 25.0
    fit_mode: str = "L2"
    fit_radius_factor: float = 110.0
    q: float = 1.0
    sawtooth_a: float = 4.0
    flat_budget: float = 50.0
    grid_pitch: float = 0.01
    grid_half_width: float = 1.5
    n_pairs: int = 2000
    seed: int = 0
    threads: int = 1
    force: bool = False

    def __post_init__(self):
        validate_run_config(self)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())


def validate_run_config(config: RunConfig) -> None:
    if not 0 <= config.depth <= 12:
        raise SchemaError("depth must be between 0 and 12", path="depth")
    if config.eps <= 0:
        raise SchemaError("eps must be positive", path="eps")
    if config.c_audit <= 0:
        raise SchemaError("c_audit must be positive", path="c_audit")
    if config.fit_mode not in FIT_MODES:
        raise SchemaError(f"fit_mode must be one of {sorted(FIT_MODES)}", path="fit_mode")
    if config.fit_radius_factor <= 0:
        raise SchemaError("fit_radius_factor must be positive", path="fit_radius_factor")
    if config.q < 1:
        raise SchemaError("q must be >= 1", path="q")
    if config.sawtooth_a < 1:
        raise SchemaError("sawtooth_a must be >= 1", path="sawtooth_a")
    if config.grid_pitch <= 0 or config.grid_half_width <= 0:
        raise SchemaError("grid_pitch and grid_half_width must be positive", path="grid_pitch")
    if config.n_pairs < 2:
        raise SchemaError("n_pairs must be >= 2", path="n_pairs")
    if config.threads < 1:
        raise SchemaError("threads must be >= 1", path="threads")


def _coerce(name: str, value: Any, annotation: str) -> Any:
    try:
        if annotation == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if annotation == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if annotation == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        return str(value)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"expected {annotation}, got {value!r}", path=name) from exc


def load_run_config(
    config_path: Optional[Path] = None,
    overrides: Optional[dict] = None,
    env_path: Optional[Path] = None,
) -> RunConfig:
    """
    Build a RunConfig.

    Precedence: overrides (CLI flags) > config file > environment > .env > defaults.

    Raises:
        SchemaError: unknown keys or ill-typed values
    """
    load_env_file(env_path)
    known = {f.name: f.type for f in fields(RunConfig)}
    values: dict[str, Any] = {}

    threads = env_int("THREADS")
    if threads is not None:
        values["threads"] = threads
    seed = env_int("SEED")
    if seed is not None:
        values["seed"] = seed

    if config_path is not None:
        document = read_document(Path(config_path))
        document.pop("schema_version", None)
        for key, value in document.items():
            if key not in known:
                raise SchemaError("unknown config key", path=f"{config_path}.{key}")
            values[key] = value

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise SchemaError("unknown config key", path=key)
        values[key] = value

    coerced = {key: _coerce(key, value, known[key]) for key, value in values.items()}
    return RunConfig(**coerced)


def effective_threads(config: RunConfig) -> int:
    return max(1, min(config.threads, os.cpu_count() or 1))
