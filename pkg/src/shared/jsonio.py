"""
Canonical JSON and CSV I/O.

Documents are UTF-8, key-sorted, with shortest round-trip floats and no
timestamps, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from src import __version__
from src.shared.errors import NumericError, SchemaError

SCHEMA_VERSION = 1


def to_jsonable(value: Any) -> Any:
    """Convert numpy containers, dataclasses and enums into plain JSON types."""
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if not math.isfinite(value):
            raise NumericError("non-finite float cannot be serialized")
        return value
    if isinstance(value, Path):
        return str(value)
    return value


def canonical_dumps(document: Any) -> str:
    try:
        return json.dumps(
            to_jsonable(document),
            sort_keys=True,
            ensure_ascii=False,
            indent=2,
            allow_nan=False,
        ) + "\n"
    except ValueError as exc:
        raise NumericError(f"document is not JSON-serializable: {exc}") from exc


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_dumps(config).encode("utf-8")).hexdigest()


def provenance(command: str, config: dict, **extra: Any) -> dict:
    block = {
        "library_version": __version__,
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
    }
    block.update(extra)
    return block


def write_document(path: Path, document: dict) -> Path:
    """Write a document with schema_version stamped in."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, **document}
    path.write_text(canonical_dumps(payload), encoding="utf-8", newline="\n")
    return path


def read_document(path: Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON ({exc.msg} at line {exc.lineno})", path=str(path)) from exc
    if not isinstance(data, dict):
        raise SchemaError("top-level value must be an object", path=str(path))
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}", path=f"{path}.schema_version")
    return data


_KINDS = {
    "number": (int, float),
    "int": (int,),
    "str": (str,),
    "list": (list,),
    "dict": (dict,),
    "bool": (bool,),
}


def require(mapping: dict, key: str, kind: str, path: str = "", default: Any = ...) -> Any:
    """Fetch a typed field or raise SchemaError naming the dotted path."""
    where = f"{path}.{key}" if path else key
    if not isinstance(mapping, dict):
        raise SchemaError("expected an object", path=path or "<root>")
    if key not in mapping:
        if default is not ...:
            return default
        raise SchemaError("missing required field", path=where)
    value = mapping[key]
    allowed = _KINDS[kind]
    if isinstance(value, bool) and kind in ("number", "int"):
        raise SchemaError(f"expected {kind}, got bool", path=where)
    if not isinstance(value, allowed):
        raise SchemaError(f"expected {kind}, got {type(value).__name__}", path=where)
    return value


def require_matrix(mapping: dict, key: str, path: str = "", ndim: int = 2) -> np.ndarray:
    raw = require(mapping, key, "list", path)
    where = f"{path}.{key}" if path else key
    try:
        array = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError("expected a numeric array", path=where) from exc
    if array.size and array.ndim != ndim:
        raise SchemaError(f"expected {ndim}-D array, got {array.ndim}-D", path=where)
    if not np.all(np.isfinite(array)):
        raise SchemaError("array holds non-finite values", path=where)
    return array


def export_rows_csv(rows: Iterable[dict], output_path: Path, fieldnames: list[str]) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: to_jsonable(row.get(key, "")) for key in fieldnames})
    return output_path
