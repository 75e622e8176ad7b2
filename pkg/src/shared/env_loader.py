"""Small .env loader for run defaults (REIFENBERG_* keys)."""
from pathlib import Path
import os


ENV_PREFIX = "REIFENBERG_"


def default_env_path() -> Path:
    return Path.cwd() / ".env"


def _parse_line(line: str) -> tuple[str, str] | None:
    line = line.lstrip("\ufeff").strip()
    if not line or line.startswith("#") or "=" not in line:
        return None
    key, value = line.split("=", 1)
    key = key.strip()
    value = value.strip().strip('"').strip("'")
    if not key:
        return None
    return key, value


def read_env_file(path: Path | None = None) -> dict[str, str]:
    """Read a simple KEY=VALUE .env file."""
    path = Path(path) if path is not None else default_env_path()
    if not path.exists():
        return {}
    values: dict[str, str] = {}
    for line in path.read_text(encoding="utf-8-sig").splitlines():
        parsed = _parse_line(line)
        if parsed:
            key, value = parsed
            values[key] = value
    return values


def load_env_file(path: Path | None = None, overwrite: bool = False) -> dict[str, str]:
    """Load REIFENBERG_* values from .env into os.environ."""
    values = {k: v for k, v in read_env_file(path).items() if k.startswith(ENV_PREFIX)}
    for key, value in values.items():
        if overwrite or key not in os.environ:
            os.environ[key] = value
    return values


def env_int(name: str, default: int | None = None) -> int | None:
    """Read an integer REIFENBERG_* variable; malformed values fall back to default."""
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw.strip())
    except ValueError:
        return default
