"""Line-oriented key=value config files.

Grammar per line: blank lines and `#` comments are skipped; `include
<path>` splices another file (relative to the including file); anything
else must be `key = value`.  Later assignments override earlier ones, so
an include acts as a set of defaults.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def load_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    _load_into(path, out, seen=set())
    return out


def _load_into(path: Path, out: dict[str, str], seen: set) -> None:
    resolved = path.resolve()
    if resolved in seen:
        raise ConfigError(f"config include cycle at {path}")
    seen.add(resolved)
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("include "):
            target = line[len("include "):].strip()
            _load_into((path.parent / target), out, seen)
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    seen.discard(resolved)


def get_str(cfg: dict, key: str, default: str | None = None) -> str:
    if key in cfg:
        return cfg[key]
    if default is None:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def get_int(cfg: dict, key: str, default: int | None = None) -> int:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} is not an integer: {cfg[key]!r}") from exc


def get_float(cfg: dict, key: str, default: float | None = None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} is not a number: {cfg[key]!r}") from exc


def get_list(cfg: dict, key: str, default: list[str] | None = None) -> list[str]:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    return [item.strip() for item in cfg[key].split(",") if item.strip()]


def get_floats(cfg: dict, key: str, default: list[float] | None = None) -> list[float]:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default
    try:
        return [float(v) for v in get_list(cfg, key)]
    except ValueError as exc:
        raise ConfigError(f"config key {key!r} is not a number list: {cfg[key]!r}") from exc
