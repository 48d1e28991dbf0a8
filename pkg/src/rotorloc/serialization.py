"""JSON helpers shared by the config and artifact readers."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ConfigError


def check_keys(d, allowed, where, optional=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(allowed) - set(optional) - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def dumps(obj) -> str:
    # sorted keys + fixed separators keep artifacts byte-stable
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
