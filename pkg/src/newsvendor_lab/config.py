"""JSON configuration loading with line-referenced errors, and atomic output writing."""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

from .errors import ConfigError


class ConfigFileError(ConfigError):
    """A configuration error already rendered as ``file:line: message``."""


def key_line(text: str, path: str | None) -> int | None:
    """Line (1-based) where the dotted ``path`` is defined in JSON ``text``, if found.

    Each path component is searched for as an object key after the position of
    its parent, which is exact for the plain nesting used by configuration files.
    """
    if not path:
        return None
    pos = 0
    for part in path.split("."):
        m = re.compile(r'"' + re.escape(part) + r'"\s*:').search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def parse_config_text(text: str, source: str = "<config>") -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigFileError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigFileError(f"{source}:1: configuration must be a JSON object")
    return data


def load_config(path) -> tuple[dict, str]:
    """Read a JSON object from ``path``; returns ``(data, text)``."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigFileError(f"{path}: cannot read configuration: {exc.strerror}") from exc
    return parse_config_text(text, str(path)), text


def locate(err: ConfigError, text: str, source: str, offset_path: str = "") -> ConfigFileError:
    """Attach ``source:line`` to a validation error raised on the parsed object."""
    full = ".".join(p for p in (offset_path, err.path) if p) or None
    line = key_line(text, full)
    where = f"{source}:{line}" if line else source
    key = f" {full}:" if full else ""
    return ConfigFileError(f"{where}:{key} {err}", full)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
