"""Structured text configuration: `dotted.section.key = value` lines.

Lines are `key = value`; keys use dots for sections, `#` starts a comment.
Values parse as int, float, bool, a bare string, or a comma-separated list of
those.  The result is a nested dict; :func:`get` reads dotted paths with a
default.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_scalar(part) for part in text.split(",") if part.strip()]
    return _parse_scalar(text)


def loads(text: str) -> dict:
    root: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        parts = [p.strip() for p in key.strip().split(".")]
        if any(not p for p in parts):
            raise ConfigError(f"line {lineno}: bad key {key.strip()!r}")
        node = root
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: key {key.strip()!r} clashes with a value")
        node[parts[-1]] = parse_value(value)
    return root


def load_config(path) -> dict:
    with open(path) as fh:
        return loads(fh.read())


_MISSING = object()


def get(cfg: dict, dotted: str, default=_MISSING):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is _MISSING:
                raise ConfigError(f"missing config key '{dotted}'")
            return default
        node = node[part]
    return node
