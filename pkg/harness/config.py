"""Flat UTF-8 key=value config files: one assignment per line, '#' starts a comment."""
from pathlib import Path

from django.core.exceptions import ValidationError


def parse_assignments(lines, source='<config>'):
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ValidationError(f'{source}:{lineno}: expected key=value, got {raw.strip()!r}')
        if key in values:
            raise ValidationError(f'{source}:{lineno}: duplicate key {key!r}')
        values[key] = value.strip()
    return values


def read_config_file(path):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f'Cannot read config file {path}: {exc}')
    return parse_assignments(text.splitlines(), source=str(path))
