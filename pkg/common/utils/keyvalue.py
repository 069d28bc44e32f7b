# -*- coding: utf-8 -*-
"""Flat ``key = value`` text files used for configs and sidecar metadata."""

from common.exceptions import ContractError

TRUE_VALUES = ('1', 'true', 'yes', 'on')
FALSE_VALUES = ('0', 'false', 'no', 'off')


def parse_lines(text, source="<string>"):
    """Parse ``key = value`` lines; '#' starts a comment, blank lines are skipped."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ContractError("{}:{}: expected 'key = value', got '{}'".format(source, lineno, raw.strip()))
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise ContractError("{}:{}: empty key".format(source, lineno))
        values[key] = value.strip()
    return values


def read_file(path):
    with open(path, 'r', encoding='utf-8') as f:
        return parse_lines(f.read(), source=str(path))


def format_lines(values):
    return "".join("{} = {}\n".format(k, values[k]) for k in sorted(values))


def write_file(path, values):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(format_lines(values))


def to_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in TRUE_VALUES:
        return True
    if text in FALSE_VALUES:
        return False
    raise ContractError("not a boolean: '{}'".format(value))


def to_int_list(value):
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    text = str(value).strip()
    if not text:
        return []
    return [int(v) for v in text.split(',')]


def to_float_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if not text:
        return []
    return [float(v) for v in text.split(',')]


def format_list(values):
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def parse_assignments(items, source='--set'):
    """``KEY=VALUE`` command-line assignments, later ones winning."""
    values = {}
    for item in items or []:
        parsed = parse_lines(item, source=source)
        if not parsed:
            raise ContractError("{}: expected KEY=VALUE, got '{}'".format(source, item))
        values.update(parsed)
    return values
