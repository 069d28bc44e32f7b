# -*- coding: utf-8 -*-
"""Binary checkpoint files (magic ``UDONCKPT``, little-endian, float64 values)."""

import numpy as np

from common.exceptions import FormatError
from common.utils.binio import BinaryReader, u32
from .config import ModelConfig
from .params import ModelParams, parameter_layout

MAGIC = b'UDONCKPT'
VERSION = 1


def dumps_checkpoint(params):
    config_echo = params.config.to_lines().encode('utf-8')
    chunks = [MAGIC, u32(VERSION), u32(len(config_echo)), config_echo, u32(len(params.arrays))]
    for name, arr in params.arrays.items():
        encoded = name.encode('utf-8')
        rows, cols = arr.shape
        chunks += [u32(len(encoded)), encoded, u32(rows), u32(cols),
                   np.ascontiguousarray(arr, dtype='<f8').tobytes()]
    return b''.join(chunks)


def loads_checkpoint(data):
    reader = BinaryReader(data)
    if bytes(reader.take(len(MAGIC), "magic")) != MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError("unsupported checkpoint version {}".format(version), reader.offset - 4)
    echo_len = reader.u32("config length")
    try:
        config = ModelConfig.from_lines(bytes(reader.take(echo_len, "config echo")).decode('utf-8'))
    except (KeyError, ValueError, UnicodeDecodeError) as e:
        raise FormatError("unreadable config echo: {}".format(e), reader.offset)
    count = reader.u32("parameter count")
    arrays = []
    for _ in range(count):
        name_len = reader.u32("name length")
        name = bytes(reader.take(name_len, "parameter name")).decode('utf-8')
        rows = reader.u32("rows")
        cols = reader.u32("cols")
        raw = reader.take(rows * cols * 8, "values of '{}'".format(name))
        arrays.append((name, np.frombuffer(raw, dtype='<f8').astype(np.float64).reshape(rows, cols)))
    reader.expect_end()

    expected = [(name, shape) for name, shape, _ in parameter_layout(config)]
    found = [(name, arr.shape) for name, arr in arrays]
    if expected != found:
        raise FormatError("parameter layout does not match the config echo", reader.offset)
    return ModelParams(config, arrays)


def save_checkpoint(params, path):
    with open(path, 'wb') as f:
        f.write(dumps_checkpoint(params))


def load_checkpoint(path):
    with open(path, 'rb') as f:
        return loads_checkpoint(f.read())
