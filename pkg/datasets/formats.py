# -*- coding: utf-8 -*-
"""On-disk dataset format (``UDONDS1``) and its key=value sidecar.

Layout, little-endian::

    magic "UDONDS1\\n" | u32 version | u32 N | u32 D_in
    N x (u32 C_i, u64 example count)
    per example: u16 domain_id, u32 class_id, u8 split_tag, D_in x f32

Examples are stored in id order, whatever their domains.
External embeddings can be ingested by writing this format.
"""

import numpy as np

from common.exceptions import FormatError
from common.utils import keyvalue
from common.utils.binio import BinaryReader, u32, u64
from .dataset import Dataset

MAGIC = b'UDONDS1\n'
VERSION = 1
SIDECAR_SUFFIX = '.meta'


def record_dtype(feature_dim):
    # numpy structured dtypes are packed unless align=True
    return np.dtype([('domain', '<u2'), ('class', '<u4'), ('split', 'u1'), ('x', '<f4', (feature_dim,))])


def dumps_dataset(dataset):
    header = [MAGIC, u32(VERSION), u32(dataset.num_domains), u32(dataset.feature_dim)]
    counts = dataset.domain_counts()
    for c, n in zip(dataset.classes_per_domain, counts):
        header += [u32(c), u64(n)]
    # record i is example id i
    records = np.zeros(len(dataset), dtype=record_dtype(dataset.feature_dim))
    records['domain'] = dataset.domain_ids
    records['class'] = dataset.class_ids
    records['split'] = dataset.split_tags
    records['x'] = dataset.features
    return b''.join(header) + records.tobytes()


def loads_dataset(data, metadata=None):
    reader = BinaryReader(data)
    if bytes(reader.take(len(MAGIC), "magic")) != MAGIC:
        raise FormatError("bad dataset magic", 0)
    version = reader.u32("version")
    if version != VERSION:
        raise FormatError("unsupported dataset version {}".format(version), reader.offset - 4)
    n_domains = reader.u32("domain count")
    feature_dim = reader.u32("feature dimension")
    classes, counts = [], []
    for _ in range(n_domains):
        classes.append(reader.u32("class count"))
        counts.append(reader.u64("example count"))

    dtype = record_dtype(feature_dim)
    total = sum(counts)
    body_start = reader.offset
    raw = reader.take(total * dtype.itemsize, "examples")
    reader.expect_end()
    records = np.frombuffer(raw, dtype=dtype)

    dataset = Dataset(
        feature_dim=feature_dim,
        classes_per_domain=classes,
        domain_ids=records['domain'].copy(),
        class_ids=records['class'].copy(),
        split_tags=records['split'].copy(),
        features=records['x'].copy().reshape(total, feature_dim),
        metadata=metadata,
    )
    if n_domains and total and int(dataset.domain_ids.max()) >= n_domains:
        bad = int(np.argmax(dataset.domain_ids >= n_domains))
        raise FormatError("example {} has domain id out of range".format(bad), body_start + bad * dtype.itemsize)
    if dataset.domain_counts() != counts:
        raise FormatError("per-domain example counts disagree with the header", body_start)
    problems = dataset.invariant_violations()
    if problems:
        raise FormatError("dataset invariant violated: {}".format("; ".join(problems[:5])), body_start)
    return dataset


def sidecar_path(path):
    return str(path) + SIDECAR_SUFFIX


def write_dataset(dataset, path):
    with open(path, 'wb') as f:
        f.write(dumps_dataset(dataset))
    keyvalue.write_file(sidecar_path(path), dataset.metadata)


def read_dataset(path):
    try:
        metadata = keyvalue.read_file(sidecar_path(path))
    except FileNotFoundError:
        metadata = {}
    with open(path, 'rb') as f:
        return loads_dataset(f.read(), metadata=metadata)
