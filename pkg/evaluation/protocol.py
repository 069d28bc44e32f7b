# -*- coding: utf-8 -*-
"""Retrieval evaluation: embed the query and index splits, search, aggregate per domain.

``joint`` pools the index examples of every domain so cross-domain
neighbours count as errors; ``separate`` restricts every query to the index
of its own domain (an oracle that knows the query's domain).
"""

from concurrent.futures import ThreadPoolExecutor
import logging
import numpy as np

from common.exceptions import ContractError
from datasets.dataset import STAGES
from networks import backbone_forward, student_embed, teacher_embed
from .reports import MetricsReport
from .retrieval import EmbeddingIndex, score_queries

logger = logging.getLogger(__name__)

INDEX_MODES = ('joint', 'separate')
EMBEDDINGS = ('student', 'teacher')
EMBED_CHUNK = 1024


def embed_student(params, features):
    """Universal embeddings of raw feature rows (no tape, values only)."""
    bound = params.constants()
    return student_embed(bound, params.config, backbone_forward(bound, params.config, features)).values


def embed_teacher(params, domain, features):
    bound = params.constants()
    return teacher_embed(bound, params.config, domain, backbone_forward(bound, params.config, features)).values


def student_embedding_fn(params):
    def embed(domain, features):
        return embed_student(params, features)
    return embed


def teacher_embedding_fn(networks):
    """Embedding of the first network holding a teacher head for the query's domain."""
    networks = list(networks)
    if not networks:
        raise ContractError("at least one network is required")

    def owner(domain):
        for params in networks:
            if params.config.has_teacher(domain):
                return params
        raise ContractError("no network has a teacher head for domain {}".format(domain))

    def embed(domain, features):
        return embed_teacher(owner(domain), domain, features)
    return embed


def check_compatible(config, dataset):
    if config.input_dim != dataset.feature_dim:
        raise ContractError("checkpoint expects {} input features, dataset has {}".format(
            config.input_dim, dataset.feature_dim))
    if list(config.classes_per_domain) != list(dataset.classes_per_domain):
        raise ContractError("checkpoint classes per domain {} differ from the dataset's {}".format(
            list(config.classes_per_domain), list(dataset.classes_per_domain)))


def embed_examples(embed_fn, dataset, indices, workers=1):
    """Embeddings of ``indices`` (rows in the given order), computed per domain in fixed chunks."""
    indices = np.asarray(indices, dtype=np.int64)
    jobs = []
    for domain in np.unique(dataset.domain_ids[indices]).tolist():
        positions = np.flatnonzero(dataset.domain_ids[indices] == domain)
        for lo in range(0, positions.size, EMBED_CHUNK):
            jobs.append((domain, positions[lo:lo + EMBED_CHUNK]))

    def _one(job):
        domain, positions = job
        return embed_fn(domain, dataset.features_of(indices[positions]))

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_one, jobs))
    else:
        parts = [_one(job) for job in jobs]
    if not parts:
        return np.zeros((0, 0))
    out = np.empty((indices.size, parts[0].shape[1]))
    for (_, positions), values in zip(jobs, parts):
        out[positions] = values
    return out


def _split_ids(dataset, split):
    if split not in STAGES:
        raise ContractError("evaluation split must be one of {}".format(", ".join(STAGES)))
    return dataset.indices(split + '_query'), dataset.indices(split + '_index')


def _labels(dataset, ids):
    domains, classes = dataset.labels_of(ids)
    return list(zip(domains.tolist(), classes.tolist()))


def joint_index_eval(params, dataset, split, k=5, workers=1, metadata=None):
    """Student embeddings searched in one index pooling every domain."""
    check_compatible(params.config, dataset)
    return _joint(student_embedding_fn(params), dataset, split, k, workers, dict(metadata or {}, embedding='student'))


def _joint(embed_fn, dataset, split, k, workers, metadata):
    query_ids, index_ids = _split_ids(dataset, split)
    index_vectors = embed_examples(embed_fn, dataset, index_ids, workers)
    query_vectors = embed_examples(embed_fn, dataset, query_ids, workers)
    index = EmbeddingIndex(index_vectors, dataset.domain_ids[index_ids], dataset.class_ids[index_ids], ids=index_ids)
    recall, precision = score_queries(index, query_vectors, _labels(dataset, query_ids), k=k, workers=workers)
    metadata.update({'split': split, 'index': 'joint'})
    return MetricsReport.from_scores(dataset.domain_ids[query_ids], recall, precision, k=k,
                                     expected_domains=range(dataset.num_domains), metadata=metadata)


def separate_index_eval(embed_fn, dataset, split, k=5, workers=1, metadata=None):
    """Each query searches only the index examples of its own domain."""
    query_ids, index_ids = _split_ids(dataset, split)
    recall = np.full(query_ids.size, np.nan)
    precision = np.full(query_ids.size, np.nan)
    for domain in range(dataset.num_domains):
        q_pos = np.flatnonzero(dataset.domain_ids[query_ids] == domain)
        d_index = index_ids[dataset.domain_ids[index_ids] == domain]
        if q_pos.size == 0:
            continue
        if d_index.size == 0:
            logger.warning("domain %d has queries but an empty %s index", domain, split)
            continue
        index = EmbeddingIndex(embed_examples(embed_fn, dataset, d_index, workers),
                               dataset.domain_ids[d_index], dataset.class_ids[d_index], ids=d_index)
        q_vectors = embed_examples(embed_fn, dataset, query_ids[q_pos], workers)
        r, p = score_queries(index, q_vectors, _labels(dataset, query_ids[q_pos]), k=k, workers=workers)
        recall[q_pos] = r
        precision[q_pos] = p
    metadata = dict(metadata or {})
    metadata.update({'split': split, 'index': 'separate'})
    return MetricsReport.from_scores(dataset.domain_ids[query_ids], recall, precision, k=k,
                                     expected_domains=range(dataset.num_domains), metadata=metadata)


def evaluate(networks, dataset, split='val', mode='joint', embedding='student', k=5, workers=1, metadata=None):
    """Evaluate checkpoint networks; ``networks[0]`` carries the student for student embeddings."""
    networks = list(networks)
    if not networks:
        raise ContractError("at least one network is required")
    if mode not in INDEX_MODES:
        raise ContractError("unknown index mode '{}'".format(mode))
    if embedding not in EMBEDDINGS:
        raise ContractError("unknown embedding '{}'".format(embedding))
    for params in networks:
        check_compatible(params.config, dataset)
    metadata = dict(metadata or {}, embedding=embedding)
    if embedding == 'student':
        if not networks[0].config.student_head:
            raise ContractError("checkpoint has no universal (student) head")
        embed_fn = student_embedding_fn(networks[0])
    else:
        embed_fn = teacher_embedding_fn(networks)
    if mode == 'joint':
        if embedding == 'teacher':
            logger.warning("joint index over per-domain teacher embeddings mixes different embedding spaces")
        return _joint(embed_fn, dataset, split, k, workers, metadata)
    return separate_index_eval(embed_fn, dataset, split, k=k, workers=workers, metadata=metadata)
