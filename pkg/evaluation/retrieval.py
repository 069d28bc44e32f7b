# -*- coding: utf-8 -*-
"""Exact nearest-neighbour retrieval over unit-norm embeddings and its metrics."""

from concurrent.futures import ThreadPoolExecutor
import numpy as np

from common.exceptions import ContractError, DimensionError

NORM_TOLERANCE = 1e-6
# fixed query chunking keeps results independent of the worker count
QUERY_CHUNK = 256


class EmbeddingIndex(object):
    """Unit-norm vectors with (domain, class) labels and stable integer ids.

    Rows are kept in ascending id order, so the insertion order of the
    caller never changes a ranking.
    """

    def __init__(self, vectors, domains, classes, ids=None):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DimensionError("index vectors must be a matrix", vectors.shape)
        n = vectors.shape[0]
        domains = np.asarray(domains, dtype=np.int64).reshape(-1)
        classes = np.asarray(classes, dtype=np.int64).reshape(-1)
        ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64).reshape(-1)
        if not (domains.shape[0] == classes.shape[0] == ids.shape[0] == n):
            raise DimensionError("one label and id per index vector", vectors.shape, domains.shape, classes.shape, ids.shape)
        if np.unique(ids).size != n:
            raise ContractError("index ids must be unique")
        if n:
            norms = np.linalg.norm(vectors, axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
                raise ContractError("index vectors must have unit norm")
        order = np.argsort(ids, kind='stable')
        self.vectors = vectors[order]
        self.domains = domains[order]
        self.classes = classes[order]
        self.ids = ids[order]
        self._positives = {}
        for key in zip(self.domains.tolist(), self.classes.tolist()):
            self._positives[key] = self._positives.get(key, 0) + 1

    def __len__(self):
        return int(self.ids.shape[0])

    @property
    def dim(self):
        return int(self.vectors.shape[1])

    def label_of(self, item_id):
        pos = int(np.searchsorted(self.ids, item_id))
        if pos >= len(self) or self.ids[pos] != item_id:
            raise ContractError("id {} is not in the index".format(item_id))
        return int(self.domains[pos]), int(self.classes[pos])

    def positives(self, label):
        """Number of index entries sharing ``label`` = (domain, class)."""
        return self._positives.get((int(label[0]), int(label[1])), 0)


def _check_search(index, queries, k):
    if len(index) == 0:
        raise ContractError("cannot search an empty index")
    if k < 1:
        raise ContractError("k must be >= 1")
    if queries.shape[1] != index.dim:
        raise DimensionError("query dimension differs from the index", queries.shape, index.vectors.shape)


def _rank_positions(index, queries, k):
    # 2 - 2cos is monotone in the Euclidean distance of unit vectors; the
    # stable sort breaks equal distances by position, i.e. ascending id
    distances = 2.0 - 2.0 * queries.dot(index.vectors.T)
    return np.argsort(distances, axis=1, kind='stable')[:, :min(k, len(index))]


def knn_search(index, query, k):
    """Ids of the exact top-``k`` neighbours of one unit-norm query."""
    query = np.asarray(query, dtype=np.float64).reshape(1, -1)
    _check_search(index, query, k)
    return [int(i) for i in index.ids[_rank_positions(index, query, k)[0]]]


def knn_search_batch(index, queries, k, workers=1):
    """Ranked id matrix (Q x min(k, M)) for every query row."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2:
        raise DimensionError("queries must be a matrix", queries.shape)
    _check_search(index, queries, k)
    bounds = [(lo, min(lo + QUERY_CHUNK, queries.shape[0])) for lo in range(0, queries.shape[0], QUERY_CHUNK)]

    def _chunk(bound):
        return _rank_positions(index, queries[bound[0]:bound[1]], k)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk, bounds))
    else:
        parts = [_chunk(b) for b in bounds]
    if not parts:
        return np.zeros((0, min(k, len(index))), dtype=np.int64)
    return index.ids[np.concatenate(parts)]


def recall_at_1(ranked, query_label, index):
    """1 when the top neighbour has the query's (domain, class), else 0."""
    if len(ranked) == 0:
        raise ContractError("ranking is empty")
    return 1 if index.label_of(ranked[0]) == (int(query_label[0]), int(query_label[1])) else 0


def modified_mp_at_k(ranked, query_label, index, k=5):
    """Precision over the top k' = min(k, positives) neighbours; ``None`` when the query has no positive."""
    if k < 1:
        raise ContractError("k must be >= 1")
    n_pos = index.positives(query_label)
    if n_pos == 0:
        return None
    k_eff = min(k, n_pos)
    if len(ranked) < k_eff:
        raise ContractError("ranking holds {} ids, {} needed".format(len(ranked), k_eff))
    target = (int(query_label[0]), int(query_label[1]))
    correct = sum(1 for item_id in ranked[:k_eff] if index.label_of(item_id) == target)
    return correct / float(k_eff)


def score_queries(index, queries, query_labels, k=5, workers=1):
    """Per-query (R@1, mP@k) arrays in query order; queries without positives get NaN in both."""
    query_labels = [(int(d), int(c)) for d, c in query_labels]
    n = len(query_labels)
    recall = np.full(n, np.nan)
    precision = np.full(n, np.nan)
    if n == 0:
        return recall, precision
    ranked = knn_search_batch(index, queries, k, workers=workers)
    for q, label in enumerate(query_labels):
        mp = modified_mp_at_k(ranked[q], label, index, k)
        if mp is None:
            continue
        precision[q] = mp
        recall[q] = recall_at_1(ranked[q], label, index)
    return recall, precision
