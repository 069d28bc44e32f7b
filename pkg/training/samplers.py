# -*- coding: utf-8 -*-
"""Domain selection for clean single-domain batches, and within-domain sampling."""

import csv
import logging
import math
import numpy as np

from common.exceptions import ContractError

logger = logging.getLogger(__name__)

SAMPLER_KINDS = ('round_robin', 'dataset_size', 'static_weights', 'dynamic')
LOSS_SOURCES = ('teacher_cls', 'student_cls')


class SamplerState(object):
    """Domain-selection distribution plus the per-domain loss windows of the dynamic sampler.

    ``next_domain`` draws the domain of the next batch; ``tick`` is called once
    per optimizer step and refreshes the dynamic distribution every
    ``refresh_period`` steps from the window-mean training losses.
    """

    def __init__(self, kind, num_domains, seed=0, refresh_period=50, loss_source='teacher_cls',
                 dataset_sizes=None, static_weights=None, min_prob=0.0):
        if kind not in SAMPLER_KINDS:
            raise ContractError("unknown sampler kind '{}'".format(kind))
        if loss_source not in LOSS_SOURCES:
            raise ContractError("unknown loss_source '{}'".format(loss_source))
        if num_domains < 1:
            raise ContractError("at least one domain is required")
        if refresh_period < 1:
            raise ContractError("refresh_period must be >= 1")
        if not 0.0 <= min_prob <= 1.0 / num_domains:
            raise ContractError("min_prob must lie in [0, 1/N]")
        self.kind = kind
        self.num_domains = int(num_domains)
        self.refresh_period = int(refresh_period)
        self.loss_source = loss_source
        self.min_prob = float(min_prob)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5A3]))
        self.window_sum = np.zeros(self.num_domains)
        self.window_count = np.zeros(self.num_domains, dtype=np.int64)
        self.last_mean = np.ones(self.num_domains)
        self.has_history = False
        self.steps_since_refresh = 0
        self.refreshes = 0
        self._cursor = 0

        if kind == 'dataset_size':
            if dataset_sizes is None or len(dataset_sizes) != self.num_domains:
                raise ContractError("dataset_size sampling needs one size per domain")
            self.probabilities = _normalize(np.asarray(dataset_sizes, dtype=np.float64))
        elif kind == 'static_weights':
            if static_weights is None or len(static_weights) != self.num_domains:
                raise ContractError("static_weights sampling needs one weight per domain")
            self.probabilities = _normalize(np.asarray(static_weights, dtype=np.float64))
        else:
            self.probabilities = np.full(self.num_domains, 1.0 / self.num_domains)

    def record_loss(self, domain, loss_value):
        if not 0 <= domain < self.num_domains:
            raise ContractError("domain {} out of range".format(domain))
        loss_value = float(loss_value)
        if not math.isfinite(loss_value) or loss_value < 0:
            raise ContractError("sampler received an invalid loss {} for domain {}".format(loss_value, domain))
        self.window_sum[domain] += loss_value
        self.window_count[domain] += 1

    def window_means(self):
        """Mean loss of the current window; starved domains keep their previous mean."""
        means = self.last_mean.copy()
        seen = self.window_count > 0
        means[seen] = self.window_sum[seen] / self.window_count[seen]
        return means

    def refresh_probabilities(self):
        seen = self.window_count > 0
        if not seen.any() and not self.has_history:
            self.probabilities = np.full(self.num_domains, 1.0 / self.num_domains)
        else:
            means = self.window_means()
            total = means.sum()
            if total > 0:
                probs = means / total
            else:
                probs = np.full(self.num_domains, 1.0 / self.num_domains)
            if self.min_prob > 0:
                probs = _normalize(np.maximum(probs, self.min_prob))
            self.probabilities = probs
            self.last_mean = means
            self.has_history = True
        self.window_sum[:] = 0.0
        self.window_count[:] = 0
        self.steps_since_refresh = 0
        self.refreshes += 1
        logger.debug("sampler refresh #%d: %s", self.refreshes, self.probabilities)
        return self.probabilities.copy()

    def tick(self):
        """Count one step; returns True when the dynamic distribution was refreshed."""
        self.steps_since_refresh += 1
        if self.kind == 'dynamic' and self.steps_since_refresh == self.refresh_period:
            self.refresh_probabilities()
            return True
        if self.steps_since_refresh >= self.refresh_period:
            self.steps_since_refresh = 0
        return False

    def next_domain(self):
        if self.kind == 'round_robin':
            domain = self._cursor
            self._cursor = (self._cursor + 1) % self.num_domains
            return domain
        cumulative = np.cumsum(self.probabilities)
        u = self.rng.random() * cumulative[-1]
        return int(min(np.searchsorted(cumulative, u, side='right'), self.num_domains - 1))

    def snapshot(self):
        return [float(p) for p in self.probabilities]


def _normalize(weights):
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ContractError("sampling weights must be >= 0 with a positive sum: {}".format(list(weights)))
    return weights / weights.sum()


class Batch(object):

    def __init__(self, domain, indices, features, labels):
        self.domain = domain
        self.indices = indices
        self.features = features
        self.labels = labels

    def __len__(self):
        return len(self.indices)


def make_batch(dataset, domain, batch_size, rng, class_balanced=False):
    """``batch_size`` train examples of one domain, drawn with replacement."""
    pool = dataset.train_indices(domain)
    if pool.size == 0:
        raise ContractError("domain {} has no train examples".format(domain))
    if batch_size < 1:
        raise ContractError("batch size must be >= 1")
    if class_balanced:
        classes = dataset.class_ids[pool]
        present = np.unique(classes)
        picked_classes = present[rng.integers(0, present.size, size=batch_size)]
        chosen = np.empty(batch_size, dtype=np.int64)
        for c in np.unique(picked_classes):
            members = pool[classes == c]
            slots = np.flatnonzero(picked_classes == c)
            chosen[slots] = members[rng.integers(0, members.size, size=slots.size)]
    else:
        chosen = pool[rng.integers(0, pool.size, size=batch_size)]
    return Batch(domain, chosen, dataset.features_of(chosen), dataset.class_ids[chosen].astype(np.int64))


class SamplerTrace(object):
    """Audit rows (step, domain, P after refresh) written as CSV."""

    def __init__(self, num_domains):
        self.num_domains = num_domains
        self.rows = []

    def add(self, step, domain, probabilities):
        self.rows.append([step, domain] + [repr(float(p)) for p in probabilities])

    def write_csv(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['step', 'domain'] + ['P{}'.format(i) for i in range(self.num_domains)])
            writer.writerows(self.rows)
