# -*- coding: utf-8 -*-
"""In-memory multi-domain dataset."""

import numpy as np

from common.exceptions import ContractError

SPLITS = ('train', 'val_query', 'val_index', 'test_query', 'test_index')
SPLIT_TAGS = {name: tag for tag, name in enumerate(SPLITS)}
STAGES = ('val', 'test')
CUE_MODES = ('cue_discriminative', 'cue_noise')


def split_tag(name):
    try:
        return SPLIT_TAGS[name]
    except KeyError:
        raise ContractError("unknown split '{}'".format(name))


class DomainSpec(object):

    def __init__(self, domain_id, num_classes, class_size_exponent=0.0, samples_per_class_base=30,
                 cue_mode='cue_discriminative', noise_sigma=0.5, cue_scale=1.5):
        self.domain_id = int(domain_id)
        self.num_classes = int(num_classes)
        self.class_size_exponent = float(class_size_exponent)
        self.samples_per_class_base = int(samples_per_class_base)
        self.cue_mode = cue_mode
        self.noise_sigma = float(noise_sigma)
        self.cue_scale = float(cue_scale)
        if self.num_classes < 2:
            raise ContractError("domain {} needs at least 2 classes".format(domain_id))
        if self.class_size_exponent < 0:
            raise ContractError("class_size_exponent must be >= 0")
        if self.samples_per_class_base < 1:
            raise ContractError("samples_per_class_base must be >= 1")
        if self.cue_mode not in CUE_MODES:
            raise ContractError("unknown cue_mode '{}'".format(cue_mode))
        if self.noise_sigma < 0 or self.cue_scale < 0:
            raise ContractError("noise_sigma and cue_scale must be >= 0")

    def to_dict(self):
        return {
            'domain_id': self.domain_id,
            'num_classes': self.num_classes,
            'class_size_exponent': self.class_size_exponent,
            'samples_per_class_base': self.samples_per_class_base,
            'cue_mode': self.cue_mode,
            'noise_sigma': self.noise_sigma,
            'cue_scale': self.cue_scale,
        }


class Dataset(object):
    """Examples stored column-wise; row order is the example id."""

    def __init__(self, feature_dim, classes_per_domain, domain_ids, class_ids, split_tags, features,
                 metadata=None):
        self.feature_dim = int(feature_dim)
        self.classes_per_domain = [int(c) for c in classes_per_domain]
        self.domain_ids = np.asarray(domain_ids, dtype=np.uint16).reshape(-1)
        self.class_ids = np.asarray(class_ids, dtype=np.uint32).reshape(-1)
        self.split_tags = np.asarray(split_tags, dtype=np.uint8).reshape(-1)
        self.features = np.asarray(features, dtype=np.float32).reshape(-1, self.feature_dim)
        self.metadata = dict(metadata or {})
        self._train_index = None

    @property
    def num_domains(self):
        return len(self.classes_per_domain)

    def __len__(self):
        return int(self.domain_ids.shape[0])

    def domain_counts(self):
        return [int(np.sum(self.domain_ids == d)) for d in range(self.num_domains)]

    def indices(self, split=None, domain=None):
        mask = np.ones(len(self), dtype=bool)
        if split is not None:
            mask &= self.split_tags == split_tag(split)
        if domain is not None:
            mask &= self.domain_ids == domain
        return np.flatnonzero(mask)

    def train_indices(self, domain):
        if self._train_index is None:
            self._train_index = [self.indices('train', d) for d in range(self.num_domains)]
        return self._train_index[domain]

    def train_sizes(self):
        return [int(self.train_indices(d).size) for d in range(self.num_domains)]

    def subset(self, split=None, domain=None):
        """New Dataset holding only the selected examples (same domain/class layout)."""
        chosen = self.indices(split, domain)
        return Dataset(self.feature_dim, self.classes_per_domain, self.domain_ids[chosen],
                       self.class_ids[chosen], self.split_tags[chosen], self.features[chosen],
                       metadata=self.metadata)

    def features_of(self, indices):
        return self.features[indices].astype(np.float64)

    def labels_of(self, indices):
        return self.domain_ids[indices].astype(np.int64), self.class_ids[indices].astype(np.int64)

    def invariant_violations(self):
        """Human readable list of broken dataset invariants (empty when valid)."""
        problems = []
        n = len(self)
        if not (self.class_ids.shape[0] == n and self.split_tags.shape[0] == n and self.features.shape[0] == n):
            problems.append("column lengths differ")
            return problems
        if n and int(self.domain_ids.max()) >= self.num_domains:
            problems.append("domain id out of range")
            return problems
        limits = np.asarray(self.classes_per_domain, dtype=np.int64)[self.domain_ids.astype(np.int64)] if n else []
        if n and np.any(self.class_ids.astype(np.int64) >= limits):
            problems.append("class id out of range for its domain")
        if n and int(self.split_tags.max()) >= len(SPLITS):
            problems.append("unknown split tag")
        if not np.all(np.isfinite(self.features)):
            problems.append("non-finite feature values")
        for stage in STAGES:
            index_keys = set(zip(*self.labels_of(self.indices(stage + '_index'))))
            for key in set(zip(*self.labels_of(self.indices(stage + '_query')))):
                if key not in index_keys:
                    problems.append("{} query class (domain={}, class={}) has no index example".format(
                        stage, key[0], key[1]))
        return problems

    def equals(self, other):
        return (self.feature_dim == other.feature_dim
                and self.classes_per_domain == other.classes_per_domain
                and np.array_equal(self.domain_ids, other.domain_ids)
                and np.array_equal(self.class_ids, other.class_ids)
                and np.array_equal(self.split_tags, other.split_tags)
                and np.array_equal(self.features, other.features))

    def summary(self):
        return {
            'feature_dim': self.feature_dim,
            'num_domains': self.num_domains,
            'classes_per_domain': list(self.classes_per_domain),
            'examples': len(self),
            'per_split': {name: int(np.sum(self.split_tags == tag)) for name, tag in SPLIT_TAGS.items()},
        }
