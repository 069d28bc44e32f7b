# -*- coding: utf-8 -*-
"""Per-domain retrieval metrics with balanced means, and their CSV/JSON files."""

import csv
import json
import logging
import numpy as np
from django.utils import timezone

from common.exceptions import ContractError
from common.utils.encoding import json_serial

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('run_id', 'seed', 'step', 'split', 'domain', 'metric', 'value')
MEAN = 'mean'


def metric_names(k):
    return ('R@1', 'mP@{}'.format(k))


class MetricsReport(object):
    """Per-domain R@1 and mP@k in [0, 1] plus run metadata.

    Values are stored as fractions and written x100.
    """

    def __init__(self, per_domain, k=5, query_counts=None, skipped_domains=None, metadata=None):
        self.k = int(k)
        self.per_domain = {int(d): dict(v) for d, v in per_domain.items()}
        self.query_counts = {int(d): int(n) for d, n in (query_counts or {}).items()}
        self.skipped_domains = sorted(int(d) for d in (skipped_domains or []))
        self.metadata = dict(metadata or {})
        for domain, values in self.per_domain.items():
            for name in self.metrics:
                value = values.get(name)
                if value is None or not 0.0 <= value <= 1.0:
                    raise ContractError("metric {} of domain {} must lie in [0, 1], got {}".format(name, domain, value))

    @property
    def metrics(self):
        return metric_names(self.k)

    @property
    def domains(self):
        return sorted(self.per_domain)

    def mean(self, metric):
        """Balanced mean: plain average of the per-domain values."""
        values = [self.per_domain[d][metric] for d in self.domains]
        if not values:
            return float('nan')
        return float(np.mean(values))

    def means(self):
        return {name: self.mean(name) for name in self.metrics}

    @classmethod
    def from_scores(cls, query_domains, recall, precision, k=5, expected_domains=None, metadata=None):
        """Aggregate per-query scores (NaN = excluded query) into a report."""
        query_domains = np.asarray(query_domains, dtype=np.int64)
        domains = sorted(set(expected_domains or []) | set(query_domains.tolist()))
        per_domain, counts, skipped = {}, {}, []
        for domain in domains:
            mask = (query_domains == domain) & ~np.isnan(recall)
            if not mask.any():
                logger.warning("domain %d has no scorable queries; left out of the mean", domain)
                skipped.append(domain)
                continue
            # summed in query id order
            per_domain[domain] = {
                'R@1': float(np.sum(recall[mask])) / int(mask.sum()),
                'mP@{}'.format(k): float(np.sum(precision[mask])) / int(mask.sum()),
            }
            counts[domain] = int(mask.sum())
        return cls(per_domain, k=k, query_counts=counts, skipped_domains=skipped, metadata=metadata)

    def rows(self):
        """CSV rows: one per (domain, metric) plus the mean rows."""
        meta = self.metadata
        head = [meta.get('run_id', ''), meta.get('seed', ''), meta.get('step', ''), meta.get('split', '')]
        rows = []
        for domain in self.domains:
            for name in self.metrics:
                rows.append(head + [domain, name, repr(100.0 * self.per_domain[domain][name])])
        for name in self.metrics:
            rows.append(head + [MEAN, name, repr(100.0 * self.mean(name))])
        return rows

    def to_dict(self, timestamp=True):
        data = {
            'metadata': self.metadata,
            'k': self.k,
            'domains': {str(d): {name: 100.0 * v for name, v in self.per_domain[d].items()} for d in self.domains},
            'mean': {name: 100.0 * v for name, v in self.means().items()},
            'queries': {str(d): n for d, n in sorted(self.query_counts.items())},
            'skipped_domains': self.skipped_domains,
        }
        if timestamp:
            data['generated_at'] = timezone.now()
        return json.loads(json.dumps(data, default=json_serial))

    def write_csv(self, path, append=False):
        new_file = not append
        with open(path, 'a' if append else 'w', newline='') as f:
            writer = csv.writer(f)
            if new_file or f.tell() == 0:
                writer.writerow(CSV_COLUMNS)
            writer.writerows(self.rows())

    def write_json(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')

    def summary(self):
        return " ".join("{}={:.2f}".format(name, 100.0 * value) for name, value in self.means().items())
