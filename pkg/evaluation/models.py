# -*- coding: utf-8 -*-

from django.db import models
from django.forms.models import model_to_dict
from django.utils import timezone

from common.utils.encoding import json_serial

import json
import math

INDEX_MODES = (
    ('joint', 'joint'),
    ('separate', 'separate'),
)

EMBEDDINGS = (
    ('student', 'student'),
    ('teacher', 'teacher'),
)


class MetricRecord(models.Model):
    run = models.ForeignKey('training.ExperimentRun', null=True, blank=True, on_delete=models.CASCADE,
                            related_name='metrics')
    dataset = models.ForeignKey('datasets.DatasetRecord', null=True, blank=True, on_delete=models.SET_NULL)
    checkpoint_path = models.CharField(max_length=1024, blank=True, default='')
    split = models.CharField(max_length=10, default='val')
    index_mode = models.CharField(choices=INDEX_MODES, default='joint', max_length=10)
    embedding = models.CharField(choices=EMBEDDINGS, default='student', max_length=10)
    seed = models.IntegerField(null=True, blank=True)
    step = models.IntegerField(null=True, blank=True)
    domain = models.CharField(max_length=10)  # domain id or 'mean'
    metric = models.CharField(max_length=10)
    value = models.FloatField()
    created_at = models.DateTimeField(default=timezone.now)
    updated_at = models.DateTimeField(default=timezone.now)

    class Meta:
        db_table = 'metrics'
        ordering = ['id']

    def __str__(self):
        return "{}/{}/{}={}".format(self.id, self.domain, self.metric, self.value)

    def to_dict(self):
        return json.loads(json.dumps(model_to_dict(self), default=json_serial))

    def save(self, *args, **kwargs):
        # update the 'updated_at' entry on each update except on creation
        if not self._state.adding:
            self.updated_at = timezone.now()
        return super(MetricRecord, self).save(*args, **kwargs)

    @classmethod
    def store_report(cls, report, run=None, dataset=None, checkpoint_path=''):
        """One row per (domain, metric) of ``report`` plus its mean rows (values x100)."""
        meta = report.metadata
        common = {
            'run': run,
            'dataset': dataset,
            'checkpoint_path': str(checkpoint_path or ''),
            'split': meta.get('split', ''),
            'index_mode': meta.get('index', 'joint'),
            'embedding': meta.get('embedding', 'student'),
            'seed': meta.get('seed'),
            'step': meta.get('step'),
        }
        rows = []
        for domain in report.domains:
            for name in report.metrics:
                rows.append(cls(domain=str(domain), metric=name, value=100.0 * report.per_domain[domain][name], **common))
        for name, value in report.means().items():
            if math.isnan(value):
                continue
            rows.append(cls(domain='mean', metric=name, value=100.0 * value, **common))
        return cls.objects.bulk_create(rows)
