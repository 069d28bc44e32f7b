# -*- coding: utf-8 -*-

from django.db import models
from django.db.models.signals import post_save, post_delete
from django.dispatch import receiver
from django.forms.models import model_to_dict
from django.utils import timezone

from events.models import Event
from common.utils.encoding import json_serial

import json

DATASET_SOURCES = (
    ('generated', 'generated'),
    ('ingested', 'ingested'),
)


class DatasetRecord(models.Model):
    name = models.CharField(max_length=256)
    path = models.CharField(max_length=1024, unique=True)
    source = models.CharField(choices=DATASET_SOURCES, default='generated', max_length=10)
    feature_dim = models.IntegerField()
    num_domains = models.IntegerField()
    num_examples = models.IntegerField()
    classes_per_domain = models.JSONField(default=list)
    per_split = models.JSONField(default=dict)
    metadata = models.JSONField(default=dict)
    created_at = models.DateTimeField(default=timezone.now)
    updated_at = models.DateTimeField(default=timezone.now)

    class Meta:
        db_table = 'datasets'

    def __str__(self):
        return "{}/{}".format(self.id, self.name)

    def to_dict(self):
        return json.loads(json.dumps(model_to_dict(self), default=json_serial))

    def save(self, *args, **kwargs):
        # update the 'updated_at' entry on each update except on creation
        if not self._state.adding:
            self.updated_at = timezone.now()
        return super(DatasetRecord, self).save(*args, **kwargs)

    @classmethod
    def register(cls, dataset, path, name=None, source='generated'):
        summary = dataset.summary()
        record, _ = cls.objects.update_or_create(path=str(path), defaults={
            'name': name or str(path).rsplit('/', 1)[-1],
            'source': source,
            'feature_dim': summary['feature_dim'],
            'num_domains': summary['num_domains'],
            'num_examples': summary['examples'],
            'classes_per_domain': summary['classes_per_domain'],
            'per_split': summary['per_split'],
            'metadata': dict(dataset.metadata),
        })
        return record


@receiver(post_save, sender=DatasetRecord)
def dataset_create_update_log(sender, **kwargs):
    if kwargs['created']:
        Event.objects.create(message="[DatasetRecord] New dataset registered (id={}): {}".format(kwargs['instance'].id, kwargs['instance']),
                             type="CREATE", severity="DEBUG", dataset=kwargs['instance'])
    else:
        Event.objects.create(message="[DatasetRecord] Dataset '{}' modified (id={})".format(kwargs['instance'], kwargs['instance'].id),
                             type="UPDATE", severity="DEBUG", dataset=kwargs['instance'])


@receiver(post_delete, sender=DatasetRecord)
def dataset_delete_log(sender, **kwargs):
    Event.objects.create(message="[DatasetRecord] Dataset '{}' deleted (id={})".format(kwargs['instance'], kwargs['instance'].id),
                         type="DELETE", severity="DEBUG")
