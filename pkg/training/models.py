# -*- coding: utf-8 -*-

from django.db import models
from django.db.models.signals import post_save, post_delete
from django.dispatch import receiver
from django.forms.models import model_to_dict
from django.utils import timezone

from events.models import Event
from common.utils.encoding import json_serial

import json
import uuid

RUN_STATUS = (
    ('created', 'created'),
    ('started', 'started'),
    ('finished', 'finished'),
    ('error', 'error'),
    ('diverged', 'diverged'),
)

RUN_MODES = (
    ('udon', 'udon'),
    ('baseline_cls_only', 'baseline_cls_only'),
    ('baseline_mlp', 'baseline_mlp'),
    ('offline_distill_8', 'offline_distill_8'),
    ('offline_distill_1', 'offline_distill_1'),
)


class Ablation(models.Model):
    name = models.CharField(max_length=256)
    grid_path = models.CharField(max_length=1024, blank=True, default='')
    out_dir = models.CharField(max_length=1024)
    cells = models.JSONField(default=list)
    seeds = models.JSONField(default=list)
    status = models.CharField(choices=RUN_STATUS, default='created', max_length=10)
    csv_path = models.CharField(max_length=1024, blank=True, default='')
    created_at = models.DateTimeField(default=timezone.now)
    updated_at = models.DateTimeField(default=timezone.now)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'ablations'

    def __str__(self):
        return "{}/{}".format(self.id, self.name)

    def to_dict(self):
        data = model_to_dict(self)
        data.update({"runs": [r.to_dict() for r in self.runs.all().order_by('id')]})
        return json.loads(json.dumps(data, default=json_serial))

    def save(self, *args, **kwargs):
        # update the 'updated_at' entry on each update except on creation
        if not self._state.adding:
            self.updated_at = timezone.now()
        return super(Ablation, self).save(*args, **kwargs)


class ExperimentRun(models.Model):
    run_id = models.UUIDField(default=uuid.uuid4, unique=True, editable=False)
    mode = models.CharField(choices=RUN_MODES, default='udon', max_length=20)
    seed = models.IntegerField(default=0)
    status = models.CharField(choices=RUN_STATUS, default='created', max_length=10)
    config = models.JSONField(default=dict)
    config_hash = models.CharField(max_length=40, blank=True, default='')
    out_dir = models.CharField(max_length=1024)
    checkpoint_path = models.CharField(max_length=1024, blank=True, default='')
    dataset = models.ForeignKey('datasets.DatasetRecord', null=True, blank=True, on_delete=models.SET_NULL)
    ablation = models.ForeignKey(Ablation, null=True, blank=True, on_delete=models.CASCADE, related_name='runs')
    cell = models.CharField(max_length=64, blank=True, default='')
    steps_done = models.IntegerField(default=0)
    diverged_step = models.IntegerField(null=True, blank=True)
    parameter_counts = models.JSONField(default=dict)
    summary = models.JSONField(default=dict)
    created_at = models.DateTimeField(default=timezone.now)
    updated_at = models.DateTimeField(default=timezone.now)
    started_at = models.DateTimeField(null=True, blank=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'experiment_runs'

    def __str__(self):
        return "{}/{}/seed={}".format(self.id, self.cell or self.mode, self.seed)

    def to_dict(self):
        data = model_to_dict(self)
        data['run_id'] = self.run_id.hex
        return json.loads(json.dumps(data, default=json_serial))

    def save(self, *args, **kwargs):
        # update the 'updated_at' entry on each update except on creation
        if not self._state.adding:
            self.updated_at = timezone.now()
        return super(ExperimentRun, self).save(*args, **kwargs)

    def set_status(self, status, **fields):
        self.status = status
        if status == 'started':
            self.started_at = timezone.now()
        elif status in ('finished', 'error', 'diverged'):
            self.finished_at = timezone.now()
        for key, value in fields.items():
            setattr(self, key, value)
        self.save()


@receiver(post_save, sender=ExperimentRun)
def run_create_update_log(sender, **kwargs):
    if kwargs['created']:
        Event.objects.create(message="[ExperimentRun] New run created (id={}): {}".format(kwargs['instance'].id, kwargs['instance']),
                             type="CREATE", severity="DEBUG", run=kwargs['instance'])
    else:
        Event.objects.create(message="[ExperimentRun] Run '{}' modified (status={})".format(kwargs['instance'], kwargs['instance'].status),
                             type="UPDATE", severity="DEBUG", run=kwargs['instance'])


@receiver(post_delete, sender=ExperimentRun)
def run_delete_log(sender, **kwargs):
    Event.objects.create(message="[ExperimentRun] Run '{}' deleted (id={})".format(kwargs['instance'], kwargs['instance'].id),
                         type="DELETE", severity="DEBUG")


@receiver(post_save, sender=Ablation)
def ablation_create_update_log(sender, **kwargs):
    if kwargs['created']:
        Event.objects.create(message="[Ablation] New ablation created (id={}): {}".format(kwargs['instance'].id, kwargs['instance']),
                             type="CREATE", severity="DEBUG", ablation=kwargs['instance'])
    else:
        Event.objects.create(message="[Ablation] Ablation '{}' modified (status={})".format(kwargs['instance'], kwargs['instance'].status),
                             type="UPDATE", severity="DEBUG", ablation=kwargs['instance'])


@receiver(post_delete, sender=Ablation)
def ablation_delete_log(sender, **kwargs):
    Event.objects.create(message="[Ablation] Ablation '{}' deleted (id={})".format(kwargs['instance'], kwargs['instance'].id),
                         type="DELETE", severity="DEBUG")
