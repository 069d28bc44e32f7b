# -*- coding: utf-8 -*-

from __future__ import absolute_import
from celery import shared_task
from django.utils import timezone

from common.exceptions import DivergenceError, UdonError
from events.models import Event
from .config import ExperimentConfig
from .models import ExperimentRun
from .runs import execute_run, finite_means, load_experiment_dataset


@shared_task(bind=True, acks_late=True)
def run_experiment_task(self, run_id):
    """Train one ExperimentRun; returns a status dict and never raises."""
    run = ExperimentRun.objects.filter(id=run_id).first()
    if run is None:
        Event.objects.create(message="[TrainingTasks/run_experiment_task/{}] Run {} not found. Task aborted.".format(self.request.id, run_id),
                             type="ERROR", severity="ERROR")
        return {'run': run_id, 'status': 'error', 'error': 'not found'}

    Event.objects.create(message="[TrainingTasks/run_experiment_task/{}] Task started (run={}, cell={}).".format(self.request.id, run.id, run.cell),
                         type="DEBUG", severity="INFO", run=run, ablation=run.ablation,
                         description="timezone.now(): {}".format(timezone.now()))
    try:
        config = ExperimentConfig(dict(run.config))
        dataset, record = load_experiment_dataset(config)
        if record is not None:
            run.dataset = record
            run.save()
        report = execute_run(run, config, dataset)
    except DivergenceError as e:
        return {'run': run.id, 'status': 'diverged', 'step': e.step}
    except (UdonError, OSError) as e:
        if run.status not in ('error', 'diverged'):
            run.set_status('error', summary={'status': 'error', 'error': str(e)})
            Event.objects.create(message="[TrainingTasks/run_experiment_task/{}] Run {} failed.".format(self.request.id, run.id),
                                 description="{}".format(e), type="ERROR", severity="ERROR", run=run)
        return {'run': run.id, 'status': 'error', 'error': str(e)}
    except Exception as e:
        if run.status not in ('error', 'diverged'):
            run.set_status('error', summary={'status': 'error', 'error': "{}: {}".format(type(e).__name__, e)})
        Event.objects.create(message="[TrainingTasks/run_experiment_task/{}] Run {} crashed.".format(self.request.id, run.id),
                             description="{}: {}".format(type(e).__name__, e), type="ERROR", severity="ERROR", run=run)
        return {'run': run.id, 'status': 'error', 'error': str(e)}
    return {'run': run.id, 'status': 'finished', 'mean': finite_means(report)}
