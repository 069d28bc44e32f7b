# -*- coding: utf-8 -*-
"""One experiment run end to end: data, training, artifacts, final metrics."""

from django.conf import settings

from common.exceptions import DivergenceError, UdonError
from datasets.formats import read_dataset
from datasets.generator import generate_from_config
from datasets.models import DatasetRecord
from evaluation.models import MetricRecord
from evaluation.protocol import joint_index_eval
from events.models import Event
from networks import save_checkpoint
from .trainer import train

import json
import math
import os

CHECKPOINT_NAME = 'model.ckpt'
TEACHER_DIR = 'teachers'


def load_experiment_dataset(config, workers=1):
    """The configured dataset file, or a dataset generated from the config's generator keys."""
    if config.data:
        dataset = read_dataset(config.data)
        source = 'generated' if dataset.metadata.get('generator') else 'ingested'
        return dataset, DatasetRecord.register(dataset, os.path.abspath(config.data), source=source)
    return generate_from_config(config.generator_values(), workers=workers), None


def _write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def teacher_checkpoint_paths(out_dir, result):
    if result.mode == 'offline_distill_8':
        names = ['teacher_{}.ckpt'.format(i) for i in range(len(result.teachers))]
    else:
        names = ['teacher.ckpt'] * len(result.teachers)
    return [os.path.join(out_dir, TEACHER_DIR, name) for name in names]


def write_artifacts(result, config, out_dir):
    """Checkpoint(s), run log, sampler trace, config echo and parameter counts."""
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME)
    save_checkpoint(result.params, checkpoint_path)
    if result.teachers:
        os.makedirs(os.path.join(out_dir, TEACHER_DIR), exist_ok=True)
        for params, path in zip(result.teachers, teacher_checkpoint_paths(out_dir, result)):
            save_checkpoint(params, path)
    result.run_log.write_csv(os.path.join(out_dir, 'run_log.csv'))
    result.trace.write_csv(os.path.join(out_dir, 'sampler_trace.csv'))
    with open(os.path.join(out_dir, 'config.conf'), 'w') as f:
        f.write(config.echo())
    _write_json(os.path.join(out_dir, 'params.json'),
                dict(result.parameter_counts(), mode=result.mode, seed=result.seed))
    return checkpoint_path


def write_divergence(out_dir, error, config):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, 'divergence.json'), dict(error.to_dict(), config_hash=config.config_hash()))


def execute_run(run, config, dataset, workers=None):
    """Train ``run`` (an ExperimentRun row), write its artifacts and final test metrics.

    Expected failures mark the row ``error`` or ``diverged``, log an Event and
    are re-raised for the caller to map to an exit status.
    """
    workers = settings.UDON_EVAL_WORKERS if workers is None else workers
    run.set_status('started')
    Event.objects.create(message="[Training/execute_run/{}] Run started (mode={}, seed={}).".format(run.id, config.mode, run.seed),
                         description=config.echo(), type="NOTIFICATION", severity="INFO", run=run)
    try:
        result = train(config, run.seed, dataset, workers=workers)
        checkpoint_path = write_artifacts(result, config, run.out_dir)
        meta = {'run_id': run.run_id.hex, 'seed': run.seed, 'step': result.run_log.last_step,
                'mode': config.mode, 'config_hash': config.config_hash()}
        report = joint_index_eval(result.params, dataset, 'test', k=config.eval_k, workers=workers, metadata=meta)
    except DivergenceError as e:
        write_divergence(run.out_dir, e, config)
        run.set_status('diverged', diverged_step=e.step, summary=e.to_dict())
        Event.objects.create(message="[Training/execute_run/{}] Run diverged at step {}.".format(run.id, e.step),
                             description="{}".format(e), type="ERROR", severity="ERROR", run=run)
        raise
    except (UdonError, OSError) as e:
        run.set_status('error', summary={'status': 'error', 'error': str(e)})
        Event.objects.create(message="[Training/execute_run/{}] Run failed.".format(run.id),
                             description="{}".format(e), type="ERROR", severity="ERROR", run=run)
        raise

    metrics_csv = os.path.join(run.out_dir, 'metrics.csv')
    periodic = [e['report'] for e in result.run_log.evals]
    for i, r in enumerate(periodic + [report]):
        r.metadata.update({'run_id': run.run_id.hex, 'config_hash': config.config_hash()})
        r.write_csv(metrics_csv, append=i > 0)
        MetricRecord.store_report(r, run=run, dataset=run.dataset, checkpoint_path=checkpoint_path)
    report.write_json(os.path.join(run.out_dir, 'metrics.json'))

    run.set_status('finished', checkpoint_path=checkpoint_path, steps_done=result.run_log.last_step,
                   parameter_counts=result.parameter_counts(),
                   summary={'status': 'finished', 'split': 'test', 'mean': finite_means(report)})
    Event.objects.create(message="[Training/execute_run/{}] Run finished: {}".format(run.id, report.summary()),
                         type="NOTIFICATION", severity="INFO", run=run)
    return report


def finite_means(report):
    """Mean metrics with NaN (no scorable domain) mapped to None."""
    return {name: (None if math.isnan(v) else v) for name, v in report.means().items()}


def final_metric_values(run):
    """{(domain, metric): value x100} of the run's final joint test report, None when missing."""
    records = MetricRecord.objects.filter(run=run, split='test', index_mode='joint', embedding='student',
                                          step=run.steps_done)
    values = {(m.domain, m.metric): m.value for m in records}
    return values or None
