# -*- coding: utf-8 -*-
"""python manage.py eval --checkpoint run/model.ckpt --data var/data/default.udon --split test --mode joint"""

import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from common.exceptions import ContractError
from datasets.formats import read_dataset
from datasets.models import DatasetRecord
from evaluation.models import MetricRecord
from evaluation.protocol import EMBEDDINGS, INDEX_MODES, evaluate
from events.models import Event
from networks import load_checkpoint
from training.models import ExperimentRun

EXIT_CONTRACT = 2


class Command(BaseCommand):
    help = "Evaluate checkpoint embeddings with the retrieval protocol and write metrics CSV + JSON."

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', action='append', required=True,
                            help="checkpoint file; repeat to combine per-domain teacher networks")
        parser.add_argument('--data', required=True, help="dataset file")
        parser.add_argument('--split', choices=('val', 'test'), default='test')
        parser.add_argument('--mode', choices=INDEX_MODES, default='joint')
        parser.add_argument('--embedding', choices=EMBEDDINGS, default='student')
        parser.add_argument('--k', type=int, default=5)
        parser.add_argument('--workers', type=int, default=None)
        parser.add_argument('--out-dir', default='', help="default: directory of the first checkpoint")

    def handle(self, *args, **options):
        checkpoints = [os.path.abspath(p) for p in options['checkpoint']]
        run = ExperimentRun.objects.filter(checkpoint_path=checkpoints[0]).first()
        workers = options['workers'] or settings.UDON_EVAL_WORKERS
        metadata = {'checkpoint': checkpoints[0]}
        if run is not None:
            metadata.update({'run_id': run.run_id.hex, 'seed': run.seed, 'step': run.steps_done,
                             'config_hash': run.config_hash})
        try:
            networks = [load_checkpoint(p) for p in checkpoints]
            dataset = read_dataset(options['data'])
            report = evaluate(networks, dataset, split=options['split'], mode=options['mode'],
                              embedding=options['embedding'], k=options['k'], workers=workers, metadata=metadata)
        except (ContractError, OSError) as e:
            Event.objects.create(message="[Evaluation/eval] Evaluation failed.",
                                 description="{}".format(e), type="ERROR", severity="ERROR", run=run)
            raise CommandError(str(e), returncode=EXIT_CONTRACT)

        out_dir = options['out_dir'] or os.path.dirname(checkpoints[0])
        os.makedirs(out_dir, exist_ok=True)
        stem = os.path.join(out_dir, "eval_{}_{}_{}".format(options['split'], options['mode'], options['embedding']))
        report.write_csv(stem + '.csv')
        report.write_json(stem + '.json')
        record = DatasetRecord.register(dataset, os.path.abspath(options['data']),
                                        source='generated' if dataset.metadata.get('generator') else 'ingested')
        MetricRecord.store_report(report, run=run, dataset=record, checkpoint_path=checkpoints[0])
        Event.objects.create(message="[Evaluation/eval] {} {} index ({} embedding): {}".format(
                                 options['split'], options['mode'], options['embedding'], report.summary()),
                             type="NOTIFICATION", severity="INFO", run=run, dataset=record)
        self.stdout.write(self.style.SUCCESS("{} -> {}.csv/.json".format(report.summary(), stem)))
