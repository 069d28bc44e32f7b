# -*- coding: utf-8 -*-
"""python manage.py train --config var/config/default.conf --seed 0 --out-dir var/runs/udon-0"""

import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from common.exceptions import ContractError, DivergenceError, UdonError
from common.utils import keyvalue
from events.models import Event
from training.config import ExperimentConfig
from training.models import ExperimentRun
from training.runs import execute_run, load_experiment_dataset

EXIT_CONTRACT = 2
EXIT_DIVERGED = 3


def resolve_config(path, assignments, seed=None):
    overrides = keyvalue.parse_assignments(assignments)
    if seed is not None:
        overrides['seed'] = str(seed)
    if path:
        return ExperimentConfig.from_file(path, overrides)
    return ExperimentConfig.resolve(overrides=overrides)


class Command(BaseCommand):
    help = "Train one run (UDON, a baseline or offline distillation) and evaluate it on the test split."

    def add_arguments(self, parser):
        parser.add_argument('--config', default='', help="key=value experiment config")
        parser.add_argument('--seed', type=int, default=None)
        parser.add_argument('--out-dir', default='', help="run directory (default: under UDON_OUTPUT_ROOT)")
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help="override a config value (repeatable)")

    def handle(self, *args, **options):
        try:
            config = resolve_config(options['config'], options['set'], options['seed'])
            dataset, record = load_experiment_dataset(config)
        except (ContractError, OSError) as e:
            Event.objects.create(message="[Training/train] Invalid configuration or dataset.",
                                 description="{}".format(e), type="ERROR", severity="ERROR")
            raise CommandError(str(e), returncode=EXIT_CONTRACT)

        out_dir = options['out_dir'] or os.path.join(
            settings.UDON_OUTPUT_ROOT, "{}-{}-seed{}".format(config.mode, config.config_hash()[:8], config.seed))
        run = ExperimentRun.objects.create(mode=config.mode, seed=config.seed, config=config.to_dict(),
                                           config_hash=config.config_hash(), out_dir=os.path.abspath(out_dir),
                                           dataset=record)
        try:
            report = execute_run(run, config, dataset)
        except DivergenceError as e:
            raise CommandError(str(e), returncode=EXIT_DIVERGED)
        except (UdonError, OSError) as e:
            raise CommandError(str(e), returncode=EXIT_CONTRACT)

        self.stdout.write(self.style.SUCCESS("run {} finished ({}): test {}".format(
            run.run_id.hex, run.out_dir, report.summary())))
