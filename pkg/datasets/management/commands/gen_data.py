# -*- coding: utf-8 -*-
"""python manage.py gen_data --config var/config/default.conf --out var/data/default.udon"""

import os

from django.core.management.base import BaseCommand, CommandError

from common.exceptions import ContractError
from common.utils import keyvalue
from datasets.formats import write_dataset
from datasets.generator import generate_from_config
from datasets.models import DatasetRecord
from events.models import Event


class Command(BaseCommand):
    help = "Generate a synthetic multi-domain dataset and write it in the UDONDS1 format."

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="key=value generator config")
        parser.add_argument('--out', required=True, help="output dataset path")
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help="override a config value (repeatable)")
        parser.add_argument('--workers', type=int, default=1)

    def handle(self, *args, **options):
        try:
            values = keyvalue.read_file(options['config'])
            values.update(keyvalue.parse_assignments(options['set']))
            dataset = generate_from_config(values, workers=options['workers'])
            out_dir = os.path.dirname(os.path.abspath(options['out']))
            os.makedirs(out_dir, exist_ok=True)
            write_dataset(dataset, options['out'])
        except (ContractError, OSError) as e:
            Event.objects.create(message="[Datasets/gen_data] Dataset generation failed.",
                                 description="{}".format(e), type="ERROR", severity="ERROR")
            raise CommandError(str(e), returncode=2)

        record = DatasetRecord.register(dataset, os.path.abspath(options['out']))
        Event.objects.create(message="[Datasets/gen_data/{}] Dataset written to '{}'.".format(record.id, options['out']),
                             description="{}".format(dataset.summary()), type="NOTIFICATION", severity="INFO",
                             dataset=record)
        self.stdout.write(self.style.SUCCESS("{} examples written to {}".format(len(dataset), options['out'])))
