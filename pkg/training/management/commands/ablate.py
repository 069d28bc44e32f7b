# -*- coding: utf-8 -*-
"""python manage.py ablate --grid var/config/ablation.grid --out-dir var/runs/ablation"""

import os

from celery import group
from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from common.exceptions import ContractError
from common.utils import keyvalue
from datasets.formats import write_dataset
from datasets.models import DatasetRecord
from events.models import Event
from training.ablation import AblationGrid, consolidate, write_consolidated_csv
from training.config import ExperimentConfig
from training.models import Ablation, ExperimentRun
from training.runs import final_metric_values, load_experiment_dataset
from training.tasks import run_experiment_task

EXIT_CONTRACT = 2
DATASET_NAME = 'data.udon'


def _grid_config_path(grid, grid_path):
    path = grid.config_path
    if path and not os.path.isabs(path) and not os.path.exists(path):
        path = os.path.join(os.path.dirname(os.path.abspath(grid_path)), path)
    return path


class Command(BaseCommand):
    help = "Run every (cell, seed) of an ablation grid and write one consolidated CSV."

    def add_arguments(self, parser):
        parser.add_argument('--grid', required=True, help="INI grid file")
        parser.add_argument('--out-dir', required=True)
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help="override a config value in every cell (repeatable)")

    def handle(self, *args, **options):
        out_dir = os.path.abspath(options['out_dir'])
        try:
            grid = AblationGrid.from_file(options['grid'])
            config_path = _grid_config_path(grid, options['grid'])
            base_values = keyvalue.read_file(config_path) if config_path else {}
            extra = keyvalue.parse_assignments(options['set'])

            # one dataset shared by every cell
            base = ExperimentConfig.resolve(base_values, dict(grid.overrides, **extra))
            dataset, record = load_experiment_dataset(base)
            data_path = os.path.abspath(base.data) if base.data else os.path.join(out_dir, DATASET_NAME)
            if not base.data:
                os.makedirs(out_dir, exist_ok=True)
                write_dataset(dataset, data_path)
                record = DatasetRecord.register(dataset, data_path)

            cells = []
            for cell, _ in grid.cells:
                for seed in grid.seeds:
                    overrides = grid.cell_overrides(cell, seed)
                    overrides.update(extra)
                    overrides['data'] = data_path
                    cells.append((cell, seed, ExperimentConfig.resolve(base_values, overrides)))
        except (ContractError, OSError) as e:
            Event.objects.create(message="[Training/ablate] Invalid ablation grid.",
                                 description="{}".format(e), type="ERROR", severity="ERROR")
            raise CommandError(str(e), returncode=EXIT_CONTRACT)

        ablation = Ablation.objects.create(
            name=os.path.basename(options['grid']), grid_path=os.path.abspath(options['grid']), out_dir=out_dir,
            cells=[c for c, _ in grid.cells], seeds=grid.seeds, status='started')
        runs = []
        for cell, seed, config in cells:
            runs.append(ExperimentRun.objects.create(
                mode=config.mode, seed=seed, config=config.to_dict(), config_hash=config.config_hash(),
                out_dir=os.path.join(out_dir, cell, 'seed_{}'.format(seed)), dataset=record,
                ablation=ablation, cell=cell))
        Event.objects.create(message="[Training/ablate/{}] Ablation started ({} runs).".format(ablation.id, len(runs)),
                             type="NOTIFICATION", severity="INFO", ablation=ablation)

        job = group(run_experiment_task.s(run.id).set(queue='training') for run in runs)
        job.apply_async().get()

        entries = []
        for run in runs:
            run.refresh_from_db()
            values = final_metric_values(run) if run.status == 'finished' else None
            if run.status != 'finished':
                self.stderr.write("cell {} seed {}: {}".format(run.cell, run.seed, run.status))
            entries.append((run.cell, run.seed, run.status, values))
        csv_path = os.path.join(out_dir, 'ablation.csv')
        write_consolidated_csv(csv_path, consolidate(entries))

        ablation.status = 'finished'
        ablation.csv_path = csv_path
        ablation.finished_at = timezone.now()
        ablation.save()
        failed = sum(1 for e in entries if e[2] != 'finished')
        Event.objects.create(message="[Training/ablate/{}] Ablation finished ({} of {} runs failed).".format(ablation.id, failed, len(runs)),
                             type="NOTIFICATION", severity="WARNING" if failed else "INFO", ablation=ablation)
        self.stdout.write(self.style.SUCCESS("{} runs, {} failed; consolidated metrics in {}".format(
            len(runs), failed, csv_path)))
