# -*- coding: utf-8 -*-
"""Ablation grids: named cells of config overrides, run for every seed, consolidated into one CSV.

Grid file (INI)::

    [grid]
    config = var/config/default.conf
    seeds = 0,1,2
    cells = full, no_dyn_sampler_rr, no_any_distill
    steps = 2000                 ; any other key overrides every cell

    [no_any_distill]             ; optional per-cell overrides
    preset = no_any_distill      ; defaults to the section name
    refresh_period = 25
"""

import configparser
import csv
import re

import numpy as np

from common.exceptions import ContractError
from common.utils import keyvalue

GRID_SECTION = 'grid'

PRESETS = {
    'full': {},
    'no_dyn_sampler_rr': {'sampler': 'round_robin'},
    'teachers_64d': {'teacher_dim': '64'},
    'no_logit_distill': {'no_logit_distill': 'true'},
    'no_any_distill': {'no_any_distill': 'true'},
    'no_student_ce': {'no_student_ce': 'true'},
    'dyn_sampler_on_univ': {'loss_source': 'student_cls'},
    'cls_only_dyn': {'mode': 'baseline_cls_only', 'sampler': 'dynamic', 'loss_source': 'student_cls'},
    'uscrr': {'mode': 'baseline_cls_only', 'sampler': 'round_robin', 'loss_source': 'student_cls'},
    'mlp_baseline': {'mode': 'baseline_mlp', 'sampler': 'round_robin', 'loss_source': 'student_cls'},
    'mlp_projectors': {'projector_kind': 'mlp_one_hidden'},
    'offline_distill_1': {'mode': 'offline_distill_1'},
    'offline_distill_8': {'mode': 'offline_distill_8'},
}
TEMPERATURE_CELL = re.compile(r'^temperature_(\d+(?:\.\d+)?)$')
TEMPERATURE_STUDY = ('1.0', '0.05', '0.01')

CSV_COLUMNS = ('cell', 'seed', 'status', 'domain', 'metric', 'value')


def preset_overrides(name):
    if name in PRESETS:
        return dict(PRESETS[name])
    match = TEMPERATURE_CELL.match(name)
    if match:
        return {'temperature': match.group(1)}
    raise ContractError("unknown ablation cell '{}'".format(name))


def preset_names():
    return sorted(PRESETS) + ['temperature_{}'.format(t) for t in TEMPERATURE_STUDY]


class AblationGrid(object):
    """Parsed grid: base config path, seeds, global overrides and per-cell overrides."""

    def __init__(self, config_path, seeds, cells, overrides=None):
        if not cells:
            raise ContractError("an ablation grid needs at least one cell")
        if not seeds:
            raise ContractError("an ablation grid needs at least one seed")
        self.config_path = config_path
        self.seeds = [int(s) for s in seeds]
        self.cells = cells
        self.overrides = dict(overrides or {})

    @classmethod
    def parse(cls, text, source='<grid>'):
        parser = configparser.ConfigParser(inline_comment_prefixes=(';', '#'))
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except configparser.Error as e:
            raise ContractError("{}: {}".format(source, e))
        if not parser.has_section(GRID_SECTION):
            raise ContractError("{}: missing [{}] section".format(source, GRID_SECTION))
        grid = dict(parser.items(GRID_SECTION))
        config_path = grid.pop('config', '')
        seeds = keyvalue.to_int_list(grid.pop('seeds', '0,1,2'))
        names = [c.strip() for c in grid.pop('cells', '').split(',') if c.strip()]
        for section in parser.sections():
            if section != GRID_SECTION and section not in names:
                names.append(section)
        if len(set(names)) != len(names):
            raise ContractError("{}: duplicate cell names".format(source))
        cells = []
        for name in names:
            extra = dict(parser.items(name)) if parser.has_section(name) else {}
            overrides = preset_overrides(extra.pop('preset', name))
            overrides.update(extra)
            cells.append((name, overrides))
        return cls(config_path, seeds, cells, grid)

    @classmethod
    def from_file(cls, path):
        with open(path, 'r', encoding='utf-8') as f:
            return cls.parse(f.read(), source=str(path))

    def cell_overrides(self, name, seed):
        for cell, overrides in self.cells:
            if cell == name:
                values = dict(self.overrides)
                values.update(overrides)
                values['seed'] = str(seed)
                return values
        raise ContractError("unknown cell '{}'".format(name))


def report_values(report):
    """{(domain, metric): value x100} of a MetricsReport, mean rows included."""
    values = {}
    for domain in report.domains:
        for name in report.metrics:
            values[(str(domain), name)] = 100.0 * report.per_domain[domain][name]
    for name in report.metrics:
        values[('mean', name)] = 100.0 * report.mean(name)
    return values


def consolidate(entries):
    """CSV rows from ``(cell, seed, status, values)`` entries plus seed-mean and seed-std rows per cell.

    ``values`` maps (domain, metric) to a x100 value and is None for runs that
    did not finish; mean and std (population, ddof=0) cover the finished seeds only.
    """
    rows = []
    by_cell = {}
    for cell, seed, status, values in entries:
        if values is None:
            rows.append([cell, seed, status, '', '', ''])
            continue
        for (domain, name), value in values.items():
            rows.append([cell, seed, status, domain, name, repr(float(value))])
        by_cell.setdefault(cell, []).append(values)
    for cell, runs in by_cell.items():
        for key in runs[0]:
            if all(key in r for r in runs):
                seeds = [r[key] for r in runs]
                rows.append([cell, 'mean', 'finished', key[0], key[1], repr(float(np.mean(seeds)))])
                rows.append([cell, 'std', 'finished', key[0], key[1], repr(float(np.std(seeds)))])
    return rows


def write_consolidated_csv(path, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
