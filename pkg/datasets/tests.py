# -*- coding: utf-8 -*-

import os
import tempfile

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import Client, SimpleTestCase, TestCase

from common.exceptions import ContractError, FormatError, GenerationError
from common.utils import keyvalue
from events.models import Event
from training.config import DEFAULT_DOMAINS
from .dataset import SPLITS, Dataset, DomainSpec, split_tag
from .formats import dumps_dataset, loads_dataset, read_dataset, sidecar_path, write_dataset
from .generator import (
    DEFAULT_SPLIT_FRACTIONS, generate_from_config, generate_multidomain, repair_split_counts,
    split_counts, zipf_class_sizes,
)
from .models import DatasetRecord

SMALL_CONFIG = """
domains = 2
feature_dim = 32
data_seed = 3
domain.0.num_classes = 4
domain.0.samples_per_class_base = 12
domain.0.cue_mode = cue_discriminative
domain.1.num_classes = 6
domain.1.class_size_exponent = 1.0
domain.1.samples_per_class_base = 20
domain.1.cue_mode = cue_noise
"""


def default_dataset(workers=1):
    values = dict(DEFAULT_DOMAINS, domains='4', feature_dim='64', data_seed='0')
    return generate_from_config(values, workers=workers)


def linear_readout_accuracy(train_x, train_y, test_x, test_y, num_classes):
    """Closed-form least-squares linear readout on one-hot targets."""
    design = np.hstack([train_x, np.ones((train_x.shape[0], 1))])
    targets = np.eye(num_classes)[train_y]
    weights = np.linalg.lstsq(design, targets, rcond=None)[0]
    predicted = np.argmax(np.hstack([test_x, np.ones((test_x.shape[0], 1))]).dot(weights), axis=1)
    return float(np.mean(predicted == test_y))


class ZipfTestCase(SimpleTestCase):

    def test_balanced(self):
        self.assertEqual(zipf_class_sizes(7, 0.0, 30), [30] * 7)

    def test_hand_computed(self):
        self.assertEqual(zipf_class_sizes(3, 1.0, 6), [6, 3, 2])

    def test_formula_oracle(self):
        sizes = zipf_class_sizes(100, 1.5, 200)
        expected = [max(1, int(round(200 * k ** -1.5))) for k in range(1, 101)]
        self.assertEqual(sizes, expected)
        self.assertTrue(all(a >= b for a, b in zip(sizes, sizes[1:])))

    def test_invalid(self):
        with self.assertRaises(ContractError):
            zipf_class_sizes(0, 1.0, 5)


class SplitTestCase(SimpleTestCase):

    def test_largest_remainder(self):
        self.assertEqual(split_counts(3, DEFAULT_SPLIT_FRACTIONS), [2, 0, 1, 0, 0])
        self.assertEqual(sum(split_counts(37, DEFAULT_SPLIT_FRACTIONS)), 37)

    def test_repair_borrows_from_train(self):
        self.assertEqual(repair_split_counts([3, 1, 0, 0, 0], DEFAULT_SPLIT_FRACTIONS, 0, 0), [2, 1, 1, 0, 0])

    def test_repair_converts_a_query(self):
        self.assertEqual(repair_split_counts([1, 1, 0, 0, 0], DEFAULT_SPLIT_FRACTIONS, 0, 0), [1, 0, 1, 0, 0])

    def test_infeasible_fractions_name_the_class(self):
        specs = [DomainSpec(0, 2)]
        with self.assertRaises(GenerationError) as ctx:
            generate_multidomain(specs, 32, split_fractions=(0.7, 0.3, 0.0, 0.0, 0.0))
        self.assertEqual((ctx.exception.domain_id, ctx.exception.class_id), (0, 0))

    def test_fractions_must_sum_to_one(self):
        with self.assertRaises(ContractError):
            generate_multidomain([DomainSpec(0, 2)], 32, split_fractions=(0.5, 0.1, 0.1, 0.1, 0.1))


class GeneratorTestCase(SimpleTestCase):

    def test_zero_noise_clusters(self):
        dataset = generate_multidomain([DomainSpec(0, 2, noise_sigma=0.0)], 32, seed=5)
        for c in range(2):
            rows = dataset.features[dataset.class_ids == c]
            self.assertTrue(np.all(rows == rows[0]))
        self.assertFalse(np.array_equal(dataset.features[dataset.class_ids == 0][0],
                                        dataset.features[dataset.class_ids == 1][0]))

    def test_deterministic_and_independent_of_workers(self):
        first = dumps_dataset(default_dataset())
        self.assertEqual(first, dumps_dataset(default_dataset()))
        self.assertEqual(first, dumps_dataset(default_dataset(workers=4)))

    def test_default_benchmark_shape(self):
        dataset = default_dataset()
        self.assertEqual(dataset.classes_per_domain, [20, 20, 20, 100])
        self.assertEqual(dataset.feature_dim, 64)
        for domain in range(4):
            self.assertEqual(dataset.domain_counts()[domain],
                             sum(zipf_class_sizes(dataset.classes_per_domain[domain],
                                                  1.2 if domain == 3 else 0.0, 800 if domain == 3 else 100)))
            # one query is at most one R@1 point
            self.assertGreaterEqual(len(dataset.indices('test_query', domain)), 100)
        self.assertEqual(dataset.invariant_violations(), [])

    def test_every_query_has_an_index_example(self):
        dataset = default_dataset()
        for stage in ('val', 'test'):
            index = set(zip(*dataset.labels_of(dataset.indices(stage + '_index'))))
            for label in zip(*dataset.labels_of(dataset.indices(stage + '_query'))):
                self.assertIn(label, index)

    def test_linear_readout_separates_balanced_domains(self):
        dataset = default_dataset()
        for domain in range(3):
            ids = dataset.indices('train', domain)
            x = dataset.features_of(ids)
            y = dataset.class_ids[ids].astype(np.int64)
            self.assertGreater(linear_readout_accuracy(x, y, x, y, 20), 0.9, "domain {}".format(domain))

    def test_noise_cue_carries_no_class_signal(self):
        dataset = default_dataset()
        cue = slice(8, 16)
        train = dataset.indices('train', 1)
        held_out = np.setdiff1d(dataset.indices(domain=1), train)
        accuracy = linear_readout_accuracy(dataset.features_of(train)[:, cue], dataset.class_ids[train].astype(np.int64),
                                  dataset.features_of(held_out)[:, cue], dataset.class_ids[held_out].astype(np.int64), 20)
        self.assertLess(abs(accuracy - 1.0 / 20), 0.05)

    def test_discriminative_cue_carries_class_signal(self):
        dataset = default_dataset()
        cue = slice(8, 16)
        train = dataset.indices('train', 0)
        held_out = np.setdiff1d(dataset.indices(domain=0), train)
        x, y = dataset.features_of(train)[:, cue], dataset.class_ids[train].astype(np.int64)
        centroids = np.stack([x[y == c].mean(axis=0) for c in range(20)])
        test_x = dataset.features_of(held_out)[:, cue]
        nearest = np.argmin(((test_x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2), axis=1)
        self.assertGreater(np.mean(nearest == dataset.class_ids[held_out]), 0.5)

    def test_feature_dim_too_small(self):
        with self.assertRaises(ContractError):
            generate_multidomain([DomainSpec(0, 2)], 16)

    def test_metadata_records_the_generator(self):
        dataset = generate_from_config(keyvalue.parse_lines(SMALL_CONFIG))
        self.assertEqual(dataset.metadata['data_seed'], '3')
        self.assertEqual(dataset.metadata['domain.1.cue_mode'], 'cue_noise')


class FormatTestCase(SimpleTestCase):

    def setUp(self):
        self.dataset = generate_from_config(keyvalue.parse_lines(SMALL_CONFIG))

    def test_round_trip(self):
        data = dumps_dataset(self.dataset)
        loaded = loads_dataset(data)
        self.assertTrue(loaded.equals(self.dataset))
        self.assertEqual(dumps_dataset(loaded), data)

    def test_round_trip_keeps_interleaved_domains_in_id_order(self):
        tags = [split_tag(s) for s in ('train', 'train', 'test_query', 'test_query', 'test_index', 'test_index')]
        mixed = Dataset(4, [2, 3], [1, 0, 1, 0, 1, 0], [2, 1, 0, 1, 0, 1], tags,
                        np.arange(24, dtype=np.float32).reshape(6, 4))
        data = dumps_dataset(mixed)
        loaded = loads_dataset(data)
        self.assertEqual(loaded.domain_ids.tolist(), [1, 0, 1, 0, 1, 0])
        self.assertEqual(loaded.features[:, 0].tolist(), [0.0, 4.0, 8.0, 12.0, 16.0, 20.0])
        self.assertTrue(loaded.equals(mixed))
        self.assertEqual(dumps_dataset(loaded), data)

    def test_empty_dataset(self):
        empty = Dataset(8, [2, 3], [], [], [], np.zeros((0, 8)))
        loaded = loads_dataset(dumps_dataset(empty))
        self.assertEqual(len(loaded), 0)
        self.assertEqual(loaded.classes_per_domain, [2, 3])

    def test_bad_magic(self):
        data = bytearray(dumps_dataset(self.dataset))
        data[0] = ord('X')
        with self.assertRaises(FormatError) as ctx:
            loads_dataset(bytes(data))
        self.assertEqual(ctx.exception.offset, 0)

    def test_truncated(self):
        data = dumps_dataset(self.dataset)
        with self.assertRaises(FormatError) as ctx:
            loads_dataset(data[:-5])
        self.assertIsNotNone(ctx.exception.offset)

    def test_invariant_violation_on_read(self):
        orphan = Dataset(4, [2], [0], [1], [split_tag('val_query')], np.zeros((1, 4)))
        with self.assertRaises(FormatError):
            loads_dataset(dumps_dataset(orphan))

    def test_file_and_sidecar(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'small.udon')
            write_dataset(self.dataset, path)
            self.assertTrue(os.path.exists(sidecar_path(path)))
            loaded = read_dataset(path)
        self.assertTrue(loaded.equals(self.dataset))
        self.assertEqual(loaded.metadata, self.dataset.metadata)

    def test_subset(self):
        part = self.dataset.subset(split='train', domain=1)
        self.assertTrue(np.all(part.domain_ids == 1))
        self.assertTrue(np.all(part.split_tags == SPLITS.index('train')))
        self.assertEqual(len(part), len(self.dataset.indices('train', 1)))


class GenDataCommandTestCase(TestCase):

    def test_gen_data(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = os.path.join(tmp, 'small.conf')
            with open(config, 'w') as f:
                f.write(SMALL_CONFIG)
            out = os.path.join(tmp, 'data', 'small.udon')
            call_command('gen_data', '--config', config, '--out', out, '--set', 'data_seed=4')
            dataset = read_dataset(out)
        self.assertEqual(dataset.metadata['data_seed'], '4')
        record = DatasetRecord.objects.get(path=os.path.abspath(out))
        self.assertEqual(record.num_examples, len(dataset))
        self.assertEqual(record.classes_per_domain, [4, 6])
        self.assertTrue(Event.objects.filter(dataset=record, type='NOTIFICATION').exists())

        r = Client().get('/datasets/api/v1/list')
        self.assertEqual(r.status_code, 200)
        self.assertEqual(r.json()[0]['name'], 'small.udon')

    def test_bad_config_exits_2(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = os.path.join(tmp, 'bad.conf')
            with open(config, 'w') as f:
                f.write("domains = 1\ndomain.0.num_classes = 1\n")
            with self.assertRaises(CommandError) as ctx:
                call_command('gen_data', '--config', config, '--out', os.path.join(tmp, 'x.udon'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertTrue(Event.objects.filter(type='ERROR').exists())

    def test_hyphenated_alias(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = os.path.join(tmp, 'small.conf')
            with open(config, 'w') as f:
                f.write(SMALL_CONFIG)
            out = os.path.join(tmp, 'small.udon')
            call_command('gen-data', '--config', config, '--out', out)
            alias = read_dataset(out)
        self.assertTrue(alias.equals(generate_from_config(keyvalue.parse_lines(SMALL_CONFIG))))
