# -*- coding: utf-8 -*-

import csv
import json
import math
import os
import tempfile

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import Client, SimpleTestCase, TestCase

from common.exceptions import ContractError
from common.utils import keyvalue
from datasets.formats import write_dataset
from datasets.generator import generate_from_config
from events.models import Event
from networks import ModelConfig, backbone_forward, init_params, save_checkpoint, student_embed
from .models import MetricRecord
from .protocol import _joint, evaluate, joint_index_eval, separate_index_eval
from .reports import MetricsReport
from .retrieval import (
    EmbeddingIndex, knn_search, knn_search_batch, modified_mp_at_k, recall_at_1, score_queries,
)

TOY_CONFIG = """
domains = 3
feature_dim = 40
data_seed = 1
domain.0.num_classes = 5
domain.0.samples_per_class_base = 16
domain.1.num_classes = 4
domain.1.samples_per_class_base = 16
domain.1.cue_mode = cue_noise
domain.2.num_classes = 6
domain.2.class_size_exponent = 0.8
domain.2.samples_per_class_base = 20
"""


def toy_dataset(**changes):
    values = keyvalue.parse_lines(TOY_CONFIG)
    values.update(changes)
    return generate_from_config(values)


def toy_params(dataset, seed=0):
    config = ModelConfig(input_dim=dataset.feature_dim, classes_per_domain=dataset.classes_per_domain,
                         backbone_hidden_dims=[32], backbone_out_dim=32, student_dim=16, teacher_dim=24)
    return init_params(config, seed)


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_projection_fn(input_dim, dim=12, seed=0):
    projection = np.random.default_rng(seed).standard_normal((input_dim, dim))

    def embed(domain, features):
        e = features.dot(projection)
        return e / np.linalg.norm(e, axis=1, keepdims=True)
    return embed


def brute_force_ranking(vectors, ids, query, k):
    distances = [math.sqrt(math.fsum((float(q) - float(v)) ** 2 for q, v in zip(query, row))) for row in vectors]
    order = sorted(range(len(ids)), key=lambda i: (distances[i], ids[i]))
    return [int(ids[i]) for i in order[:k]]


class KnnSearchTestCase(SimpleTestCase):

    def test_exact_match_first(self):
        rng = np.random.default_rng(0)
        vectors = unit_rows(rng, 20, 6)
        index = EmbeddingIndex(vectors, np.zeros(20), np.arange(20))
        self.assertEqual(knn_search(index, vectors[13], 3)[0], 13)

    def test_ties_go_to_lower_id(self):
        v = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        index = EmbeddingIndex(v, [0, 0, 0], [0, 1, 1], ids=[9, 7, 4])
        self.assertEqual(knn_search(index, [0.0, 1.0], 3), [4, 7, 9])
        self.assertEqual(knn_search(index, [np.sqrt(0.5), np.sqrt(0.5)], 3), [4, 7, 9])

    def test_matches_brute_force_oracle(self):
        for instance in range(50):
            rng = np.random.default_rng(instance)
            m = int(rng.integers(1, 301))
            d = int(rng.integers(2, 9))
            vectors = unit_rows(rng, m, d)
            ids = rng.permutation(1000)[:m]
            index = EmbeddingIndex(vectors, np.zeros(m), np.zeros(m), ids=ids)
            query = unit_rows(rng, 1, d)[0]
            k = int(rng.integers(1, 8))
            self.assertEqual(knn_search(index, query, k), brute_force_ranking(vectors, ids, query, k))

    def test_insertion_order_and_workers_do_not_matter(self):
        rng = np.random.default_rng(3)
        vectors = unit_rows(rng, 400, 8)
        queries = unit_rows(rng, 700, 8)
        labels = rng.integers(0, 5, size=400)
        index = EmbeddingIndex(vectors, np.zeros(400), labels)
        perm = rng.permutation(400)
        shuffled = EmbeddingIndex(vectors[perm], np.zeros(400), labels[perm], ids=perm)
        serial = knn_search_batch(index, queries, 5, workers=1)
        np.testing.assert_array_equal(serial, knn_search_batch(index, queries, 5, workers=4))
        np.testing.assert_array_equal(serial, knn_search_batch(shuffled, queries, 5, workers=3))

    def test_k_larger_than_index(self):
        index = EmbeddingIndex(unit_rows(np.random.default_rng(0), 3, 4), [0, 0, 0], [0, 1, 2])
        self.assertEqual(len(knn_search(index, index.vectors[0], 10)), 3)

    def test_contract_errors(self):
        with self.assertRaises(ContractError):
            EmbeddingIndex(np.array([[2.0, 0.0]]), [0], [0])
        with self.assertRaises(ContractError):
            EmbeddingIndex(np.eye(2), [0, 0], [0, 1], ids=[3, 3])
        empty = EmbeddingIndex(np.zeros((0, 2)), [], [])
        with self.assertRaises(ContractError):
            knn_search(empty, [1.0, 0.0], 1)
        with self.assertRaises(ContractError):
            knn_search(EmbeddingIndex(np.eye(2), [0, 0], [0, 1]), [1.0, 0.0], 0)


class MetricTestCase(SimpleTestCase):

    def setUp(self):
        # ids 0..5: domain 0 classes 1,1,1,2 then domain 1 class 1, 1
        self.index = EmbeddingIndex(np.eye(6), [0, 0, 0, 0, 1, 1], [1, 1, 1, 2, 1, 1])

    def test_recall_at_1(self):
        self.assertEqual(recall_at_1([0, 3], (0, 1), self.index), 1)
        self.assertEqual(recall_at_1([4, 0], (0, 1), self.index), 0)
        with self.assertRaises(ContractError):
            recall_at_1([], (0, 1), self.index)

    def test_modified_mp(self):
        self.assertAlmostEqual(modified_mp_at_k([0, 3, 1, 2, 4], (0, 1), self.index, k=5), 2.0 / 3.0, places=15)
        self.assertEqual(modified_mp_at_k([3, 0], (0, 2), self.index, k=5), 1.0)
        self.assertEqual(modified_mp_at_k([4, 5, 0], (1, 1), self.index, k=1), 1.0)
        self.assertIsNone(modified_mp_at_k([0], (1, 7), self.index, k=5))

    def test_all_correct_with_many_positives(self):
        index = EmbeddingIndex(np.eye(7), [0] * 7, [0] * 6 + [1])
        self.assertEqual(modified_mp_at_k([5, 4, 3, 2, 1, 6], (0, 0), index, k=5), 1.0)

    def test_scores_match_brute_force_oracle(self):
        for instance in range(50):
            rng = np.random.default_rng(1000 + instance)
            m = int(rng.integers(5, 301))
            d = int(rng.integers(2, 6))
            domains = rng.integers(0, 2, size=m)
            classes = rng.integers(0, 4, size=m)
            vectors = unit_rows(rng, m, d)
            index = EmbeddingIndex(vectors, domains, classes)
            queries = unit_rows(rng, 10, d)
            labels = [(int(rng.integers(0, 2)), int(rng.integers(0, 5))) for _ in range(10)]
            recall, precision = score_queries(index, queries, labels, k=5)
            for q, label in enumerate(labels):
                n_pos = sum(1 for i in range(m) if (domains[i], classes[i]) == label)
                if n_pos == 0:
                    self.assertTrue(math.isnan(recall[q]) and math.isnan(precision[q]))
                    continue
                k_eff = min(5, n_pos)
                ranked = brute_force_ranking(vectors, list(range(m)), queries[q], k_eff)
                hits = [(domains[i], classes[i]) == label for i in ranked]
                self.assertEqual(recall[q], 1.0 if hits[0] else 0.0)
                self.assertEqual(precision[q], sum(hits) / float(k_eff))
                if recall[q] == 1.0:
                    self.assertGreaterEqual(precision[q], 1.0 / k_eff)


class MetricsReportTestCase(SimpleTestCase):

    def test_mean_is_balanced(self):
        report = MetricsReport({0: {'R@1': 0.5, 'mP@5': 0.25}, 1: {'R@1': 1.0, 'mP@5': 0.75}}, k=5)
        self.assertEqual(report.mean('R@1'), 0.75)
        self.assertEqual(report.means(), {'R@1': 0.75, 'mP@5': 0.5})

    def test_values_must_be_fractions(self):
        with self.assertRaises(ContractError):
            MetricsReport({0: {'R@1': 50.0, 'mP@5': 0.5}}, k=5)

    def test_from_scores_skips_domains_without_queries(self):
        recall = np.array([1.0, 0.0, np.nan, 1.0])
        precision = np.array([1.0, 0.5, np.nan, 0.2])
        with self.assertLogs('evaluation.reports', level='WARNING'):
            report = MetricsReport.from_scores([0, 0, 1, 2], recall, precision, k=5, expected_domains=range(4))
        self.assertEqual(report.domains, [0, 2])
        self.assertEqual(report.skipped_domains, [1, 3])
        self.assertEqual(report.per_domain[0], {'R@1': 0.5, 'mP@5': 0.75})
        self.assertEqual(report.query_counts, {0: 2, 2: 1})

    def test_rows_are_percentages(self):
        report = MetricsReport({1: {'R@1': 0.5, 'mP@3': 0.25}}, k=3, metadata={'run_id': 'r', 'seed': 2, 'step': 9, 'split': 'val'})
        self.assertEqual(report.rows(), [
            ['r', 2, 9, 'val', 1, 'R@1', repr(50.0)],
            ['r', 2, 9, 'val', 1, 'mP@3', repr(25.0)],
            ['r', 2, 9, 'val', 'mean', 'R@1', repr(50.0)],
            ['r', 2, 9, 'val', 'mean', 'mP@3', repr(25.0)],
        ])
        self.assertEqual(report.to_dict(timestamp=False)['mean'], {'R@1': 50.0, 'mP@3': 25.0})


class ProtocolTestCase(SimpleTestCase):

    def setUp(self):
        self.dataset = toy_dataset()
        self.embed_fn = random_projection_fn(self.dataset.feature_dim)

    def test_separate_index_never_loses_recall(self):
        joint = _joint(self.embed_fn, self.dataset, 'test', 5, 1, {})
        separate = separate_index_eval(self.embed_fn, self.dataset, 'test', k=5)
        for domain in joint.domains:
            self.assertGreaterEqual(separate.per_domain[domain]['R@1'], joint.per_domain[domain]['R@1'])

    def test_single_domain_separate_equals_joint(self):
        dataset = toy_dataset(domains='1')
        embed_fn = random_projection_fn(dataset.feature_dim)
        joint = _joint(embed_fn, dataset, 'val', 5, 1, {})
        separate = separate_index_eval(embed_fn, dataset, 'val', k=5)
        self.assertEqual(joint.per_domain, separate.per_domain)

    def test_joint_eval_matches_end_to_end_oracle(self):
        params = toy_params(self.dataset)
        report = joint_index_eval(params, self.dataset, 'test', k=5)
        bound = params.constants()
        all_ids = np.arange(len(self.dataset))
        embed = student_embed(bound, params.config, backbone_forward(bound, params.config,
                                                                    self.dataset.features_of(all_ids))).values
        query_ids = self.dataset.indices('test_query')
        index_ids = self.dataset.indices('test_index')
        labels = list(zip(self.dataset.domain_ids.tolist(), self.dataset.class_ids.tolist()))
        per_domain = {}
        for q in query_ids:
            sims = embed[index_ids].dot(embed[q])
            order = sorted(range(len(index_ids)), key=lambda i: (2.0 - 2.0 * sims[i], index_ids[i]))
            n_pos = sum(1 for i in index_ids if labels[i] == labels[q])
            k_eff = min(5, n_pos)
            hits = [labels[index_ids[i]] == labels[q] for i in order[:k_eff]]
            per_domain.setdefault(labels[q][0], []).append((float(hits[0]), sum(hits) / float(k_eff)))
        for domain, scores in per_domain.items():
            self.assertAlmostEqual(report.per_domain[domain]['R@1'], np.mean([s[0] for s in scores]), places=12)
            self.assertAlmostEqual(report.per_domain[domain]['mP@5'], np.mean([s[1] for s in scores]), places=12)
        self.assertAlmostEqual(report.mean('R@1'), np.mean([report.per_domain[d]['R@1'] for d in report.domains]))

    def test_untrained_model_on_unstructured_features_is_near_chance(self):
        """Chance-level retrieval is only expected when the features carry no class structure.

        A random backbone keeps the cluster geometry of generated data, so an
        untrained model scores well above chance there.
        """
        dataset = toy_dataset()
        dataset.features = np.random.default_rng(5).standard_normal(dataset.features.shape).astype(np.float32)
        report = joint_index_eval(toy_params(dataset), dataset, 'test', k=5)
        average_classes = np.mean(dataset.classes_per_domain)
        self.assertLessEqual(report.mean('R@1'), 3.0 / average_classes)

    def test_teacher_embeddings_in_separate_index(self):
        params = toy_params(self.dataset)
        report = evaluate([params], self.dataset, split='val', mode='separate', embedding='teacher')
        self.assertEqual(report.metadata['embedding'], 'teacher')
        self.assertEqual(report.domains, [0, 1, 2])

    def test_workers_do_not_change_metrics(self):
        params = toy_params(self.dataset)
        one = joint_index_eval(params, self.dataset, 'test', workers=1)
        four = joint_index_eval(params, self.dataset, 'test', workers=4)
        self.assertEqual(one.per_domain, four.per_domain)

    def test_mismatched_checkpoint(self):
        params = toy_params(toy_dataset(domains='2'))
        with self.assertRaises(ContractError):
            joint_index_eval(params, self.dataset, 'val')
        with self.assertRaises(ContractError):
            evaluate([toy_params(self.dataset)], self.dataset, split='train')


class EvalCommandTestCase(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dataset = toy_dataset()
        self.data_path = os.path.join(self.tmp.name, 'toy.udon')
        write_dataset(self.dataset, self.data_path)
        self.checkpoint = os.path.join(self.tmp.name, 'model.ckpt')
        save_checkpoint(toy_params(self.dataset), self.checkpoint)

    def tearDown(self):
        self.tmp.cleanup()

    def _eval(self, out, *extra):
        call_command('eval', '--checkpoint', self.checkpoint, '--data', self.data_path, '--out-dir', out, *extra)

    def test_evaluate_twice_gives_identical_files(self):
        first, second = os.path.join(self.tmp.name, 'a'), os.path.join(self.tmp.name, 'b')
        self._eval(first, '--split', 'test', '--mode', 'joint')
        self._eval(second, '--split', 'test', '--mode', 'joint', '--workers', '3')
        name = 'eval_test_joint_student'
        with open(os.path.join(first, name + '.csv'), 'rb') as a, open(os.path.join(second, name + '.csv'), 'rb') as b:
            self.assertEqual(a.read(), b.read())
        payloads = []
        for out in (first, second):
            with open(os.path.join(out, name + '.json')) as f:
                data = json.load(f)
            self.assertIn('generated_at', data)
            data.pop('generated_at')
            payloads.append(data)
        self.assertEqual(payloads[0], payloads[1])

        with open(os.path.join(first, name + '.csv')) as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(sorted(set(r['domain'] for r in rows)), ['0', '1', '2', 'mean'])
        self.assertEqual(set(r['metric'] for r in rows), {'R@1', 'mP@5'})
        self.assertEqual(MetricRecord.objects.filter(domain='mean', split='test').count(), 4)

    def test_separate_student_beats_joint(self):
        out = os.path.join(self.tmp.name, 'out')
        self._eval(out, '--mode', 'joint')
        self._eval(out, '--mode', 'separate')
        joint = {m.domain: m.value for m in MetricRecord.objects.filter(index_mode='joint', metric='R@1')}
        separate = {m.domain: m.value for m in MetricRecord.objects.filter(index_mode='separate', metric='R@1')}
        for domain in ('0', '1', '2'):
            self.assertGreaterEqual(separate[domain], joint[domain])

    def test_teacher_embedding(self):
        out = os.path.join(self.tmp.name, 'teacher')
        self._eval(out, '--mode', 'separate', '--embedding', 'teacher', '--split', 'val')
        self.assertTrue(os.path.exists(os.path.join(out, 'eval_val_separate_teacher.json')))
        self.assertTrue(MetricRecord.objects.filter(embedding='teacher', split='val').exists())

    def test_mismatch_exits_2(self):
        other = toy_dataset(feature_dim='48')
        path = os.path.join(self.tmp.name, 'other.udon')
        write_dataset(other, path)
        with self.assertRaises(CommandError) as ctx:
            call_command('eval', '--checkpoint', self.checkpoint, '--data', path)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertTrue(Event.objects.filter(type='ERROR', message__startswith='[Evaluation/eval]').exists())

    def test_missing_checkpoint_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('eval', '--checkpoint', os.path.join(self.tmp.name, 'nope.ckpt'), '--data', self.data_path)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_metrics_api(self):
        self._eval(os.path.join(self.tmp.name, 'api'), '--split', 'val')
        c = Client()
        r = c.get('/evaluation/api/v1/list', {'split': 'val', 'domain': 'mean'})
        self.assertEqual(r.status_code, 200)
        self.assertEqual(sorted(m['metric'] for m in r.json()), ['R@1', 'mP@5'])
        r = c.get('/evaluation/api/v1/export', {'split': 'val'})
        self.assertEqual(r['Content-Type'], 'text/csv')
        lines = r.content.decode('utf-8').strip().splitlines()
        self.assertEqual(lines[0], 'run_id,seed,step,split,domain,metric,value')
        self.assertEqual(len(lines), 1 + 8)
