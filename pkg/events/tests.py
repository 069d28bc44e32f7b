# -*- coding: utf-8 -*-

from django.test import Client, TestCase, override_settings

from training.models import ExperimentRun
from .models import Event


class EventTestCase(TestCase):

    @override_settings(LOGGING_LEVEL='ERROR,WARNING')
    def test_severity_filter(self):
        Event.objects.create(message="kept", type="ERROR", severity="ERROR")
        Event.objects.create(message="dropped", type="NOTIFICATION", severity="INFO")
        self.assertEqual(list(Event.objects.values_list('message', flat=True)), ['kept'])

    def test_run_lifecycle_is_logged(self):
        run = ExperimentRun.objects.create(mode='udon', seed=0, out_dir='/tmp/udon-run')
        run.set_status('started')
        run_events = Event.objects.filter(run=run)
        self.assertTrue(run_events.filter(type='CREATE').exists())
        self.assertTrue(run_events.filter(type='UPDATE').exists())
        run.delete()
        self.assertTrue(Event.objects.filter(type='DELETE').exists())


class EventApiTestCase(TestCase):

    def setUp(self):
        self.c = Client()
        self.run = ExperimentRun.objects.create(mode='udon', seed=1, out_dir='/tmp/udon-run')
        Event.objects.create(message="[Test] failure", type="ERROR", severity="ERROR", run=self.run)

    def test_list(self):
        r = self.c.get('/events/api/v1/list', {'severity': 'error'})
        self.assertEqual(r.status_code, 200)
        self.assertEqual([e['message'] for e in r.json()], ["[Test] failure"])
        r = self.c.get('/events/api/v1/list', {'run_id': self.run.run_id.hex})
        self.assertTrue(len(r.json()) >= 2)

    def test_delete(self):
        event = Event.objects.filter(type='ERROR').first()
        r = self.c.delete('/events/api/v1/delete/{}'.format(event.id))
        self.assertEqual(r.json()['status'], 'deleted')
        self.assertFalse(Event.objects.filter(id=event.id).exists())
        self.assertEqual(self.c.delete('/events/api/v1/delete/{}'.format(event.id)).status_code, 404)
