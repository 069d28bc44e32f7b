# -*- coding: utf-8 -*-

from django.apps import AppConfig


class EvaluationConfig(AppConfig):
    name = 'evaluation'
