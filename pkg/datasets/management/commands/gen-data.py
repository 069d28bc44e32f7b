# -*- coding: utf-8 -*-
"""python manage.py gen-data: alias of gen_data."""

from datasets.management.commands.gen_data import Command  # noqa: F401
