#!/usr/bin/env python
"""UDON command line: python manage.py {gen_data,train,eval,ablate} --help"""
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "app.settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as e:
        raise ImportError(
            "Couldn't import Django. Install the pinned stack with "
            "'pip install -r requirements.txt' inside your virtual environment."
        ) from e
    execute_from_command_line(sys.argv)
