# -*- coding: utf-8 -*-
"""Django settings for the UDON training service.

Every value can be overridden from the environment; with no broker
configured Celery tasks run eagerly in-process.
"""

import os

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

SECRET_KEY = os.environ.get('UDON_SECRET_KEY', 'udon-dev-secret-key-change-me')
DEBUG = os.environ.get('UDON_DEBUG', 'False') == 'True'
ALLOWED_HOSTS = os.environ.get('UDON_ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'django_celery_results',
    'events',
    'datasets',
    'training',
    'evaluation',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'app.urls'
WSGI_APPLICATION = 'app.wsgi.application'

if os.environ.get('UDON_DB_ENGINE', 'sqlite') == 'postgresql':
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': os.environ.get('UDON_DB_NAME', 'udon_db'),
            'USER': os.environ.get('UDON_DB_USER', 'UDON_DB_USER'),
            'PASSWORD': os.environ.get('UDON_DB_PASSWORD', 'UDON_DB_PASSWD_TO_CHANGE'),
            'HOST': os.environ.get('DB_PORT_5432_TCP_HOST', 'localhost'),
            'PORT': os.environ.get('DB_PORT_5432_TCP_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': os.environ.get('UDON_DB_NAME', os.path.join(BASE_DIR, 'var', 'udon.sqlite3')),
        }
    }

DEFAULT_AUTO_FIELD = 'django.db.models.AutoField'

LANGUAGE_CODE = 'en-us'
TIME_ZONE = os.environ.get('UDON_TZ', 'UTC')
USE_I18N = False
USE_TZ = True

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': ('rest_framework.renderers.JSONRenderer',),
    'DEFAULT_AUTHENTICATION_CLASSES': (),
    'DEFAULT_PERMISSION_CLASSES': ('rest_framework.permissions.AllowAny',),
    'UNAUTHENTICATED_USER': None,
}

# Event severities persisted in the 'events' table
LOGGING_LEVEL = os.environ.get('UDON_LOGGING_LEVEL', 'ERROR,WARNING,INFO,DEBUG')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {'format': '[%(asctime)s] %(levelname)s %(name)s: %(message)s'},
    },
    'handlers': {
        'console': {'class': 'logging.StreamHandler', 'formatter': 'simple'},
    },
    'root': {
        'handlers': ['console'],
        'level': os.environ.get('UDON_LOG_LEVEL', 'WARNING'),
    },
}

# Celery
BROKER_URL = os.environ.get('UDON_BROKER_URL', '')
CELERY_BROKER_URL = BROKER_URL or 'memory://'
CELERY_RESULT_BACKEND = 'django-db'
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TASK_ALWAYS_EAGER = not BROKER_URL
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_WORKER_PREFETCH_MULTIPLIER = 1

# Experiments
UDON_OUTPUT_ROOT = os.environ.get('UDON_OUTPUT_ROOT', os.path.join(BASE_DIR, 'var', 'runs'))
UDON_EVAL_WORKERS = int(os.environ.get('UDON_EVAL_WORKERS', '1'))
