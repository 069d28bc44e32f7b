# -*- coding: utf-8 -*-

from django.urls import re_path
from . import apis


urlpatterns = [
    ## API views
    # ex: /evaluation/api/v1/list?run_id=...
    re_path(r'^api/v1/list$', apis.list_metrics_api, name='list_metrics_api'),
    # ex: /evaluation/api/v1/export?run_id=...
    re_path(r'^api/v1/export$', apis.export_metrics_csv_api, name='export_metrics_csv_api'),
]
