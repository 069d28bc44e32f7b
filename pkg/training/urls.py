# -*- coding: utf-8 -*-

from django.urls import re_path
from . import apis


urlpatterns = [
    ## API views
    # ex: /training/api/v1/runs/list
    re_path(r'^api/v1/runs/list$', apis.list_runs_api, name='list_runs_api'),
    # ex: /training/api/v1/runs/by-id/0f1e...
    re_path(r'^api/v1/runs/by-id/(?P<run_id>[0-9a-f-]+)$', apis.get_run_api, name='get_run_api'),
    # ex: /training/api/v1/ablations/list
    re_path(r'^api/v1/ablations/list$', apis.list_ablations_api, name='list_ablations_api'),
    # ex: /training/api/v1/ablations/by-id/2
    re_path(r'^api/v1/ablations/by-id/(?P<ablation_id>[0-9]+)$', apis.get_ablation_api, name='get_ablation_api'),
]
