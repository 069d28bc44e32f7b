# -*- coding: utf-8 -*-

from django.urls import re_path
from . import apis


urlpatterns = [
    ## API views
    # ex: /datasets/api/v1/list
    re_path(r'^api/v1/list$', apis.list_datasets_api, name='list_datasets_api'),
    # ex: /datasets/api/v1/by-id/3
    re_path(r'^api/v1/by-id/(?P<dataset_id>[0-9]+)$', apis.get_dataset_api, name='get_dataset_api'),
]
