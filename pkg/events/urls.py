# -*- coding: utf-8 -*-

from django.urls import re_path
from . import apis


urlpatterns = [
    # API Views
    # ex: /events/api/v1/list
    re_path(r'^api/v1/list$',
            apis.list_events_api, name='list_events_api'),
    # ex: /events/api/v1/delete/2
    re_path(r'^api/v1/delete/(?P<event_id>[0-9]+)$',
            apis.delete_event_api, name='delete_event_api'),
]
