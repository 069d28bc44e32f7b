# -*- coding: utf-8 -*-

from django.urls import include, re_path

urlpatterns = [
    re_path(r'^datasets/', include('datasets.urls')),
    re_path(r'^training/', include('training.urls')),
    re_path(r'^evaluation/', include('evaluation.urls')),
    re_path(r'^events/', include('events.urls')),
]
