# -*- coding: utf-8 -*-
"""REST-API definitions for retrieval metrics."""

from django.http import HttpResponse, JsonResponse
from rest_framework.decorators import api_view
from .models import MetricRecord
from .reports import CSV_COLUMNS

import csv


def _filtered(request):
    metrics = MetricRecord.objects.all().select_related('run')
    if request.GET.get('run_id'):
        metrics = metrics.filter(run__run_id=request.GET['run_id'])
    if request.GET.get('split'):
        metrics = metrics.filter(split=request.GET['split'])
    if request.GET.get('domain'):
        metrics = metrics.filter(domain=request.GET['domain'])
    return metrics


@api_view(['GET'])
def list_metrics_api(request):
    """List metric rows, optionally filtered by run_id, split or domain."""
    return JsonResponse([m.to_dict() for m in _filtered(request)[:1000]], safe=False)


@api_view(['GET'])
def export_metrics_csv_api(request):
    response = HttpResponse(content_type='text/csv')
    response['Content-Disposition'] = 'attachment; filename=export_metrics.csv'
    writer = csv.writer(response)
    writer.writerow(CSV_COLUMNS)
    for m in _filtered(request):
        writer.writerow([m.run.run_id.hex if m.run else '', m.seed, m.step, m.split, m.domain, m.metric, repr(m.value)])
    return response
