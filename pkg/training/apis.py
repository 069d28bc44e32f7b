# -*- coding: utf-8 -*-
"""REST-API definitions for training runs and ablations."""

from django.http import JsonResponse
from django.shortcuts import get_object_or_404
from rest_framework.decorators import api_view
from .models import Ablation, ExperimentRun


@api_view(['GET'])
def list_runs_api(request):
    """List runs (latest first), optionally filtered by status, mode or ablation id."""
    runs = ExperimentRun.objects.all().order_by('-id')
    if request.GET.get('status'):
        runs = runs.filter(status=request.GET['status'])
    if request.GET.get('mode'):
        runs = runs.filter(mode=request.GET['mode'])
    if request.GET.get('ablation'):
        runs = runs.filter(ablation_id=request.GET['ablation'])
    return JsonResponse([r.to_dict() for r in runs[:100]], safe=False)


@api_view(['GET'])
def get_run_api(request, run_id):
    run = get_object_or_404(ExperimentRun, run_id=run_id)
    data = run.to_dict()
    data.update({"metrics": [m.to_dict() for m in run.metrics.filter(split='test')]})
    return JsonResponse(data)


@api_view(['GET'])
def list_ablations_api(request):
    ablations = [a.to_dict() for a in Ablation.objects.all().order_by('-id')[:50]]
    return JsonResponse(ablations, safe=False)


@api_view(['GET'])
def get_ablation_api(request, ablation_id):
    ablation = get_object_or_404(Ablation, id=ablation_id)
    return JsonResponse(ablation.to_dict())
