# -*- coding: utf-8 -*-
"""REST-API definitions for Datasets."""

from django.http import JsonResponse
from django.shortcuts import get_object_or_404
from rest_framework.decorators import api_view
from .models import DatasetRecord


@api_view(['GET'])
def list_datasets_api(request):
    """List registered datasets."""
    datasets = [d.to_dict() for d in DatasetRecord.objects.all().order_by('-id')]
    return JsonResponse(datasets, safe=False)


@api_view(['GET'])
def get_dataset_api(request, dataset_id):
    """Get a dataset record with its generator metadata."""
    dataset = get_object_or_404(DatasetRecord, id=dataset_id)
    return JsonResponse(dataset.to_dict())
