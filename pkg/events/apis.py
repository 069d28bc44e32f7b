# -*- coding: utf-8 -*-
"""REST-API definitions for Events."""

from django.http import JsonResponse
from django.shortcuts import get_object_or_404
from rest_framework.decorators import api_view
from .models import Event


@api_view(['GET'])
def list_events_api(request):
    """List Events (latest first), optionally filtered by run or severity."""
    events = Event.objects.all().order_by('-id')
    if request.GET.get('run_id'):
        events = events.filter(run__run_id=request.GET['run_id'])
    if request.GET.get('severity'):
        events = events.filter(severity=request.GET['severity'].upper())

    return JsonResponse([e.to_dict() for e in events[:100]], json_dumps_params={'indent': 2}, safe=False)


@api_view(['DELETE'])
def delete_event_api(request, event_id):
    """Delete an event."""
    event = get_object_or_404(Event, id=event_id)
    event.delete()

    return JsonResponse({
        "status": "deleted",
        "message": "event '{}' deleted.".format(event_id)
    })
