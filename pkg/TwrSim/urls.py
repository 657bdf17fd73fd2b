"""
URL configuration for TwrSim project.

Only the admin is routed; recorded sweep runs are browsed there.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
