from django.apps import AppConfig


class ElevmapConfig(AppConfig):
    name = 'elevmap'
