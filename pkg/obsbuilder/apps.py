from django.apps import AppConfig


class ObsbuilderConfig(AppConfig):
    name = 'obsbuilder'
