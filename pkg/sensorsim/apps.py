from django.apps import AppConfig


class SensorsimConfig(AppConfig):
    name = 'sensorsim'
