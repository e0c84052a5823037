from django.apps import AppConfig


class SceneConfig(AppConfig):
    name = 'scene'
