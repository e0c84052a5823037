from django.apps import AppConfig


class CloudfilterConfig(AppConfig):
    name = 'cloudfilter'
