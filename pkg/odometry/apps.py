from django.apps import AppConfig


class OdometryConfig(AppConfig):
    name = 'odometry'
