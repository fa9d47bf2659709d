from django.apps import AppConfig


class PropagationConfig(AppConfig):
    verbose_name = 'Propagation engines'
    name = 'propagation'
