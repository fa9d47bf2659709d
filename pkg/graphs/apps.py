from django.apps import AppConfig


class GraphsConfig(AppConfig):
    verbose_name = 'Graph structure'
    name = 'graphs'
