from django.apps import AppConfig


class DatasetsConfig(AppConfig):
    verbose_name = 'Datasets and file formats'
    name = 'datasets'
