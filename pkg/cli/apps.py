from django.apps import AppConfig


class CliConfig(AppConfig):
    verbose_name = 'Command-line workflows'
    name = 'cli'
