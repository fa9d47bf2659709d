from django.apps import AppConfig


class EvaluationConfig(AppConfig):
    verbose_name = 'Evaluation protocol'
    name = 'evaluation'
