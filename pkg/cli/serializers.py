import logging

from django.conf import settings
from rest_framework import serializers

from propagation.engines import ENGINES

logger = logging.getLogger(__name__)

COMMANDS = ['reconstruct', 'evaluate', 'search', 'sweep', 'depth', 'grid', 'bench', 'gen']
KINDS = ['auto', 'binary', 'continuous']
METRICS = ['recall', 'ndcg', 'rmse', 'corr']

# Commands that compare engines default to more than the selected one.
DEFAULT_ENGINES = {'sweep': list(ENGINES), 'depth': ['fp', 'arb'], 'bench': ['fp', 'arb']}


def _default(name):
    return settings.ARB_DEFAULTS[name]


class RunConfigSerializer(serializers.Serializer):
    """
    Validates the options of one command invocation.
    Options left unset fall back to settings.ARB_DEFAULTS and ARB_THREADS.
    """
    command = serializers.ChoiceField(choices=COMMANDS)
    engine = serializers.ChoiceField(choices=ENGINES, default='arb')
    engines = serializers.ListField(child=serializers.ChoiceField(choices=ENGINES), required=False, allow_null=True)
    alpha = serializers.FloatField(required=False, allow_null=True)
    beta = serializers.FloatField(required=False, allow_null=True)
    iters = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    tol = serializers.FloatField(min_value=0, required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0, default=0)
    threads = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    graph = serializers.CharField(required=False, allow_null=True)
    features = serializers.CharField(required=False, allow_null=True)
    labels = serializers.CharField(required=False, allow_null=True)
    known = serializers.CharField(required=False, allow_null=True)
    out = serializers.CharField(required=False, allow_null=True)
    k = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, allow_null=True)
    rates = serializers.ListField(
        child=serializers.FloatField(min_value=0, max_value=1), required=False, allow_null=True
    )
    known_fraction = serializers.FloatField(required=False, allow_null=True)
    kind = serializers.ChoiceField(choices=KINDS, default='auto')
    metrics = serializers.ListField(child=serializers.ChoiceField(choices=METRICS), required=False, allow_null=True)
    depths = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, allow_null=True)
    grid = serializers.ListField(child=serializers.FloatField(), required=False, allow_null=True)

    def validate_alpha(self, value):
        """ Check that alpha lies in (0, 1]."""
        if value is not None and not 0 < value <= 1:
            raise serializers.ValidationError("alpha must lie in (0, 1]")
        return value

    def validate_beta(self, value):
        """ Check that beta lies in (0, 1]."""
        if value is not None and not 0 < value <= 1:
            raise serializers.ValidationError("beta must lie in (0, 1]")
        return value

    def validate_known_fraction(self, value):
        if value is not None and not 0 < value < 1:
            raise serializers.ValidationError("known fraction must lie in (0, 1)")
        return value

    def validate_rates(self, value):
        if value and any(not 0 < rate < 1 for rate in value):
            raise serializers.ValidationError("missing rates must lie in (0, 1)")
        return value

    def validate_grid(self, value):
        if value and any(not 0 < item <= 1 for item in value):
            raise serializers.ValidationError("grid values must lie in (0, 1]")
        return value

    def validate(self, data):
        if data['engine'] == 'fp' and (data.get('alpha') is not None or data.get('beta') is not None):
            logger.warning("engine fp ignores --alpha and --beta")
        if data['engine'] == 'arb-no-ve' and data.get('alpha') is not None:
            logger.warning("engine arb-no-ve ignores --alpha")
        if data['engine'] == 'arb-no-bc' and data.get('beta') is not None:
            logger.warning("engine arb-no-bc ignores --beta")

        fallbacks = {
            'alpha': _default('ALPHA'),
            'beta': _default('BETA'),
            'iters': _default('MAX_ITERS'),
            'tol': _default('TOLERANCE'),
            'threads': settings.ARB_THREADS,
            'k': list(_default('K_LIST')),
            'rates': list(_default('RATES')),
            'known_fraction': _default('KNOWN_FRACTION'),
            'depths': list(_default('DEPTHS')),
            'grid': list(_default('GRID')),
            'engines': DEFAULT_ENGINES.get(data['command'], [data['engine']]),
        }
        for name, value in fallbacks.items():
            if data.get(name) is None:
                data[name] = value
        return data
