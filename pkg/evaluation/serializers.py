from rest_framework import serializers


class EvalReportSerializer(serializers.Serializer):
    """
    Read-only representation of an EvalReport.
    Metric maps are keyed by k as strings so the output is valid JSON.
    """
    feature_kind = serializers.CharField(read_only=True)
    n_eval_nodes = serializers.IntegerField(read_only=True)
    recall_at = serializers.DictField(child=serializers.FloatField(), read_only=True)
    ndcg_at = serializers.DictField(child=serializers.FloatField(), read_only=True)
    rmse = serializers.FloatField(read_only=True, allow_null=True)
    corr = serializers.FloatField(read_only=True, allow_null=True)
    accuracy = serializers.FloatField(read_only=True, allow_null=True)

    def to_representation(self, instance):
        data = super().to_representation(instance)
        # Continuous reports carry no ranking metrics and vice versa.
        return {key: value for key, value in data.items() if value not in (None, {})}


class SearchStateSerializer(serializers.Serializer):
    """
    Trajectory of the hyperparameter search.
    """
    best = serializers.SerializerMethodField()
    best_score = serializers.FloatField(read_only=True)
    final_step = serializers.FloatField(source='step', read_only=True)
    evaluations = serializers.SerializerMethodField()

    def get_best(self, obj):
        alpha, beta = obj.best
        return {'alpha': alpha, 'beta': beta}

    def get_evaluations(self, obj):
        """
        One entry per objective call, in call order.
        """
        return [
            {'alpha': alpha, 'beta': beta, 'score': score if score != float('-inf') else None}
            for (alpha, beta), score in obj.evaluations
        ]


class SweepRowSerializer(serializers.Serializer):
    rate = serializers.FloatField(read_only=True)
    engine = serializers.CharField(read_only=True)
    iterations_run = serializers.IntegerField(read_only=True)
    alpha = serializers.FloatField(read_only=True, allow_null=True)
    beta = serializers.FloatField(read_only=True, allow_null=True)
    error = serializers.CharField(read_only=True, allow_null=True)
    report = EvalReportSerializer(read_only=True, allow_null=True)
