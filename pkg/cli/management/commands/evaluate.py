import logging

from cli.base import ArbCommand
from evaluation.experiment import evaluate_classification, mask_features
from evaluation.metrics import BINARY, evaluate_reconstruction
from evaluation.serializers import EvalReportSerializer
from propagation.engines import reconstruct

logger = logging.getLogger(__name__)

RANKING_METRICS = {"recall": "recall_at", "ndcg": "ndcg_at"}
CONTINUOUS_METRICS = {"rmse": "rmse", "corr": "corr"}


class Command(ArbCommand):
    help = "Reconstruct on a seeded split and score the test nodes."
    command_name = "evaluate"

    def add_command_arguments(self, parser):
        parser.add_argument("--all-unknown", action="store_true", help="Score every unknown node, not just test.")
        parser.add_argument(
            "--oracle-input", action="store_true",
            help="Skip reconstruction and score the ground truth against itself.",
        )

    def run(self, config):
        bundle = self.load(config)
        known, _, test = self.split(config, bundle.graph.n_nodes)
        eval_nodes = known.unknown if config["all_unknown"] else test

        if config["oracle_input"]:
            predicted = bundle.features
        else:
            z = mask_features(bundle.features, known)
            result = reconstruct(
                config["engine"], bundle.graph, z, known, self.arb_config(config), threads=config["threads"]
            )
            predicted = result.features

        report = evaluate_reconstruction(predicted, bundle.features, eval_nodes, bundle.feature_kind, config["k"])
        self.apply_metric_selection(report, config.get("metrics"))
        if bundle.labels is not None:
            report.accuracy = evaluate_classification(predicted, bundle.labels, known.unknown, seed=config["seed"])

        self.emit(EvalReportSerializer(report).data, config, config.get("out"))

    def apply_metric_selection(self, report, metrics):
        """Drop unrequested metrics; warn about ones the feature kind cannot provide."""
        if not metrics:
            return
        available = RANKING_METRICS if report.feature_kind == BINARY else CONTINUOUS_METRICS
        for name in metrics:
            if name not in available:
                logger.warning("%s is not defined for %s features, omitting it", name, report.feature_kind)
        for name, attribute in available.items():
            if name not in metrics:
                setattr(report, attribute, {} if attribute.endswith("_at") else None)
