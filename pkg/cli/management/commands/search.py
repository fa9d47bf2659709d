from django.conf import settings

from cli.base import ArbCommand
from evaluation.experiment import make_objective, search_hyperparams
from evaluation.metrics import CONTINUOUS
from evaluation.serializers import SearchStateSerializer


class Command(ArbCommand):
    help = "Search (alpha, beta) on the validation split."
    command_name = "search"

    def add_command_arguments(self, parser):
        defaults = settings.ARB_DEFAULTS
        parser.add_argument("--step", type=float, default=defaults["SEARCH_STEP"], help="Initial step d.")
        parser.add_argument("--min-step", type=float, default=defaults["SEARCH_MIN_STEP"], help="Smallest step.")
        parser.add_argument("--max-evals", type=int, default=defaults["SEARCH_MAX_EVALS"], help="Evaluation budget.")

    def run(self, config):
        bundle = self.load(config)
        known, val, _ = self.split(config, bundle.graph.n_nodes)
        objective = make_objective(
            bundle.graph, bundle.features, known, val, bundle.feature_kind, config["engine"],
            config["iters"], config["tol"], config["threads"],
        )
        metric = "corr" if bundle.feature_kind == CONTINUOUS else "ndcg@10"

        def traced(alpha, beta):
            score = objective(alpha, beta)
            self.stderr.write(f"alpha={alpha:.6f} beta={beta:.6f} {metric}={score:.6f}")
            return score

        best, state = search_hyperparams(traced, config["step"], config["min_step"], config["max_evals"])
        data = SearchStateSerializer(state).data
        data["metric"] = metric
        data["engine"] = config["engine"]
        self.emit(data, config, config.get("out"))
