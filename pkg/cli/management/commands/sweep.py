from django.conf import settings

from cli.base import ArbCommand, metric_columns
from evaluation.experiment import run_missing_rate_sweep


class Command(ArbCommand):
    help = "Score engines across missing-attribute rates and print a CSV table."
    command_name = "sweep"

    def add_command_arguments(self, parser):
        defaults = settings.ARB_DEFAULTS
        parser.add_argument("--all-unknown", action="store_true", help="Score every unknown node, not just test.")
        parser.add_argument("--search", action="store_true",
                            help="Search (alpha, beta) per rate and engine on the validation split first.")
        parser.add_argument("--max-evals", type=int, default=defaults["SEARCH_MAX_EVALS"],
                            help="Evaluation budget of each search.")

    def run(self, config):
        bundle = self.load(config)
        engines = config["engines"]
        configs = {engine: self.arb_config(config) for engine in engines}
        search = None
        if config["search"]:
            defaults = settings.ARB_DEFAULTS
            search = {
                "initial_step": defaults["SEARCH_STEP"],
                "min_step": defaults["SEARCH_MIN_STEP"],
                "max_evals": config["max_evals"],
            }
        rows = run_missing_rate_sweep(
            bundle.graph, bundle.features, bundle.labels, config["rates"], engines, config["seed"],
            configs, bundle.feature_kind, config["k"], config["all_unknown"], config["threads"], search,
        )

        metric_names = metric_columns(row.report for row in rows)
        table = []
        for row in rows:
            flat = row.report.as_flat() if row.report is not None else {}
            table.append([
                row.rate, row.engine,
                "" if row.alpha is None else row.alpha,
                "" if row.beta is None else row.beta,
                row.iterations_run, flat.get("n_eval_nodes", ""),
                *(flat.get(name, "") for name in metric_names),
                row.error or "",
            ])
        self.emit_table(
            ["rate", "engine", "alpha", "beta", "iterations_run", "n_eval_nodes", *metric_names, "error"],
            table, config,
        )
