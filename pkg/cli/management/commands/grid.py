from cli.base import ArbCommand, float_list, metric_columns
from evaluation.experiment import run_sensitivity_grid


class Command(ArbCommand):
    help = "Score ARB on every (alpha, beta) pair of a lattice and print a CSV table."
    command_name = "grid"

    def add_command_arguments(self, parser):
        parser.add_argument("--grid", type=float_list, help="Comma-separated values used for both alpha and beta.")

    def run(self, config):
        bundle = self.load(config)
        known, _, test = self.split(config, bundle.graph.n_nodes)
        rows = run_sensitivity_grid(
            bundle.graph, bundle.features, known, test, config["grid"], config["grid"],
            self.arb_config(config), bundle.feature_kind, config["k"], config["threads"],
        )

        metric_names = metric_columns(report for _, _, report, _ in rows)
        self.emit_table(
            ["alpha", "beta", "iterations_run", *metric_names],
            [
                [alpha, beta, iterations, *(report.as_flat()[name] for name in metric_names)]
                for alpha, beta, report, iterations in rows
            ],
            config,
        )
