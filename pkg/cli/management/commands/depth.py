from cli.base import ArbCommand, int_list, metric_columns
from evaluation.experiment import run_depth_sweep


class Command(ArbCommand):
    help = "Score engines after each propagation depth and print a CSV table."
    command_name = "depth"

    def add_command_arguments(self, parser):
        parser.add_argument("--depths", type=int_list, help="Comma-separated iteration counts to score.")
        parser.add_argument("--all-unknown", action="store_true", help="Score every unknown node, not just test.")

    def run(self, config):
        bundle = self.load(config)
        known, _, test = self.split(config, bundle.graph.n_nodes)
        eval_nodes = known.unknown if config["all_unknown"] else test
        rows = run_depth_sweep(
            bundle.graph, bundle.features, known, eval_nodes, config["depths"], config["engines"],
            self.arb_config(config), bundle.feature_kind, config["k"],
        )

        metric_names = metric_columns(report for _, _, report in rows)
        self.emit_table(
            ["depth", "engine", *metric_names],
            [[depth, engine, *(report.as_flat()[name] for name in metric_names)] for depth, engine, report in rows],
            config,
        )
