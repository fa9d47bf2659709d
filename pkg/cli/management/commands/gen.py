from pathlib import Path

from cli.base import ArbCommand
from core.exceptions import InputError
from datasets.generators import generate_features, generate_longtail_graph
from datasets.writers import save_edge_list, save_features, save_labels
from graphs.operations import low_degree_fraction


class Command(ArbCommand):
    help = "Write a synthetic long-tail dataset: graph.txt, features.arbf and labels.txt."
    command_name = "gen"

    def add_command_arguments(self, parser):
        parser.add_argument("--nodes", type=int, default=1000, help="Number of nodes.")
        parser.add_argument("--mean-degree", type=float, default=4.0, help="Target mean degree.")
        parser.add_argument("--exponent", type=float, default=2.5, help="Power-law exponent of the degrees.")
        parser.add_argument("--isolated", type=float, default=0.1, help="Fraction of forced isolated nodes.")
        parser.add_argument("--n-features", type=int, default=64, help="Feature dimension.")
        parser.add_argument("--classes", type=int, default=8, help="Number of communities / classes.")

    def run(self, config):
        if not config.get("out"):
            raise InputError("--out (output directory) is required")
        kind = "binary" if config["kind"] == "auto" else config["kind"]
        graph, _ = generate_longtail_graph(
            config["nodes"], config["mean_degree"], config["exponent"], config["isolated"], config["seed"]
        )
        features, labels = generate_features(
            graph, config["n_features"], kind, config["seed"], n_communities=config["classes"]
        )

        out = Path(config["out"])
        out.mkdir(parents=True, exist_ok=True)
        save_edge_list(out / "graph.txt", graph)
        save_features(out / "features.arbf", features)
        save_labels(out / "labels.txt", labels)

        self.emit(
            {
                "n_nodes": graph.n_nodes,
                "n_edges": graph.n_edges,
                "isolated_nodes": int(graph.isolated_nodes().size),
                "low_degree_fraction": low_degree_fraction(graph),
                "feature_kind": kind,
                "n_features": config["n_features"],
                "directory": str(out),
            },
            config,
        )
