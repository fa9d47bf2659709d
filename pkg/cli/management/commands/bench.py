import statistics
import time

import numpy as np
from django.conf import settings

from cli.base import ArbCommand
from datasets.generators import generate_longtail_graph
from datasets.loaders import load_dataset
from evaluation.experiment import mask_features
from propagation.engines import reconstruct


class Command(ArbCommand):
    help = "Time a fixed number of propagation iterations per engine."
    command_name = "bench"

    def add_command_arguments(self, parser):
        defaults = settings.ARB_DEFAULTS
        parser.add_argument("--repeats", type=int, default=defaults["BENCH_REPEATS"], help="Timed runs per engine.")
        parser.add_argument("--bench-iters", type=int, default=defaults["BENCH_ITERS"], help="Iterations per run.")
        parser.add_argument("--nodes", type=int, default=100_000, help="Synthetic graph size.")
        parser.add_argument("--edges", type=int, default=1_000_000, help="Target undirected edge count.")
        parser.add_argument("--n-features", type=int, default=128, help="Synthetic feature dimension.")
        parser.add_argument("--exponent", type=float, default=2.5, help="Power-law exponent of the degrees.")
        parser.add_argument("--isolated", type=float, default=0.0, help="Fraction of isolated nodes.")

    def workload(self, config):
        if config.get("graph") and config.get("features"):
            bundle, _ = load_dataset(config["graph"], config["features"], None, config["kind"], config["remap_ids"])
            return bundle.graph, bundle.features
        mean_degree = 2.0 * config["edges"] / config["nodes"]
        graph, _ = generate_longtail_graph(
            config["nodes"], mean_degree, config["exponent"], config["isolated"], config["seed"]
        )
        rng = np.random.default_rng(config["seed"])
        return graph, rng.random((graph.n_nodes, config["n_features"]))

    def run(self, config):
        graph, features = self.workload(config)
        known, _, _ = self.split(config, graph.n_nodes)
        z = mask_features(features, known)
        arb_config = self.arb_config(config, max_iters=config["bench_iters"], tolerance=0.0)

        timings = {}
        for engine in config["engines"]:
            runs = []
            for _ in range(max(1, config["repeats"])):
                started = time.perf_counter()
                reconstruct(engine, graph, z, known, arb_config, threads=config["threads"], keep_history=False)
                runs.append(time.perf_counter() - started)
            median = statistics.median(runs)
            timings[engine] = {
                "median_seconds": median,
                "min_seconds": min(runs),
                "max_seconds": max(runs),
                "stdev_seconds": statistics.stdev(runs) if len(runs) > 1 else 0.0,
                "edges_per_second": graph.norm_adjacency.nnz * config["bench_iters"] / median if median else 0.0,
            }

        data = {
            "n_nodes": graph.n_nodes,
            "n_edges": graph.n_edges,
            "n_features": int(features.shape[1]),
            "iterations": config["bench_iters"],
            "repeats": config["repeats"],
            "threads": config["threads"],
            "engines": timings,
        }
        if "fp" in timings and "arb" in timings and timings["fp"]["median_seconds"] > 0:
            data["arb_over_fp"] = timings["arb"]["median_seconds"] / timings["fp"]["median_seconds"]
        self.emit(data, config, config.get("out"))
