import time

from cli.base import ArbCommand
from core.exceptions import InputError
from datasets.writers import save_features
from evaluation.experiment import mask_features
from propagation.engines import reconstruct


class Command(ArbCommand):
    help = "Reconstruct missing node attributes and write the full feature matrix."
    command_name = "reconstruct"

    def add_command_arguments(self, parser):
        parser.add_argument("--history", action="store_true", help="Include the per-iteration change in the summary.")

    def run(self, config):
        if not config.get("out"):
            raise InputError("--out is required")
        bundle = self.load(config)
        known = self.known_set(config, bundle.graph.n_nodes)
        z = mask_features(bundle.features, known)

        started = time.perf_counter()
        result = reconstruct(
            config["engine"], bundle.graph, z, known, self.arb_config(config), threads=config["threads"],
            keep_history=config["history"],
        )
        elapsed = time.perf_counter() - started

        save_features(config["out"], result.features)
        summary = {
            "engine": result.engine,
            "iterations_run": result.iterations_run,
            "final_delta": result.final_delta,
            "converged": result.converged,
            "wall_time": elapsed,
            "n_known": len(known),
            "output": config["out"],
        }
        if config["history"]:
            summary["history"] = list(result.history)
        self.emit(summary, config)
