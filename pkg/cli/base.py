"""Shared plumbing for the management commands."""
import argparse
import csv
import io
import logging
import sys

from django.core.management.base import BaseCommand, CommandError

from cli.serializers import KINDS, METRICS, RunConfigSerializer
from core.exceptions import EXIT_PARSE, EXIT_USAGE, ArbError, InputError, ParseError
from datasets.loaders import load_dataset, load_node_indices
from datasets.writers import atomic_write, render_report, save_id_map
from evaluation.experiment import SplitSpec, make_split
from graphs.graph import KnownSet
from propagation.engines import ENGINES, ArbConfig

logger = logging.getLogger(__name__)


def int_list(text):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def float_list(text):
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def name_list(choices):
    def parse(text):
        names = [item.strip() for item in text.split(",") if item.strip()]
        unknown = [name for name in names if name not in choices]
        if unknown:
            raise argparse.ArgumentTypeError(f"unknown name(s) {', '.join(unknown)}; choose from {', '.join(choices)}")
        return names

    return parse


def metric_columns(reports):
    """Flat metric names present in any of ``reports``, first-seen order."""
    names = []
    for report in reports:
        if report is not None:
            names.extend(name for name in report.as_flat() if name not in names)
    return [name for name in names if name not in ("feature_kind", "n_eval_nodes")]


class ArbCommand(BaseCommand):
    """
    Base class for the reconstruction commands.

    Subclasses implement ``run(config)``. Library errors become CommandError
    with the documented exit code (1 usage, 2 parse, 3 numeric).
    """
    command_name = None

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def usage_error(message):
            # argparse would exit with 2, which is reserved for parse errors.
            if not parser.called_from_command_line:
                raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)
            parser.print_usage(sys.stderr)
            sys.stderr.write(f"{parser.prog}: error: {message}\n")
            sys.exit(EXIT_USAGE)

        parser.error = usage_error
        return parser

    def add_arguments(self, parser):
        engine = parser.add_argument_group("engine")
        engine.add_argument("--engine", choices=ENGINES, default="arb", help="Propagation engine.")
        engine.add_argument("--alpha", type=float, help="Propagation weight in (0, 1]; 1 drops the mean term.")
        engine.add_argument("--beta", type=float, help="Reset inertia in (0, 1]; 1 is a hard reset.")
        engine.add_argument("--iters", type=int, help="Maximum number of iterations.")
        engine.add_argument("--tol", type=float, help="Relative change that stops early; 0 disables.")
        engine.add_argument("--threads", type=int, help="Worker threads for propagation (default $ARB_THREADS).")

        data = parser.add_argument_group("data")
        data.add_argument("--graph", help="Edge list file.")
        data.add_argument("--features", help="Feature matrix (ARBF binary or delimited text).")
        data.add_argument("--labels", help="Class id file, one per line.")
        data.add_argument("--known", help="File of known node indices; defaults to a seeded split.")
        data.add_argument("--kind", choices=KINDS, default="auto", help="Feature kind.")
        data.add_argument("--remap-ids", action="store_true", help="Edge list uses arbitrary node ids.")
        data.add_argument("--out", help="Output file.")

        protocol = parser.add_argument_group("protocol")
        protocol.add_argument("--seed", type=int, default=0, help="Seed for splits and generators.")
        protocol.add_argument("--known-fraction", type=float, help="Share of nodes with observed features.")
        protocol.add_argument("--k", type=int_list, help="Comma-separated k values for ranking metrics.")
        protocol.add_argument("--rates", type=float_list, help="Comma-separated missing rates.")
        protocol.add_argument("--engines", type=name_list(ENGINES), help="Comma-separated engines.")
        protocol.add_argument("--metrics", type=name_list(METRICS), help="Comma-separated metrics to report.")
        protocol.add_argument("--format", choices=["json", "text"], default="json", help="Report format.")

        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        serializer = RunConfigSerializer(data={**options, "command": self.command_name})
        if not serializer.is_valid():
            problems = "; ".join(
                f"{field}: {' '.join(str(m) for m in messages)}" for field, messages in serializer.errors.items()
            )
            raise CommandError(problems, returncode=EXIT_USAGE)
        config = {**options, **serializer.validated_data}
        try:
            self.run(config)
        except ArbError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except OSError as exc:
            raise CommandError(str(exc), returncode=EXIT_PARSE) from exc

    def run(self, config):
        raise NotImplementedError

    # Helpers shared by the commands.

    def arb_config(self, config, **overrides):
        values = {
            "alpha": config["alpha"],
            "beta": config["beta"],
            "max_iters": config["iters"],
            "tolerance": config["tol"],
        }
        values.update(overrides)
        return ArbConfig(**values)

    def load(self, config):
        for name in ("graph", "features"):
            if not config.get(name):
                raise InputError(f"--{name} is required")
        bundle, id_map = load_dataset(
            config["graph"], config["features"], config.get("labels"), config["kind"], config["remap_ids"]
        )
        if id_map is not None and config.get("out"):
            save_id_map(f"{config['out']}.ids.tsv", id_map)
        return bundle

    def split(self, config, n_nodes):
        split_spec = SplitSpec(seed=config["seed"], known_fraction=config["known_fraction"])
        return make_split(n_nodes, split_spec)

    def known_set(self, config, n_nodes):
        if not config.get("known"):
            known, _, _ = self.split(config, n_nodes)
            return known
        indices = load_node_indices(config["known"])
        if indices.size and indices.max() >= n_nodes:
            raise ParseError(f"known index {indices.max()} out of range for {n_nodes} nodes", path=config["known"])
        return KnownSet(indices, n_nodes)

    def emit(self, data, config, path=None):
        text = render_report(data, config["format"])
        if path:
            atomic_write(path, text)
        self.stdout.write(text, ending="")

    def emit_table(self, columns, rows, config):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
        table = buffer.getvalue()
        if config.get("out"):
            atomic_write(config["out"], table)
        self.stdout.write(table, ending="")

