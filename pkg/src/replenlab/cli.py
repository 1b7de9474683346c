"""
``replenlab`` command line.

Every subcommand runs one pipeline stage against the output directory
(``--out``, else ``$REPLENLAB_OUT``, else ``./replenlab-out``); ``run`` runs
them all.
"""
import argparse
import os
import sys
from dataclasses import replace

from replenlab import __version__
from replenlab.config import load_config
from replenlab.errors import ReplenlabError
from replenlab.experiment import Pipeline, TerminalStageReporter
from replenlab.plugin import get_plugin_manager, setup_logging

DEFAULT_OUT = "replenlab-out"

COMMANDS = (
    ("gen", "generate (or import) the demand panel: skus.csv, demand.csv"),
    ("params", "tabulate simulated costs on the train split: params.csv, params.meta.json"),
    ("labels", "calibrate alpha_loss and solve the labeling epochs: labels.csv"),
    ("pretrain", "train the policy network on the labels: model_pretrained.json"),
    ("finetune", "RLOO fine-tuning of the pretrained policy: model_finetuned.json"),
    ("eval", "simulate every configured method on the test split: results.json"),
    ("report", "write report.csv, decisions.csv and series.csv from results.json"),
    ("run", "run every stage in order"),
)


def build_parser(pluginmanager):
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("general")
    group.add_argument("--config", metavar="PATH", help="experiment ini file")
    group.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    group.add_argument(
        "--out",
        metavar="DIR",
        default=None,
        help="artifact directory (default: $REPLENLAB_OUT or ./{})".format(DEFAULT_OUT),
    )
    group.add_argument(
        "-q", "--quiet", action="store_true", default=False, help="no progress lines"
    )
    group.add_argument(
        "-v", "--verbose", action="count", default=0, help="more progress detail"
    )
    pluginmanager.hook.replenlab_addoption(parser=common)

    parser = argparse.ArgumentParser(
        prog="replenlab",
        description="OR-guided pretrain-then-reinforce replenishment experiments",
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, help in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        if name == "report":
            p.add_argument(
                "--reference",
                metavar="METHOD",
                default=None,
                help="method the relative_total_pct column is computed against",
            )
    return parser


def cli_main(argv=None):
    """Run the command line; returns the process exit code."""
    pm = get_plugin_manager()
    parser = build_parser(pm)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    setup_logging(args.debug, args.logfile)
    out = args.out or os.environ.get("REPLENLAB_OUT") or DEFAULT_OUT
    reporter = None
    try:
        config = load_config(args.config, seed=args.seed)
        if args.numprocesses is not None:
            config = replace(config, numprocesses=args.numprocesses)
        if not args.quiet:
            reporter = TerminalStageReporter(verbose=args.verbose)
            pm.register(reporter, "terminalstagereporter")
        pipeline = Pipeline(config, out, pm, maxworkerrestart=args.maxworkerrestart)
        if args.command == "run":
            pipeline.run_all()
        elif args.command == "report":
            pipeline.run_stage("report", reference_method=args.reference)
        else:
            pipeline.run_stage(args.command)
    except ReplenlabError as e:
        sys.stderr.write("replenlab: error: {}\n".format(e))
        return 1
    finally:
        if reporter is not None:
            pm.unregister(reporter)
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
