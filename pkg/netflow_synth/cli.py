#!/usr/bin/env python
# -*- coding: utf-8 -*-

import argparse
import logging
import sys

from . import (
    CONFIG,
    ConfigError,
    NetflowSynthError,
    __version__,
    logger,
    logging_excepthook,
    update_config,
    user_log,
)
from .baselines import BASELINE_KINDS
from .pipeline import (
    PipelineConfig,
    StageError,
    cmd_baseline,
    cmd_evaluate,
    cmd_export,
    cmd_fit,
    cmd_generate,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _sizes(parser):
    parser.add_argument("--nodes", dest="target_nodes", type=int, help="Target node count (default: reference)")
    parser.add_argument("--edges", dest="target_edges", type=int, help="Target edge count (default: reference)")
    parser.add_argument("--flows", dest="target_flows", type=int, help="Target flow count (default: reference)")
    parser.add_argument("-n", "--count", dest="ensemble_size", type=int, help="Ensemble size")


def _fit_params(parser):
    parser.add_argument("--iterations", dest="fit_iterations", type=int, help="KronFit gradient steps")
    parser.add_argument("--lr", dest="fit_lr", type=float, help="KronFit learning rate")


def build_parser():
    parser = ArgumentParser(prog="netflow-synth", description="Synthetic netflow dataset generator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug output with tracebacks")
    parser.add_argument("--progress", action="store_true", help="Show progress bars")
    parser.add_argument("-c", "--config", help=f"Yaml config file (default: {CONFIG['EXTERNAL_CONFIG_FNAME']})")
    parser.add_argument("-j", "--workers", type=int, help="Parallel fits / ensemble members")
    parser.add_argument("-s", "--seed", dest="master_seed", type=int, help="Master seed")
    parser.add_argument("--day-length", dest="day_length", type=float, help="Day block length, seconds")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="Fit a model bundle on a reference netflow csv")
    fit.add_argument("input_csv")
    fit.add_argument("-o", "--model-dir", dest="model_dir", required=True)
    fit.add_argument("--n1", dest="n1_candidates", type=int, nargs="+", help="Initiator sizes to choose from")
    _fit_params(fit)
    fit.add_argument("--modes", dest="feature_modes", type=int, help="Mixture modes per continuous feature")
    fit.add_argument("--trees", dest="align_trees", type=int, help="Boosted trees")
    fit.add_argument("--depth", dest="align_depth", type=int, help="Tree depth")
    fit.add_argument("--align-lr", dest="align_lr", type=float, help="Boosting learning rate")
    fit.add_argument("--sample-fraction", dest="sample_fraction", type=float, help="Share of training pairs")

    generate = commands.add_parser("generate", help="Generate an ensemble from a model bundle")
    generate.add_argument("-m", "--model-dir", dest="model_dir", required=True)
    generate.add_argument("-o", "--output-dir", dest="output_dir", required=True)
    generate.add_argument("--threshold", dest="align_threshold", type=float, help="Alignment score threshold")
    _sizes(generate)

    evaluate = commands.add_parser("evaluate", help="Evaluate an ensemble against the reference")
    evaluate.add_argument("input_csv")
    evaluate.add_argument("ensemble_dir")
    evaluate.add_argument("-o", "--output-dir", dest="output_dir", required=True)

    baseline = commands.add_parser("baseline", help="Generate a baseline ensemble")
    baseline.add_argument("kind", choices=BASELINE_KINDS)
    baseline.add_argument("input_csv")
    baseline.add_argument("-o", "--output-dir", dest="output_dir", required=True)
    _fit_params(baseline)
    _sizes(baseline)

    export = commands.add_parser("export", help="Write node and edge lists of a netflow csv")
    export.add_argument("input_csv")
    export.add_argument("-o", "--output-dir", dest="output_dir", required=True)
    return parser


def dispatch(args, config):
    if args.command == "fit":
        bundle = cmd_fit(config)
        logger.info(user_log.colorize(f"Selected n1={bundle.initiator.n1}", "GREEN"))
    elif args.command == "generate":
        cmd_generate(config)
    elif args.command == "baseline":
        cmd_baseline(config, args.kind)
    elif args.command == "evaluate":
        report = cmd_evaluate(config, args.ensemble_dir)
        summary = user_log.summary_line(report, ("A", "D", "R", "E"))
        logger.info(user_log.colorize(summary, "GREEN"))
    elif args.command == "export":
        cmd_export(config)


def exit_code(error):
    cause = error.__cause__ if isinstance(error, StageError) and error.__cause__ is not None else error
    if isinstance(cause, ConfigError):
        return EXIT_USAGE
    if isinstance(cause, (NetflowSynthError, OSError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv=None, setup_logging=False):
    """
    :return: exit code; 0 ok, 1 usage, 2 data error, 3 internal error
    """
    parser = build_parser()
    logging_ready = not setup_logging
    try:
        args = parser.parse_args(argv)
        update_config(args.config or CONFIG["EXTERNAL_CONFIG_FNAME"], required=args.config is not None)
        if setup_logging:
            user_log.setup_user_logger(logger.name, logging.DEBUG if args.verbose else CONFIG["USER_LOGLEVEL"])
            logging_ready = True
        if args.progress:
            CONFIG["PROGRESS_BARS"] = True
        options = {name: value for name, value in vars(args).items() if name in PipelineConfig.__dataclass_fields__}
        config = PipelineConfig.from_options(**options)
        logger.debug("Pipeline config: %s", config.to_dict())
        dispatch(args, config)
    except Exception as e:  # pylint: disable=broad-exception-caught
        if not logging_ready:  # failed before the config was read
            user_log.setup_user_logger(logger.name, CONFIG["USER_LOGLEVEL"])
        code = exit_code(e)
        if code == EXIT_INTERNAL:
            logger.exception(e)
        else:
            logger.error(e, exc_info=True)
        return code
    return EXIT_OK


def run():
    sys.excepthook = logging_excepthook
    sys.exit(main(setup_logging=True))


if __name__ == "__main__":
    run()
