import argparse
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

from ckn_lab.errors import InvalidConfig, LabError, UnknownExperiment
from ckn_lab.experiments.config import load_config
from ckn_lab.experiments.registry import EXPERIMENTS, get_experiment
from ckn_lab.experiments.reports import ReportWriter

logger = logging.getLogger("experiment")

EXIT_PASS = 0
EXIT_USAGE = 1
EXIT_FAILED = 2


def list_experiments() -> str:
    width = max(len(e.name) for e in EXPERIMENTS)
    lines = []
    for experiment in EXPERIMENTS:
        tag = " [seeded]" if experiment.randomized else ""
        lines.append(f"{experiment.name:<{width}}  {experiment.description}{tag}")
    return "\n".join(lines)


def run(config_path: str, dump_trials: bool = False) -> int:
    """Run the experiment named in the config; 0 pass, 2 scientific failure, 1 usage or config error."""
    try:
        config = load_config(config_path)
        experiment = get_experiment(config.experiment)
        if experiment.randomized and config.seed is None:
            raise InvalidConfig("seed", f"required by randomized experiment {experiment.name}")
    except (InvalidConfig, UnknownExperiment) as exc:
        logger.error(f"run:rejected code={exc.code} detail={exc}")
        return EXIT_USAGE
    config = replace(config, dump_trials=dump_trials or config.dump_trials)
    writer = ReportWriter(config)
    logger.info(f"run:start experiment={experiment.name} seed={config.seed} out={writer.out_dir}")
    try:
        passed = experiment.runner(config, writer)
    except InvalidConfig as exc:
        logger.error(f"run:rejected code={exc.code} detail={exc}")
        return EXIT_USAGE
    except LabError as exc:
        logging.exception(f"run:failed experiment={experiment.name} code={exc.code}")
        return EXIT_FAILED
    except Exception:
        logging.exception(f"run:crashed experiment={experiment.name}")
        return EXIT_USAGE
    logger.info(f"run:done experiment={experiment.name} pass={passed} reports={len(writer.written)}")
    return EXIT_PASS if passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ckn-lab", description="Numerical lab for weighted elliptic equations with critical weights.")
    commands = parser.add_subparsers(dest="command", required=True)
    run_cmd = commands.add_parser("run", help="run the experiment named in a config file")
    run_cmd.add_argument("config", help="path to a key=value config file")
    run_cmd.add_argument("--dump-trials", action="store_true", help="also write per-trial records of property checks")
    run_cmd.add_argument("--verbose", action="store_true", help="debug logging")
    commands.add_parser("list", help="list registered experiments")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage; 2 is reserved for scientific failures here
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO)
    if args.command == "list":
        print(list_experiments())
        return EXIT_PASS
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    return run(args.config, args.dump_trials)


if __name__ == "__main__":
    sys.exit(main())
