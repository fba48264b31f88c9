import argparse
import logging
import sys

from src import __version__
from src.analytics.config import load_config
from src.analytics.goldens import diff_goldens
from src.analytics.pipeline import calibrate_to_file, run
from src.errors import ConfigurationError, VibronicError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog="vibronic-entanglement",
        description="Electron-nuclear entanglement of Born-Oppenheimer and Born-Huang vibronic states.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="Log debug diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="Run the pipeline for one INI configuration.")
    run_parser.add_argument("--config", required=True, help="INI run configuration.")
    run_parser.add_argument("--out", default=None, help="Output directory (overrides [run] output_dir).")
    run_parser.add_argument("--threads", type=int, default=1, help="joblib worker threads.")
    run_parser.add_argument("--entropy-base", choices=("e", "2"), default="e", help="Entropy units: nats or bits.")

    golden_parser = sub.add_parser("diff-goldens", help="Compare run outputs with a golden tree.")
    golden_parser.add_argument("--out", required=True, help="Output directory of a finished run.")
    golden_parser.add_argument("--golden", required=True, help="Golden directory.")
    golden_parser.add_argument("--tolerances", default=None, help="INI file with a [tolerances] section.")

    calibrate_parser = sub.add_parser("calibrate-softening", help="Write the H2+ softening table of a config.")
    calibrate_parser.add_argument("--config", required=True, help="INI run configuration (model = h2p).")
    calibrate_parser.add_argument("--output", required=True, help="Path of the softening table to write.")
    return parser.parse_args(argv)


def _run(args):
    config = load_config(args.config, output_dir=args.out)
    if args.threads < 1:
        raise ConfigurationError("--threads must be at least 1", module="pipeline_cli", parameter="threads")
    report = run(config, n_jobs=args.threads, entropy_base=args.entropy_base)
    print(f"Wrote {len(report.files)} files (config hash {report.config_hash[:12]}).")
    return EXIT_OK


def _diff_goldens(args):
    report = diff_goldens(args.out, args.golden, args.tolerances)
    print(report.summary())
    if not report.passed:
        print("Golden comparison failed.")
        return EXIT_FAILURE
    print("Golden comparison passed.")
    return EXIT_OK


def _calibrate(args):
    config = load_config(args.config)
    if config.model != "h2p":
        raise ConfigurationError("calibrate-softening needs model = h2p", module="pipeline_cli", parameter="run.model")
    print("Calibrating softening table...")
    table = calibrate_to_file(config, args.output)
    print(f"Softening table with {len(table)} rows saved to: {args.output}")
    return EXIT_OK


COMMANDS = {"run": _run, "diff-goldens": _diff_goldens, "calibrate-softening": _calibrate}


def main(argv=None):
    args = _parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except VibronicError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
