"""Main CLI entry point for the FedDistr simulator."""

import sys
import argparse
from typing import Dict, Optional

import numpy as np
import pandas as pd

from ..core.mixture import shards_to_frame
from ..core.results_writer import ResultsWriter
from ..core.simulator import Simulator, sweep
from ..exceptions import FedDistrError
from ..utils.config import Config
from ..utils.formatters import NumberFormatter, SummaryFormatter
from ..utils.logging_config import get_logger, setup_logging

logger = get_logger(__name__)

SUMMARY_COLUMNS = [
    "mode", "xi_target", "realized_xi", "noise_sigma", "mean_accuracy",
    "oracle_accuracy", "rounds", "rounds_to_target", "uplink_scalars", "downlink_scalars",
]


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure argument parser."""
    parser = argparse.ArgumentParser(
        description="One-round federated learning by distribution transfer",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=
        """
                Examples:
                %(prog)s gen --seed 1 --out data         # Emit client shards as CSV
                %(prog)s run --config feddistr.env       # One FedDistr run
                %(prog)s run --mode fedavg               # FedAvg on the same shards
                %(prog)s sweep --out results/sweep       # xi x mode grid
                %(prog)s theory                          # Monte Carlo bound validation
        """
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--config',
        type=str,
        metavar='PATH',
        help='Path to a KEY=value config file (default: ./feddistr.env if present)'
    )
    common.add_argument(
        '--seed',
        type=int,
        metavar='U64',
        help='Root seed (overrides config)'
    )
    common.add_argument(
        '--out',
        type=str,
        metavar='DIR',
        help='Output directory (overrides OUTPUT_DIR)'
    )
    common.add_argument(
        '--log-level',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
        help='Set logging level (overrides config)'
    )
    common.add_argument(
        '--mode',
        choices=['feddistr', 'fedavg'],
        help='Protocol to run (overrides MODE); on sweep, restricts SWEEP_MODES to it'
    )
    common.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Print tracebacks on errors'
    )

    subparsers = parser.add_subparsers(dest='command', required=True)
    subparsers.add_parser('gen', parents=[common], help='Emit mixture, client shards and test set')
    subparsers.add_parser('run', parents=[common], help='Run one seeded simulation')
    subparsers.add_parser('sweep', parents=[common], help='Run the xi x mode grid')
    subparsers.add_parser('theory', parents=[common], help='Validate the utility bounds by Monte Carlo')

    return parser


def handle_gen(config: Config, writer: ResultsWriter) -> int:
    """Write mixture.env, shards.csv and test.csv."""
    data = Simulator(config.to_run_config()).build_data()
    features, labels = data.test

    writer.write_text("mixture.env", data.spec.to_config_text())
    writer.write_frame("shards.csv", shards_to_frame(data.shards))
    test_columns: Dict[str, np.ndarray] = {"label": labels}
    for j in range(features.shape[1]):
        test_columns[f"x_{j}"] = features[:, j]
    writer.write_frame("test.csv", pd.DataFrame(test_columns))

    print(f"Wrote {len(data.shards)} shards and {labels.size} test points to {writer.output_dir}")
    return 0


def handle_run(config: Config, writer: ResultsWriter) -> int:
    """Run one simulation and print its metrics."""
    run_config = config.to_run_config()
    metrics = Simulator(run_config, writer).run()
    row = metrics.to_row()

    print(SummaryFormatter.format_rows([row], SUMMARY_COLUMNS))
    print(f"\nPrivacy: C={run_config.clip_bound}, sigma={run_config.noise_sigma}, "
          f"epsilon={NumberFormatter.format_epsilon(metrics.epsilon)} at delta={run_config.dp_delta}")
    print(f"Artifacts written to {writer.output_dir}")
    return 0


def handle_sweep(config: Config, writer: ResultsWriter) -> int:
    """Run the sweep grid; failing cells are reported, not fatal."""
    frame = sweep(config.to_run_config(), config.to_sweep_grid(), writer)
    rows = frame.to_dict(orient="records")
    print(SummaryFormatter.format_rows(rows, ["cell"] + SUMMARY_COLUMNS + ["error"]))

    failed = frame["error"].notna().sum()
    if failed:
        print(f"\n{failed} of {len(frame)} cells failed; see the error column in sweep.csv")
    print(f"Sweep written to {writer.output_dir / 'sweep.csv'}")
    return 0


def handle_theory(config: Config, writer: ResultsWriter) -> int:
    """Run the bound validation; exit 1 if any cell misses its bound."""
    report = Simulator(config.to_run_config(), writer).run_theory(config.to_theory_config())
    print(SummaryFormatter.format_rows(
        report.bounds.to_dict(orient="records"),
        ["n", "eps", "xi", "bound", "entangled_bound", "empirical", "dominates"],
    ))
    dominance_ok = bool((report.dominance["passed"] == report.dominance["instances"]).all())
    print(f"\nCoordinate-dominance check: {'passed' if dominance_ok else 'FAILED'} "
          f"on {int(report.dominance['instances'].sum())} instances")

    if report.all_dominate and dominance_ok:
        print("All bounds hold within binomial slack")
        return 0
    print("Some bounds failed; see theory.csv, hoeffding.csv and dominance_check.csv")
    return 1


HANDLERS = {
    'gen': handle_gen,
    'run': handle_run,
    'sweep': handle_sweep,
    'theory': handle_theory,
}


def main(argv: Optional[list] = None) -> int:
    """
    Main CLI entry point.

    Args:
        argv: Command line arguments (defaults to sys.argv)

    Returns:
        Exit code (0 for success, non-zero for error)
    """
    parser = create_argument_parser()
    args = parser.parse_args(argv)

    try:
        overrides = {
            'SEED': args.seed,
            'OUTPUT_DIR': args.out,
            'LOG_LEVEL': args.log_level,
            'MODE': args.mode,
        }
        if args.command == 'sweep':
            overrides['SWEEP_MODES'] = args.mode
            overrides['MODE'] = 'sweep'
        elif args.command == 'theory':
            overrides['MODE'] = 'theory'
        config = Config(config_file=args.config, overrides=overrides)

        setup_logging(log_level=config.log_level, log_file=config.log_file)
        writer = ResultsWriter(config.output_dir)
        return HANDLERS[args.command](config, writer)

    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 0

    except FedDistrError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 1

    except Exception as e:
        logger.error(f"Fatal error: {e}")
        print(f"Fatal error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
