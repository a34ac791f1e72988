import argparse
import logging
import sys
from typing import List, Optional

from src import __version__
from src.cli.commands import (
    apply_population,
    cmd_compare,
    cmd_degree_hist,
    cmd_sample,
    cmd_simulate,
    cmd_sweep,
)
from src.errors import GNMNError
from src.utils.config import default_output_dir, load_config

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON scenario file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: $GNMN_OUTPUT_DIR or ./output)")
    common.add_argument("--workers", type=int, help="threads for pair sums and force reduction")
    common.add_argument("--plot", action="store_true", help="also render PNGs with matplotlib")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="gnmn",
        description="Epidemic spreading on geometric networks of mobile nodes",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sample = sub.add_parser("sample", parents=[common], help="finite-population sample sizes from census CSV")
    sample.add_argument("population_csv")
    sample.add_argument("--z", type=float, help="standard-normal quantile (default 2.576)")
    sample.add_argument("--p", type=float, help="sampling proportion (default 0.03)")
    sample.add_argument("--e", type=float, help="margin of error (default 0.005)")

    simulate = sub.add_parser("simulate", parents=[common], help="run the network SIR")
    simulate.add_argument("--snapshots", action="store_true", help="write one contact CSV per tick")
    simulate.add_argument("--population", help="census CSV sizing the cohorts (with --region)")
    simulate.add_argument("--region", help="region row of --population")

    degree = sub.add_parser("degree-hist", parents=[common], help="degree distribution of the contact network")
    degree.add_argument("--population", help="census CSV sizing the cohorts (with --region)")
    degree.add_argument("--region", help="region row of --population")

    compare = sub.add_parser("compare", parents=[common], help="empirical vs model R_t")
    compare.add_argument("case_csv")
    compare.add_argument("trajectory_csv")
    compare.add_argument("--window", type=int, default=7, help="estimation window in days (default 7)")

    sweep = sub.add_parser("sweep", parents=[common], help="beta_critical over time for several radii")
    sweep.add_argument("--radii", type=float, nargs="+", help="threshold radii in meters (default: config)")
    sweep.add_argument("--processes", type=int, help="parallel runs (default: one per radius, capped by CPUs)")
    return parser


def _scenario(args):
    config = load_config(args.config, seed=args.seed)
    if args.workers is not None:
        config = config.replace(workers=args.workers)
    population = getattr(args, "population", None)
    region = getattr(args, "region", None)
    return apply_population(config, population, region)


def run(args) -> None:
    out_dir = args.out or default_output_dir()
    if args.command == "sample":
        cmd_sample(args.population_csv, out_dir, z=args.z, p=args.p, e=args.e)
    elif args.command == "simulate":
        cmd_simulate(_scenario(args), out_dir, snapshots=args.snapshots, plot=args.plot)
    elif args.command == "degree-hist":
        cmd_degree_hist(_scenario(args), out_dir, plot=args.plot)
    elif args.command == "compare":
        cmd_compare(args.case_csv, args.trajectory_csv, args.window, out_dir, plot=args.plot)
    elif args.command == "sweep":
        cmd_sweep(_scenario(args), out_dir, radii=args.radii, processes=args.processes, plot=args.plot)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    # Configure logging
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        run(args)
    except GNMNError as e:
        logger.error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        logger.error("Run interrupted by user")
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
