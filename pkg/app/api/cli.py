"""Command-line surface: one subcommand per registered ability"""
import argparse
import asyncio
import json
import logging
from typing import Any, Dict, List, Mapping, Optional

from .. import __version__
from ..core.ability_manager import AbilityManager
from ..utils.config_helper import load_config, resolve_context

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_MISSING_INPUT = 3
EXIT_UNKNOWN = 4

GLOBAL_DESTS = ("command", "config", "log_level")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="Dataset CSV with header id,t,<features...>")
    p.add_argument("--kind", choices=["binary", "continuous"])
    p.add_argument("--detrend-window", type=int, help="Detrend continuous data with this odd window first")
    p.add_argument("--min-active-fraction", type=float, help="Drop individuals logging less often than this")


def _fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-states", type=int)
    p.add_argument("--cycle-length", type=float, help="Hypothesized cycle length used for the single init")
    p.add_argument("--init-grid", type=float, nargs="+", help="Hypothesized cycle lengths to try")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--duration-family", choices=["poisson", "geometric"])
    p.add_argument("--d-max", type=int)
    p.add_argument("--chunk-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyhmm", description="Cyclic hidden Markov models for time series")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON or YAML file overriding config/config.yaml")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--output-dir", help="Directory for every artifact of the run")
        p.add_argument("--threads", type=int, help="Worker threads (default: $CYHMM_THREADS, else all cores)")
        p.add_argument("--seed", type=int)
        return p

    p = command("simulate", "Generate a synthetic dataset with ground truth")
    p.add_argument("--n-individuals", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--t-min", type=int)
    p.add_argument("--cycle-length", type=float)
    p.add_argument("--sigma-b", type=float)
    p.add_argument("--sigma-w", type=float)
    p.add_argument("--sigma-n", type=float)
    p.add_argument("--p-missing", type=float)
    p.add_argument("--n-features", type=int)
    p.add_argument("--kind", choices=["binary", "continuous"])
    p.add_argument("--value-scale", type=float)

    p = command("detrend", "Subtract a centred moving average from continuous data")
    p.add_argument("--data")
    p.add_argument("--window", type=int)
    p.add_argument("--output-name")

    p = command("fit", "Fit a CyHMM")
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--initial-model", help="Warm-start from this model JSON")

    p = command("select-states", "Cross-validate the number of latent states")
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--candidates", type=int, nargs="+")
    p.add_argument("--folds", type=int)

    p = command("analyze", "Cycle lengths, trajectories and variability of a fitted model")
    p.add_argument("--model")
    _data_flags(p)
    p.add_argument("--state-index", type=int, help="0-based state whose entries delimit cycles")
    p.add_argument("--horizon", type=int)
    p.add_argument("--reports", nargs="+")

    p = command("cluster", "Cluster individuals with one CyHMM per cluster")
    _data_flags(p)
    _fit_flags(p)
    p.add_argument("--n-clusters", type=int)
    p.add_argument("--n-seed-models", type=int)
    p.add_argument("--max-outer-iters", type=int)
    p.add_argument("--normalize-by-length", action="store_const", const=True)
    p.add_argument("--candidates", type=int, nargs="+", help="Also scan these cluster counts")

    p = command("benchmark", "Run the simulation benchmark against the baselines")
    p.add_argument("--grid-file", help="YAML grid, e.g. config/benchmark_config.yaml")
    p.add_argument("--trials-per-kind", type=int)
    p.add_argument("--n-individuals", type=int)
    p.add_argument("--n-states", type=int)
    p.add_argument("--skip-ablation", dest="ablation", action="store_const", const=False)
    return parser


def context_from_args(args: argparse.Namespace, defaults: Mapping[str, Any]) -> Dict[str, Any]:
    flags = {k: v for k, v in vars(args).items() if k not in GLOBAL_DESTS}
    user_config = load_config(args.config) if args.config else None
    return resolve_context(args.command, defaults, user_config, flags)


def run(manager: AbilityManager, defaults: Mapping[str, Any], argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and map failures to exit codes"""
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level)
    try:
        context = context_from_args(args, defaults)
        result = asyncio.run(manager.execute_ability(args.command, context))
        print(json.dumps(result, indent=2, default=str))
        return EXIT_OK
    except FileNotFoundError as e:
        logger.error(f"{args.command}: missing input: {e}")
        return EXIT_MISSING_INPUT
    except KeyError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_UNKNOWN
    except ValueError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INVALID
    except Exception:
        logger.exception(f"{args.command}: internal error")
        return EXIT_INTERNAL
