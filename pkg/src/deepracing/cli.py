"""``deepracing`` command line.

Every subcommand prints one JSON object on stdout. Failures exit with status 1
and end stderr with one JSON error line. Log records share stderr, so
consumers read the last line.
"""

import argparse
import json
import logging
import sys
from collections.abc import Sequence

from . import __version__
from .config import config, configure_logging
from .service import CONTROLLERS, get_service

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepracing", description="Closed-loop autonomous racing testbed"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="logging level (default: LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a closed-loop trial")
    run.add_argument("--track", default="oval", help="'oval' or a DRTRACK file")
    run.add_argument("--controller", choices=CONTROLLERS, default=CONTROLLERS[0])
    run.add_argument("--gamma", type=float, default=0.4, help="lookahead gain [s]")
    run.add_argument("--laps", type=int, default=5, help="timed laps to complete, 0 for none")
    run.add_argument("--latency", type=float, default=0.0, help="actuation latency [ms]")
    run.add_argument("--jitter", type=float, default=0.0, help="latency jitter std [ms]")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default=config.output_dir, help="report directory")
    run.add_argument("--duration", type=float, default=600.0, help="time budget [s]")
    run.add_argument("--target-speed", type=float, default=15.0, help="[m/s]")
    run.add_argument("--reset-each-lap", action="store_true")
    run.add_argument("--live", action="store_true", help="threaded loop over UDP in real time")
    run.add_argument("--replay", help="report.csv whose commands the replay controller plays")
    run.add_argument("--external", help="module:factory of an external controller")
    run.add_argument("--no-plot", action="store_true")
    run.add_argument("--log", action="store_true", help="also write telemetry.drlog")

    clock = sub.add_parser("clock-test", help="recover a configured session clock")
    clock.add_argument("--drift", type=float, default=0.99999)
    clock.add_argument("--offset", type=float, default=-1.616876)
    clock.add_argument("--samples", type=int, default=10_000)
    clock.add_argument("--noise", type=float, default=0.0, help="session time noise std [s]")
    clock.add_argument("--seed", type=int, default=0)

    latency = sub.add_parser("latency-test", help="estimate an injected actuation latency")
    latency.add_argument("--inject", type=float, default=26.79, help="[ms]")
    latency.add_argument("--rate", type=float, default=60.0, help="observation rate [Hz]")
    latency.add_argument("--command-rate", type=float, default=1000.0, help="[Hz]")
    latency.add_argument("--seed", type=int, default=0)

    dataset = sub.add_parser("dataset", help="extract label records from a DRLOG file")
    dataset.add_argument("--log", required=True, dest="log_path")
    dataset.add_argument("--context", type=int, default=5)
    dataset.add_argument("--points", type=int, default=60)
    dataset.add_argument("--horizon", type=float, default=1.4)
    dataset.add_argument("--degree", type=int, default=5)
    dataset.add_argument("--out", required=True)
    dataset.add_argument(
        "--sync-clock", action="store_true", help="re-derive session times from receive times"
    )

    fit = sub.add_parser("bezier-fit", help="least-squares Bezier fit of CSV points")
    fit.add_argument("--in", required=True, dest="in_path")
    fit.add_argument("--degree", type=int, default=5)
    fit.add_argument("--out")
    fit.add_argument("--time-column", action="store_true", help="first column holds times")

    sub.add_parser("serve", help="start the MCP server on stdio")
    return parser


def _dispatch(args: argparse.Namespace) -> dict | None:
    service = get_service()
    match args.command:
        case "run":
            return service.run_trial(
                track=args.track,
                controller=args.controller,
                gamma=args.gamma,
                laps=args.laps or None,
                latency_ms=args.latency,
                seed=args.seed,
                out_dir=args.out,
                duration=args.duration,
                target_speed=args.target_speed,
                reset_each_lap=args.reset_each_lap,
                jitter_ms=args.jitter,
                live=args.live,
                replay=args.replay,
                external=args.external,
                plot=not args.no_plot,
                log=args.log,
            )
        case "clock-test":
            return service.clock_test(args.drift, args.offset, args.samples, args.noise, args.seed)
        case "latency-test":
            return service.latency_test(args.inject, args.rate, args.command_rate, args.seed)
        case "dataset":
            return service.build_dataset(
                args.log_path,
                args.out,
                args.context,
                args.points,
                args.horizon,
                args.degree,
                args.sync_clock,
            )
        case "bezier-fit":
            return service.bezier_fit(args.in_path, args.degree, args.out, args.time_column)
        case "serve":
            from .server import mcp

            mcp.run()
            return None
    raise AssertionError(f"unhandled command {args.command}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        result = _dispatch(args)
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        error = {"success": False, "error": str(e), "errorType": type(e).__name__}
        print(json.dumps(error), file=sys.stderr)
        return 1
    if result is not None:
        print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
