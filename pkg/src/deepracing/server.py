#!/usr/bin/env python3
"""
DeepRacing FastMCP Server

A Model Context Protocol server exposing the racing testbed: closed-loop
trials, clock-sync and latency experiments, Bezier fitting and dataset
extraction.
"""

import json
import logging
from datetime import datetime, timezone
from typing import Any

from fastmcp import FastMCP

from . import __version__
from .config import config, configure_logging
from .service import get_service

logger = logging.getLogger(__name__)

# Initialize MCP server
mcp = FastMCP("DeepRacing")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _ok(data: Any) -> str:
    return json.dumps({"success": True, "data": data, "timestamp": _now()}, indent=2)


def _fail(e: Exception, **context: Any) -> str:
    return json.dumps(
        {"success": False, "error": str(e), "errorType": type(e).__name__, **context},
        indent=2,
    )


def run_trial(
    track: str = "oval",
    controller: str = "pure-pursuit-centerline",
    gamma: float = 0.4,
    laps: int = 5,
    latency_ms: float = 0.0,
    seed: int = 0,
    target_speed: float = 15.0,
    duration: float = 600.0,
    reset_each_lap: bool = False,
    out_dir: str | None = None,
) -> str:
    """
    Run a closed-loop trial of a controller on a track.

    Args:
        track: "oval" or the path of a DRTRACK file
        controller: "pure-pursuit-centerline", "replay" or "external"
        gamma: Lookahead gain in seconds
        laps: Number of timed laps to complete
        latency_ms: Injected actuation latency in milliseconds
        seed: Seed for latency jitter
        target_speed: Reference speed of the centerline controller in m/s
        duration: Time budget in simulated seconds
        reset_each_lap: Put the car back on the start line after every lap
        out_dir: Optional directory for report.csv, summary.csv and path.svg

    Returns:
        JSON string with lap times and NBF/BFS/TBF/DBF
    """
    try:
        summary = get_service().run_trial(
            track=track,
            controller=controller,
            gamma=gamma,
            laps=laps,
            latency_ms=latency_ms,
            seed=seed,
            out_dir=out_dir,
            duration=duration,
            target_speed=target_speed,
            reset_each_lap=reset_each_lap,
        )
        return _ok(summary)
    except Exception as e:
        return _fail(e, track=track, controller=controller)


def clock_test(
    drift: float = 0.99999,
    offset: float = -1.616876,
    samples: int = 10_000,
    noise: float = 0.0,
    seed: int = 0,
) -> str:
    """
    Fit the OS-to-session clock regression on synthetic timestamps.

    Args:
        drift: True session seconds per OS second
        offset: True session clock offset in seconds
        samples: Number of timestamp pairs
        noise: Standard deviation of session timestamp noise in seconds
        seed: Noise seed

    Returns:
        JSON string with slope, intercept, r_squared and a health verdict
    """
    try:
        return _ok(get_service().clock_test(drift, offset, samples, noise, seed))
    except Exception as e:
        return _fail(e)


def latency_test(
    inject_ms: float = 26.79, rate: float = 60.0, command_rate: float = 1000.0, seed: int = 0
) -> str:
    """
    Estimate an injected actuation latency from a steering ramp.

    Args:
        inject_ms: Delay injected into the actuation channel
        rate: Telemetry observation rate in Hz
        command_rate: Steering command update rate in Hz
        seed: Seed for the observation phase

    Returns:
        JSON string with the injected and estimated latency
    """
    try:
        return _ok(get_service().latency_test(inject_ms, rate, command_rate, seed))
    except Exception as e:
        return _fail(e)


def fit_bezier(
    points: list[list[float]], degree: int = 5, times: list[float] | None = None
) -> str:
    """
    Least-squares fit of a Bezier curve to sample points.

    Args:
        points: Sample points, one coordinate list per sample
        degree: Curve degree
        times: Optional sample times; uniform over [0, 1] when omitted

    Returns:
        JSON string with the control points
    """
    try:
        curve = get_service().fit_points(points, degree, times)
        return _ok({"degree": curve.degree, "control_points": curve.control_points.tolist()})
    except Exception as e:
        return _fail(e, degree=degree)


def build_dataset(
    log_path: str,
    out: str,
    context: int = 5,
    points: int = 60,
    horizon: float = 1.4,
    degree: int = 5,
) -> str:
    """
    Extract future-trajectory labels from a DRLOG telemetry log into a CSV.

    Args:
        log_path: DRLOG file to read
        out: CSV file to write
        context: Past samples required before an anchor
        points: Waypoints per label
        horizon: Label horizon in seconds
        degree: Degree of the fitted Bezier curve

    Returns:
        JSON string with the number of records written
    """
    try:
        return _ok(get_service().build_dataset(log_path, out, context, points, horizon, degree))
    except Exception as e:
        return _fail(e, logPath=log_path)


for _tool in (run_trial, clock_test, latency_test, fit_bezier, build_dataset):
    mcp.tool()(_tool)


def get_server_status() -> str:
    """
    Resource providing testbed status.

    Returns:
        JSON string with server status
    """
    return json.dumps({**get_service().status(), "timestamp": _now()}, indent=2)


def get_server_config() -> str:
    """
    Resource providing the environment configuration.

    Returns:
        JSON string with configuration values
    """
    return json.dumps(
        {
            "telemetryHost": config.telemetry_host,
            "telemetryPort": config.telemetry_port,
            "outputDir": config.output_dir,
            "logLevel": config.log_level,
            "version": __version__,
        },
        indent=2,
    )


mcp.resource("deepracing://status")(get_server_status)
mcp.resource("deepracing://config")(get_server_config)


def main() -> None:
    """Main entry point for the MCP server."""
    configure_logging()
    logger.info("Starting DeepRacing FastMCP Server...")
    logger.info(f"Telemetry: {config.telemetry_host}:{config.telemetry_port}")

    # Run the server
    mcp.run()


if __name__ == "__main__":
    main()
