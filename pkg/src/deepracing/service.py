"""Service layer behind the CLI and the MCP tools."""

import csv
import logging
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .config import config
from .control import (
    CenterlinePursuit,
    Controller,
    PursuitConfig,
    ReplayController,
    load_external_controller,
)
from .curves import BezierCurve, fit_least_squares, normalize_times
from .errors import InvalidArgumentError
from .harness import (
    TrialConfig,
    emit_report,
    load_replay_commands,
    run_live,
    run_trial,
)
from .simenv import SessionClock, Track, generate_oval_track, load_track
from .synclog import (
    LogWriter,
    StateLog,
    extract_label_pairs,
    fit_clock_model,
    measure_latency,
    read_log,
    simulate_steering_ramp,
    write_labels_csv,
)

logger = logging.getLogger(__name__)

CONTROLLERS = ("pure-pursuit-centerline", "replay", "external")
RAMP_START = 1.0


def _sanitize(text: str | Path) -> str:
    return str(text).replace("\n", "").replace("\r", "")


def _axis_names(dimension: int) -> list[str]:
    if dimension <= 3:
        return list("xyz"[:dimension])
    return [f"c{k}" for k in range(dimension)]


def read_points_csv(
    path: str | Path, time_column: bool = False
) -> tuple[np.ndarray, np.ndarray | None]:
    """Read sample points from a CSV with an optional header row.

    Returns:
        (points, times) where times is None unless ``time_column`` is set, in
        which case the first column holds the sample times

    Raises:
        InvalidArgumentError: On non-numeric cells or ragged rows
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if rows:
        try:
            [float(cell) for cell in rows[0]]
        except ValueError:
            rows = rows[1:]
    try:
        data = np.array([[float(cell) for cell in row] for row in rows], dtype=float)
    except ValueError as e:
        raise InvalidArgumentError(f"non-numeric value in {_sanitize(path)}: {e}") from e
    if data.ndim != 2 or data.shape[1] < (2 if time_column else 1):
        raise InvalidArgumentError(f"{_sanitize(path)} holds no usable point rows")
    if time_column:
        return data[:, 1:], data[:, 0]
    return data, None


def write_control_points_csv(curve: BezierCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_axis_names(curve.dimension))
        for row in curve.control_points.tolist():
            writer.writerow([repr(v) for v in row])


class TestbedService:
    """Workflows of the testbed: trials, clock and latency experiments, datasets and fits."""

    __test__ = False

    def __init__(self) -> None:
        self.trials_run = 0
        logger.info(
            f"✓ DeepRacing testbed ready, telemetry at "
            f"{config.telemetry_host}:{config.telemetry_port}"
        )

    def resolve_track(self, track: str) -> Track:
        """``oval`` builds the default stadium; anything else is a DRTRACK file path."""
        if track == "oval":
            return generate_oval_track()
        return load_track(track)

    def resolve_controller(
        self,
        name: str,
        track: Track,
        gamma: float = 0.4,
        target_speed: float = 15.0,
        replay: str | None = None,
        external: str | None = None,
    ) -> Controller:
        if name == "pure-pursuit-centerline":
            return CenterlinePursuit(track, PursuitConfig(gamma=gamma), target_speed)
        if name == "replay":
            if not replay:
                raise InvalidArgumentError("the replay controller needs a report.csv to replay")
            return ReplayController(load_replay_commands(replay))
        if name == "external":
            if not external:
                raise InvalidArgumentError("the external controller needs module:factory")
            # factories receive the track as a keyword argument
            return load_external_controller(external, track=track)
        raise InvalidArgumentError(f"unknown controller {name!r}; expected one of {CONTROLLERS}")

    def run_trial(
        self,
        track: str = "oval",
        controller: str = "pure-pursuit-centerline",
        gamma: float = 0.4,
        laps: int | None = 5,
        latency_ms: float = 0.0,
        seed: int = 0,
        out_dir: str | None = None,
        duration: float = 600.0,
        target_speed: float = 15.0,
        reset_each_lap: bool = False,
        jitter_ms: float = 0.0,
        live: bool = False,
        replay: str | None = None,
        external: str | None = None,
        plot: bool = True,
        log: bool = False,
    ) -> dict[str, Any]:
        """Run one closed-loop trial and, given an output directory, write its report.

        Returns:
            Trial summary plus the list of files written
        """
        try:
            geometry = self.resolve_track(track)
            driver = self.resolve_controller(
                controller, geometry, gamma, target_speed, replay, external
            )
            trial = TrialConfig(
                laps=laps,
                duration=duration,
                latency=latency_ms / 1000.0,
                jitter=jitter_ms / 1000.0,
                seed=seed,
                reset_each_lap=reset_each_lap,
            )
            out = Path(out_dir) if out_dir else None
            writer = None
            if out is not None and log:
                out.mkdir(parents=True, exist_ok=True)
                writer = LogWriter(out / "telemetry.drlog")
            try:
                if live:
                    report = run_live(geometry, driver, trial, config.telemetry_address, writer)
                else:
                    report = run_trial(geometry, driver, trial, writer)
            finally:
                if writer is not None:
                    writer.close()
            files = []
            if out is not None:
                files = emit_report(report, out, geometry if plot else None)
                if writer is not None:
                    files.append(writer.path)
            self.trials_run += 1
            return {**report.summary(), "files": [str(f) for f in files]}
        except Exception as e:
            logger.error(f"Trial on track '{_sanitize(track)}' failed: {e}")
            raise

    def clock_test(
        self,
        drift: float = 0.99999,
        offset: float = -1.616876,
        samples: int = 10_000,
        noise: float = 0.0,
        seed: int = 0,
        span: float = 100.0,
    ) -> dict[str, Any]:
        """Fit a clock model to synthetic (os_time, session_time) pairs from a known clock."""
        try:
            if samples < 2 or noise < 0.0 or not span > 0.0:
                raise InvalidArgumentError("need samples >= 2, noise >= 0 and span > 0")
            clock = SessionClock(drift, offset)
            rng = np.random.default_rng(seed)
            os_times = np.linspace(0.0, span, samples)
            session = clock.now(os_times) + (rng.normal(0.0, noise, samples) if noise else 0.0)
            model = fit_clock_model(zip(os_times.tolist(), session.tolist()))
            logger.info(
                f"Clock fit: slope={model.slope:.9f}, intercept={model.intercept:.6f}, "
                f"r2={model.r_squared:.12f}"
            )
            return {
                "slope": model.slope,
                "intercept": model.intercept,
                "r_squared": model.r_squared,
                "n_samples": model.n_samples,
                "healthy": model.is_healthy(),
            }
        except Exception as e:
            logger.error(f"Clock test failed: {e}")
            raise

    def latency_test(
        self,
        inject_ms: float = 26.79,
        rate: float = 60.0,
        command_rate: float = 1000.0,
        seed: int = 0,
    ) -> dict[str, Any]:
        """Recover an injected actuation delay with the steering-ramp experiment."""
        try:
            ramp = simulate_steering_ramp(
                inject_ms / 1000.0, rate, command_rate, ramp_start=RAMP_START, seed=seed
            )
            estimate = measure_latency(ramp, RAMP_START) * 1000.0
            logger.info(f"Latency test: injected {inject_ms} ms, estimated {estimate:.3f} ms")
            return {
                "injected_ms": inject_ms,
                "estimated_ms": estimate,
                "error_ms": estimate - inject_ms,
                "rate_hz": rate,
                "samples": len(ramp),
            }
        except Exception as e:
            logger.error(f"Latency test failed: {e}")
            raise

    def build_dataset(
        self,
        log_path: str,
        out: str,
        context: int = 5,
        points: int = 60,
        horizon: float = 1.4,
        degree: int = 5,
        sync_clock: bool = False,
    ) -> dict[str, Any]:
        """Extract label records from a DRLOG file into a CSV.

        With ``sync_clock`` session times are re-derived from the receive times
        through a fitted clock model instead of taken from the packets.
        """
        try:
            packets = read_log(log_path)
            clock = None
            if sync_clock:
                clock = fit_clock_model((p.os_time, p.session_time) for p in packets)
            log = StateLog(packets, clock)
            records = extract_label_pairs(log, context, points, horizon, degree)
            written = write_labels_csv(records, out)
            logger.info(f"Wrote {written} label records from {_sanitize(log_path)}")
            return {
                "records": written,
                "log_samples": len(log),
                "log_duration": log.duration,
                "out": str(out),
            }
        except Exception as e:
            logger.error(f"Dataset extraction from '{_sanitize(log_path)}' failed: {e}")
            raise

    def fit_points(
        self, points: list[list[float]], degree: int, times: list[float] | None = None
    ) -> BezierCurve:
        """Least-squares Bezier fit; times default to uniform over [0, 1]."""
        data = np.asarray(points, dtype=float)
        if data.ndim != 2:
            raise InvalidArgumentError("points must be a list of equal-length coordinate rows")
        if times is None:
            s = np.linspace(0.0, 1.0, len(data))
        else:
            s, _ = normalize_times(times)
        return fit_least_squares(data, s, degree)

    def bezier_fit(
        self, in_path: str, degree: int, out: str | None = None, time_column: bool = False
    ) -> dict[str, Any]:
        try:
            data, times = read_points_csv(in_path, time_column)
            curve = self.fit_points(data, degree, None if times is None else times.tolist())
            if out:
                write_control_points_csv(curve, out)
            return {
                "degree": curve.degree,
                "dimension": curve.dimension,
                "samples": len(data),
                "control_points": curve.control_points.tolist(),
            }
        except Exception as e:
            logger.error(f"Bezier fit of '{_sanitize(in_path)}' failed: {e}")
            raise

    def status(self) -> dict[str, Any]:
        return {
            "status": "ready",
            "version": __version__,
            "telemetry": f"{config.telemetry_host}:{config.telemetry_port}",
            "output_dir": config.output_dir,
            "controllers": list(CONTROLLERS),
            "trials_run": self.trials_run,
        }


# Global service instance
_service: TestbedService | None = None


def get_service() -> TestbedService:
    """Get or create the global testbed service instance."""
    global _service
    if _service is None:
        _service = TestbedService()
    return _service
