"""Closed-loop trials, boundary-failure metrics and report emission.

``run_trial`` advances simulation, snapshot ring and controller in one
context, tick by tick, so a trial is reproducible from its seed.
``run_live`` runs the same pieces in three threads over loopback UDP:
the simulation stepper with its broadcaster, the listener feeding the
``SnapshotRing``, and the control loop.
"""

import csv
import logging
import math
import threading
import time
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .control import NEUTRAL, ControlCommand, Controller
from .errors import ControllerFault, InvalidArgumentError
from .simenv import (
    TICK,
    TICK_RATE_HZ,
    LatencyChannel,
    Localization,
    SessionClock,
    Simulator,
    Track,
    VehicleParams,
    VehicleState,
)
from .synclog import LogWriter
from .telemetry import (
    PacketFlags,
    TelemetryBroadcaster,
    TelemetryListener,
    TelemetryPacket,
    TimestampedPacket,
)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "session_time",
    "x",
    "y",
    "speed",
    "steering",
    "throttle",
    "brake",
    "lateral_offset",
    "outside_distance",
)
SUMMARY_COLUMNS = ("laps", "mean_lap_time", "NBF", "BFS", "TBF", "DBF", "dnf")
HISTOGRAM_COLUMNS = ("bin_start", "bin_end", "ticks")


# --------------------------------------------------------------------------
# Snapshot ring
# --------------------------------------------------------------------------


class SnapshotRing:
    """The C most recent telemetry packets, contiguous in session time.

    The writer publishes a fresh immutable tuple on every push and readers
    take whatever tuple is current, so readers never block the writer and
    never see a half-updated window. A packet that is not newer than the
    last one is rejected; a gap of more than ``max_gap_periods`` telemetry
    periods restarts the window.
    """

    def __init__(
        self, capacity: int = 5, period: float = TICK, max_gap_periods: float = 2.0
    ) -> None:
        if capacity < 1:
            raise InvalidArgumentError(f"capacity must be positive, got {capacity}")
        if not period > 0.0 or not max_gap_periods > 0.0:
            raise InvalidArgumentError("period and max_gap_periods must be positive")
        self.capacity = capacity
        self.max_gap = max_gap_periods * period
        self._window: tuple[TimestampedPacket, ...] = ()
        self._write_lock = threading.Lock()
        self.rejected = 0
        self.restarts = 0

    def push(self, item: TimestampedPacket) -> bool:
        with self._write_lock:
            window = self._window
            if window:
                gap = item.session_time - window[-1].session_time
                if gap <= 0.0:
                    self.rejected += 1
                    return False
                if gap > self.max_gap:
                    self.restarts += 1
                    window = ()
            self._window = (*window, item)[-self.capacity:]
            return True

    def snapshot(self) -> tuple[TimestampedPacket, ...] | None:
        """The full window, oldest first, or None while fewer than C contiguous packets exist."""
        window = self._window
        return window if len(window) == self.capacity else None

    def latest(self) -> TimestampedPacket | None:
        window = self._window
        return window[-1] if window else None

    def __len__(self) -> int:
        return len(self._window)


# --------------------------------------------------------------------------
# Traces, laps and metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TraceTick:
    session_time: float
    x: float
    y: float
    heading: float
    speed: float
    steering: float
    throttle: float
    brake: float
    arc_length: float
    lateral_offset: float
    outside_distance: float
    reset: bool = False


@dataclass(frozen=True)
class BoundaryFailure:
    """A maximal run of ticks outside the track; ``t_end`` is the first tick back inside."""

    t_start: float
    t_end: float
    s_start: float
    s_end: float
    mean_outside: float
    max_outside: float
    ticks: int


def wrap_station_delta(delta: float, length: float) -> float:
    """Map a station difference into [-length/2, length/2)."""
    return (delta + 0.5 * length) % length - 0.5 * length


class LapCounter:
    """Detects forward start/finish crossings from a stream of stations.

    A lap completes when unwrapped progress past the line reaches the next
    multiple of the track length and no station change over the preceding
    ``monotone_window`` seconds was negative. The first lap is only timed if
    the stream starts within ``start_tolerance`` meters of the line.
    """

    def __init__(
        self,
        track: Track,
        monotone_window: float = 1.0,
        start_tolerance: float = 1.0,
        period: float = TICK,
    ) -> None:
        self.length = track.length
        self.line = track.start_finish_station
        self.start_tolerance = start_tolerance
        self._recent: deque[float] = deque(maxlen=max(1, round(monotone_window / period)))
        self.lap_times: list[float] = []
        self.completed = 0
        self._progress = 0.0
        self._next_line = self.length
        self._last_u = 0.0
        self._boundary_time: float | None = None

    def _u(self, station: float) -> float:
        return (station - self.line) % self.length

    def start(self, time_s: float, station: float) -> None:
        u = self._u(station)
        near = wrap_station_delta(u, self.length)
        if abs(near) <= self.start_tolerance:
            self._progress, self._boundary_time = near, time_s
        else:
            self._progress, self._boundary_time = u, None
        self._next_line = self.length
        self._last_u = u
        self._recent.clear()

    def relocate(self, station: float) -> None:
        """The vehicle was put back on track; continue counting from ``station``."""
        u = self._u(station)
        self._progress = self._next_line - self.length + wrap_station_delta(u, self.length)
        self._last_u = u

    def update(self, time_s: float, station: float) -> bool:
        """Feed one tick; True when the tick completes a lap, timed or not."""
        u = self._u(station)
        delta = wrap_station_delta(u - self._last_u, self.length)
        self._last_u = u
        self._progress += delta
        self._recent.append(delta)
        if self._progress < self._next_line or min(self._recent) < 0.0:
            return False
        self._next_line += self.length
        self.completed += 1
        previous, self._boundary_time = self._boundary_time, time_s
        if previous is not None:
            self.lap_times.append(time_s - previous)
        return True


@dataclass(frozen=True)
class TrialMetrics:
    lap_times: list[float]
    failures: list[BoundaryFailure]
    nbf: int
    bfs: float
    tbf: float
    dbf: float
    duration: float
    distance: float
    mean_centerline_distance: float
    max_centerline_distance: float
    p95_centerline_distance: float

    @property
    def successful_laps(self) -> int:
        return len(self.lap_times)

    @property
    def mean_lap_time(self) -> float:
        return math.fsum(self.lap_times) / len(self.lap_times) if self.lap_times else 0.0


EMPTY_METRICS = TrialMetrics([], [], 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def progress_along_track(trace: Sequence[TraceTick], track: Track) -> list[float]:
    """Unwrapped centerline progress per tick, 0 at the first tick. Reset ticks add nothing."""
    progress = [0.0]
    for prev, tick in zip(trace, trace[1:]):
        step = 0.0
        if not tick.reset:
            step = wrap_station_delta(tick.arc_length - prev.arc_length, track.length)
        progress.append(progress[-1] + step)
    return progress


def _outside_runs(trace: Sequence[TraceTick]) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, tick in enumerate(trace):
        if tick.outside_distance > 0.0:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(trace)))
    return runs


def _failure(trace: Sequence[TraceTick], start: int, stop: int, period: float) -> BoundaryFailure:
    run = trace[start:stop]
    depths = [t.outside_distance for t in run]
    t_end = trace[stop].session_time if stop < len(trace) else run[-1].session_time + period
    return BoundaryFailure(
        t_start=run[0].session_time,
        t_end=t_end,
        s_start=run[0].arc_length,
        s_end=run[-1].arc_length,
        mean_outside=math.fsum(depths) / len(depths),
        max_outside=max(depths),
        ticks=len(run),
    )


def find_boundary_failures(
    trace: Sequence[TraceTick], period: float = TICK
) -> list[BoundaryFailure]:
    return [_failure(trace, a, b, period) for a, b in _outside_runs(trace)]


def count_laps(trace: Sequence[TraceTick], track: Track, period: float = TICK) -> LapCounter:
    counter = LapCounter(track, period=period)
    counter.start(trace[0].session_time, trace[0].arc_length)
    for tick in trace[1:]:
        if tick.reset:
            counter.relocate(tick.arc_length)
        else:
            counter.update(tick.session_time, tick.arc_length)
    return counter


def compute_metrics(
    trace: Sequence[TraceTick], track: Track, period: float = TICK
) -> TrialMetrics:
    """Lap times, boundary failures and NBF/BFS/TBF/DBF for a recorded trace.

    TBF and DBF are start-to-start means. With fewer than two failures they
    are the trial duration and the centerline distance covered; BFS is 0
    without failures.

    Raises:
        InvalidArgumentError: If the trace is empty
    """
    if not trace:
        raise InvalidArgumentError("cannot compute metrics of an empty trace")
    trace = list(trace)

    runs = _outside_runs(trace)
    failures = [_failure(trace, a, b, period) for a, b in runs]
    progress = progress_along_track(trace, track)
    duration = trace[-1].session_time - trace[0].session_time
    distance = progress[-1]

    nbf = len(failures)
    if nbf >= 2:
        starts = [a for a, _ in runs]
        pairs = list(zip(starts, starts[1:]))
        tbf = math.fsum(trace[b].session_time - trace[a].session_time for a, b in pairs) / (
            nbf - 1
        )
        dbf = math.fsum(progress[b] - progress[a] for a, b in pairs) / (nbf - 1)
    else:
        tbf, dbf = duration, distance
    bfs = math.fsum(f.mean_outside for f in failures) / nbf if nbf else 0.0

    deviation = np.abs([t.lateral_offset for t in trace])
    return TrialMetrics(
        lap_times=list(count_laps(trace, track, period).lap_times),
        failures=failures,
        nbf=nbf,
        bfs=bfs,
        tbf=tbf,
        dbf=dbf,
        duration=duration,
        distance=distance,
        mean_centerline_distance=float(np.mean(deviation)),
        max_centerline_distance=float(np.max(deviation)),
        p95_centerline_distance=float(np.percentile(deviation, 95)),
    )


def deviation_histogram(
    trace: Sequence[TraceTick], bins: int = 20
) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Histogram of |lateral offset| from the centerline: (counts, bin edges)."""
    if not trace:
        raise InvalidArgumentError("cannot histogram an empty trace")
    return np.histogram(np.abs([t.lateral_offset for t in trace]), bins=bins)


def rmse_control(
    pred: Sequence[tuple[float, float]], gt: Sequence[tuple[float, float]]
) -> tuple[float, float]:
    """Component-wise RMSE of (steering, throttle) pairs.

    Raises:
        InvalidArgumentError: If the sequences are empty or of different lengths
    """
    p = np.asarray(pred, dtype=float).reshape(-1, 2)
    g = np.asarray(gt, dtype=float).reshape(-1, 2)
    if len(p) == 0 or p.shape != g.shape:
        raise InvalidArgumentError(
            f"need equal non-empty sequences, got {len(p)} and {len(g)} pairs"
        )
    steering, throttle = np.sqrt(np.mean((p - g) ** 2, axis=0))
    return float(steering), float(throttle)


# --------------------------------------------------------------------------
# Trials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialConfig:
    """Budget and environment of one closed-loop trial."""

    laps: int | None = 5
    duration: float = 600.0
    latency: float = 0.0
    jitter: float = 0.0
    seed: int = 0
    context: int = 5
    reset_each_lap: bool = False
    params: VehicleParams = field(default_factory=VehicleParams)
    clock: SessionClock = field(default_factory=SessionClock)
    session_start: float = 0.0

    def __post_init__(self) -> None:
        if self.laps is not None and self.laps < 1:
            raise InvalidArgumentError("laps must be >= 1 when given")
        if self.duration < 0.0:
            raise InvalidArgumentError("duration must be >= 0")
        if self.latency < 0.0 or self.jitter < 0.0:
            raise InvalidArgumentError("latency and jitter must be >= 0")
        if self.context < 1:
            raise InvalidArgumentError("context must be >= 1")


@dataclass
class TrialReport:
    metrics: TrialMetrics
    trace: list[TraceTick] = field(default_factory=list, repr=False)
    dnf: bool = False
    dnf_reason: str | None = None
    controller_times: list[float] = field(default_factory=list, repr=False, compare=False)

    @property
    def lap_times(self) -> list[float]:
        return self.metrics.lap_times

    @property
    def successful_laps(self) -> int:
        return self.metrics.successful_laps

    @property
    def nbf(self) -> int:
        return self.metrics.nbf

    @property
    def bfs(self) -> float:
        return self.metrics.bfs

    @property
    def tbf(self) -> float:
        return self.metrics.tbf

    @property
    def dbf(self) -> float:
        return self.metrics.dbf

    @property
    def controller_overruns(self) -> int:
        return sum(1 for t in self.controller_times if t > TICK)

    def deviation_histogram(self, bins: int = 20) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        return deviation_histogram(self.trace, bins)

    def summary(self) -> dict:
        times = self.controller_times
        return {
            "laps": self.successful_laps,
            "lap_times": self.lap_times,
            "mean_lap_time": self.metrics.mean_lap_time,
            "NBF": self.nbf,
            "BFS": self.bfs,
            "TBF": self.tbf,
            "DBF": self.dbf,
            "dnf": self.dnf,
            "dnf_reason": self.dnf_reason,
            "ticks": len(self.trace),
            "duration": self.metrics.duration,
            "mean_centerline_distance": self.metrics.mean_centerline_distance,
            "max_centerline_distance": self.metrics.max_centerline_distance,
            "p95_centerline_distance": self.metrics.p95_centerline_distance,
            "controller_mean_time": float(np.mean(times)) if times else 0.0,
            "controller_max_time": max(times) if times else 0.0,
            "controller_overruns": self.controller_overruns,
        }


def _packet(
    state: VehicleState,
    cmd: ControlCommand,
    loc: Localization,
    track: Track,
    session_time: float,
    lap: int,
    frame: int,
    reset: bool,
) -> TelemetryPacket:
    flags = PacketFlags.NONE
    if loc.outside_distance > 0.0:
        flags |= PacketFlags.OFF_TRACK
    if reset:
        flags |= PacketFlags.RESET
    vx, vy = state.velocity
    return TelemetryPacket(
        session_time=session_time,
        steering=cmd.steering,
        throttle=cmd.throttle,
        brake=cmd.brake,
        position=(state.x, state.y, 0.0),
        velocity=(vx, vy, 0.0),
        orientation=state.quaternion,
        speed=state.speed,
        lap_distance=(loc.arc_length - track.start_finish_station) % track.length,
        lap_number=min(lap, 0xFFFF),
        flags=flags,
        frame=frame & 0xFFFFFFFF,
    )


def _trace_tick(
    time_s: float, state: VehicleState, cmd: ControlCommand, loc: Localization, reset: bool
) -> TraceTick:
    return TraceTick(
        session_time=time_s,
        x=state.x,
        y=state.y,
        heading=state.heading,
        speed=state.speed,
        steering=cmd.steering,
        throttle=cmd.throttle,
        brake=cmd.brake,
        arc_length=loc.arc_length,
        lateral_offset=loc.lateral_offset,
        outside_distance=loc.outside_distance,
        reset=reset,
    )


class _Stepper:
    """Simulation plus lap bookkeeping shared by both trial loops."""

    def __init__(self, track: Track, cfg: TrialConfig) -> None:
        self.track = track
        self.cfg = cfg
        self.sim = Simulator(track, cfg.params, session_start=cfg.session_start)
        self.laps = LapCounter(track)
        self.applied = NEUTRAL
        self.loc = track.localize(self.sim.state.position)
        self.laps.start(self.sim.session_time, self.loc.arc_length)
        self.trace = [_trace_tick(self.sim.session_time, self.sim.state, NEUTRAL, self.loc, False)]
        self.reset = False

    def packet(self, frame: int) -> TelemetryPacket:
        sim = self.sim
        return _packet(
            sim.state,
            self.applied,
            self.loc,
            self.track,
            sim.session_time,
            self.laps.completed + 1,
            frame,
            self.reset,
        )

    def advance(self, cmd: ControlCommand | None) -> None:
        self.applied = cmd or self.applied
        state = self.sim.step(self.applied)
        self.loc = self.track.localize(state.position)
        now = self.sim.session_time
        self.trace.append(_trace_tick(now, state, self.applied, self.loc, self.reset))
        if self.reset:
            self.laps.relocate(self.loc.arc_length)
            self.reset = False
        elif self.laps.update(now, self.loc.arc_length):
            logger.info(f"Lap {self.laps.completed} completed at session time {now:.3f}")
            if self.cfg.reset_each_lap:
                self.sim.reset()
                self.loc = self.track.localize(self.sim.state.position)
                self.reset = True

    @property
    def done(self) -> bool:
        return self.cfg.laps is not None and len(self.laps.lap_times) >= self.cfg.laps

    def finish(self, fault: str | None, controller_times: list[float]) -> TrialReport:
        metrics = compute_metrics(self.trace, self.track)
        dnf_reason = fault
        laps = self.cfg.laps
        if dnf_reason is None and laps is not None and metrics.successful_laps < laps:
            dnf_reason = f"completed {metrics.successful_laps} of {laps} laps"
        report = TrialReport(
            metrics, self.trace, dnf_reason is not None, dnf_reason, controller_times
        )
        if report.controller_overruns:
            logger.warning(f"Controller exceeded one tick on {report.controller_overruns} calls")
        logger.info(
            f"Trial finished: {report.successful_laps} laps, NBF={report.nbf}, "
            f"dnf={report.dnf}, {len(self.trace)} ticks"
        )
        return report


def _fault_message(e: Exception) -> str:
    return str(ControllerFault(f"{type(e).__name__}: {e}"))


def run_trial(
    track: Track,
    controller: Controller,
    config: TrialConfig | None = None,
    log_writer: LogWriter | None = None,
) -> TrialReport:
    """Drive ``controller`` around ``track`` at 60 Hz until the lap target or time budget.

    Each tick publishes the current state into the snapshot ring, with the
    receive time taken as the session clock's OS time, calls the controller
    once the ring holds a full window, routes its command through the latency
    channel and steps the vehicle with whatever command the channel released.
    A controller exception ends the trial as DNF with the partial trace.
    """
    cfg = config or TrialConfig()
    ticks = round(cfg.duration * TICK_RATE_HZ)
    if ticks == 0:
        return TrialReport(EMPTY_METRICS)

    stepper = _Stepper(track, cfg)
    ring = SnapshotRing(cfg.context)
    channel = LatencyChannel(cfg.latency, cfg.jitter, np.random.default_rng(cfg.seed))
    controller_times: list[float] = []
    fault = None

    for frame in range(ticks):
        now = stepper.sim.session_time
        item = TimestampedPacket(stepper.packet(frame), cfg.clock.os_time(now))
        ring.push(item)
        if log_writer is not None:
            log_writer.append(item)

        window = ring.snapshot()
        if window is not None:
            started = time.perf_counter()
            try:
                cmd = controller(window)
            except Exception as e:
                fault = _fault_message(e)
                logger.error(f"Controller fault at session time {now:.3f}: {e}")
                break
            controller_times.append(time.perf_counter() - started)
            channel.actuate(cmd, now)

        stepper.advance(channel.poll(now))
        if stepper.done:
            break

    return stepper.finish(fault, controller_times)


def run_live(
    track: Track,
    controller: Controller,
    config: TrialConfig | None = None,
    address: tuple[str, int] = ("127.0.0.1", 0),
    log_writer: LogWriter | None = None,
) -> TrialReport:
    """Real-time closed loop over UDP.

    The calling thread owns the simulation and broadcasts one packet per
    tick; the listener thread pushes every received packet into the ring
    (and the log); the control thread reacts to each new ring window and
    actuates through the latency channel, which the stepper polls on the
    monotonic clock.
    """
    cfg = config or TrialConfig()
    ticks = round(cfg.duration * TICK_RATE_HZ)
    if ticks == 0:
        return TrialReport(EMPTY_METRICS)

    stepper = _Stepper(track, cfg)
    ring = SnapshotRing(cfg.context)
    channel = LatencyChannel(cfg.latency, cfg.jitter, np.random.default_rng(cfg.seed))
    stop = threading.Event()
    fresh = threading.Condition()
    controller_times: list[float] = []
    faults: list[str] = []

    def ingest(item: TimestampedPacket) -> None:
        if ring.push(item):
            if log_writer is not None:
                log_writer.append(item)
            with fresh:
                fresh.notify()

    def control_loop() -> None:
        seen = None
        while not stop.is_set():
            with fresh:
                fresh.wait(timeout=0.1)
            window = ring.snapshot()
            if window is None or window[-1] is seen:
                continue
            seen = window[-1]
            started = time.perf_counter()
            try:
                cmd = controller(window)
            except Exception as e:
                faults.append(_fault_message(e))
                logger.error(f"Controller fault at session time {seen.session_time:.3f}: {e}")
                stop.set()
                return
            controller_times.append(time.perf_counter() - started)
            channel.actuate(cmd)

    listener = TelemetryListener(address, on_packet=ingest).start()
    broadcaster = TelemetryBroadcaster(listener.address)
    control = threading.Thread(target=control_loop, name="control-loop", daemon=True)
    control.start()

    start = time.monotonic()
    try:
        for frame in range(ticks):
            if stop.is_set():
                break
            delay = start + frame * TICK - time.monotonic()
            if delay > 0.0:
                time.sleep(delay)
            broadcaster.publish(stepper.packet(frame))
            stepper.advance(channel.poll())
            if stepper.done:
                break
    finally:
        stop.set()
        control.join(timeout=1.0)
        broadcaster.close()
        listener.stop()

    logger.info(
        f"Live loop: {broadcaster.sent} packets sent, {listener.stats.received} received, "
        f"{ring.rejected} rejected, {ring.restarts} window restarts"
    )
    return stepper.finish(faults[0] if faults else None, controller_times)


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def plot_trial(trace: Sequence[TraceTick], track: Track, path: str | Path) -> None:
    """Save the driven path over the centerline and the deviation histogram as one figure.

    The two path lines carry the gids ``centerline`` and ``path`` and the
    histogram carries ``deviation``, so they can be found in an SVG.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    center = track.centerline
    driven = np.array([(t.x, t.y) for t in trace], dtype=float).reshape(-1, 2)
    fig, (ax_path, ax_hist) = plt.subplots(
        1, 2, figsize=(12, 5), gridspec_kw={"width_ratios": [2, 1]}
    )
    ax_path.plot(
        center[:, 0], center[:, 1], color="gray", linewidth=0.8, label="centerline",
        gid="centerline",
    )
    ax_path.plot(
        driven[:, 0], driven[:, 1], color="red", linewidth=0.6, label="driven path", gid="path"
    )
    ax_path.set_aspect("equal")
    ax_path.set_xlabel("x [m]")
    ax_path.set_ylabel("y [m]")
    ax_path.legend(loc="upper right")

    if trace:
        counts, edges = deviation_histogram(trace)
        ax_hist.stairs(counts, edges, fill=True, color="tab:blue", gid="deviation")
    ax_hist.set_xlabel("|lateral offset| [m]")
    ax_hist.set_ylabel("ticks")
    ax_hist.set_title("Distance from centerline")

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_deviation_histogram(
    trace: Sequence[TraceTick], path: str | Path, bins: int = 20
) -> None:
    counts, edges = deviation_histogram(trace, bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTOGRAM_COLUMNS)
        for lo, hi, n in zip(edges[:-1].tolist(), edges[1:].tolist(), counts.tolist()):
            writer.writerow([repr(lo), repr(hi), n])


def emit_report(
    report: TrialReport, out_dir: str | Path, track: Track | None = None
) -> list[Path]:
    """Write ``report.csv``, ``summary.csv`` and ``deviation_histogram.csv`` into ``out_dir``.

    Given a track, ``path.svg`` is plotted as well. The histogram is skipped
    for an empty trace.

    Raises:
        OSError: If the directory or files cannot be written
    """
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.csv"
        with open(report_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for t in report.trace:
                writer.writerow([repr(float(getattr(t, name))) for name in REPORT_COLUMNS])
        written.append(report_path)

        summary_path = out / "summary.csv"
        summary = report.summary()
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            writer.writerow([summary[name] for name in SUMMARY_COLUMNS])
        written.append(summary_path)

        if report.trace:
            histogram_path = out / "deviation_histogram.csv"
            write_deviation_histogram(report.trace, histogram_path)
            written.append(histogram_path)

        if track is not None:
            svg_path = out / "path.svg"
            plot_trial(report.trace, track, svg_path)
            written.append(svg_path)
    except OSError as e:
        logger.error(f"Failed to write report to {out}: {e}")
        raise
    logger.info(f"Report written to {out} ({len(report.trace)} ticks)")
    return written


def load_replay_commands(path: str | Path) -> list[ControlCommand]:
    """Read the applied commands back out of a ``report.csv``.

    Raises:
        InvalidArgumentError: If the file lacks the command columns or holds invalid values
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"steering", "throttle", "brake"} - set(reader.fieldnames or ())
        if missing:
            raise InvalidArgumentError(f"{path} lacks columns {sorted(missing)}")
        try:
            return [
                ControlCommand(float(row["steering"]), float(row["throttle"]), float(row["brake"]))
                for row in reader
            ]
        except ValueError as e:
            raise InvalidArgumentError(f"invalid command in {path}: {e}") from e
