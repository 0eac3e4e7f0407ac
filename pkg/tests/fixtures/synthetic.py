"""Synthetic packets, logs and traces for tests."""

import math

import numpy as np

from deepracing.harness import TraceTick, wrap_station_delta
from deepracing.telemetry import TelemetryPacket, TimestampedPacket

RATE_HZ = 60


def make_packet(
    session_time: float,
    x: float = 0.0,
    y: float = 0.0,
    heading: float = 0.0,
    speed: float = 0.0,
    **fields,
) -> TelemetryPacket:
    """Planar packet with orientation and velocity derived from heading and speed."""
    half = 0.5 * heading
    return TelemetryPacket(
        session_time=session_time,
        position=(x, y, 0.0),
        velocity=(speed * math.cos(heading), speed * math.sin(heading), 0.0),
        orientation=(math.cos(half), 0.0, 0.0, math.sin(half)),
        speed=speed,
        **fields,
    )


def straight_log(
    speed: float = 20.0,
    duration: float = 3.0,
    heading: float = 0.0,
    rate: float = RATE_HZ,
    os_offset: float = 0.0,
) -> list[TimestampedPacket]:
    """Constant-velocity straight run starting at the origin."""
    items = []
    for k in range(int(round(duration * rate)) + 1):
        t = k / rate
        d = speed * t
        packet = make_packet(t, d * math.cos(heading), d * math.sin(heading), heading, speed)
        items.append(TimestampedPacket(packet, t + os_offset))
    return items


def make_trace(
    outside: list[float],
    period: float = 1.0 / RATE_HZ,
    station_step: float = 0.25,
    length: float = 1000.0,
) -> list[TraceTick]:
    """Trace whose k-th tick has the given outside distance, advancing ``station_step`` per tick."""
    trace = []
    for k, depth in enumerate(outside):
        station = (k * station_step) % length
        trace.append(
            TraceTick(
                session_time=k * period,
                x=0.0,
                y=0.0,
                heading=0.0,
                speed=station_step / period,
                steering=0.0,
                throttle=0.0,
                brake=0.0,
                arc_length=station,
                lateral_offset=0.0,
                outside_distance=depth,
            )
        )
    return trace


def random_trace(rng: np.random.Generator, length: float, ticks: int) -> list[TraceTick]:
    """Random walk along a track with bursts of excursions outside the boundary."""
    period = 1.0 / RATE_HZ
    trace = []
    station = float(rng.uniform(0.0, length))
    outside = False
    for k in range(ticks):
        if rng.random() < 0.02:
            outside = not outside
        depth = float(rng.uniform(0.01, 3.0)) if outside else 0.0
        lateral = float(rng.normal(0.0, 2.0))
        trace.append(
            TraceTick(
                session_time=k * period,
                x=0.0,
                y=0.0,
                heading=0.0,
                speed=0.0,
                steering=0.0,
                throttle=0.0,
                brake=0.0,
                arc_length=station,
                lateral_offset=lateral,
                outside_distance=depth,
            )
        )
        station = (station + float(rng.uniform(-0.05, 0.6))) % length
    return trace


def brute_force_metrics(trace: list[TraceTick], length: float):
    """Single pass over the trace: (NBF, BFS, TBF, DBF)."""
    progress = 0.0
    starts: list[tuple[float, float]] = []
    scores: list[float] = []
    depths: list[float] = []
    previous = None
    for tick in trace:
        if previous is not None:
            progress += wrap_station_delta(tick.arc_length - previous.arc_length, length)
        if tick.outside_distance > 0.0:
            if not depths:
                starts.append((tick.session_time, progress))
            depths.append(tick.outside_distance)
        elif depths:
            scores.append(math.fsum(depths) / len(depths))
            depths = []
        previous = tick
    if depths:
        scores.append(math.fsum(depths) / len(depths))

    nbf = len(scores)
    bfs = math.fsum(scores) / nbf if nbf else 0.0
    if nbf >= 2:
        tbf = math.fsum(b[0] - a[0] for a, b in zip(starts, starts[1:])) / (nbf - 1)
        dbf = math.fsum(b[1] - a[1] for a, b in zip(starts, starts[1:])) / (nbf - 1)
    else:
        tbf = trace[-1].session_time - trace[0].session_time
        dbf = progress
    return nbf, bfs, tbf, dbf
