"""Clock synchronization, latency estimation, pose interpolation and label extraction.

Everything here works on completed, immutable logs. ``LogWriter`` is the only
stateful piece and has a single writer.
"""

import csv
import logging
import math
import struct
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial.transform import Rotation, Slerp
from scipy.stats import linregress

from .control import ControlCommand
from .curves import DEFAULT_LABEL_DEGREE, BezierCurve, fit_least_squares, normalize_times
from .errors import (
    DegenerateDataError,
    InsufficientDataError,
    InvalidArgumentError,
    OutOfRangeError,
    ProtocolError,
)
from .simenv import LatencyChannel
from .telemetry import PACKET_SIZE, TimestampedPacket, decode_packet, encode_packet

logger = logging.getLogger(__name__)

LOG_HEADER = b"DRLOG 1\n"
_OS_TIME = struct.Struct("<d")
LOG_RECORD_SIZE = _OS_TIME.size + PACKET_SIZE


# --------------------------------------------------------------------------
# Clock model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClockModel:
    """session_time = slope * os_time + intercept, with the fit's r^2."""

    slope: float
    intercept: float
    r_squared: float
    n_samples: int

    def to_session(self, os_time: ArrayLike) -> NDArray[np.float64] | float:
        return self.slope * np.asarray(os_time, dtype=float) + self.intercept

    def to_os(self, session_time: ArrayLike) -> NDArray[np.float64] | float:
        return (np.asarray(session_time, dtype=float) - self.intercept) / self.slope

    def is_healthy(self, slope_tolerance: float = 1e-3, min_r_squared: float = 0.999) -> bool:
        """The logging timescale tracks the session clock: slope near 1, near-perfect fit."""
        return abs(self.slope - 1.0) <= slope_tolerance and self.r_squared >= min_r_squared


def fit_clock_model(pairs: Iterable[tuple[float, float]]) -> ClockModel:
    """Ordinary least squares of session time on OS time.

    Raises:
        DegenerateDataError: If fewer than two distinct OS times are given
    """
    data = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
    os_times, session_times = data[:, 0], data[:, 1]
    if len(data) < 2 or np.ptp(os_times) == 0.0:
        raise DegenerateDataError("need at least two distinct os_time values")
    fit = linregress(os_times, session_times)
    r_squared = 1.0 if np.ptp(session_times) == 0.0 else float(fit.rvalue) ** 2
    return ClockModel(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=min(max(r_squared, 0.0), 1.0),
        n_samples=len(data),
    )


# --------------------------------------------------------------------------
# Latency
# --------------------------------------------------------------------------


def measure_latency(ramp: Iterable[tuple[float, float]], ramp_start: float) -> float:
    """Latency from the x-intercept of a regression over the rising part of a steering ramp.

    Saturated samples (steering <= 0 or >= 1) are excluded.

    Raises:
        InsufficientDataError: If fewer than two unsaturated samples remain, or
            the samples do not rise
    """
    data = np.asarray(list(ramp), dtype=float).reshape(-1, 2)
    rising = data[(data[:, 1] > 0.0) & (data[:, 1] < 1.0)]
    if len(rising) < 2 or np.ptp(rising[:, 0]) == 0.0:
        raise InsufficientDataError(
            f"need at least two unsaturated samples at distinct times, got {len(rising)}"
        )
    fit = linregress(rising[:, 0], rising[:, 1])
    if not fit.slope > 0.0:
        raise InsufficientDataError("steering samples do not rise")
    return float(-fit.intercept / fit.slope - ramp_start)


def simulate_steering_ramp(
    delay: float,
    rate: float = 60.0,
    command_rate: float = 1000.0,
    ramp_duration: float = 1.0,
    ramp_start: float = 1.0,
    seed: int | None = None,
) -> list[tuple[float, float]]:
    """Replay the joystick ramp experiment through a ``LatencyChannel``.

    Steering is commanded from 0 at ``ramp_start`` up to 1 over ``ramp_duration``
    at ``command_rate``; the applied value is observed at ``rate`` with a random
    phase.

    Returns:
        (os_time, observed_steering) samples
    """
    if min(rate, command_rate, ramp_duration) <= 0.0 or delay < 0.0:
        raise InvalidArgumentError("rates and ramp duration must be positive, delay >= 0")
    rng = np.random.default_rng(seed)
    channel = LatencyChannel(delay)

    steps = math.ceil(ramp_duration * command_rate)
    cmd_times = [0.0] + [ramp_start + i / command_rate for i in range(steps + 1)]
    cmd_values = [0.0] + [min(i / steps, 1.0) for i in range(steps + 1)]

    end = ramp_start + delay + ramp_duration + 0.5
    phase = float(rng.uniform(0.0, 1.0 / rate))
    obs_times = phase + np.arange(math.ceil((end - phase) * rate)) / rate

    samples = []
    ci = 0
    for tau in obs_times.tolist():
        while ci < len(cmd_times) and cmd_times[ci] <= tau:
            channel.actuate(ControlCommand(steering=cmd_values[ci]), cmd_times[ci])
            ci += 1
        held = channel.poll(tau)
        samples.append((tau, held.steering if held is not None else 0.0))
    return samples


# --------------------------------------------------------------------------
# Pose interpolation
# --------------------------------------------------------------------------


def _xyzw(q: NDArray) -> NDArray:
    return np.roll(q, -1, axis=-1)


def _wxyz(q: NDArray) -> NDArray:
    return np.roll(q, 1, axis=-1)


def yaw_of(q: ArrayLike) -> NDArray[np.float64] | float:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def slerp_quaternions(q0: ArrayLike, q1: ArrayLike, u: float) -> NDArray[np.float64]:
    """Shortest-arc spherical interpolation between (w, x, y, z) unit quaternions."""
    if not 0.0 <= u <= 1.0:
        raise InvalidArgumentError(f"interpolation parameter must be in [0, 1], got {u}")
    a = np.asarray(q0, dtype=float)
    keys = Rotation.from_quat(_xyzw(np.vstack((a, np.asarray(q1, dtype=float)))))
    out = _wxyz(Slerp([0.0, 1.0], keys)([u]).as_quat()[0])
    return -out if np.dot(out, a) < 0.0 else out


@dataclass(frozen=True)
class Pose:
    position: NDArray[np.float64]
    orientation: NDArray[np.float64]
    velocity: NDArray[np.float64]

    @property
    def heading(self) -> float:
        return float(yaw_of(self.orientation))


def _local_cubic(times: NDArray[np.float64], values: NDArray[np.float64]) -> CubicHermiteSpline:
    """Piecewise cubic through the samples with tangents from the neighbouring samples.

    Each segment depends only on the four samples around it. Tangents are the
    second-order differences over non-uniform spacing, so linear and quadratic
    motion are reproduced exactly.
    """
    edge_order = 2 if len(times) > 2 else 1
    tangents = np.gradient(values, times, axis=0, edge_order=edge_order)
    return CubicHermiteSpline(times, values, tangents, axis=0)


class StateLog:
    """Time-ordered vehicle states with session times strictly increasing.

    Session times come from the packets themselves, or from ``clock`` applied
    to the receive times when given. Later duplicates of a session time are
    dropped.
    """

    def __init__(
        self, packets: Sequence[TimestampedPacket], clock: ClockModel | None = None
    ) -> None:
        if clock is not None:
            times = np.asarray(clock.to_session([p.os_time for p in packets]), dtype=float)
        else:
            times = np.array([p.packet.session_time for p in packets], dtype=float)
        order = np.argsort(times, kind="stable")
        keep = [order[0]] if len(order) else []
        for idx in order[1:]:
            if times[idx] > times[keep[-1]]:
                keep.append(idx)
        if len(keep) < 2:
            raise InsufficientDataError("a state log needs at least two distinct samples")
        self.packets = [packets[i] for i in keep]
        self.times = times[keep]
        self.positions = np.array([p.packet.position[:2] for p in self.packets])
        self.velocities = np.array([p.packet.velocity[:2] for p in self.packets])
        quats = np.array([p.packet.orientation for p in self.packets])
        # one hemisphere so neighbouring samples never take the long way round
        for i in range(1, len(quats)):
            if np.dot(quats[i], quats[i - 1]) < 0.0:
                quats[i] = -quats[i]
        self.orientations = quats
        self._position_spline = _local_cubic(self.times, self.positions)
        self._velocity_spline = _local_cubic(self.times, self.velocities)
        self._slerp = Slerp(self.times, Rotation.from_quat(_xyzw(quats)))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def interpolate(
        self, session_times: ArrayLike
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Vectorized poses: (positions, orientations, velocities) at each time.

        Raises:
            OutOfRangeError: If any query lies outside the log's time span
        """
        q = np.atleast_1d(np.asarray(session_times, dtype=float))
        lo, hi = self.span
        if q.size and (q.min() < lo or q.max() > hi):
            raise OutOfRangeError(f"query outside log span [{lo}, {hi}]")
        positions = self._position_spline(q)
        velocities = self._velocity_spline(q)
        orientations = _wxyz(self._slerp(q).as_quat())

        idx = np.clip(np.searchsorted(self.times, q), 0, len(self.times) - 1)
        lower = np.clip(np.searchsorted(self.times, q, side="right") - 1, 0, len(self.times) - 1)
        flip = np.einsum("ij,ij->i", orientations, self.orientations[lower]) < 0.0
        orientations[flip] = -orientations[flip]

        hit = self.times[idx] == q
        positions[hit] = self.positions[idx[hit]]
        velocities[hit] = self.velocities[idx[hit]]
        orientations[hit] = self.orientations[idx[hit]]
        return positions, orientations, velocities


def interpolate_pose(log: StateLog, session_time: float) -> Pose:
    """Pose at ``session_time``: local cubic position/velocity, slerp orientation."""
    positions, orientations, velocities = log.interpolate([session_time])
    return Pose(positions[0], orientations[0], velocities[0])


# --------------------------------------------------------------------------
# Training labels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelConfig:
    context: int = 5
    points: int = 60
    horizon: float = 1.4
    degree: int = DEFAULT_LABEL_DEGREE

    def __post_init__(self) -> None:
        if self.context < 1 or self.points < 2 or not self.horizon > 0.0:
            raise InvalidArgumentError("need context >= 1, points >= 2 and horizon > 0")
        if not 1 <= self.degree < self.points:
            raise InvalidArgumentError(
                f"degree must be in [1, points - 1], got {self.degree} for {self.points} points"
            )


@dataclass(frozen=True, eq=False)
class LabelRecord:
    """Context states and future trajectory of one anchor, in the anchor's local frame."""

    anchor_session_time: float
    past_times: NDArray[np.float64]
    past_states: NDArray[np.float64]  # C x 3: x, y, relative heading
    future_times: NDArray[np.float64]
    future_waypoints: NDArray[np.float64]
    future_velocities: NDArray[np.float64]
    fitted_curve: BezierCurve


def _rotation(heading: float) -> NDArray[np.float64]:
    c, s = math.cos(heading), math.sin(heading)
    # world -> local
    return np.array([[c, s], [-s, c]])


def extract_label_pairs(
    log: StateLog,
    context: int = 5,
    points: int = 60,
    horizon: float = 1.4,
    degree: int = DEFAULT_LABEL_DEGREE,
) -> list[LabelRecord]:
    """One record per log sample that has ``context`` past samples and a full future window.

    Future poses are sampled uniformly over ``[t, t + horizon]`` (the first is
    the anchor itself) and expressed with +x forward, +y left. The fitted curve
    is the least-squares Bezier fit to the waypoints over normalized time.
    """
    cfg = LabelConfig(context, points, horizon, degree)
    records: list[LabelRecord] = []
    t_last = log.times[-1]
    for i in range(cfg.context - 1, len(log)):
        t0 = float(log.times[i])
        stop = t0 + cfg.horizon
        if stop > t_last:
            break
        future_t = np.linspace(t0, stop, cfg.points)
        positions, _, velocities = log.interpolate(future_t)

        origin = log.positions[i]
        heading = float(yaw_of(log.orientations[i]))
        rot = _rotation(heading)
        waypoints = (positions - origin) @ rot.T
        local_vel = velocities @ rot.T

        past = slice(i - cfg.context + 1, i + 1)
        past_xy = (log.positions[past] - origin) @ rot.T
        past_heading = yaw_of(log.orientations[past]) - heading
        past_heading = np.arctan2(np.sin(past_heading), np.cos(past_heading))

        s, _ = normalize_times(future_t)
        records.append(
            LabelRecord(
                anchor_session_time=t0,
                past_times=log.times[past].copy(),
                past_states=np.column_stack((past_xy, past_heading)),
                future_times=future_t,
                future_waypoints=waypoints,
                future_velocities=local_vel,
                fitted_curve=fit_least_squares(waypoints, s, cfg.degree),
            )
        )
    if not records:
        logger.warning(
            f"No label records: log spans {log.duration:.3f} s, horizon is {cfg.horizon} s"
        )
    return records


def write_labels_csv(records: Sequence[LabelRecord], path: str | Path) -> int:
    """One row per record: anchor time, waypoint x/y pairs, then control point x/y pairs."""
    if not records:
        Path(path).write_text("anchor_time\n", encoding="utf-8")
        return 0
    n_points = len(records[0].future_waypoints)
    n_ctrl = records[0].fitted_curve.degree + 1
    header = ["anchor_time"]
    header += [f"{axis}{k}" for k in range(n_points) for axis in ("x", "y")]
    header += [f"cp{k}_{axis}" for k in range(n_ctrl) for axis in ("x", "y")]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in records:
            writer.writerow(
                [repr(rec.anchor_session_time)]
                + [repr(v) for v in rec.future_waypoints.reshape(-1).tolist()]
                + [repr(v) for v in rec.fitted_curve.control_points.reshape(-1).tolist()]
            )
    return len(records)


# --------------------------------------------------------------------------
# Log files
# --------------------------------------------------------------------------


class LogWriter:
    """Append-only DRLOG writer: header, then (os_time f64 LE, 121-byte packet) records."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(LOG_HEADER)
        self.records = 0

    def append(self, item: TimestampedPacket) -> None:
        self._fh.write(_OS_TIME.pack(item.os_time) + encode_packet(item.packet))
        self.records += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()
            logger.info(f"Wrote {self.records} telemetry records to {self.path}")

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_log(path: str | Path) -> list[TimestampedPacket]:
    """Read a DRLOG file. A truncated final record is dropped with a warning.

    Raises:
        ProtocolError: On a bad header or a corrupt record
    """
    data = Path(path).read_bytes()
    if not data.startswith(LOG_HEADER):
        raise ProtocolError(f"{path} is not a DRLOG 1 file")
    body = memoryview(data)[len(LOG_HEADER):]
    whole, tail = divmod(len(body), LOG_RECORD_SIZE)
    if tail:
        logger.warning(f"Dropping truncated trailing record ({tail} bytes) in {path}")
    items = []
    for k in range(whole):
        rec = body[k * LOG_RECORD_SIZE:(k + 1) * LOG_RECORD_SIZE]
        (os_time,) = _OS_TIME.unpack(rec[:_OS_TIME.size])
        items.append(TimestampedPacket(decode_packet(bytes(rec[_OS_TIME.size:])), os_time))
    return items
