"""Kinematic racing environment standing in for the game.

Contains the bicycle-model vehicle, closed tracks with localization, the
session clock and an actuation channel with injected latency. The world is
advanced by exactly one context; everything handed out is immutable.
"""

import logging
import math
import threading
import time
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .control import ControlCommand
from .errors import InvalidArgumentError, SimulationFaultError, TrackFormatError

logger = logging.getLogger(__name__)

TICK_RATE_HZ = 60
TICK = 1.0 / TICK_RATE_HZ
TRACK_MAGIC = "DRTRACK 1"


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle constants. Defaults give roughly 50 m/s terminal speed."""

    wheelbase: float = 3.6
    max_accel: float = 10.0
    max_brake: float = 20.0
    drag: float = 0.004
    max_wheel_angle: float = 0.35

    def __post_init__(self) -> None:
        if self.wheelbase <= 0.0 or self.max_wheel_angle <= 0.0:
            raise InvalidArgumentError("wheelbase and max_wheel_angle must be positive")
        if self.max_accel < 0.0 or self.max_brake < 0.0 or self.drag < 0.0:
            raise InvalidArgumentError("acceleration, brake and drag must be >= 0")


@dataclass(frozen=True)
class VehicleState:
    """Rear-axle pose and speed in the world frame."""

    x: float
    y: float
    heading: float
    speed: float = 0.0

    def __post_init__(self) -> None:
        if self.speed < 0.0:
            raise InvalidArgumentError(f"speed must be >= 0, got {self.speed}")

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y

    @property
    def velocity(self) -> tuple[float, float]:
        return self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)

    @property
    def quaternion(self) -> tuple[float, float, float, float]:
        """Yaw-only unit quaternion (w, x, y, z)."""
        half = 0.5 * self.heading
        return math.cos(half), 0.0, 0.0, math.sin(half)


def _bicycle_rates(
    speed: float, heading: float, tan_delta: float, accel: float, params: VehicleParams
) -> tuple[float, float, float, float]:
    return (
        speed * math.cos(heading),
        speed * math.sin(heading),
        speed * tan_delta / params.wheelbase,
        accel - params.drag * speed * speed,
    )


def step_bicycle(
    state: VehicleState,
    cmd: ControlCommand,
    dt: float = TICK,
    params: VehicleParams | None = None,
) -> VehicleState:
    """Advance the kinematic bicycle model by one RK4 step.

    x' = v cos(theta), y' = v sin(theta), theta' = v tan(delta) / L,
    v' = a_max throttle - b_max brake - c_d v^2, with delta held over the step
    and the speed floored at zero afterwards.

    Raises:
        InvalidArgumentError: If dt is not positive
        SimulationFaultError: If the resulting state is not finite
    """
    params = params or VehicleParams()
    if not dt > 0.0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    tan_delta = math.tan(cmd.steering * params.max_wheel_angle)
    accel = params.max_accel * cmd.throttle - params.max_brake * cmd.brake
    if state.speed == 0.0 and accel <= 0.0:
        # braking at rest does not reverse the car
        return state

    x, y, th, v = state.x, state.y, state.heading, state.speed
    k1 = _bicycle_rates(v, th, tan_delta, accel, params)
    k2 = _bicycle_rates(v + 0.5 * dt * k1[3], th + 0.5 * dt * k1[2], tan_delta, accel, params)
    k3 = _bicycle_rates(v + 0.5 * dt * k2[3], th + 0.5 * dt * k2[2], tan_delta, accel, params)
    k4 = _bicycle_rates(v + dt * k3[3], th + dt * k3[2], tan_delta, accel, params)

    def advance(i: int) -> float:
        return dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    nxt = (x + advance(0), y + advance(1), th + advance(2), v + advance(3))
    if not all(math.isfinite(value) for value in nxt):
        raise SimulationFaultError(f"non-finite vehicle state {nxt} from {state}")
    return VehicleState(nxt[0], nxt[1], nxt[2], max(nxt[3], 0.0))


@dataclass(frozen=True)
class Localization:
    arc_length: float
    lateral_offset: float
    outside_distance: float


@dataclass(frozen=True, eq=False)
class Track:
    """Closed centerline polyline with uniform half width.

    ``arc_lengths[i]`` is the cumulative length up to vertex i; stations
    returned by ``localize`` are measured from vertex 0 and wrap at ``length``.
    """

    centerline: NDArray[np.float64] = field(repr=False)
    half_width: float
    start_finish_index: int = 0
    arc_lengths: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pts = np.array(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
            raise InvalidArgumentError("centerline must be an N x 2 array with N >= 4")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("centerline must be finite")
        if not np.array_equal(pts[0], pts[-1]):
            raise InvalidArgumentError("centerline must be closed (first point == last point)")
        if not self.half_width > 0.0:
            raise InvalidArgumentError(f"half_width must be positive, got {self.half_width}")
        if not 0 <= self.start_finish_index < len(pts) - 1:
            raise InvalidArgumentError("start_finish_index out of range")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0.0):
            raise InvalidArgumentError("centerline has repeated consecutive points")
        pts.setflags(write=False)
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        cum.setflags(write=False)
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "arc_lengths", cum)

    @property
    def length(self) -> float:
        return float(self.arc_lengths[-1])

    @property
    def start_finish_station(self) -> float:
        return float(self.arc_lengths[self.start_finish_index])

    def localize(self, position: ArrayLike) -> Localization:
        return localize(self, position)

    def start_pose(self) -> VehicleState:
        """Pose at the start/finish vertex, heading along the centerline."""
        i = self.start_finish_index
        dx, dy = self.centerline[i + 1] - self.centerline[i]
        x, y = self.centerline[i]
        return VehicleState(float(x), float(y), math.atan2(dy, dx), 0.0)

    def points_ahead(self, station: float, distance: float) -> NDArray[np.float64]:
        """Centerline vertices strictly ahead of ``station`` within ``distance``, in order."""
        ahead = np.mod(self.arc_lengths[:-1] - station, self.length)
        mask = (ahead > 0.0) & (ahead <= distance)
        order = np.argsort(ahead[mask], kind="stable")
        return self.centerline[:-1][mask][order]


def localize(track: Track, position: ArrayLike) -> Localization:
    """Project a point onto the centerline.

    Returns:
        Station along the centerline, signed lateral offset (+ left of the
        direction of travel) and the distance beyond the boundary (0 inside,
        boundary inclusive)
    """
    p = np.asarray(position, dtype=float)[:2]
    a = track.centerline[:-1]
    ab = track.centerline[1:] - a
    ap = p - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / seg_len2, 0.0, 1.0)
    diff = ap - t[:, None] * ab
    dist2 = np.einsum("ij,ij->i", diff, diff)
    i = int(np.argmin(dist2))
    distance = math.sqrt(dist2[i])
    cross = ab[i, 0] * ap[i, 1] - ab[i, 1] * ap[i, 0]
    lateral = -distance if cross < 0.0 else distance
    station = (track.arc_lengths[i] + t[i] * math.sqrt(seg_len2[i])) % track.length
    return Localization(
        arc_length=float(station),
        lateral_offset=lateral,
        outside_distance=max(0.0, distance - track.half_width),
    )


def _sample_segment(start: NDArray, end: NDArray, spacing: float) -> NDArray:
    n = max(1, math.ceil(np.linalg.norm(end - start) / spacing))
    u = np.arange(n)[:, None] / n
    return start + u * (end - start)


def _sample_arc(center: NDArray, radius: float, a0: float, a1: float, spacing: float) -> NDArray:
    n = max(1, math.ceil(abs(a1 - a0) * radius / spacing))
    angles = a0 + (a1 - a0) * np.arange(n) / n
    return center + radius * np.column_stack((np.cos(angles), np.sin(angles)))


def generate_oval_track(
    straight_length: float = 200.0,
    radius: float = 50.0,
    half_width: float = 6.0,
    spacing: float = 1.0,
) -> Track:
    """Counter-clockwise stadium track starting at the midpoint of the lower straight.

    Raises:
        InvalidArgumentError: If any parameter is not positive, or the track
            would overlap itself (half_width >= radius)
    """
    if min(straight_length, radius, half_width, spacing) <= 0.0:
        raise InvalidArgumentError("oval parameters must all be positive")
    if half_width >= radius:
        raise InvalidArgumentError("half_width must be smaller than the turn radius")
    half = 0.5 * straight_length
    right, left = np.array([half, 0.0]), np.array([-half, 0.0])
    start = np.array([0.0, -radius])
    pieces = [
        _sample_segment(start, np.array([half, -radius]), spacing),
        _sample_arc(right, radius, -0.5 * math.pi, 0.5 * math.pi, spacing),
        _sample_segment(np.array([half, radius]), np.array([-half, radius]), spacing),
        _sample_arc(left, radius, 0.5 * math.pi, 1.5 * math.pi, spacing),
        _sample_segment(np.array([-half, -radius]), start, spacing),
        start[None, :],
    ]
    return Track(np.vstack(pieces), half_width=half_width, start_finish_index=0)


def load_track(path: str | Path) -> Track:
    """Read a DRTRACK file. An open polyline is closed by repeating its first point."""
    lines = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or lines[0] != TRACK_MAGIC:
        raise TrackFormatError(f"missing '{TRACK_MAGIC}' header")
    key, _, value = lines[1].partition(" ") if len(lines) > 1 else ("", "", "")
    if key != "half_width":
        raise TrackFormatError("second line must be 'half_width <meters>'")
    try:
        half_width = float(value)
        points = [tuple(float(v) for v in line.split()) for line in lines[2:]]
    except ValueError as e:
        raise TrackFormatError(f"invalid number: {e}") from e
    if any(len(p) != 2 for p in points):
        raise TrackFormatError("each point line must hold exactly 'x y'")
    if points and points[0] != points[-1]:
        points.append(points[0])
    try:
        return Track(np.array(points), half_width=half_width)
    except InvalidArgumentError as e:
        raise TrackFormatError(str(e)) from e


def save_track(track: Track, path: str | Path) -> None:
    """Write a DRTRACK file (repr-precision decimals, round-trips exactly)."""
    rows = [TRACK_MAGIC, f"half_width {track.half_width!r}"]
    rows += [f"{x!r} {y!r}" for x, y in track.centerline.tolist()]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SessionClock:
    """Affine map from OS seconds to the simulation's session seconds."""

    drift: float = 1.0
    offset: float = 0.0

    def __post_init__(self) -> None:
        if not self.drift > 0.0:
            raise InvalidArgumentError(f"drift must be positive, got {self.drift}")

    def now(self, os_time: float) -> float:
        return session_now(self, os_time)

    def os_time(self, session_time: float) -> float:
        return (session_time - self.offset) / self.drift


def session_now(clock: SessionClock, os_time: float) -> float:
    return clock.drift * os_time + clock.offset


class LatencyChannel:
    """Actuation path that makes each command visible ``delay`` seconds after receipt.

    Commands are released in FIFO order; ``poll`` returns the newest released
    command and keeps returning it (the actuator holds its last value) until a
    newer one is released. Optional Gaussian jitter is added per command but
    never reorders releases. Safe to share between one actuating and one
    polling thread.
    """

    def __init__(
        self,
        delay: float = 0.0,
        jitter: float = 0.0,
        rng: np.random.Generator | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        if delay < 0.0 or jitter < 0.0:
            raise InvalidArgumentError("delay and jitter must be >= 0")
        self.delay = delay
        self.jitter = jitter
        self._rng = rng or np.random.default_rng()
        self._clock = clock
        self._queue: deque[tuple[ControlCommand, float]] = deque()
        self._current: ControlCommand | None = None
        self._last_now = -math.inf
        self._last_release = -math.inf
        self._lock = threading.Lock()

    def _advance(self, now: float | None) -> float:
        if now is None:
            now = self._clock()
        if now < self._last_now:
            raise InvalidArgumentError(f"time went backwards: {now} < {self._last_now}")
        self._last_now = now
        return now

    def actuate(self, cmd: ControlCommand, now: float | None = None) -> None:
        """Queue ``cmd`` for release at ``now + delay``; ``now`` defaults to the channel clock."""
        with self._lock:
            now = self._advance(now)
            release = now + self.delay
            if self.jitter > 0.0:
                release = max(now, release + self._rng.normal(0.0, self.jitter))
            release = max(release, self._last_release)
            self._last_release = release
            self._queue.append((cmd, release))

    def poll(self, now: float | None = None) -> ControlCommand | None:
        with self._lock:
            now = self._advance(now)
            while self._queue and self._queue[0][1] <= now:
                self._current = self._queue.popleft()[0]
            return self._current

    @property
    def pending(self) -> int:
        return len(self._queue)


class Simulator:
    """Single-writer world: one vehicle on one track, advanced one tick at a time.

    Session time is simulation-clocked: tick k happens at
    ``session_start + k / TICK_RATE_HZ``.
    """

    def __init__(
        self,
        track: Track,
        params: VehicleParams | None = None,
        session_start: float = 0.0,
        initial_state: VehicleState | None = None,
    ) -> None:
        self.track = track
        self.params = params or VehicleParams()
        self.session_start = session_start
        self.initial_state = initial_state or track.start_pose()
        self.state = self.initial_state
        self.tick = 0

    @property
    def session_time(self) -> float:
        return self.session_start + self.tick / TICK_RATE_HZ

    def step(self, cmd: ControlCommand) -> VehicleState:
        self.state = step_bicycle(self.state, cmd, TICK, self.params)
        self.tick += 1
        return self.state

    def reset(self, speed: float | None = None) -> None:
        """Return the vehicle to its initial pose; the session clock keeps running."""
        self.state = self.initial_state if speed is None else replace(
            self.initial_state, speed=speed
        )
