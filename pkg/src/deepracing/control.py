"""Pure Pursuit steering, bang-bang throttle and the controllers built from them.

Local frame convention everywhere in this module: origin at the rear axle,
+x forward, +y left. Positive steering turns left.
"""

import importlib
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline

from .curves import BezierCurve, derivative, evaluate
from .errors import InvalidArgumentError

if TYPE_CHECKING:
    from .simenv import Track
    from .telemetry import TimestampedPacket

logger = logging.getLogger(__name__)

BEZIER_LOOKAHEAD_SAMPLES = 60


@dataclass(frozen=True)
class ControlCommand:
    """Normalized actuator command. Throttle and brake are never both applied."""

    steering: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0

    def __post_init__(self) -> None:
        if not -1.0 <= self.steering <= 1.0:
            raise InvalidArgumentError(f"steering must be in [-1, 1], got {self.steering}")
        if not 0.0 <= self.throttle <= 1.0:
            raise InvalidArgumentError(f"throttle must be in [0, 1], got {self.throttle}")
        if not 0.0 <= self.brake <= 1.0:
            raise InvalidArgumentError(f"brake must be in [0, 1], got {self.brake}")
        if self.throttle > 0.0 and self.brake > 0.0:
            raise InvalidArgumentError("throttle and brake cannot both be applied")


NEUTRAL = ControlCommand()


@dataclass(frozen=True)
class PursuitConfig:
    """Pure Pursuit tuning and the vehicle geometry it needs."""

    gamma: float = 0.4
    wheelbase: float = 3.6
    max_wheel_angle: float = 0.35
    lookahead_min: float = 2.0
    lookahead_max: float = 50.0

    def __post_init__(self) -> None:
        if self.gamma <= 0.0:
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma}")
        if self.wheelbase <= 0.0:
            raise InvalidArgumentError(f"wheelbase must be positive, got {self.wheelbase}")
        if self.max_wheel_angle <= 0.0:
            raise InvalidArgumentError("max_wheel_angle must be positive")
        if not 0.0 < self.lookahead_min <= self.lookahead_max:
            raise InvalidArgumentError(
                f"need 0 < lookahead_min <= lookahead_max, got "
                f"{self.lookahead_min}, {self.lookahead_max}"
            )


def lookahead_distance(speed: float, cfg: PursuitConfig) -> float:
    """Speed-proportional lookahead d = gamma * v, clamped to the configured band."""
    return min(max(cfg.gamma * speed, cfg.lookahead_min), cfg.lookahead_max)


def select_lookahead(
    waypoints: ArrayLike, distance: float
) -> tuple[NDArray[np.float64], int]:
    """Pick the waypoint whose norm is closest to ``distance``.

    Ties go to the larger index, i.e. farther along the path.

    Raises:
        InvalidArgumentError: If there are no waypoints
    """
    points = np.asarray(waypoints, dtype=float)
    if points.size == 0:
        raise InvalidArgumentError("no waypoints to select a lookahead point from")
    points = np.atleast_2d(points)
    error = np.abs(np.linalg.norm(points, axis=1) - distance)
    index = int(np.flatnonzero(error == error.min())[-1])
    return points[index], index


def pursuit_curvature(lookahead: ArrayLike) -> float:
    """Curvature 2y / (x^2 + y^2) of the arc through the origin and the lookahead point."""
    x, y = (float(v) for v in np.asarray(lookahead, dtype=float)[:2])
    d2 = x * x + y * y
    if d2 == 0.0:
        raise InvalidArgumentError("lookahead point coincides with the vehicle")
    return 2.0 * y / d2


def steering_command(lookahead: ArrayLike, cfg: PursuitConfig) -> float:
    """Normalized steering that puts the car on the arc towards ``lookahead``."""
    delta = math.atan(pursuit_curvature(lookahead) * cfg.wheelbase)
    return min(max(delta / cfg.max_wheel_angle, -1.0), 1.0)


def bang_bang_throttle(v_current: float, v_ref: float) -> tuple[float, float]:
    """Full throttle below the reference speed, full brake above, coast when equal."""
    if v_current < v_ref:
        return 1.0, 0.0
    if v_current > v_ref:
        return 0.0, 1.0
    return 0.0, 0.0


def to_local_frame(
    points: ArrayLike, origin: ArrayLike, heading: float
) -> NDArray[np.float64]:
    """Express world-frame points (or vectors, with origin 0) in the vehicle frame."""
    rel = np.asarray(points, dtype=float).reshape(-1, 2) - np.asarray(origin, dtype=float)[:2]
    c, s = math.cos(heading), math.sin(heading)
    return np.column_stack((c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]))


def pursue(
    waypoints: ArrayLike, speed: float, v_ref: float, cfg: PursuitConfig
) -> tuple[ControlCommand, int]:
    """One Pure Pursuit + bang-bang step on local-frame waypoints."""
    point, index = select_lookahead(waypoints, lookahead_distance(speed, cfg))
    throttle, brake = bang_bang_throttle(speed, max(v_ref, 0.0))
    return ControlCommand(steering_command(point, cfg), throttle, brake), index


class Controller(Protocol):
    """Maps the most recent telemetry window (oldest first) to a command."""

    def __call__(self, window: Sequence["TimestampedPacket"]) -> ControlCommand: ...


def _ego(window: Sequence["TimestampedPacket"]) -> tuple[NDArray[np.float64], float, float]:
    packet = window[-1].packet
    return np.array(packet.position[:2]), packet.heading, float(packet.speed)


class CenterlinePursuit:
    """Oracle controller: Pure Pursuit on the track centerline at a fixed target speed."""

    def __init__(
        self, track: "Track", cfg: PursuitConfig | None = None, target_speed: float = 15.0
    ) -> None:
        if target_speed < 0.0:
            raise InvalidArgumentError("target_speed must be >= 0")
        self.track = track
        self.cfg = cfg or PursuitConfig()
        self.target_speed = target_speed

    def __call__(self, window: Sequence["TimestampedPacket"]) -> ControlCommand:
        position, heading, speed = _ego(window)
        station = self.track.localize(position).arc_length
        ahead = self.track.points_ahead(station, self.cfg.lookahead_max)
        command, _ = pursue(
            to_local_frame(ahead, position, heading), speed, self.target_speed, self.cfg
        )
        return command


class WaypointPursuit:
    """Pure Pursuit on timed waypoints produced by a planner.

    ``planner(window)`` returns ``(times, points)`` with points in the local
    frame. The reference speed is the magnitude of the derivative of a cubic
    spline through the waypoints, evaluated at the lookahead sample.
    """

    def __init__(
        self,
        planner: Callable[[Sequence["TimestampedPacket"]], tuple[ArrayLike, ArrayLike]],
        cfg: PursuitConfig | None = None,
    ) -> None:
        self.planner = planner
        self.cfg = cfg or PursuitConfig()

    def __call__(self, window: Sequence["TimestampedPacket"]) -> ControlCommand:
        times, points = self.planner(window)
        t = np.asarray(times, dtype=float)
        pts = np.asarray(points, dtype=float)
        _, _, speed = _ego(window)
        point, index = select_lookahead(pts, lookahead_distance(speed, self.cfg))
        velocity = CubicSpline(t, pts, axis=0).derivative()(t[index])
        throttle, brake = bang_bang_throttle(speed, float(np.linalg.norm(velocity)))
        return ControlCommand(steering_command(point, self.cfg), throttle, brake)


class BezierPursuit:
    """Pure Pursuit on a predicted Bezier curve.

    ``planner(window)`` returns ``(curve, horizon)``: a local-frame curve over
    the normalized parameter and the horizon length in seconds. The curve is
    sampled uniformly; the reference speed is |dB/dt| at the lookahead sample.
    """

    def __init__(
        self,
        planner: Callable[[Sequence["TimestampedPacket"]], tuple[BezierCurve, float]],
        cfg: PursuitConfig | None = None,
        samples: int = BEZIER_LOOKAHEAD_SAMPLES,
    ) -> None:
        self.planner = planner
        self.cfg = cfg or PursuitConfig()
        self._s = np.linspace(0.0, 1.0, samples)

    def __call__(self, window: Sequence["TimestampedPacket"]) -> ControlCommand:
        curve, horizon = self.planner(window)
        if horizon <= 0.0:
            raise InvalidArgumentError("Bezier horizon must be positive")
        _, _, speed = _ego(window)
        point, index = select_lookahead(
            evaluate(curve, self._s), lookahead_distance(speed, self.cfg)
        )
        velocity = evaluate(derivative(curve), self._s[index : index + 1])[0] / horizon
        throttle, brake = bang_bang_throttle(speed, float(np.linalg.norm(velocity)))
        return ControlCommand(steering_command(point, self.cfg), throttle, brake)


class ConstantController:
    """Always returns the same command."""

    def __init__(self, command: ControlCommand) -> None:
        self.command = command

    def __call__(self, window: Sequence["TimestampedPacket"]) -> ControlCommand:
        return self.command


class ReplayController:
    """Open-loop playback of the applied commands of a recorded ``report.csv``.

    Row ``k`` of a report holds the command applied on the step that produced
    tick ``k``, so the window ending at frame ``f`` is answered with row
    ``f + 1``. Replaying without actuation latency reproduces the recorded
    drive. The last row is held once the recording is exhausted.
    """

    def __init__(self, commands: Sequence[ControlCommand]) -> None:
        if not commands:
            raise InvalidArgumentError("replay needs at least one command")
        self.commands = list(commands)

    def __call__(self, window: Sequence["TimestampedPacket"]) -> ControlCommand:
        index = window[-1].packet.frame + 1
        return self.commands[min(index, len(self.commands) - 1)]



def load_external_controller(reference: str, **kwargs) -> Controller:
    """Import ``module:factory`` and call the factory to obtain a controller."""
    module_name, sep, attr = reference.partition(":")
    if not sep or not module_name or not attr:
        raise InvalidArgumentError(f"expected module:factory, got {reference!r}")
    try:
        factory = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as e:
        raise InvalidArgumentError(f"cannot load controller {reference!r}: {e}") from e
    controller = factory(**kwargs)
    if not callable(controller):
        raise InvalidArgumentError(f"{reference!r} did not produce a callable controller")
    logger.info(f"Loaded external controller {reference}")
    return controller
