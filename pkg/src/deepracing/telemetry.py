"""Fire-and-forget UDP telemetry: 121-byte state snapshots and a timestamping listener.

Wire layout (little-endian, no padding)::

    magic     4s   b"DRTB"
    version   u8   1
    session   f64  seconds, time the state was generated
    steering  f32  [-1, 1]
    throttle  f32  [0, 1]
    brake     f32  [0, 1]
    position  3f64 meters
    velocity  3f64 m/s
    orient.   4f64 unit quaternion (w, x, y, z)
    speed     f32  m/s
    lap_dist  f32  meters
    lap       u16
    flags     u8   PacketFlags
    frame     u32  simulation tick index
    checksum  u8   sum of all preceding bytes mod 256

One datagram carries exactly one packet.
"""

import logging
import math
import queue
import socket
import struct
import threading
import time
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from enum import IntFlag

import numpy as np

from .errors import (
    InvalidArgumentError,
    ProtocolError,
    TruncationError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"DRTB"
VERSION = 1
PACKET_STRUCT = struct.Struct("<4sBdfff3d3d4dffHBIB")
PACKET_SIZE = PACKET_STRUCT.size  # 121
BROADCAST_RATE_HZ = 60
QUATERNION_TOLERANCE = 1e-6


class PacketFlags(IntFlag):
    NONE = 0
    OFF_TRACK = 0x01
    RESET = 0x02
    DNF = 0x04


def _f32(value: float) -> float:
    return float(np.float32(value))


@dataclass(frozen=True)
class TelemetryPacket:
    """One snapshot of vehicle state. f32 fields are stored at wire precision."""

    session_time: float
    steering: float = 0.0
    throttle: float = 0.0
    brake: float = 0.0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    speed: float = 0.0
    lap_distance: float = 0.0
    lap_number: int = 0
    flags: int = PacketFlags.NONE
    frame: int = 0

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        for name in ("steering", "throttle", "brake", "speed", "lap_distance"):
            set_(self, name, _f32(getattr(self, name)))
        set_(self, "session_time", float(self.session_time))
        set_(self, "position", tuple(float(v) for v in self.position))
        set_(self, "velocity", tuple(float(v) for v in self.velocity))
        set_(self, "orientation", tuple(float(v) for v in self.orientation))
        set_(self, "flags", int(self.flags))
        if len(self.position) != 3 or len(self.velocity) != 3 or len(self.orientation) != 4:
            raise InvalidArgumentError("position/velocity need 3 and orientation 4 components")
        if not -1.0 <= self.steering <= 1.0:
            raise InvalidArgumentError(f"steering out of range: {self.steering}")
        if not (0.0 <= self.throttle <= 1.0 and 0.0 <= self.brake <= 1.0):
            raise InvalidArgumentError("throttle and brake must be in [0, 1]")
        if abs(math.hypot(*self.orientation) - 1.0) > QUATERNION_TOLERANCE:
            raise InvalidArgumentError(f"orientation is not a unit quaternion: {self.orientation}")
        if not 0 <= self.lap_number <= 0xFFFF or not 0 <= self.flags <= 0xFF:
            raise InvalidArgumentError("lap_number must fit u16 and flags u8")
        if not 0 <= self.frame <= 0xFFFFFFFF:
            raise InvalidArgumentError("frame must fit u32")

    @property
    def heading(self) -> float:
        """Yaw angle of the orientation quaternion (planar)."""
        w, x, y, z = self.orientation
        return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


@dataclass(frozen=True)
class TimestampedPacket:
    """A packet tagged with the receiver's monotonic clock at receipt."""

    packet: TelemetryPacket
    os_time: float

    @property
    def session_time(self) -> float:
        return self.packet.session_time


def _checksum(data: bytes) -> int:
    return sum(data) & 0xFF


def encode_packet(p: TelemetryPacket) -> bytes:
    """Serialize a packet to its 121-byte wire form."""
    body = PACKET_STRUCT.pack(
        MAGIC,
        VERSION,
        p.session_time,
        p.steering,
        p.throttle,
        p.brake,
        *p.position,
        *p.velocity,
        *p.orientation,
        p.speed,
        p.lap_distance,
        p.lap_number,
        p.flags,
        p.frame,
        0,
    )
    return body[:-1] + bytes((_checksum(body[:-1]),))


def decode_packet(data: bytes) -> TelemetryPacket:
    """Parse a datagram.

    Raises:
        TruncationError: If the length is not exactly 121 bytes
        ProtocolError: On wrong magic, bad checksum or invalid field values
        UnsupportedVersionError: If the version byte is not 1
    """
    if len(data) != PACKET_SIZE:
        raise TruncationError(f"expected {PACKET_SIZE} bytes, got {len(data)}")
    fields = PACKET_STRUCT.unpack(data)
    if fields[0] != MAGIC:
        raise ProtocolError(f"bad magic {fields[0]!r}")
    if fields[1] != VERSION:
        raise UnsupportedVersionError(f"unsupported version {fields[1]}")
    if fields[-1] != _checksum(data[:-1]):
        raise ProtocolError("checksum mismatch")
    try:
        return TelemetryPacket(
            session_time=fields[2],
            steering=fields[3],
            throttle=fields[4],
            brake=fields[5],
            position=fields[6:9],
            velocity=fields[9:12],
            orientation=fields[12:16],
            speed=fields[16],
            lap_distance=fields[17],
            lap_number=fields[18],
            flags=fields[19],
            frame=fields[20],
        )
    except InvalidArgumentError as e:
        raise ProtocolError(f"invalid packet contents: {e}") from e


class TelemetryBroadcaster:
    """Publishes packets to a UDP address; send failures are logged, never raised."""

    def __init__(self, address: tuple[str, int], sock: socket.socket | None = None) -> None:
        self.address = address
        self._sock = sock or socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sent = 0
        self.send_errors = 0

    def publish(self, packet: TelemetryPacket) -> bool:
        try:
            self._sock.sendto(encode_packet(packet), self.address)
        except OSError as e:
            self.send_errors += 1
            logger.warning(f"Telemetry send to {self.address} failed: {e}")
            return False
        self.sent += 1
        return True

    def broadcast(
        self,
        source: Iterable[TelemetryPacket],
        rate_hz: float = BROADCAST_RATE_HZ,
        realtime: bool = True,
        stop: threading.Event | None = None,
    ) -> int:
        """Publish every packet from ``source``, paced to absolute ticks of 1/rate_hz.

        Returns:
            Number of packets attempted
        """
        period = 1.0 / rate_hz
        start = time.monotonic()
        count = 0
        for packet in source:
            if stop is not None and stop.is_set():
                break
            if realtime:
                delay = start + count * period - time.monotonic()
                if delay > 0.0:
                    time.sleep(delay)
            self.publish(packet)
            count += 1
        return count

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "TelemetryBroadcaster":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class ListenerStats:
    received: int = 0
    malformed: int = 0
    dropped: int = 0
    last_error: str | None = field(default=None, repr=False)


def listen_timestamped(
    sock: socket.socket,
    stats: ListenerStats | None = None,
    stop: threading.Event | None = None,
    max_packets: int | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> Iterator[TimestampedPacket]:
    """Yield decoded packets tagged with the receive time, in arrival order.

    Malformed datagrams are counted in ``stats.malformed`` and skipped. The
    iterator ends when ``stop`` is set, ``max_packets`` were yielded or the
    socket times out (if it has a timeout).
    """
    stats = stats if stats is not None else ListenerStats()
    delivered = 0
    while max_packets is None or delivered < max_packets:
        if stop is not None and stop.is_set():
            return
        try:
            data, _ = sock.recvfrom(2048)
        except TimeoutError:
            if stop is None:
                return
            continue
        except OSError:
            if stop is not None and stop.is_set():
                return
            raise
        os_time = clock()
        try:
            packet = decode_packet(data)
        except ProtocolError as e:
            stats.malformed += 1
            stats.last_error = str(e)
            logger.debug(f"Skipping malformed datagram ({len(data)} bytes): {e}")
            continue
        stats.received += 1
        delivered += 1
        yield TimestampedPacket(packet, os_time)


class TelemetryListener:
    """Background thread that feeds timestamped packets into a bounded queue.

    When the queue is full the oldest entry is discarded, so the socket-read
    path never waits on consumers.
    """

    def __init__(
        self,
        address: tuple[str, int],
        maxsize: int = 256,
        on_packet: Callable[[TimestampedPacket], None] | None = None,
    ) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind(address)
        self._sock.settimeout(0.1)
        self.queue: queue.Queue[TimestampedPacket] = queue.Queue(maxsize=maxsize)
        self.stats = ListenerStats()
        self.on_packet = on_packet
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="telemetry-listener", daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def _run(self) -> None:
        for item in listen_timestamped(self._sock, self.stats, self._stop):
            if self.on_packet is not None:
                self.on_packet(item)
            try:
                self.queue.put_nowait(item)
            except queue.Full:
                try:
                    self.queue.get_nowait()
                except queue.Empty:
                    pass
                self.stats.dropped += 1
                self.queue.put_nowait(item)

    def start(self) -> "TelemetryListener":
        self._thread.start()
        logger.info(f"Telemetry listener bound to {self.address}")
        return self

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=1.0)
        self._sock.close()
        logger.info(
            f"Telemetry listener stopped: {self.stats.received} packets, "
            f"{self.stats.malformed} malformed, {self.stats.dropped} dropped"
        )

    def __enter__(self) -> "TelemetryListener":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
