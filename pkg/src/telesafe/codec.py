"""Master-console command packets: fixed 74-byte little-endian wire format.

Layout (version 1)::

    magic    u16  0x4954
    version  u8   1
    pedal    u8   0 or 1
    mode     u8   0 (CARTESIAN)
    reserved u8   0
    sequence u32
    LEFT arm, then RIGHT arm, each:
        delta_pos    3 x i32   micrometers
        orientation  4 x i32   w, x, y, z in units of 1e-9
        grasp        i32       millidegrees

Integer fields keep the wire format free of float rounding so replayed
sessions are bit-identical.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

MAGIC = 0x4954
VERSION = 1
PACKET_SIZE = 74
QUAT_SCALE = 1e-9
QUAT_ONE = 1_000_000_000

_HEADER = struct.Struct("<HBBBBI")
_FORMAT = struct.Struct("<HBBBBI" + "3i4ii" * 2)
assert _FORMAT.size == PACKET_SIZE

_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1


class Mode(enum.IntEnum):
    CARTESIAN = 0


class PacketError(ValueError):
    """Decode failure. ``code`` is one of BAD_LENGTH, BAD_MAGIC, BAD_VERSION,
    BAD_MODE, BAD_PEDAL_BYTE, BAD_QUATERNION_NORM."""

    def __init__(self, code: str, detail: str = "") -> None:
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


class ArmPayload(NamedTuple):
    """Per-arm command payload.

    In a packet ``position`` is a delta; in a trajectory sample it is absolute.
    """

    position: tuple[int, int, int]
    orientation: tuple[int, int, int, int]
    grasp: int = 0


IDENTITY_QUAT = (QUAT_ONE, 0, 0, 0)
ZERO_ARM = ArmPayload((0, 0, 0), (0, 0, 0, 0), 0)


@dataclass(frozen=True)
class ConsolePacket:
    sequence: int
    pedal: bool
    left: ArmPayload
    right: ArmPayload
    mode: Mode = Mode.CARTESIAN

    @property
    def arms(self) -> tuple[ArmPayload, ArmPayload]:
        return (self.left, self.right)


def quaternion_norm(q: tuple[int, int, int, int]) -> float:
    return math.sqrt(sum((c * QUAT_SCALE) ** 2 for c in q))


def quaternion_to_fixed(w: float, x: float, y: float, z: float) -> tuple[int, int, int, int]:
    return (round(w / QUAT_SCALE), round(x / QUAT_SCALE),
            round(y / QUAT_SCALE), round(z / QUAT_SCALE))


def encode_packet(pkt: ConsolePacket) -> bytes:
    fields: list[int] = [MAGIC, VERSION, 1 if pkt.pedal else 0, int(pkt.mode), 0,
                         pkt.sequence & 0xFFFFFFFF]
    for arm in pkt.arms:
        fields.extend(arm.position)
        fields.extend(arm.orientation)
        fields.append(arm.grasp)
    return _FORMAT.pack(*fields)


def decode_packet(data: bytes) -> ConsolePacket:
    if len(data) != PACKET_SIZE:
        raise PacketError("BAD_LENGTH", f"expected {PACKET_SIZE} bytes, got {len(data)}")
    magic, version, pedal, mode, _reserved, _seq = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PacketError("BAD_MAGIC", f"0x{magic:04x}")
    if version != VERSION:
        raise PacketError("BAD_VERSION", str(version))
    if mode != Mode.CARTESIAN:
        raise PacketError("BAD_MODE", str(mode))
    if pedal not in (0, 1):
        raise PacketError("BAD_PEDAL_BYTE", str(pedal))
    values = _FORMAT.unpack(data)
    seq = values[5]
    arms = []
    for base in (6, 14):
        pos = tuple(values[base:base + 3])
        quat = tuple(values[base + 3:base + 7])
        norm = quaternion_norm(quat)
        if not 0.999 <= norm <= 1.001:
            raise PacketError("BAD_QUATERNION_NORM", f"{norm:.6f}")
        arms.append(ArmPayload(pos, quat, values[base + 7]))
    return ConsolePacket(seq, bool(pedal), arms[0], arms[1])


def valid_packet(pkt: ConsolePacket) -> bool:
    """True when ``pkt`` satisfies the wire invariants (encodable and decodable)."""
    if not 0 <= pkt.sequence <= 0xFFFFFFFF:
        return False
    for arm in pkt.arms:
        ints = (*arm.position, *arm.orientation, arm.grasp)
        if any(not _I32_MIN <= v <= _I32_MAX for v in ints):
            return False
        if not 0.999 <= quaternion_norm(arm.orientation) <= 1.001:
            return False
    return True
