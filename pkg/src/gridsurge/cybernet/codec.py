"""Bit-exact wire format of the reduced DNP3-style application frame.

Layout::

    0x05 0x64 | len u8 | func u8 | seq u8 | dst u16le | src u16le | payload | crc u16le

``len`` counts the bytes after itself up to the end of the payload. The CRC is
CRC-16/DNP (poly 0x3D65 reflected, init 0, xorout 0xFFFF) over ``len`` through
the last payload byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from gridsurge.errors import BadSync, ChecksumError, FrameError, PayloadTooLong, TruncatedFrame, UnknownFunction

SYNC = b"\x05\x64"
HEADER_AFTER_LEN = 6              # func, seq, dst(2), src(2)
MAX_PAYLOAD = 255 - HEADER_AFTER_LEN
MIN_FRAME = 3 + HEADER_AFTER_LEN + 2


class Function(IntEnum):
    READ = 0x01
    DIRECT_OPERATE = 0x05
    RESPONSE = 0x81
    UNSOLICITED = 0x82


class Command(IntEnum):
    TRIP = 0x01
    CLOSE = 0x02
    SHED = 0x03
    SET_P = 0x04
    SET_Q = 0x05
    MEAS = 0x10


_POINT = struct.Struct("<HBd")


def _make_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ 0xA6BC if crc & 1 else crc >> 1
        table.append(crc)
    return table


_TABLE = _make_table()


def crc16_dnp(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc = (crc >> 8) ^ _TABLE[(crc ^ byte) & 0xFF]
    return crc ^ 0xFFFF


@dataclass(frozen=True)
class Frame:
    function: Function
    seq: int
    dst: int
    src: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.seq <= 255:
            raise ValueError("sequence number must be in 0..255")
        if not (0 <= self.dst <= 0xFFFF and 0 <= self.src <= 0xFFFF):
            raise ValueError("addresses must be u16")

    @classmethod
    def command(cls, function, seq, dst, src, point, command, value=0.0) -> Frame:
        """Frame whose payload is one ``(point u16, command u8, value f64)`` record."""
        return cls(Function(function), seq, dst, src, _POINT.pack(point, Command(command), value))

    @property
    def has_point(self) -> bool:
        return len(self.payload) == _POINT.size

    def point_record(self) -> tuple[int, Command, float]:
        if not self.has_point:
            raise FrameError(f"payload of {len(self.payload)} bytes is not a point record")
        point, cmd, value = _POINT.unpack(self.payload)
        return point, Command(cmd), value

    def with_point_record(self, point: int, command, value: float) -> Frame:
        return Frame(self.function, self.seq, self.dst, self.src, _POINT.pack(point, Command(command), value))


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise PayloadTooLong(f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    body = struct.pack("<BBBHH", HEADER_AFTER_LEN + len(frame.payload), frame.function, frame.seq, frame.dst, frame.src)
    body += frame.payload
    return SYNC + body + struct.pack("<H", crc16_dnp(body))


def decode_frame(data: bytes) -> Frame:
    """Parse one complete frame.

    Raises:
        BadSync, TruncatedFrame, ChecksumError, UnknownFunction (in that
        order of checking).
    """
    data = bytes(data)
    if len(data) < 2 or data[:2] != SYNC:
        raise BadSync(f"expected sync 05 64, got {data[:2].hex(' ')}")
    if len(data) < 3:
        raise TruncatedFrame("missing length byte")
    length = data[2]
    expected = 3 + length + 2
    if len(data) < expected:
        # a corrupted length byte on an otherwise intact buffer is a CRC failure
        if len(data) >= MIN_FRAME:
            fixed = bytes([len(data) - 5]) + data[3:-2]
            if crc16_dnp(fixed) == int.from_bytes(data[-2:], "little"):
                raise ChecksumError("length byte does not match checksum")
        raise TruncatedFrame(f"need {expected} bytes, have {len(data)}")
    if length < HEADER_AFTER_LEN:
        raise ChecksumError(f"length {length} shorter than header")
    body = data[2 : 3 + length]
    crc = int.from_bytes(data[3 + length : expected], "little")
    if crc16_dnp(body) != crc:
        raise ChecksumError(f"crc mismatch: computed {crc16_dnp(body):#06x}, frame {crc:#06x}")
    if len(data) != expected:
        raise FrameError(f"{len(data) - expected} trailing bytes after frame")
    func, seq, dst, src = struct.unpack_from("<BBHH", body, 1)
    try:
        function = Function(func)
    except ValueError:
        raise UnknownFunction(f"function code {func:#04x}") from None
    return Frame(function, seq, dst, src, bytes(body[1 + HEADER_AFTER_LEN :]))
