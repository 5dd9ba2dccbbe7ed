import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsurge.cybernet import Command, Frame, Function, crc16_dnp, decode_frame, encode_frame
from gridsurge.cybernet.codec import MAX_PAYLOAD
from gridsurge.errors import BadSync, ChecksumError, PayloadTooLong, TruncatedFrame, UnknownFunction

CHECK_VALUE = 0xEA82


def bitwise_crc(data: bytes) -> int:
    """Reference CRC-16/DNP: MSB-first poly 0x3D65 on bit-reversed input, reflected out."""
    crc = 0
    for byte in data:
        byte = int(f"{byte:08b}"[::-1], 2)
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x3D65) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
    crc = int(f"{crc:016b}"[::-1], 2)
    return crc ^ 0xFFFF


frames = st.builds(
    Frame,
    function=st.sampled_from(list(Function)),
    seq=st.integers(0, 255),
    dst=st.integers(0, 0xFFFF),
    src=st.integers(0, 0xFFFF),
    payload=st.binary(max_size=MAX_PAYLOAD),
)


def test_check_value():
    assert bitwise_crc(b"123456789") == CHECK_VALUE
    assert crc16_dnp(b"123456789") == CHECK_VALUE


@settings(max_examples=300)
@given(st.binary(max_size=64))
def test_table_crc_matches_bitwise(data):
    assert crc16_dnp(data) == bitwise_crc(data)


def test_layout_is_bit_exact():
    frame = Frame.command(Function.DIRECT_OPERATE, 7, 10, 1, 3, Command.SHED, 0.0)
    data = encode_frame(frame)
    payload = struct.pack("<HBd", 3, 0x03, 0.0)
    body = bytes([6 + len(payload), 0x05, 7, 10, 0, 1, 0]) + payload
    assert data == b"\x05\x64" + body + bitwise_crc(body).to_bytes(2, "little")


@pytest.mark.parametrize("function", list(Function))
def test_round_trip_each_function(function):
    frame = Frame.command(function, 1, 2, 3, 4, Command.SET_P, 800.0)
    assert decode_frame(encode_frame(frame)) == frame
    assert decode_frame(encode_frame(frame)).point_record() == (4, Command.SET_P, 800.0)


@settings(max_examples=10_000, deadline=None)
@given(frames)
def test_random_round_trip(frame):
    assert decode_frame(encode_frame(frame)) == frame


SAMPLES = [
    Frame.command(Function.DIRECT_OPERATE, 3, 10, 1, 0, Command.SET_P, 800.0),
    Frame(Function.READ, 0, 1, 2, b""),
    Frame(Function.RESPONSE, 255, 0xFFFF, 0, bytes(range(MAX_PAYLOAD))),
]


@pytest.mark.parametrize("frame", SAMPLES, ids=["point", "empty", "max"])
def test_every_single_byte_corruption_detected(frame):
    data = encode_frame(frame)
    for i in range(2, len(data)):
        for v in range(256):
            if v == data[i]:
                continue
            bad = bytearray(data)
            bad[i] = v
            with pytest.raises(ChecksumError):
                decode_frame(bytes(bad))


def test_decode_errors():
    good = encode_frame(SAMPLES[0])
    with pytest.raises(BadSync):
        decode_frame(b"\x06" + good[1:])
    with pytest.raises(BadSync):
        decode_frame(b"")
    with pytest.raises(TruncatedFrame):
        decode_frame(good[:2])
    with pytest.raises(TruncatedFrame):
        decode_frame(good[:8])
    body = bytes([6, 0x42, 0, 1, 0, 2, 0])
    with pytest.raises(UnknownFunction):
        decode_frame(b"\x05\x64" + body + crc16_dnp(body).to_bytes(2, "little"))


def test_payload_limit():
    encode_frame(Frame(Function.READ, 0, 1, 2, bytes(MAX_PAYLOAD)))
    with pytest.raises(PayloadTooLong):
        encode_frame(Frame(Function.READ, 0, 1, 2, bytes(MAX_PAYLOAD + 1)))


def test_field_ranges():
    with pytest.raises(ValueError):
        Frame(Function.READ, 256, 1, 2)
    with pytest.raises(ValueError):
        Frame(Function.READ, 0, 0x10000, 2)
