"""The two small oracles everything else leans on.

First the wire format: one DIRECT_OPERATE SHED frame byte by byte, its
CRC-16/DNP, and what happens when a single byte is flipped. Then the
inverse-time overcurrent curve: the closed form next to the step-by-step
relay for a few multiples of pickup.

Run: python3 demos/protocol_and_relays.py
"""

from gridsurge.cybernet import Command, Frame, Function, crc16_dnp, decode_frame, encode_frame
from gridsurge.errors import FrameError
from gridsurge.protection import IEEE_CURVES, OvercurrentRelaySpec, RelayState, oc_step

frame = Frame.command(Function.DIRECT_OPERATE, seq=0, dst=10, src=1, point=0, command=Command.SHED)
data = encode_frame(frame)
print("SHED frame:", data.hex(" "))
print(f"CRC-16/DNP of '123456789' = {crc16_dnp(b'123456789'):#06x}")
bad = bytearray(data)
bad[9] ^= 0x01
try:
    decode_frame(bytes(bad))
except FrameError as exc:
    print(f"flip one bit of byte 9 -> {exc.kind}: {exc}")

print("\nmoderately inverse, TDS 1, dt 1 ms")
print(f"{'M':>5} {'closed form s':>14} {'simulated s':>12}")
spec = OvercurrentRelaySpec("R", "line", "K", pickup_pu=1.0, tds=1.0)
for m in (1.5, 2.0, 5.0, 10.0):
    state, k, trip = RelayState(), 0, None
    while trip is None:
        state, trip = oc_step(spec, state, m, 0.001, k * 0.001)
        k += 1
    print(f"{m:>5} {spec.trip_time(m):>14.4f} {(k - 1) * 0.001:>12.3f}")
print("\ncurve families:", ", ".join(sorted(IEEE_CURVES)))
