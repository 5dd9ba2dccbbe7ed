"""A man in the middle rewrites inverter setpoints.

At 2 s the operator sends the PV plant SET_P 800 kW and SET_Q 0. An attacker
on the SCADA link swaps the values for 2000 kW and 600 kvar and recomputes the
checksum, so the outstation accepts them. The inverter drives to its current
limit, and the feeder relay R3 sees a sustained overcurrent and trips.

Run: python3 demos/setpoint_mitm.py
"""

import numpy as np

from gridsurge.cli import load_scenario
from gridsurge.cybernet import decode_frame
from gridsurge.engine import run_scenario

scn = load_scenario("rtds-pq")
result = run_scenario(scn)

print("frames on the wire (t_send, t_deliver, verdict, decoded point record):")
for rec in result.frames:
    frame = decode_frame(rec.data)
    point, cmd, value = frame.point_record()
    print(f"  {rec.t_send:7.3f} {rec.t_deliver:7.3f} {rec.src}->{rec.dst:<6} {rec.verdict:<9} "
          f"{frame.function.name} point {point} {cmd.name} {value:g}")

r3 = next(r for r in scn.relays if r.id == "R3")
pv = next(s for s in scn.network.sources if s.id == "pv")
base_kva = scn.network.base_mva * 1000.0
with np.errstate(divide="ignore", invalid="ignore"):
    amps = np.hypot(result.source_p_kw["pv"], result.source_q_kvar["pv"]) / base_kva / result.bus_voltage["Bus-3"]
limit = pv.current_limit * pv.rated_kva / base_kva
k = int(np.argmax(amps >= limit * (1 - 1e-9)))
m = limit / r3.pickup_pu
trip = next(e.time for e in result.trips() if e.target == "R3")
print(f"\nPV current reaches its {limit:.3f} pu limit at {result.time[k]:.3f} s (M = {m:.2f})")
print(f"inverse-time curve predicts a trip {r3.trip_time(m):.3f} s later, at {result.time[k] + r3.trip_time(m):.3f} s")
print(f"simulated R3 trip: {trip:.3f} s")
