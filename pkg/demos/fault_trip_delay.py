"""Relay trips that reach their breaker late.

A three-phase fault hits Bus-7 (behind the LV transformer) at 1 s. Relay R1
sees it and sends a trip to BRK1. Without interference the breaker opens 50 ms
later and the fault is gone. With the breaker held back 2 s, the whole
feeder sags long enough for the PV and BESS undervoltage elements to take
those sources offline first.

Run: python3 demos/fault_trip_delay.py [out_dir]
"""

import sys
from pathlib import Path

from gridsurge.cli import load_scenario
from gridsurge.engine import compare_runs, run_scenario
from gridsurge.report import write_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")

for case in ("f1", "f2"):
    fast = run_scenario(load_scenario(f"rtds-{case}-nodelay"))
    slow = run_scenario(load_scenario(f"rtds-{case}"))
    print(f"== rtds-{case}")
    for label, result in (("no delay", fast), ("2 s delay", slow)):
        print(f"  {label}:")
        for e in result.events:
            if e.kind in ("trip", "breaker_open", "source_trip", "fault_extinguished"):
                print(f"    {e.time:7.3f} s  {e.kind:<18} {e.target}")
        print(f"    final frequency {result.frequency_hz[-1]:.3f} Hz")
    diff = compare_runs(fast, slow)
    print(f"  runs first differ at {diff.first_divergence_s:.3f} s")
    write_svg(slow, out / f"rtds-{case}.svg", fast)
print(f"overlays written to {out}/")
