"""Bus timing: write-enable pulse math, one transaction's event timeline,
loop-rate scaling with chain length, and fault injection.

Run:  python demos/02_bus_timing.py
"""

from pneusim.bus import (
    BusTimeoutError,
    BusTimingConfig,
    DEFAULT_TIMING,
    EchoDevice,
    MEASURED_LOOP_RATES_HZ,
    SimulatedBus,
    measure_loop_rate,
    write_enable_duration,
)
from pneusim.protocol import assign_addresses

# The auto-direction pulse must outlast one packet (100 us).  The stock
# RC pair gives 107.36 us with margin at the worst component tolerances.
print("== write-enable pulse ==")
print(f"  nominal (976 ohm, 0.1 uF): {write_enable_duration(976, 0.1) * 1e6:.2f} us")
print(f"  worst low  (-1% R, -5% C): "
      f"{write_enable_duration(976 * 0.99, 0.1 * 0.95) * 1e6:.2f} us")
print(f"  worst high (+1% R, +5% C): "
      f"{write_enable_duration(976 * 1.01, 0.1 * 1.05) * 1e6:.2f} us")

print("\n== one transaction, event by event ==")
addrs = [a.value for a in assign_addresses(2)]
bus = SimulatedBus([EchoDevice(a) for a in addrs],
                   BusTimingConfig(device_compute_delay_s=20e-6))
result = bus.transact(addrs[0], (100, 200, 300, 400))
for ev in result.events:
    who = "master" if ev.device is None else f"0x{ev.device:04X}"
    print(f"  {ev.timestamp * 1e6:8.2f} us  {ev.kind:<24} {who}")
print(f"  -> elapsed {result.elapsed * 1e6:.0f} us, echoed {result.response.payload}")

# Loop rate falls as the chain grows; the defaults are calibrated against
# rates measured on the reference hardware.
print("\n== polling rate vs chain length (2044 sweeps each) ==")
print(f"  {'devices':>8}{'simulated Hz':>14}{'measured Hz':>13}")
for n in (1, 2, 3):
    stats = measure_loop_rate(n, 2044, config=DEFAULT_TIMING)
    measured = MEASURED_LOOP_RATES_HZ.get(n, float('nan'))
    print(f"  {n:>8}{stats.mean_hz:>14.1f}{measured:>13.1f}")

print("\n== fault injection ==")
bus.inject_fault("flip_byte", 0)      # garble the response address
try:
    bus.transact(addrs[0], (0, 0, 0, 0))
except BusTimeoutError as exc:
    print(f"  flip_byte in address -> {exc}")
bus.inject_fault("hold_write_mode", 0)  # device 0 stuck driving the line
try:
    bus.transact(addrs[1], (0, 0, 0, 0))
except BusTimeoutError:
    kinds = [e.kind for e in bus.events]
    print(f"  hold_write_mode -> collision event logged: "
          f"{'collision' in kinds}")
