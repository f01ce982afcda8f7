"""Walk through the wire format: addresses, packets, bytes on the line.

Run:  python demos/01_wire_protocol.py
"""

from pneusim.protocol import (
    Packet,
    assign_addresses,
    decode_stream,
    encode_packet,
    packet_time,
    pressure_to_word,
    word_to_pressure,
)

# Addresses count down from 0xFFFF, one per daisy-chained device.  The
# top of the 16-bit space can never collide with 10-bit sensor data.
print("== addressing ==")
for addr in assign_addresses(4):
    print(f"  device {addr.index}: 0x{addr.value:04X}")

# A packet is five 16-bit words: address + four pressures, little-endian,
# 10 bytes on the wire. At 1 Mbps with 8N1 framing that is exactly 100 us.
print("\n== a command packet ==")
commands_kpa = [50.0, 120.0, 200.0, 300.0]
words = [pressure_to_word(p) for p in commands_kpa]
pkt = Packet(0xFFFE, tuple(words))
wire = encode_packet(pkt)
print(f"  commands (kPa gauge): {commands_kpa}")
print(f"  words:                {words}")
print(f"  wire bytes:           {wire.hex(' ')}")
print(f"  transmission time:    {packet_time(1_000_000) * 1e6:.0f} us at 1 Mbps")

# A device scans the shared line for its own address at gap boundaries;
# packets for other devices are skipped without inspection.
print("\n== decoding a shared stream ==")
other = encode_packet(Packet(0xFFFF, (1, 2, 3, 4)))
stream = other + wire
decoded = decode_stream(stream, 0xFFFE, gap_marks=[0, 10])
print(f"  stream: {stream.hex(' ')}")
print(f"  device 0xFFFE sees payload {decoded.payload}")
print(f"  back to pressures: "
      f"{[round(word_to_pressure(w), 1) for w in decoded.payload]} kPa")
