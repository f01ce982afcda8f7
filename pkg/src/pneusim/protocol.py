"""Packet encoding and decoding for the half-duplex RS-485 pressure bus.

Every transaction on the bus is one fixed-size packet: five 16-bit words,
an address word followed by four pressure words.  Outbound packets carry
pressure commands, inbound packets carry pressure measurements.  Words are
serialized little-endian, so a packet is always exactly 10 bytes on the
wire.  Frames use the 8N1 serial setting (10 bits per byte), which makes a
full packet 100 bits.

Addresses double as packet delimiters: payload words come from a 10-bit
ADC and never exceed 0x03FF, while addresses start at 0xFFFF and count
down, so an aligned address word can never collide with data.  Alignment
itself comes from inter-packet gaps flagged by the transport (an idle
line), because raw byte scanning could alias the 0xFFFF address at odd
offsets.

The protocol has no parity bit and no checksum; corruption only surfaces
through address mismatches and payload range checks.

Example (command packet to the first device):

    >>> from pneusim.protocol import Packet, encode_packet
    >>> encode_packet(Packet(0xFFFF, (1, 2, 3, 4))).hex(' ')
    'ff ff 01 00 02 00 03 00 04 00'
"""

from __future__ import annotations

from dataclasses import dataclass

# -- Wire format constants ----------------------------------------------------

#: Payload words are 10-bit ADC counts.
WORD_MAX = 0x03FF
#: First device address; successive devices decrement by one.
ADDRESS_TOP = 0xFFFF
#: Lowest address selectable with the 4-position address switch.
ADDRESS_SWITCH_MIN = 0xFFFC
#: Hard floor for software-extended addressing; below this an address
#: could collide with payload data.
ADDRESS_FLOOR = 0x0400
#: Most devices addressable before hitting the floor.
MAX_DEVICES = 256

#: Words per packet (1 address + 4 payload) and bytes on the wire.
WORDS_PER_PACKET = 5
PACKET_BYTES = 10
#: 8N1 framing: start bit + 8 data bits + stop bit.
BITS_PER_FRAME = 10

#: Full scale of the pressure sensors in kPa gauge (100 psig).
FULL_SCALE_KPA = 689.48


class NotAddressedError(Exception):
    """No packet in the stream carried the expected address."""


class MalformedPacketError(Exception):
    """A packet addressed to us was truncated or carried out-of-range data."""


@dataclass(frozen=True)
class DeviceAddress:
    """Bus address of one device, assigned by daisy-chain position.

    Attributes:
        index: 0-based position on the bus.
        value: 16-bit address word, ``0xFFFF - index``.
    """

    index: int
    value: int

    def __post_init__(self):
        if self.value != ADDRESS_TOP - self.index:
            raise ValueError(
                f"address 0x{self.value:04X} does not match position {self.index}"
            )


@dataclass(frozen=True)
class Packet:
    """One bus packet: an address word plus four pressure words.

    Raises:
        ValueError: on construction if the address is below the software
            floor or any payload word exceeds the 10-bit range.
    """

    address: int
    payload: tuple[int, int, int, int]

    def __post_init__(self):
        if not ADDRESS_FLOOR <= self.address <= ADDRESS_TOP:
            raise ValueError(
                f"address 0x{self.address:04X} outside "
                f"[0x{ADDRESS_FLOOR:04X}, 0x{ADDRESS_TOP:04X}]"
            )
        payload = tuple(int(w) for w in self.payload)
        if len(payload) != 4:
            raise ValueError(f"payload must be 4 words, got {len(payload)}")
        for w in payload:
            if not 0 <= w <= WORD_MAX:
                raise ValueError(f"payload word {w} outside [0, {WORD_MAX}]")
        object.__setattr__(self, "payload", payload)


def assign_addresses(device_count: int) -> list[DeviceAddress]:
    """Assign bus addresses for *device_count* daisy-chained devices.

    Addresses start at 0xFFFF and decrement by one per device, keeping
    every address clear of the 10-bit data range.

    Args:
        device_count: Number of devices on the bus, 1 to 256.

    Returns:
        List of :class:`DeviceAddress` in chain order.

    Raises:
        ValueError: if *device_count* is outside [1, 256].
    """
    if not 1 <= device_count <= MAX_DEVICES:
        raise ValueError(f"device_count must be in [1, {MAX_DEVICES}], got {device_count}")
    return [DeviceAddress(i, ADDRESS_TOP - i) for i in range(device_count)]


def packet_time(baud: float) -> float:
    """Transmission time in seconds of one packet at *baud* bits/s.

    10 frames of 10 bits each: exactly 100 us at 1 Mbps.
    """
    if baud <= 0:
        raise ValueError(f"baud must be positive, got {baud}")
    return PACKET_BYTES * BITS_PER_FRAME / baud


def encode_packet(packet: Packet, strict: bool = True) -> bytes:
    """Serialize *packet* to its 10-byte wire form.

    Each word goes out low byte first; the address word leads.

    Args:
        packet: Packet to serialize.
        strict: Require the address to be reachable by the 4-position
            address switch (>= 0xFFFC).  Pass ``False`` for
            software-extended addresses down to 0x0400.

    Returns:
        The 10 wire bytes.

    Raises:
        ValueError: if strict mode rejects the address.
    """
    if strict and packet.address < ADDRESS_SWITCH_MIN:
        raise ValueError(
            f"address 0x{packet.address:04X} below switch range "
            f"0x{ADDRESS_SWITCH_MIN:04X} (pass strict=False for software addressing)"
        )
    out = bytearray()
    for word in (packet.address, *packet.payload):
        out.append(word & 0xFF)
        out.append((word >> 8) & 0xFF)
    return bytes(out)


def decode_stream(
    data: bytes,
    expected_address: int | DeviceAddress,
    gap_marks: list[int],
) -> Packet:
    """Pick our packet out of a byte stream shared with other devices.

    *gap_marks* are byte offsets where the transport saw an idle line,
    i.e. candidate packet starts.  At each mark the address word is read;
    packets addressed elsewhere are skipped without inspection, and once
    our address matches the next 8 bytes are committed as payload.

    Args:
        data: Raw bytes captured from the bus.
        expected_address: Address to accept, as an int or
            :class:`DeviceAddress`.
        gap_marks: Sorted byte offsets of detected packet boundaries.

    Returns:
        The first complete :class:`Packet` addressed to us.

    Raises:
        MalformedPacketError: our address matched but the packet was
            truncated or a payload word was outside the ADC range.
        NotAddressedError: the stream held no packet for us.
    """
    if isinstance(expected_address, DeviceAddress):
        expected_address = expected_address.value
    for mark in gap_marks:
        if mark + 2 > len(data):
            continue  # gap too close to stream end to hold an address
        address = data[mark] | (data[mark + 1] << 8)
        if address != expected_address:
            continue  # someone else's packet; next gap realigns us
        body = data[mark + 2 : mark + PACKET_BYTES]
        if len(body) < PACKET_BYTES - 2:
            raise MalformedPacketError(
                f"packet for 0x{address:04X} truncated: "
                f"{len(body)} of 8 payload bytes"
            )
        payload = tuple(body[i] | (body[i + 1] << 8) for i in range(0, 8, 2))
        for w in payload:
            if w > WORD_MAX:
                raise MalformedPacketError(
                    f"payload word 0x{w:04X} above ADC range 0x{WORD_MAX:04X}"
                )
        return Packet(address, payload)  # type: ignore[arg-type]
    raise NotAddressedError(f"no packet for 0x{expected_address:04X} in stream")


def pressure_to_word(p_gauge_kpa: float) -> int:
    """Map a gauge pressure in kPa onto a 10-bit sensor word.

    Out-of-range pressures clamp to the sensor limits, matching a
    saturating ADC.
    """
    p = min(max(p_gauge_kpa, 0.0), FULL_SCALE_KPA)
    return round(p / FULL_SCALE_KPA * WORD_MAX)


def word_to_pressure(word: int) -> float:
    """Inverse of :func:`pressure_to_word`: word count to kPa gauge."""
    if not 0 <= word <= WORD_MAX:
        raise ValueError(f"word {word} outside [0, {WORD_MAX}]")
    return word / WORD_MAX * FULL_SCALE_KPA
