"""Scripting interface to a chain of pressure-control devices.

The one class here, :class:`PressureController`, mirrors the embedded
system's script-facing API: construct it with a port identifier and an
expected device count, ping the chain, then exchange pressure commands
and measurements per device.  Pressures are plain numbers in kPa gauge.

Because this package drives the *simulated* bus, the port identifier is
reinterpreted: a string naming a real character device raises (hardware
transport is out of scope), anything else must be the path of a JSON
simulation config.  Minimal config::

    {"num_devices": 4}

Optional keys: ``model_kind`` ("linear" or "nonlinear" plant, default
"linear"), ``seed``, ``sensor_noise_kpa``, ``per_transaction_overhead_s``.

Example:
    >>> from pneuscript import PressureController
    >>> ctl = PressureController("bus4.json", 4)
    >>> ctl.ping_devices()
    >>> ctl.set_pressure_commands(0, [10, 20, 30, 40])
    >>> ctl.get_pressure_data(0)
    array([...])
"""

from __future__ import annotations

import json
import os
import stat

import numpy as np

from pneusim.bus import BusTimeoutError, BusTimingConfig, SimulatedBus
from pneusim.control import make_bench_device
from pneusim.protocol import (
    ADDRESS_TOP,
    assign_addresses,
    pressure_to_word,
    word_to_pressure,
)

__version__ = "0.1.0"
__all__ = ["PressureController", "DeviceUnreachableError"]


class DeviceUnreachableError(ConnectionError):
    """A device expected on the bus did not answer; carries its address."""

    def __init__(self, index: int, address: int):
        super().__init__(
            f"device {index} at address 0x{address:04X} did not respond"
        )
        self.index = index
        self.address = address


def _is_char_device(path: str) -> bool:
    try:
        return stat.S_ISCHR(os.stat(path).st_mode)
    except OSError:
        return False


def _build_bus(config_path: str) -> SimulatedBus:
    with open(config_path) as fh:
        doc = json.load(fh)
    n = int(doc.get("num_devices", 1))
    addresses = [a.value for a in assign_addresses(n)]
    devices = [
        make_bench_device(
            address=addr,
            model_kind=doc.get("model_kind", "linear"),
            sensor_noise_kpa=float(doc.get("sensor_noise_kpa", 0.0)),
            seed=int(doc.get("seed", 0)) + i,
        )
        for i, addr in enumerate(addresses)
    ]
    timing = BusTimingConfig(
        per_transaction_overhead_s=float(doc.get("per_transaction_overhead_s",
                                                 6e-4)),
    )
    return SimulatedBus(devices, config=timing, seed=int(doc.get("seed", 0)))


class PressureController:
    """Master-side handle for a daisy chain of pressure-control devices.

    Args:
        uart_port: Port identifier.  On this simulated transport it must
            be the path of a JSON simulation config; real serial device
            paths are rejected.
        num_devices: How many devices the script expects on the bus.

    Attributes:
        transport: The underlying simulated bus instance.
        num_devices: The expected device count.

    Not safe for concurrent use; the bus is half-duplex, so callers
    serialize access.  Every method call maps to exactly one bus
    transaction.
    """

    def __init__(self, uart_port: str, num_devices: int):
        if num_devices < 1:
            raise ValueError(f"num_devices must be >= 1, got {num_devices}")
        if _is_char_device(uart_port):
            raise NotImplementedError(
                f"{uart_port!r} is a character device; only the simulated "
                f"transport is implemented - pass a simulation config path"
            )
        if not os.path.exists(uart_port):
            raise FileNotFoundError(
                f"port {uart_port!r} is neither a character device nor a "
                f"simulation config file"
            )
        self.num_devices = num_devices
        self.transport = _build_bus(uart_port)
        self._addresses = [ADDRESS_TOP - i for i in range(num_devices)]
        self._last_words = {i: (0, 0, 0, 0) for i in range(num_devices)}

    def _transact(self, index: int, words) -> tuple[int, ...]:
        try:
            result = self.transport.transact(self._addresses[index], words)
        except BusTimeoutError as exc:
            raise DeviceUnreachableError(index, self._addresses[index]) from exc
        return result.response.payload

    def ping_devices(self) -> None:
        """Exchange one packet with every expected device.

        Raises:
            DeviceUnreachableError: naming the first address that failed
                to answer.
        """
        for i in range(self.num_devices):
            self._transact(i, self._last_words[i])

    def set_pressure_commands(self, i: int, commands) -> None:
        """Send four pressure commands (kPa gauge) to device *i*.

        Values outside the 0-689.48 kPa sensor range clamp to it, the
        same way the device's saturating ADC mapping would.
        """
        self._check_index(i)
        commands = np.asarray(commands, dtype=float).reshape(-1)
        if commands.shape != (4,):
            raise ValueError(f"need exactly 4 commands, got {commands.shape}")
        words = tuple(pressure_to_word(float(c)) for c in commands)
        self._last_words[i] = words
        self._transact(i, words)

    def get_pressure_data(self, i: int) -> np.ndarray:
        """Read the four measured pressures (kPa gauge) from device *i*.

        The poll re-asserts the last commands sent to that device (a
        transaction always carries commands outbound).
        """
        self._check_index(i)
        payload = self._transact(i, self._last_words[i])
        return np.array([word_to_pressure(w) for w in payload])

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.num_devices:
            raise IndexError(
                f"device index {i} out of range [0, {self.num_devices})"
            )
