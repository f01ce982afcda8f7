"""Simulation toolkit for distributed pneumatic pressure control.

Submodules:
    protocol  -- packet format and address scheme of the RS-485 bus
    bus       -- discrete-event simulation of the half-duplex bus timing
    dynamics  -- pressure dynamics models (linear, nonlinear, parametric)
    control   -- proportional pressure control and emulated devices
    sysid     -- dataset handling, multi-start fitting, evaluation metrics
    cli       -- command-line experiment runner
"""

__version__ = "0.1.0"

from . import bus, cli, control, dynamics, protocol, sysid  # noqa: F401
