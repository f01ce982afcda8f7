"""Closed-loop proportional pressure control and the emulated device.

An :class:`EmulatedDevice` stands in for one embedded board: it sits on
the simulated bus at an address, holds four pressure chambers (each a
plant model plus a proportional controller), and advances its control
loop in simulated time between bus transactions.  Commands arrive and
measurements leave as 10-bit protocol words; everything internal is
absolute pascals.

The control law is a plain proportional term on pressure error, offset
by the valve's dead-band center so that zero error commands the closed
position, and clamped to the drive range.  Steady-state error is
whatever the leakage imbalance leaves behind; no integral action.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    JointGeometry,
    JointState,
    LinearModel,
    LinearParams,
    NonlinearModel,
    P_ATM,
    StepInputs,
    V_SUPPLY,
    bench_nonlinear_params,
)
from .protocol import FULL_SCALE_KPA, pressure_to_word, word_to_pressure

#: Column order of tracking-log CSV files (shared with the dataset loader).
LOG_COLUMNS = (
    ["t_s"]
    + [f"p_des{i}_kpa" for i in range(4)]
    + [f"p{i}_kpa" for i in range(4)]
    + [f"u{i}_v" for i in range(4)]
    + ["q_u_rad", "q_v_rad", "qd_u_rad_s", "qd_v_rad_s"]
)


def gauge_kpa(p_abs_pa):
    """Absolute Pa -> gauge kPa (the sensor/protocol unit)."""
    return (np.asarray(p_abs_pa) - P_ATM) / 1e3


def absolute_pa(p_gauge_kpa):
    """Gauge kPa -> absolute Pa (the dynamics unit)."""
    return np.asarray(p_gauge_kpa) * 1e3 + P_ATM


@dataclass(frozen=True)
class ControllerConfig:
    """Proportional pressure controller settings.

    Attributes:
        k_p: Gain, volts per pascal of error.
        u_min, u_max: Drive clamp, volts.
        control_rate: Loop rate, Hz.
        u_offset: Resting drive added before clamping; set to the valve
            center so zero error holds the valve closed.
    """

    k_p: float = 6e-4
    u_min: float = 0.0
    u_max: float = V_SUPPLY
    control_rate: float = 100.0
    u_offset: float = 0.0

    def __post_init__(self):
        if self.u_min >= self.u_max:
            raise ValueError("need u_min < u_max")
        if self.k_p <= 0 or self.control_rate <= 0:
            raise ValueError("need k_p > 0 and control_rate > 0")


def control_law(p_des: float, p: float, config: ControllerConfig) -> float:
    """Proportional drive command in volts, clamped to the drive range."""
    u = config.k_p * (p_des - p) + config.u_offset
    return float(min(max(u, config.u_min), config.u_max))


@dataclass
class ChamberState:
    """Snapshot of one chamber: absolute pressure plus the joint
    configuration and geometry its volume depends on."""

    pressure: float
    joint: JointState
    geometry: JointGeometry


class EmulatedDevice:
    """One embedded pressure-control board, simulated.

    Args:
        address: 16-bit bus address.
        models: Four plant model objects (one per chamber), each with
            ``pdot(p, StepInputs)``.
        controllers: One :class:`ControllerConfig` shared by all
            chambers, or a list of four.
        geometry: Chamber geometry (shared by the joint).
        initial_pressure: Starting absolute pressure, Pa (scalar or 4).
        joint_motion: Optional ``f(t) -> (q, q_dot)`` prescribing the
            joint trajectory; default holds the joint clamped at zero.
        sensor_noise_kpa: Std of Gaussian measurement noise in kPa; the
            noise feeds both the controller and the reported words.
        seed: RNG seed for the measurement noise.
    """

    def __init__(
        self,
        address: int,
        models,
        controllers: ControllerConfig | list[ControllerConfig] = ControllerConfig(),
        geometry: JointGeometry = JointGeometry(),
        initial_pressure=P_ATM,
        joint_motion=None,
        sensor_noise_kpa: float = 0.0,
        seed: int = 0,
    ):
        if len(models) != 4:
            raise ValueError("a device controls exactly 4 chambers")
        self.address = address
        self.models = list(models)
        if isinstance(controllers, ControllerConfig):
            controllers = [controllers] * 4
        self.controllers = list(controllers)
        self.geometry = geometry
        self.joint_motion = joint_motion
        self.sensor_noise_kpa = sensor_noise_kpa
        self._rng = np.random.default_rng(seed)

        self.pressures = np.broadcast_to(
            np.asarray(initial_pressure, dtype=float), (4,)
        ).copy()
        self.commands = np.full(4, P_ATM)
        self.last_u = np.zeros(4)
        self.last_measured = self.pressures.copy()
        self.joint = JointState()
        self.t = 0.0
        rates = {c.control_rate for c in self.controllers}
        if len(rates) != 1:
            raise ValueError("all chambers must share one control rate")
        self.dt = 1.0 / rates.pop()

    # -- control loop ---------------------------------------------------------

    def _measure(self) -> np.ndarray:
        noisy = self.pressures.copy()
        if self.sensor_noise_kpa > 0.0:
            noisy = noisy + self._rng.normal(0.0, self.sensor_noise_kpa * 1e3, 4)
        return noisy

    def step(self) -> None:
        """Advance controllers and plants by one control period."""
        if self.joint_motion is not None:
            q, q_dot = self.joint_motion(self.t)
            self.joint = JointState(np.asarray(q, float), np.asarray(q_dot, float))
        measured = self._measure()
        self.last_measured = measured.copy()
        dt = self.dt
        for i in range(4):
            u = control_law(self.commands[i], measured[i], self.controllers[i])
            self.last_u[i] = u
            inp = StepInputs(p_cmd=self.commands[i], u=u, state=self.joint)
            model = self.models[i]
            p = self.pressures[i]
            k1 = model.pdot(p, inp)
            k2 = model.pdot(p + 0.5 * dt * k1, inp)
            k3 = model.pdot(p + 0.5 * dt * k2, inp)
            k4 = model.pdot(p + dt * k3, inp)
            self.pressures[i] = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        self.t += dt

    def advance_to(self, t_target: float) -> None:
        """Run whole control periods until the device clock reaches
        *t_target* (called by the bus before each response)."""
        while self.t + self.dt <= t_target:
            self.step()

    # -- bus interface ---------------------------------------------------------

    def respond(self, command_words) -> tuple[int, int, int, int]:
        """Accept four command words, return four measurement words."""
        for i, word in enumerate(command_words):
            self.commands[i] = absolute_pa(word_to_pressure(int(word)))
        measured = gauge_kpa(self._measure())
        return tuple(pressure_to_word(float(m)) for m in measured)

    def chamber_state(self, i: int) -> ChamberState:
        return ChamberState(float(self.pressures[i]), self.joint, self.geometry)


def make_bench_device(
    address: int = 0xFFFF,
    model_kind: str = "nonlinear",
    sensor_noise_kpa: float = 0.0,
    seed: int = 0,
    joint_motion=None,
    controller: ControllerConfig | None = None,
) -> EmulatedDevice:
    """A device loaded with the stock bench plant on all four chambers.

    ``model_kind`` picks the plant: the first-principles chamber model
    (default) or the first-order lag (handy when speed matters more
    than physics).
    """
    if model_kind == "nonlinear":
        params = bench_nonlinear_params()
        models = [NonlinearModel(params, chamber=i) for i in range(4)]
        if controller is None:
            controller = ControllerConfig(u_offset=params.valve.center)
        geometry = params.geometry
    elif model_kind == "linear":
        params = LinearParams(alpha=20.0, beta=20.0)
        models = [LinearModel(params) for _ in range(4)]
        if controller is None:
            controller = ControllerConfig()
        geometry = JointGeometry()
    else:
        raise ValueError(f"unknown model_kind {model_kind!r}")
    return EmulatedDevice(
        address,
        models,
        controllers=controller,
        geometry=geometry,
        initial_pressure=absolute_pa(50.0),
        joint_motion=joint_motion,
        sensor_noise_kpa=sensor_noise_kpa,
        seed=seed,
    )


# -- Experiments -----------------------------------------------------------------


@dataclass
class StepMetrics:
    """Step-response figures for one chamber (seconds and pascals)."""

    rise_time: float
    overshoot: float
    settling_time: float
    steady_state_error: float


@dataclass
class TrackingLog:
    """Time series of one tracked run; the CSV form doubles as a
    system-identification dataset."""

    t: np.ndarray            # (n,) seconds
    p_des: np.ndarray        # (n, 4) Pa absolute
    p: np.ndarray            # (n, 4) Pa absolute
    u: np.ndarray            # (n, 4) volts
    q: np.ndarray            # (n, 2) rad
    q_dot: np.ndarray        # (n, 2) rad/s

    def iae(self) -> np.ndarray:
        """Integrated absolute tracking error per chamber, Pa s."""
        if len(self.t) < 2:
            return np.zeros(4)
        dt = self.t[1] - self.t[0]
        return np.sum(np.abs(self.p_des - self.p), axis=0) * dt

    def to_csv(self, dest) -> None:
        """Write the log in the shared CSV schema (pressures in kPa gauge)."""
        own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
        fh = open(dest, "w", newline="") if own else dest
        try:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for k in range(len(self.t)):
                row = [f"{self.t[k]:.6f}"]
                row += [f"{v:.6f}" for v in gauge_kpa(self.p_des[k])]
                row += [f"{v:.6f}" for v in gauge_kpa(self.p[k])]
                row += [f"{v:.6f}" for v in self.u[k]]
                row += [f"{v:.9f}" for v in self.q[k]]
                row += [f"{v:.9f}" for v in self.q_dot[k]]
                writer.writerow(row)
        finally:
            if own:
                fh.close()


def _run_device(device: EmulatedDevice, reference: np.ndarray) -> TrackingLog:
    """Drive a device directly (no bus) with a per-step reference (n, 4)."""
    n = len(reference)
    t = np.empty(n)
    p_des = np.empty((n, 4))
    p = np.empty((n, 4))
    u = np.empty((n, 4))
    q = np.empty((n, 2))
    q_dot = np.empty((n, 2))
    for k in range(n):
        device.commands[:] = reference[k]
        t[k] = device.t
        p_des[k] = device.commands
        device.step()
        p[k] = device.last_measured
        u[k] = device.last_u
        q[k] = device.joint.q
        q_dot[k] = device.joint.q_dot
    return TrackingLog(t, p_des, p, u, q, q_dot)


def step_response(
    device: EmulatedDevice, p0: float, p_cmd: float, duration: float
) -> tuple[TrackingLog, list[StepMetrics]]:
    """Command a pressure step on all four chambers and characterize it.

    Args:
        device: Device to run (its pressures are reset to *p0*).
        p0: Initial absolute pressure, Pa, within the sensor range.
        p_cmd: Commanded absolute pressure, Pa, within the sensor range.
        duration: Run length, seconds.

    Returns:
        The run's :class:`TrackingLog` and per-chamber
        :class:`StepMetrics` (rise 10-90%, overshoot fraction of the
        step, settling into +-5% of the step, steady-state error).
    """
    for name, value in (("p0", p0), ("p_cmd", p_cmd)):
        if not P_ATM <= value <= absolute_pa(FULL_SCALE_KPA):
            raise ValueError(f"{name}={value} Pa outside the sensor range")
    device.pressures[:] = p0
    n = max(2, round(duration * device.controllers[0].control_rate))
    reference = np.full((n, 4), p_cmd)
    log = _run_device(device, reference)
    metrics = [_step_metrics(log.t, log.p[:, i], p0, p_cmd) for i in range(4)]
    return log, metrics


def _step_metrics(t, p, p0: float, p_cmd: float) -> StepMetrics:
    step = p_cmd - p0
    if step == 0.0:
        err = np.abs(p - p_cmd)
        return StepMetrics(0.0, 0.0, 0.0, float(np.mean(err[-max(1, len(p) // 10):])))
    frac = (p - p0) / step
    crossed10 = np.nonzero(frac >= 0.1)[0]
    crossed90 = np.nonzero(frac >= 0.9)[0]
    rise = (
        float(t[crossed90[0]] - t[crossed10[0]])
        if len(crossed10) and len(crossed90)
        else float("nan")
    )
    overshoot = max(0.0, float((frac.max() - 1.0))) if step > 0 else max(
        0.0, float(1.0 - frac.min())
    )
    band = np.abs(p - p_cmd) <= 0.05 * abs(step)
    settling = float("nan")
    not_in_band = np.nonzero(~band)[0]
    if len(not_in_band) == 0:
        settling = 0.0
    elif not_in_band[-1] + 1 < len(band):
        settling = float(t[not_in_band[-1] + 1] - t[0])
    sse = float(np.mean(np.abs(p - p_cmd)[-max(1, len(p) // 10):]))
    return StepMetrics(rise, overshoot, settling, sse)


def track_trajectory(device: EmulatedDevice, reference: np.ndarray) -> TrackingLog:
    """Track a reference trajectory on one device, no bus in the loop.

    Args:
        device: Device to run.
        reference: (n, 4) commanded absolute pressures sampled at the
            device's control rate.

    Returns:
        The run's :class:`TrackingLog`.
    """
    reference = np.asarray(reference, dtype=float)
    if reference.ndim != 2 or reference.shape[1] != 4:
        raise ValueError("reference must have shape (n, 4)")
    return _run_device(device, reference)


def track_on_bus(bus, references: dict, duration: float,
                 ref_rate: float = 100.0) -> dict:
    """Track references on every device by polling over the simulated bus.

    The master sweeps all devices as fast as the bus allows, sending the
    zero-order-hold sample of each device's reference and logging the
    measurements that come back.  Drive and joint columns are read from
    the devices directly (simulator-side observability).

    Args:
        bus: A :class:`pneusim.bus.SimulatedBus` whose devices are
            :class:`EmulatedDevice` instances.
        references: Mapping of device address to an (n, 4) array of
            commanded absolute pressures sampled at *ref_rate*.
        duration: Simulated seconds to poll for.
        ref_rate: Sample rate of the reference arrays, Hz.

    Returns:
        Mapping of device address to :class:`TrackingLog`.
    """
    rows: dict[int, list] = {addr: [] for addr in references}
    devices = {addr: bus.device(addr) for addr in references}
    t_end = bus.clock + duration
    while bus.clock < t_end:
        for addr, ref in references.items():
            k = min(int(bus.clock * ref_rate), len(ref) - 1)
            cmd_words = [pressure_to_word(float(g)) for g in gauge_kpa(ref[k])]
            t_poll = bus.clock
            result = bus.transact(addr, cmd_words)
            dev = devices[addr]
            rows[addr].append((
                t_poll,
                ref[k].copy(),
                absolute_pa(np.array([word_to_pressure(w) for w in result.response.payload])),
                dev.last_u.copy(),
                dev.joint.q.copy(),
                dev.joint.q_dot.copy(),
            ))
    logs = {}
    for addr, recs in rows.items():
        t, p_des, p, u, q, q_dot = (np.array(x) for x in zip(*recs))
        logs[addr] = TrackingLog(t, p_des, p, u, q, q_dot)
    return logs
