"""Pressure dynamics models for pneumatic actuation chambers.

Three interchangeable models of how chamber pressure responds to its
inputs, all exposed through the same evaluation interface so controllers
and fitting code stay model-agnostic:

linear
    First-order lag toward the commanded pressure,
    ``pdot = -alpha * p + beta * p_cmd``.  Two parameters, trivial to
    fit, ignores valve and volume physics entirely.

nonlinear
    First-principles isentropic chamber model: charging/discharging mass
    flow through valve orifices (smooth V-shaped area model, choked and
    subsonic flow regimes) plus a volume-rate term for chambers that
    change shape as the joint bends.  Six fitted parameters: leakage
    areas, area gain, the two dead-band edges, and a volume-uncertainty
    weight.

parametric
    A shape-driven form with no explicit physics: the pressure is pulled
    toward a steady-state value at a rate, both built from free
    coefficients c1..c9, c_b, c_s, c_gamma.

All internal pressures are absolute pascals; gauge/absolute conversion
belongs at the protocol and dataset boundaries.  Every function accepts
scalars or numpy arrays (broadcasting over samples), which keeps the
fitting loop vectorized.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# -- Ambient and scaling constants ---------------------------------------------

#: Standard atmosphere, Pa absolute.
P_ATM = 101325.0
#: Default supply pressure, Pa absolute (a bit under 100 psig).
DEFAULT_P_SRC = 790e3
#: Default valve supply voltage; drive commands live in [0, V_SUPPLY].
V_SUPPLY = 12.0


class GeometryError(ValueError):
    """A joint configuration collapsed a chamber to nonpositive length."""


class InvalidParameterizationError(ValueError):
    """Parametric coefficients produced a nonpositive convergence rate."""


class DivergenceError(RuntimeError):
    """Integration blew past the physically plausible pressure range."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


# -- Parameter containers -------------------------------------------------------


@dataclass(frozen=True)
class GasConstants:
    """Working-gas constants: ratio of specific heats, specific gas
    constant (J/(kg K)) and temperature (K).  Defaults are room-temperature
    air."""

    gamma: float = 1.4
    r_gas: float = 287.05
    temperature: float = 293.15

    def __post_init__(self):
        if self.gamma <= 1 or self.r_gas <= 0 or self.temperature <= 0:
            raise ValueError("need gamma > 1, r_gas > 0, temperature > 0")


@dataclass(frozen=True)
class FlowConstants:
    """Flow-function shape constants: upper ratio ``a``, critical
    (choking) pressure ratio ``b``, and the subsonic exponent.  Classical
    values for air; fixed, never fitted."""

    a: float = 1.0
    b: float = 0.528
    beta_flow: float = 0.5

    def __post_init__(self):
        if not 0 < self.b < self.a <= 1 or self.beta_flow <= 0:
            raise ValueError("need 0 < b < a <= 1 and beta_flow > 0")


@dataclass(frozen=True)
class JointGeometry:
    """Cylindrical continuum-joint chamber geometry.

    Attributes:
        h: neutral chamber length, m.
        r: chamber offset radius from the bending axis, m.
        delta: chamber radius, m.
    """

    h: float = 0.15
    r: float = 0.05
    delta: float = 0.02

    def __post_init__(self):
        if self.h <= 0 or self.r <= 0 or self.delta <= 0:
            raise ValueError("geometry lengths must be positive")


@dataclass
class JointState:
    """Joint bending angles q = [u, v] (rad) and their rates (rad/s).

    ``q`` may be shape (2,) for a single configuration or (n, 2) for a
    whole trajectory.
    """

    q: np.ndarray = field(default_factory=lambda: np.zeros(2))
    q_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.q_dot = np.asarray(self.q_dot, dtype=float)


@dataclass(frozen=True)
class LinearParams:
    """First-order lag coefficients, both 1/s; alpha > 0 for stability."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


@dataclass(frozen=True)
class ValveParams:
    """Smooth V-shaped proportional-valve orifice model.

    Areas are in scaled units (the smooth-max floor pins their magnitude
    near 1); the discharge coefficient carries the conversion to
    physical flow.

    Attributes:
        l_in, l_out: inlet/outlet leakage areas, >= 0.
        b_gain: area per volt of drive.
        u_in: drive at which the inlet starts opening, V.
        u_out: drive at which the outlet starts opening, V; the dead
            band is [u_out, u_in].
    """

    l_in: float = 0.02
    l_out: float = 0.02
    b_gain: float = 1.5
    u_in: float = 7.5
    u_out: float = 4.5

    def __post_init__(self):
        if self.l_in < 0 or self.l_out < 0 or self.b_gain <= 0:
            raise ValueError("need l_in, l_out >= 0 and b_gain > 0")

    @property
    def center(self) -> float:
        """Drive voltage at the middle of the dead band."""
        return 0.5 * (self.u_in + self.u_out)


@dataclass(frozen=True)
class NonlinearParams:
    """Everything the first-principles chamber model needs.

    The fitted parameters are exactly the valve's l_in, l_out, b_gain,
    u_in, u_out plus the volume-uncertainty weight w.  The discharge
    coefficient, pressures, gas, flow and geometry constants are fixed
    configuration.
    """

    valve: ValveParams = ValveParams()
    w: float = 1.0
    c_d: float = 1.0
    p_src: float = DEFAULT_P_SRC
    p_atm: float = P_ATM
    gas: GasConstants = GasConstants()
    flow: FlowConstants = FlowConstants()
    geometry: JointGeometry = JointGeometry()

    def __post_init__(self):
        if not self.p_src > self.p_atm > 0:
            raise ValueError("need p_src > p_atm > 0")
        if not 0 < self.c_d <= 1:
            raise ValueError("need 0 < c_d <= 1")


@dataclass(frozen=True)
class ParametricParams:
    """Free coefficients of the shape-driven model (mixed units).

    ``p_atm``/``p_src`` bound the smooth saturation that keeps the
    steady-state target physical; they are configuration, not fitted.
    """

    c1: float = 0.0
    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c5: float = 0.0
    c6: float = 0.0
    c7: float = 1.0
    c8: float = 1.0
    c9: float = 0.0
    c_b: float = P_ATM
    c_s: float = 0.0
    c_gamma: float = 1.0
    p_atm: float = P_ATM
    p_src: float = DEFAULT_P_SRC


# -- Valve orifice model ---------------------------------------------------------


def smax(x):
    """Smooth maximum against zero: (sqrt(x^2 + 1) + x) / 2.

    Strictly increasing, always above max(x, 0), and satisfies
    smax(x) - smax(-x) = x exactly.
    """
    x = np.asarray(x, dtype=float) if not np.isscalar(x) else x
    return 0.5 * (np.sqrt(x * x + 1.0) + x)


def orifice_areas(u_volts, valve: ValveParams):
    """Inlet and outlet orifice areas (scaled units) at drive *u_volts*.

    Both stay strictly positive (leakage floor); the inlet area grows
    with drive, the outlet area shrinks.
    """
    a_in = valve.l_in + smax(valve.b_gain * (u_volts - valve.u_in) - valve.l_in)
    a_out = valve.l_out + smax(valve.b_gain * (valve.u_out - u_volts) - valve.l_out)
    return a_in, a_out


# -- Compressible flow ------------------------------------------------------------


def psi_max(gamma: float) -> float:
    """Choked-flow ceiling of the flow function.

    (2/(gamma+1))**(1/(gamma-1)) * sqrt(gamma/(gamma+1)); about 0.48418
    for air (gamma = 1.4).
    """
    return (2.0 / (gamma + 1.0)) ** (1.0 / (gamma - 1.0)) * math.sqrt(
        gamma / (gamma + 1.0)
    )


def _psi(ratio, flow: FlowConstants, gas: GasConstants):
    """Flow function of the downstream/upstream pressure ratio.

    Constant at psi_max below the critical ratio (choked), then falls
    smoothly to zero at ratio = a.  Ratios outside [0, a] clip to the
    nearest regime, which gives zero flow past pressure equalization.
    """
    bracket = (flow.a - ratio) / (flow.a - flow.b)
    bracket = np.clip(bracket, 0.0, 1.0)
    return psi_max(gas.gamma) * bracket**flow.beta_flow


def flow_function(p_u, p_d, flow: FlowConstants = FlowConstants(),
                  gas: GasConstants = GasConstants()):
    """Dimensionless flow function for upstream/downstream pressures in Pa.

    Raises:
        ValueError: if any downstream pressure exceeds its upstream
            (callers orient the pair) or pressures are nonpositive.
    """
    p_u = np.asarray(p_u, dtype=float) if not np.isscalar(p_u) else p_u
    if np.any(np.asarray(p_d) > np.asarray(p_u)):
        raise ValueError("downstream pressure exceeds upstream; swap the orientation")
    if np.any(np.asarray(p_d) <= 0) or np.any(np.asarray(p_u) <= 0):
        raise ValueError("absolute pressures must be positive")
    return _psi(np.asarray(p_d, dtype=float) / p_u, flow, gas)


def mass_flow(area, p_u, p_d, c_d: float = 1.0,
              flow: FlowConstants = FlowConstants(),
              gas: GasConstants = GasConstants()):
    """Orifice mass flow rate: area * C_d * Psi * p_u * sqrt(2 / (R T)).

    Nonnegative for nonnegative area; zero exactly when the area is zero
    or the pressures are equalized.
    """
    if np.any(np.asarray(area) < 0):
        raise ValueError("orifice area must be nonnegative")
    psi = flow_function(p_u, p_d, flow, gas)
    return area * c_d * psi * p_u * math.sqrt(2.0 / (gas.r_gas * gas.temperature))


# -- Chamber geometry --------------------------------------------------------------

# d(length)/d(q) per chamber; lengths are h + [r*u, -r*u, r*v, -r*v].
_CHAMBER_AXIS = (0, 0, 1, 1)
_CHAMBER_SIGN = (1.0, -1.0, 1.0, -1.0)


def chamber_lengths(q, geom: JointGeometry):
    """Lengths of all four chambers at bend angles q = [u, v] (shape (...,2))."""
    q = np.asarray(q, dtype=float)
    u, v = q[..., 0], q[..., 1]
    return np.stack(
        [geom.h + geom.r * u, geom.h - geom.r * u,
         geom.h + geom.r * v, geom.h - geom.r * v],
        axis=-1,
    )


def chamber_volumes(chamber: int, state: JointState, geom: JointGeometry):
    """Volume and volume rate of one chamber, m^3 and m^3/s.

    V = pi * delta^2 * l(q), with the chamber lengths linear in the bend
    angles, so Vdot follows from the (constant) length gradient and q_dot.

    Raises:
        GeometryError: if the configuration gives a nonpositive length.
    """
    if not 0 <= chamber <= 3:
        raise ValueError(f"chamber index must be 0..3, got {chamber}")
    axis, sign = _CHAMBER_AXIS[chamber], _CHAMBER_SIGN[chamber]
    length = geom.h + sign * geom.r * state.q[..., axis]
    if np.any(length <= 0):
        raise GeometryError(
            f"chamber {chamber} length nonpositive at q={state.q!r}"
        )
    section = math.pi * geom.delta**2
    volume = section * length
    volume_rate = section * sign * geom.r * state.q_dot[..., axis]
    return volume, volume_rate


# -- The three pressure models ------------------------------------------------------


def pdot_linear(p, p_cmd, params: LinearParams):
    """First-order lag: -alpha * p + beta * p_cmd (Pa/s)."""
    return -params.alpha * p + params.beta * p_cmd


def pdot_nonlinear(p, u_volts, state: JointState, chamber: int,
                   params: NonlinearParams):
    """First-principles pressure rate of one chamber (Pa/s).

    Charging flow runs source -> chamber through the inlet orifice,
    discharge runs chamber -> atmosphere through the outlet, and the
    volume-rate term exchanges pressure with joint motion.  Pressures
    outside [p_atm, p_src] are admitted; the corresponding flow path
    just sees zero flow past equalization.
    """
    gas, flw = params.gas, params.flow
    volume, volume_rate = chamber_volumes(chamber, state, params.geometry)
    a_in, a_out = orifice_areas(u_volts, params.valve)
    coef = math.sqrt(2.0 / (gas.r_gas * gas.temperature))

    p_arr = np.asarray(p, dtype=float) if not np.isscalar(p) else p
    psi_in = _psi(p_arr / params.p_src, flw, gas)
    mdot_in = a_in * params.c_d * psi_in * params.p_src * coef

    p_up = np.maximum(p_arr, 1e-9)  # keep the ratio finite if p collapses
    psi_out = _psi(params.p_atm / p_up, flw, gas)
    mdot_out = a_out * params.c_d * psi_out * np.maximum(p_arr, 0.0) * coef

    grt = gas.gamma * gas.r_gas * gas.temperature
    return grt / volume * (mdot_in - mdot_out) \
        - gas.gamma * params.w * volume_rate / volume * p_arr


def saturation_gate(x, lo: float, hi: float):
    """Smooth clamp of *x* into (lo, hi) via a scaled tanh."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid + half * np.tanh((x - mid) / half)


def input_gate(u_hat, c_gamma: float, c9: float, c8: float):
    """Smooth even gate on the centered input: c8 + c9 * |u_hat|**c_gamma."""
    return c8 + c9 * np.abs(u_hat) ** c_gamma


def pdot_parametric(p, u_volts, volume, volume_rate, params: ParametricParams,
                    gate=saturation_gate, even_gate=input_gate):
    """Shape-driven pressure rate: (s - p) * r (Pa/s).

    The steady-state target s comes from a gated cubic in the centered
    input plus a volume-rate correction; the rate r from an even input
    gate and the volume terms.  The gate functions are injectable so
    alternative saturation shapes can be swapped in.

    Raises:
        InvalidParameterizationError: if the rate r is not strictly
            positive everywhere it is evaluated.
    """
    u_hat = u_volts - params.c1
    g_bar = gate(params.c2 * u_hat + params.c3 * u_hat**3,
                 params.p_atm, params.p_src)
    s = params.c_b + params.c_s * g_bar + params.c4 * volume_rate
    k_bar = even_gate(u_hat, params.c_gamma, params.c9, params.c8)
    r = (params.c7 * k_bar + params.c5 * volume_rate) / (1.0 + params.c6 * volume)
    if np.any(np.asarray(r) <= 0):
        raise InvalidParameterizationError("convergence rate r must be > 0")
    return (s - p) * r


# -- Uniform model interface ---------------------------------------------------------


@dataclass
class StepInputs:
    """Inputs to one evaluation of a pressure model.

    ``p_cmd`` (Pa absolute) feeds the linear model, ``u`` (volts) the
    valve-based models, and the joint state the volume terms.  Fields
    may be scalars or per-sample arrays.
    """

    p_cmd: float | np.ndarray = P_ATM
    u: float | np.ndarray = 0.0
    state: JointState = field(default_factory=JointState)


class LinearModel:
    kind = "linear"

    def __init__(self, params: LinearParams):
        self.params = params

    def pdot(self, p, inputs: StepInputs):
        return pdot_linear(p, inputs.p_cmd, self.params)


class NonlinearModel:
    kind = "nonlinear"

    def __init__(self, params: NonlinearParams, chamber: int = 0):
        self.params = params
        self.chamber = chamber

    def pdot(self, p, inputs: StepInputs):
        return pdot_nonlinear(p, inputs.u, inputs.state, self.chamber, self.params)


class ParametricModel:
    kind = "parametric"

    def __init__(self, params: ParametricParams, chamber: int = 0,
                 geometry: JointGeometry = JointGeometry()):
        self.params = params
        self.chamber = chamber
        self.geometry = geometry

    def pdot(self, p, inputs: StepInputs):
        volume, volume_rate = chamber_volumes(self.chamber, inputs.state,
                                              self.geometry)
        return pdot_parametric(p, inputs.u, volume, volume_rate, self.params)


def integrate(model, p0: float, inputs: list[StepInputs] | tuple, dt: float,
              divergence_limit: float | None = None) -> np.ndarray:
    """Fixed-step 4th-order Runge-Kutta integration of a pressure model.

    The k-th input is held over [t_k, t_k + dt) (zero-order hold), and
    the returned trajectory is aligned to the input grid with
    ``out[0] = p0``; output length equals input length.

    Args:
        model: Object with ``pdot(p, inputs) -> Pa/s``.
        p0: Initial pressure, Pa absolute.
        inputs: Per-sample :class:`StepInputs`.
        dt: Step, seconds.
        divergence_limit: Pressure magnitude treated as blow-up;
            defaults to 10x the default supply pressure.

    Raises:
        DivergenceError: with the offending step index.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    limit = divergence_limit if divergence_limit is not None else 10.0 * DEFAULT_P_SRC
    n = len(inputs)
    out = np.empty(n)
    if n == 0:
        return out
    out[0] = p0
    p = float(p0)
    for k in range(n - 1):
        u_k = inputs[k]
        k1 = model.pdot(p, u_k)
        k2 = model.pdot(p + 0.5 * dt * k1, u_k)
        k3 = model.pdot(p + 0.5 * dt * k2, u_k)
        k4 = model.pdot(p + dt * k3, u_k)
        p = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(p) or abs(p) > limit:
            raise DivergenceError(f"pressure diverged at step {k + 1}: p={p!r}", k + 1)
        out[k + 1] = p
    return out


# -- Parameter serialization -----------------------------------------------------------


def integrate_continuous(model, p0: float, input_fn, t: np.ndarray,
                         divergence_limit: float | None = None) -> np.ndarray:
    """RK4 integration with a continuous-time input signal.

    Unlike :func:`integrate`, the input is a callable ``input_fn(time)
    -> StepInputs`` evaluated at the RK4 stage times, so smoothly
    varying inputs carry no zero-order-hold lag.  Used for generating
    reference data; ``t`` must be a uniform grid.
    """
    t = np.asarray(t, dtype=float)
    n = len(t)
    out = np.empty(n)
    if n == 0:
        return out
    limit = divergence_limit if divergence_limit is not None else 10.0 * DEFAULT_P_SRC
    dt = float(t[1] - t[0]) if n > 1 else 0.0
    out[0] = p0
    p = float(p0)
    for k in range(n - 1):
        tk = t[k]
        u0 = input_fn(tk)
        um = input_fn(tk + 0.5 * dt)
        u1 = input_fn(tk + dt)
        k1 = model.pdot(p, u0)
        k2 = model.pdot(p + 0.5 * dt * k1, um)
        k3 = model.pdot(p + 0.5 * dt * k2, um)
        k4 = model.pdot(p + dt * k3, u1)
        p = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(p) or abs(p) > limit:
            raise DivergenceError(f"pressure diverged at step {k + 1}: p={p!r}", k + 1)
        out[k + 1] = p
    return out


def params_to_dict(params) -> dict:
    """Serialize any model's parameters with a model_kind tag and units
    spelled out in the field names."""
    if isinstance(params, LinearParams):
        return {
            "model_kind": "linear",
            "alpha_per_s": params.alpha,
            "beta_per_s": params.beta,
        }
    if isinstance(params, NonlinearParams):
        v, g, f, geo = params.valve, params.gas, params.flow, params.geometry
        return {
            "model_kind": "nonlinear",
            "leak_in_scaled_area": v.l_in,
            "leak_out_scaled_area": v.l_out,
            "gain_scaled_area_per_v": v.b_gain,
            "u_in_v": v.u_in,
            "u_out_v": v.u_out,
            "volume_uncertainty_w": params.w,
            "discharge_coeff": params.c_d,
            "p_source_pa": params.p_src,
            "p_atm_pa": params.p_atm,
            "gas_gamma": g.gamma,
            "gas_r_j_per_kg_k": g.r_gas,
            "gas_temperature_k": g.temperature,
            "flow_a": f.a,
            "flow_critical_ratio_b": f.b,
            "flow_exponent": f.beta_flow,
            "geom_h_m": geo.h,
            "geom_r_m": geo.r,
            "geom_delta_m": geo.delta,
        }
    if isinstance(params, ParametricParams):
        out = {"model_kind": "parametric"}
        for i in range(1, 10):
            out[f"c{i}"] = getattr(params, f"c{i}")
        out.update({
            "c_b_pa": params.c_b,
            "c_s": params.c_s,
            "c_gamma": params.c_gamma,
            "p_atm_pa": params.p_atm,
            "p_src_pa": params.p_src,
        })
        return out
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def params_from_dict(doc: dict):
    """Rebuild a parameter object from its tagged dictionary form."""
    kind = doc.get("model_kind")
    if kind == "linear":
        return LinearParams(alpha=doc["alpha_per_s"], beta=doc["beta_per_s"])
    if kind == "nonlinear":
        return NonlinearParams(
            valve=ValveParams(
                l_in=doc["leak_in_scaled_area"],
                l_out=doc["leak_out_scaled_area"],
                b_gain=doc["gain_scaled_area_per_v"],
                u_in=doc["u_in_v"],
                u_out=doc["u_out_v"],
            ),
            w=doc["volume_uncertainty_w"],
            c_d=doc["discharge_coeff"],
            p_src=doc["p_source_pa"],
            p_atm=doc["p_atm_pa"],
            gas=GasConstants(doc["gas_gamma"], doc["gas_r_j_per_kg_k"],
                             doc["gas_temperature_k"]),
            flow=FlowConstants(doc["flow_a"], doc["flow_critical_ratio_b"],
                               doc["flow_exponent"]),
            geometry=JointGeometry(doc["geom_h_m"], doc["geom_r_m"],
                                   doc["geom_delta_m"]),
        )
    if kind == "parametric":
        return ParametricParams(
            **{f"c{i}": doc[f"c{i}"] for i in range(1, 10)},
            c_b=doc["c_b_pa"], c_s=doc["c_s"], c_gamma=doc["c_gamma"],
            p_atm=doc["p_atm_pa"], p_src=doc["p_src_pa"],
        )
    raise ValueError(f"unknown model_kind {kind!r}")


def save_params(params, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path):
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def make_model(params, chamber: int = 0,
               geometry: JointGeometry | None = None):
    """Wrap a parameter object in its model class."""
    if isinstance(params, LinearParams):
        return LinearModel(params)
    if isinstance(params, NonlinearParams):
        return NonlinearModel(params, chamber)
    if isinstance(params, ParametricParams):
        return ParametricModel(params, chamber,
                               geometry if geometry is not None else JointGeometry())
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def bench_nonlinear_params() -> NonlinearParams:
    """The stock simulated plant: a mid-size chamber with a proportional
    valve sized for step responses on the order of a tenth of a second."""
    return NonlinearParams(
        valve=ValveParams(l_in=0.02, l_out=0.02, b_gain=1.5, u_in=7.5, u_out=4.5),
        w=1.0,
        c_d=1.2e-7,
    )
