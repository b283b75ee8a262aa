"""Hopping models: force laws, controllers, and vertical point-mass dynamics.

Three actuator models drive the same one-dimensional hopper (point mass on a
massless leg): a muscle with nonlinear fiber contraction dynamics and a
mono-synaptic force-feedback reflex (``musfib``), a linearized variant of that
muscle (``muslin``), and a gear-driven DC motor tracking a recorded stance
trajectory with a PD controller (``dcmot``).

The equation of motion is the same for all three::

    m * ydd = -m * g + F_leg    (ground contact, y <= rest length)
    m * ydd = -m * g            (flight, y > rest length)

Only the leg-force law and its controller differ between models.  Each model
exposes the right-hand side of its ODE plus accessors for the leg force, the
controller output (the recorded action channel) and the sensor channels, all
as pure functions of ``(t, state, ctx)`` where ``ctx`` carries the phase
information maintained by the integrator.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "HopperCommon",
    "MusFibParams",
    "MusLinParams",
    "DCMotParams",
    "StepContext",
    "ReferenceTrajectory",
    "HoppingModel",
    "MusFibModel",
    "MusLinModel",
    "DCMotModel",
    "fiber_force",
    "linear_fiber_force",
    "activation_derivative",
    "force_feedback_stimulation",
    "pd_voltage",
    "motor_current_derivative",
    "load_config",
    "make_model",
    "MODEL_NAMES",
]

MODEL_NAMES = ("musfib", "muslin", "dcmot")

# Eccentric slope constant of the classic Hill-type force-velocity law.
_ECC_SLOPE_FACTOR = 7.56


@dataclass(frozen=True)
class HopperCommon:
    """Point-mass hopper shared by all actuator models."""

    mass: float = 80.0            # kg
    gravity: float = 9.81         # m/s^2, magnitude; acts in -y
    rest_length: float = 1.0      # m, leg rest length l0 (contact iff y <= l0)

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.gravity <= 0:
            raise ValueError("gravity must be a positive magnitude")
        if self.rest_length <= 0:
            raise ValueError("rest_length must be positive")


@dataclass(frozen=True)
class MusFibParams:
    """Nonlinear muscle-fiber model parameters.

    Force law: F = f_max * FL(l) * FV(v), with a cubic-exponential
    force-length bell and a hyperbolic force-velocity relation whose
    eccentric branch saturates at ``fv_plateau`` times the isometric force.
    The reflex controller stimulates the muscle proportionally to the leg
    force a fixed delay ago.
    """

    f_max: float = 2500.0         # N, maximum isometric force
    l_opt: float = 0.9            # m, optimal fiber length
    fl_width: float = 0.45        # force-length bell width (relative to l_opt)
    fl_steepness: float = 30.0    # force-length bell steepness
    v_max: float = -3.5           # m/s, maximum shortening velocity (negative)
    fv_curvature: float = 1.5     # force-velocity curvature (concentric)
    fv_plateau: float = 1.5       # eccentric force plateau, multiples of f_max
    act_tau: float = 0.010        # s, activation time constant
    reflex_delay: float = 0.015   # s, force-feedback transport delay
    reflex_gain: float = 2.4 / 2500.0   # 1/N
    stim_base: float = 0.027      # baseline stimulation (value at touchdown)
    stim_min: float = 0.001
    stim_max: float = 1.0

    def __post_init__(self) -> None:
        if self.f_max <= 0:
            raise ValueError("f_max must be positive")
        if self.act_tau <= 0:
            raise ValueError("act_tau must be positive")
        if self.reflex_delay < 0:
            raise ValueError("reflex_delay must be non-negative")
        if not self.stim_min < self.stim_max:
            raise ValueError("stimulation bounds must be a non-empty interval")
        if self.v_max >= 0:
            raise ValueError("v_max is a shortening velocity and must be negative")


@dataclass(frozen=True)
class MusLinParams:
    """Linearized muscle model: no force-length dependence, linear
    force-velocity relation F = a * f_max * (1 - fv_slope * v)."""

    f_max: float = 2500.0
    fv_slope: float = 0.25        # s/m, slope of the linear force-velocity law
    act_tau: float = 0.010
    reflex_delay: float = 0.015
    reflex_gain: float = 0.8 / 2500.0
    stim_base: float = 0.19
    stim_min: float = 0.001
    stim_max: float = 1.0

    def __post_init__(self) -> None:
        if self.f_max <= 0:
            raise ValueError("f_max must be positive")
        if self.fv_slope <= 0:
            raise ValueError("fv_slope must be positive")
        if self.act_tau <= 0:
            raise ValueError("act_tau must be positive")
        if self.reflex_delay < 0:
            raise ValueError("reflex_delay must be non-negative")
        if not self.stim_min < self.stim_max:
            raise ValueError("stimulation bounds must be a non-empty interval")


@dataclass(frozen=True)
class DCMotParams:
    """Gear-driven DC motor with PD trajectory tracking.

    The motor is too small to carry the muscle hopper's mass, so the body
    mass is scaled down to keep accelerations comparable:
    ``body_mass = gear_ratio * nominal_torque / f_max_ref * base_body_mass``.
    Passing an explicit ``body_mass`` that disagrees with this identity by
    more than 1e-6 relative is rejected.
    """

    torque_const: float = 0.126   # N*m/A
    gear_ratio: float = 100.0     # ideal gear, rotational -> translational
    resistance: float = 7.19      # Ohm
    inductance: float = 0.0016    # H
    volt_max: float = 48.0        # V, armature voltage bound (symmetric)
    kp: float = 5000.0            # V/m
    kd: float = 500.0             # V*s/m
    nominal_torque: float = 0.212 # N*m
    f_max_ref: float = 2500.0     # N, muscle force scale used for mass scaling
    base_body_mass: float = 80.0  # kg, muscle hopper's body mass
    body_mass: float | None = None

    def __post_init__(self) -> None:
        if self.inductance <= 0:
            raise ValueError("inductance must be positive")
        if self.resistance <= 0:
            raise ValueError("resistance must be positive")
        if self.gear_ratio <= 0:
            raise ValueError("gear_ratio must be positive")
        if self.volt_max <= 0:
            raise ValueError("volt_max must be positive")
        derived = self.gear_ratio * self.nominal_torque / self.f_max_ref * self.base_body_mass
        if self.body_mass is None:
            object.__setattr__(self, "body_mass", derived)
        elif abs(self.body_mass - derived) > 1e-6 * derived:
            raise ValueError(
                f"body_mass {self.body_mass!r} violates the gear/torque scaling "
                f"identity (expected {derived!r})"
            )


@dataclass(frozen=True)
class StepContext:
    """Phase information the integrator hands to the model callbacks.

    ``delayed_force(t)`` returns the leg force at absolute time ``t``,
    interpolated from the history of accepted integration steps (zero for
    times before the start of the simulation).
    """

    contact: bool
    t_touchdown: float = math.nan     # absolute time of the current stance start
    delayed_force: Callable[[float], float] = lambda t: 0.0


# ---------------------------------------------------------------------------
# force laws and controllers
# ---------------------------------------------------------------------------

def fiber_force(l_m: float, v_m: float, p: MusFibParams) -> float:
    """Active fiber force [N] from length l_m [m] and velocity v_m [m/s].

    Product of a force-length bell centered on ``l_opt`` and a piecewise
    hyperbolic force-velocity factor.  Both branches of the velocity factor
    evaluate to 1 at v_m = 0.  Negative v_m (shortening here follows the leg
    convention v_m = dy/dt) raises the force toward the eccentric plateau;
    positive v_m lowers it, reaching zero at ``-v_max``.
    """
    rel = (l_m - p.l_opt) / (p.l_opt * p.fl_width)
    length_factor = math.exp(-p.fl_steepness * abs(rel) ** 3)
    if v_m > 0.0:
        velocity_factor = (p.v_max + v_m) / (p.v_max - p.fv_curvature * v_m)
    else:
        velocity_factor = p.fv_plateau + (p.fv_plateau - 1.0) * (p.v_max - v_m) / (
            -_ECC_SLOPE_FACTOR * p.fv_curvature * v_m - p.v_max
        )
    return p.f_max * length_factor * velocity_factor


def linear_fiber_force(v_m: float, activation: float, p: MusLinParams) -> float:
    """Leg force [N] of the linearized muscle: a * f_max * (1 - fv_slope * v)."""
    return activation * p.f_max * (1.0 - p.fv_slope * v_m)


def activation_derivative(activation: float, stimulation: float, tau: float) -> float:
    """First-order activation dynamics da/dt = (u - a) / tau."""
    return (stimulation - activation) / tau


def force_feedback_stimulation(force_delayed: float, p: MusFibParams | MusLinParams) -> float:
    """Reflex stimulation from the delayed leg force, clamped to its bounds."""
    u = p.reflex_gain * force_delayed + p.stim_base
    return min(max(u, p.stim_min), p.stim_max)


def pd_voltage(y: float, yd: float, y_ref: float, yd_ref: float, p: DCMotParams) -> float:
    """PD tracking voltage [V], clamped to the armature bound."""
    u = p.kp * (y_ref - y) + p.kd * (yd_ref - yd)
    return min(max(u, -p.volt_max), p.volt_max)


def motor_current_derivative(current: float, voltage: float, yd: float, p: DCMotParams) -> float:
    """Winding current dynamics dI/dt = (u - k_T*gamma*yd - R*I) / L."""
    return (voltage - p.torque_const * p.gear_ratio * yd - p.resistance * current) / p.inductance


# ---------------------------------------------------------------------------
# recorded stance reference (for the motor model)
# ---------------------------------------------------------------------------

class ReferenceTrajectory:
    """Stance trajectory sampled at 1 kHz, time-indexed from touchdown.

    Holds (tau, y, yd, ydd) arrays and evaluates C1 cubic Hermite
    interpolants (precomputed power-basis coefficients; this sits on the
    integration hot path).  Queries outside the recorded window are clamped
    to the endpoints.
    """

    def __init__(self, tau: np.ndarray, y: np.ndarray, yd: np.ndarray, ydd: np.ndarray):
        tau = np.asarray(tau, dtype=float)
        if tau.ndim != 1 or tau.size < 2:
            raise ValueError("reference needs at least two samples")
        if np.any(np.diff(tau) <= 0):
            raise ValueError("reference sample times must be strictly increasing")
        self.tau = tau
        self.y = np.asarray(y, dtype=float)
        self.yd = np.asarray(yd, dtype=float)
        self.ydd = np.asarray(ydd, dtype=float)
        if not (self.tau.shape == self.y.shape == self.yd.shape == self.ydd.shape):
            raise ValueError("reference channel lengths differ")
        self._tau_list = self.tau.tolist()
        self._coeff_y = self._hermite_coeffs(self.tau, self.y, self.yd)
        self._coeff_yd = self._hermite_coeffs(self.tau, self.yd, self.ydd)

    @staticmethod
    def _hermite_coeffs(tau, values, slopes):
        h = np.diff(tau)
        v0, v1 = values[:-1], values[1:]
        m0, m1 = slopes[:-1], slopes[1:]
        delta = (v1 - v0) / h
        c2 = (3.0 * delta - 2.0 * m0 - m1) / h
        c3 = (-2.0 * delta + m0 + m1) / (h * h)
        return np.column_stack([v0, m0, c2, c3]).tolist()

    @property
    def duration(self) -> float:
        return float(self.tau[-1] - self.tau[0])

    def value(self, t_stance: float) -> tuple[float, float]:
        """Reference (y, yd) at time-since-touchdown ``t_stance``."""
        ts = min(max(t_stance, self._tau_list[0]), self._tau_list[-1])
        i = bisect.bisect_right(self._tau_list, ts) - 1
        i = min(max(i, 0), len(self._coeff_y) - 1)
        dt = ts - self._tau_list[i]
        cy = self._coeff_y[i]
        cv = self._coeff_yd[i]
        return (cy[0] + dt * (cy[1] + dt * (cy[2] + dt * cy[3])),
                cv[0] + dt * (cv[1] + dt * (cv[2] + dt * cv[3])))

    def knot_after(self, t_stance: float) -> float:
        """Next interpolation knot strictly after ``t_stance`` (inf if none).

        The integrator aligns step boundaries with these knots since the
        Hermite interpolant has curvature jumps there.
        """
        idx = bisect.bisect_right(self._tau_list, t_stance)
        if idx >= len(self._tau_list):
            return math.inf
        return self._tau_list[idx]

    def to_csv(self, path: str | Path) -> None:
        lines = ["tau,y,yd,ydd"]
        for row in zip(self.tau, self.y, self.yd, self.ydd):
            lines.append(",".join(format(v, ".17g") for v in row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ReferenceTrajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 4:
            raise ValueError(f"reference file {path} must have 4 columns (tau,y,yd,ydd)")
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class HoppingModel:
    """Common interface: vertical hopper state with model-specific auxiliary.

    State layout is ``[y, yd, aux]`` where aux is the muscle activation for
    the muscle models and the winding current for the motor model.
    """

    name: str = ""
    action_kind: str = ""                  # "muscle" or "motor", sets normalization
    sensor_names: tuple[str, ...] = ()
    state_names: tuple[str, ...] = ()

    def __init__(self, common: HopperCommon):
        self.common = common

    # delay handling -------------------------------------------------------
    @property
    def history_delay(self) -> float:
        """Transport delay of the force feedback; 0 disables history lookups."""
        return 0.0

    # lifecycle ------------------------------------------------------------
    def initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def on_liftoff(self, x: np.ndarray) -> np.ndarray:
        """State adjustment applied at the stance->flight transition."""
        return x

    def clamp_state(self, x: np.ndarray) -> np.ndarray:
        """Numerical safety clamp applied after accepted steps."""
        return x

    # dynamics -------------------------------------------------------------
    def derivative(self, t: float, x: np.ndarray, ctx: StepContext) -> np.ndarray:
        raise NotImplementedError

    def leg_force(self, t: float, x: np.ndarray, ctx: StepContext) -> float:
        raise NotImplementedError

    def control(self, t: float, x: np.ndarray, ctx: StepContext) -> float:
        raise NotImplementedError

    def sensors(self, t: float, x: np.ndarray, ctx: StepContext) -> tuple[float, ...]:
        raise NotImplementedError

    def params_dict(self) -> dict:
        raise NotImplementedError


class _MuscleModel(HoppingModel):
    """Shared machinery of the two reflex-driven muscle models."""

    action_kind = "muscle"
    sensor_names = ("f_leg",)
    state_names = ("y", "yd", "activation")

    def __init__(self, common: HopperCommon, params: MusFibParams | MusLinParams):
        super().__init__(common)
        self.params = params

    @property
    def history_delay(self) -> float:
        return self.params.reflex_delay

    def initial_state(self) -> np.ndarray:
        # apex of the target periodic orbit, activation settled at baseline
        return np.array([1.070, 0.0, self.params.stim_base])

    def clamp_state(self, x: np.ndarray) -> np.ndarray:
        if x[2] < 0.0 or x[2] > 1.0:
            x = x.copy()
            x[2] = min(max(x[2], 0.0), 1.0)
        return x

    def control(self, t: float, x: np.ndarray, ctx: StepContext) -> float:
        f_delayed = ctx.delayed_force(t - self.params.reflex_delay)
        return force_feedback_stimulation(f_delayed, self.params)

    def _active_force(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def leg_force(self, t: float, x: np.ndarray, ctx: StepContext) -> float:
        if not ctx.contact:
            return 0.0
        return self._active_force(x)

    def sensors(self, t: float, x: np.ndarray, ctx: StepContext) -> tuple[float, ...]:
        # The sensor state is the force as the reflex arc delivers it, i.e.
        # delayed by the feedback transport time: the policy is then a
        # deterministic function of the sensor value, which is what the
        # reactive-loop analysis assumes of these controllers.
        return (ctx.delayed_force(t - self.params.reflex_delay),)

    def derivative(self, t: float, x: np.ndarray, ctx: StepContext) -> np.ndarray:
        y, yd, act = x
        u = self.control(t, x, ctx)
        if ctx.contact:
            ydd = -self.common.gravity + self._active_force(x) / self.common.mass
        else:
            ydd = -self.common.gravity
        return np.array([yd, ydd, activation_derivative(act, u, self.params.act_tau)])

    def params_dict(self) -> dict:
        out = {f.name: getattr(self.params, f.name) for f in fields(self.params)}
        out.update(mass=self.common.mass, gravity=self.common.gravity,
                   rest_length=self.common.rest_length)
        return out


class MusFibModel(_MuscleModel):
    """Hopper driven by the nonlinear muscle-fiber force law."""

    name = "musfib"
    params: MusFibParams

    def __init__(self, common: HopperCommon | None = None,
                 params: MusFibParams | None = None):
        super().__init__(common or HopperCommon(), params or MusFibParams())

    def _active_force(self, x: np.ndarray) -> float:
        # in contact the fiber follows the leg: l_m = y, v_m = yd
        return x[2] * fiber_force(x[0], x[1], self.params)


class MusLinModel(_MuscleModel):
    """Hopper driven by the linearized muscle force law."""

    name = "muslin"
    params: MusLinParams

    def __init__(self, common: HopperCommon | None = None,
                 params: MusLinParams | None = None):
        super().__init__(common or HopperCommon(), params or MusLinParams())

    def _active_force(self, x: np.ndarray) -> float:
        return linear_fiber_force(x[1], x[2], self.params)


class DCMotModel(HoppingModel):
    """Hopper driven by a PD-controlled DC motor tracking a recorded stance.

    The reference clock restarts at each touchdown.  In flight the armature
    voltage is zero and the winding current is held at zero (reset at
    liftoff), so the leg force vanishes exactly as required by the contact
    branch structure.
    """

    name = "dcmot"
    action_kind = "motor"
    sensor_names = ("y", "yd")
    state_names = ("y", "yd", "current")

    def __init__(self, reference: ReferenceTrajectory,
                 params: DCMotParams | None = None,
                 common: HopperCommon | None = None):
        params = params or DCMotParams()
        if common is None:
            common = HopperCommon(mass=params.body_mass)
        super().__init__(common)
        self.params = params
        self.reference = reference

    def initial_state(self) -> np.ndarray:
        return np.array([1.070, 0.0, 0.0])

    def on_liftoff(self, x: np.ndarray) -> np.ndarray:
        x = x.copy()
        x[2] = 0.0
        return x

    def control(self, t: float, x: np.ndarray, ctx: StepContext) -> float:
        if not ctx.contact:
            return 0.0
        y_ref, yd_ref = self.reference.value(t - ctx.t_touchdown)
        return pd_voltage(x[0], x[1], y_ref, yd_ref, self.params)

    def leg_force(self, t: float, x: np.ndarray, ctx: StepContext) -> float:
        if not ctx.contact:
            return 0.0
        return self.params.gear_ratio * self.params.torque_const * x[2]

    def sensors(self, t: float, x: np.ndarray, ctx: StepContext) -> tuple[float, ...]:
        return (float(x[0]), float(x[1]))

    def derivative(self, t: float, x: np.ndarray, ctx: StepContext) -> np.ndarray:
        y, yd, current = x
        if ctx.contact:
            u = self.control(t, x, ctx)
            didt = motor_current_derivative(current, u, yd, self.params)
            ydd = -self.common.gravity + self.leg_force(t, x, ctx) / self.common.mass
        else:
            didt = 0.0
            ydd = -self.common.gravity
        return np.array([yd, ydd, didt])

    def params_dict(self) -> dict:
        out = {f.name: getattr(self.params, f.name) for f in fields(self.params)}
        out.update(mass=self.common.mass, gravity=self.common.gravity,
                   rest_length=self.common.rest_length)
        return out


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_PARAM_TYPES = {"musfib": MusFibParams, "muslin": MusLinParams, "dcmot": DCMotParams}
_COMMON_FIELDS = {f.name for f in fields(HopperCommon)}


def load_config(path: str | Path) -> dict[str, float]:
    """Parse a ``key = value`` parameter file ('#' starts a comment)."""
    overrides: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            overrides[key] = float(value)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: invalid number {value!r} for {key!r}") from exc
    return overrides


def make_model(name: str, overrides: dict[str, float] | None = None,
               reference: ReferenceTrajectory | None = None) -> HoppingModel:
    """Build a model from its name and optional parameter overrides."""
    name = name.lower()
    if name not in _PARAM_TYPES:
        raise ValueError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    overrides = dict(overrides or {})
    param_type = _PARAM_TYPES[name]
    param_fields = {f.name for f in fields(param_type)}
    common_kwargs = {k: overrides.pop(k) for k in list(overrides) if k in _COMMON_FIELDS}
    param_kwargs = {k: overrides.pop(k) for k in list(overrides) if k in param_fields}
    if overrides:
        raise ValueError(f"unknown parameter(s) for {name}: {sorted(overrides)}")
    params = param_type(**param_kwargs)
    if name == "musfib":
        return MusFibModel(HopperCommon(**common_kwargs), params)
    if name == "muslin":
        return MusLinModel(HopperCommon(**common_kwargs), params)
    if reference is None:
        raise ValueError("dcmot requires a stance reference trajectory")
    common = None
    if common_kwargs:
        common_kwargs.setdefault("mass", params.body_mass)
        common = HopperCommon(**common_kwargs)
    return DCMotModel(reference, params, common)
