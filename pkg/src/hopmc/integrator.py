"""Adaptive Dormand-Prince integration of the hopping models.

Drives scipy's RK45 stepper (the classic 4(5) Dormand-Prince pair with
quartic dense output) segment by segment:

* contact transitions (y crossing the leg rest length) are localized by
  bisection on the dense output and become hard segment boundaries, so the
  discontinuous leg force is never stepped across;
* the delayed-force history (a ring buffer over accepted steps with C1
  Hermite interpolation) re-delivers each contact-force jump after the
  transport delay; those echo times are also hard segment boundaries, since
  stepping across a discontinuity at 1e-12 tolerances thrashes the step-size
  controller;
* output samples on the uniform 1 kHz grid are evaluated from the dense
  output, never by restarting the integration.

The recorded acceleration channel re-evaluates the right-hand side at the
sample point; it is not a finite difference of the velocity channel.
"""

from __future__ import annotations

import bisect
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import RK45
from scipy.interpolate import CubicHermiteSpline

from .models import HoppingModel, ReferenceTrajectory, StepContext

__all__ = [
    "IntegratorConfig",
    "Trace",
    "TraceEvent",
    "ForceHistory",
    "IntegrationError",
    "integrate",
    "extract_stance_reference",
    "contact_segments",
    "load_trace",
]

_EVENT_TOL = 1e-10        # |y - l0| at refined crossings [m]
_TIME_EPS = 1e-12


class IntegrationError(RuntimeError):
    """Integration aborted; the message carries the last valid time."""


@dataclass(frozen=True)
class IntegratorConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    t_end: float = 8.0
    sample_rate: float = 1000.0
    max_step: float = 0.01
    initial_step: float | None = None

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass(frozen=True)
class TraceEvent:
    """Localized contact transition with the states on both sides."""

    t: float
    kind: str                 # "touchdown" or "liftoff"
    y: float
    yd: float
    ydd_before: float
    ydd_after: float

    def to_dict(self) -> dict:
        return {"t": self.t, "kind": self.kind, "y": self.y, "yd": self.yd,
                "ydd_before": self.ydd_before, "ydd_after": self.ydd_after}

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        return cls(d["t"], d["kind"], d["y"], d["yd"], d["ydd_before"], d["ydd_after"])


@dataclass
class Trace:
    """Uniformly sampled simulation record (1 kHz by default).

    ``sensors`` has one column per sensor channel; channel names and the
    action normalization kind travel with the trace so the discretization
    stage can pool domains across models by physical variable.
    """

    model: str
    action_kind: str
    sensor_names: tuple[str, ...]
    t: np.ndarray
    y: np.ndarray
    yd: np.ndarray
    ydd: np.ndarray
    sensors: np.ndarray
    action: np.ndarray
    contact: np.ndarray
    events: list[TraceEvent] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def max_height(self, after: float = 0.0) -> float:
        return float(self.y[self.t >= after].max())

    # -- serialization ----------------------------------------------------
    def csv_header(self) -> str:
        cols = ["t", "y", "yd", "ydd",
                *(f"s{i + 1}" for i in range(self.sensors.shape[1])), "a", "contact"]
        return ",".join(cols)

    def save(self, path: str | Path) -> Path:
        """Write the CSV plus a .meta.json sidecar; returns the CSV path."""
        path = Path(path)
        lines = [self.csv_header()]
        for i in range(len(self)):
            cells = [format(v, ".17g") for v in
                     (self.t[i], self.y[i], self.yd[i], self.ydd[i],
                      *self.sensors[i], self.action[i])]
            cells.append("1" if self.contact[i] else "0")
            lines.append(",".join(cells))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar = {
            "model": self.model,
            "action_kind": self.action_kind,
            "sensor_names": list(self.sensor_names),
            "events": [e.to_dict() for e in self.events],
            "meta": self.meta,
        }
        meta_path(path).write_text(
            json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path


def meta_path(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".meta.json")


def load_trace(path: str | Path) -> Trace:
    """Read a trace CSV and its .meta.json sidecar."""
    path = Path(path)
    side = meta_path(path)
    if not side.exists():
        raise FileNotFoundError(f"missing metadata sidecar {side}")
    sidecar = json.loads(side.read_text(encoding="utf-8"))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_sensors = len(sidecar["sensor_names"])
    if data.shape[1] != 6 + n_sensors:
        raise ValueError(f"{path}: expected {6 + n_sensors} columns, found {data.shape[1]}")
    return Trace(
        model=sidecar["model"],
        action_kind=sidecar["action_kind"],
        sensor_names=tuple(sidecar["sensor_names"]),
        t=data[:, 0],
        y=data[:, 1],
        yd=data[:, 2],
        ydd=data[:, 3],
        sensors=data[:, 4:4 + n_sensors],
        action=data[:, 4 + n_sensors],
        contact=data[:, 5 + n_sensors] != 0.0,
        events=[TraceEvent.from_dict(d) for d in sidecar["events"]],
        meta=sidecar["meta"],
    )


class ForceHistory:
    """Leg force at accepted integration steps, with C1 interpolation.

    Stores (time, force, force rate) triples and interpolates delayed
    lookups with a cubic Hermite, so the reconstructed force is as smooth
    as the underlying signal between contact transitions.  (A piecewise
    linear reconstruction puts a slope kink at every past step; at 1e-12
    tolerances each kink caps the step size at the past step size, which
    locks the integration into ever-smaller steps.)

    Duplicate timestamps encode the force jump at contact transitions; the
    jump, shifted by the transport delay, is queued as a future hard step
    boundary, as are its higher-order echoes registered by the integrator.
    """

    def __init__(self, delay: float = 0.0):
        self.delay = float(delay)
        self.ts: list[float] = []
        self.fs: list[float] = []
        self.dfs: list[float] = []
        self._breaks: deque[float] = deque()

    def append(self, t: float, f: float, df: float = 0.0) -> None:
        if self.ts and t < self.ts[-1] - _TIME_EPS:
            raise ValueError(f"history time went backwards: {t} < {self.ts[-1]}")
        if self.ts and t - self.ts[-1] <= 0.0:
            self.add_breakpoint(t + self.delay)   # value jump at an event
        self.ts.append(float(t))
        self.fs.append(float(f))
        self.dfs.append(float(df))

    def add_breakpoint(self, t: float) -> None:
        """Queue a future time the integrator must not step across."""
        if self.delay <= 0.0:
            return
        if not self._breaks or t > self._breaks[-1] + _TIME_EPS:
            self._breaks.append(float(t))

    def at(self, t: float) -> float:
        """Force at time ``t``; zero before the recorded history."""
        ts = self.ts
        if not ts or t < ts[0]:
            return 0.0
        i = bisect.bisect_right(ts, t) - 1
        if i >= len(ts) - 1:
            return self.fs[-1]
        t0, t1 = ts[i], ts[i + 1]
        if t1 <= t0:
            return self.fs[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        u = 1.0 - s
        return (self.fs[i] * (1.0 + 2.0 * s) * u * u
                + self.dfs[i] * h * s * u * u
                + self.fs[i + 1] * s * s * (3.0 - 2.0 * s)
                - self.dfs[i + 1] * h * s * s * u)

    def next_break_after(self, t: float) -> float:
        while self._breaks and self._breaks[0] <= t + _TIME_EPS:
            self._breaks.popleft()
        return self._breaks[0] if self._breaks else math.inf


def _force_rate(model: HoppingModel, t: float, x: np.ndarray, ctx: StepContext,
                f0: float) -> float:
    """d/dt of the leg force along the trajectory (Euler probe).

    Only needed in contact (the leg force is identically zero in flight) and
    only to first-order accuracy: it parameterizes the Hermite history whose
    interpolation error is already quadratically small in the step size.
    """
    if not ctx.contact:
        return 0.0
    eps = 1e-7
    x1 = x + eps * model.derivative(t, x, ctx)
    return (model.leg_force(t + eps, x1, ctx) - f0) / eps


def _bisect_crossing(dense, l0: float, t_lo: float, t_hi: float) -> float:
    """Refine the y = l0 crossing inside [t_lo, t_hi] to within 1e-10 m."""
    g_lo = float(dense(t_lo)[0]) - l0
    for _ in range(200):
        t_mid = 0.5 * (t_lo + t_hi)
        g_mid = float(dense(t_mid)[0]) - l0
        if abs(g_mid) < _EVENT_TOL:
            return t_mid
        if (g_mid > 0.0) == (g_lo > 0.0):
            t_lo, g_lo = t_mid, g_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)


class _Recorder:
    """Fills the uniform-grid output arrays from dense-output segments."""

    def __init__(self, model: HoppingModel, cfg: IntegratorConfig):
        self.model = model
        n = int(math.floor(cfg.t_end * cfg.sample_rate + 1e-9)) + 1
        self.n = n
        self.rate = cfg.sample_rate
        self.t = np.arange(n) / cfg.sample_rate
        self.y = np.empty(n)
        self.yd = np.empty(n)
        self.ydd = np.empty(n)
        self.sensors = np.empty((n, len(model.sensor_names)))
        self.action = np.empty(n)
        self.contact = np.empty(n, dtype=bool)
        self.next_idx = 0

    def record_state(self, t: float, x: np.ndarray, ctx: StepContext) -> None:
        i = self.next_idx
        x = self.model.clamp_state(np.asarray(x, dtype=float))
        self.y[i] = x[0]
        self.yd[i] = x[1]
        self.ydd[i] = self.model.derivative(t, x, ctx)[1]
        self.sensors[i] = self.model.sensors(t, x, ctx)
        self.action[i] = self.model.control(t, x, ctx)
        self.contact[i] = ctx.contact
        self.next_idx += 1

    def record_span(self, dense, t_lo: float, t_hi: float, ctx: StepContext) -> None:
        """Emit all pending grid samples with t_lo < t_k <= t_hi."""
        while self.next_idx < self.n:
            tk = self.t[self.next_idx]
            if tk > t_hi + _TIME_EPS:
                break
            self.record_state(min(tk, t_hi), dense(min(tk, t_hi)), ctx)


def integrate(model: HoppingModel, cfg: IntegratorConfig | None = None) -> Trace:
    """Simulate a hopping model and return its uniformly sampled trace.

    Raises :class:`IntegrationError` on step-size underflow or non-finite
    state, with the last valid time in the message.
    """
    cfg = cfg or IntegratorConfig()
    l0 = model.common.rest_length
    delay = model.history_delay
    max_step = cfg.max_step
    if delay > 0.0:
        # step stages must only query fully recorded history
        max_step = min(max_step, 0.9 * delay)

    history = ForceHistory(delay)
    rec = _Recorder(model, cfg)
    events: list[TraceEvent] = []

    t = 0.0
    x = np.asarray(model.initial_state(), dtype=float)
    contact = bool(x[0] <= l0)
    t_td = 0.0 if contact else math.nan
    ctx = StepContext(contact, t_td, history.at)

    f0 = model.leg_force(t, x, ctx)
    history.append(t, f0, _force_rate(model, t, x, ctx, f0))
    rec.record_state(t, x, ctx)

    prev_h: float | None = cfg.initial_step
    while t < cfg.t_end - _TIME_EPS:
        t_stop = cfg.t_end
        if delay > 0.0:
            t_stop = min(t_stop, history.next_break_after(t))
        t_model = _model_breakpoint(model, t, ctx)
        t_stop = min(t_stop, t_model)
        if t_stop <= t + _TIME_EPS:
            t_stop = min(cfg.t_end, t + _TIME_EPS * 10)

        first = None
        if prev_h is not None:
            first = min(max(prev_h, 1e-14), t_stop - t)
        solver = RK45(lambda tt, xx, _ctx=ctx: model.derivative(tt, xx, _ctx),
                      t, x, t_bound=t_stop, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                      max_step=max_step, first_step=first)

        g_prev = float(x[0]) - l0
        event_hit = False
        while solver.status == "running":
            solver.step()
            if solver.status == "failed":
                raise IntegrationError(
                    f"step size underflow at t = {solver.t:.9f} s ({model.name})")
            if not np.all(np.isfinite(solver.y)):
                raise IntegrationError(
                    f"non-finite state at t = {solver.t:.9f} s ({model.name})")
            prev_h = solver.t - solver.t_old
            dense = solver.dense_output()
            g_new = float(solver.y[0]) - l0

            crossed = (not contact and g_prev > 0.0 and g_new <= 0.0) or \
                      (contact and g_prev < 0.0 and g_new >= 0.0)
            if crossed:
                t_ev = solver.t if g_new == 0.0 else \
                    _bisect_crossing(dense, l0, solver.t_old, solver.t)
                rec.record_span(dense, solver.t_old, t_ev, ctx)
                x_ev = model.clamp_state(np.asarray(dense(t_ev), dtype=float))
                ydd_before = float(model.derivative(t_ev, x_ev, ctx)[1])
                f_ev = model.leg_force(t_ev, x_ev, ctx)
                history.append(t_ev, f_ev, _force_rate(model, t_ev, x_ev, ctx, f_ev))
                # switch phase
                kind = "liftoff" if contact else "touchdown"
                contact = not contact
                if kind == "liftoff":
                    x_ev = model.on_liftoff(x_ev)
                    t_td = math.nan
                else:
                    t_td = t_ev
                ctx = StepContext(contact, t_td, history.at)
                ydd_after = float(model.derivative(t_ev, x_ev, ctx)[1])
                f_ev = model.leg_force(t_ev, x_ev, ctx)
                history.append(t_ev, f_ev, _force_rate(model, t_ev, x_ev, ctx, f_ev))
                # the force jump reaches the reflex delayed, as do the kinks
                # it imprints on the activation and force; stop on each echo
                for k in (1, 2, 3):
                    history.add_breakpoint(t_ev + k * delay)
                events.append(TraceEvent(t_ev, kind, float(x_ev[0]), float(x_ev[1]),
                                         ydd_before, ydd_after))
                t, x = t_ev, x_ev
                event_hit = True
                break

            rec.record_span(dense, solver.t_old, solver.t, ctx)
            x_acc = model.clamp_state(solver.y)
            if x_acc is not solver.y:
                solver.y = x_acc
                solver.f = solver.fun(solver.t, x_acc)
            f_acc = model.leg_force(solver.t, x_acc, ctx)
            history.append(solver.t, f_acc,
                           _force_rate(model, solver.t, x_acc, ctx, f_acc))
            g_prev = g_new

        if not event_hit:
            t, x = solver.t, model.clamp_state(solver.y)

    if rec.next_idx != rec.n:
        raise IntegrationError(
            f"sampling incomplete: {rec.next_idx}/{rec.n} samples at t = {t:.9f} s")

    transient = min(2.0, 0.25 * cfg.t_end)
    trace = Trace(
        model=model.name,
        action_kind=model.action_kind,
        sensor_names=model.sensor_names,
        t=rec.t, y=rec.y, yd=rec.yd, ydd=rec.ydd,
        sensors=rec.sensors, action=rec.action, contact=rec.contact,
        events=events,
        meta={
            "params": model.params_dict(),
            "abs_tol": cfg.abs_tol,
            "rel_tol": cfg.rel_tol,
            "max_step": cfg.max_step,
            "t_end": cfg.t_end,
            "sample_rate": cfg.sample_rate,
            "transient": transient,
            "max_height_post_transient": float(rec.y[rec.t >= transient].max()),
        },
    )
    return trace


def _model_breakpoint(model: HoppingModel, t: float, ctx: StepContext) -> float:
    """Next model-imposed step boundary (reference-spline knots for dcmot)."""
    reference = getattr(model, "reference", None)
    if reference is None or not ctx.contact:
        return math.inf
    return ctx.t_touchdown + reference.knot_after(t - ctx.t_touchdown + _TIME_EPS)


def contact_segments(contact: np.ndarray) -> list[tuple[int, int, bool]]:
    """Runs of equal contact flag as (start, stop_exclusive, flag) triples."""
    contact = np.asarray(contact, dtype=bool)
    if contact.size == 0:
        return []
    flips = np.nonzero(np.diff(contact))[0] + 1
    bounds = [0, *flips.tolist(), contact.size]
    return [(bounds[i], bounds[i + 1], bool(contact[bounds[i]]))
            for i in range(len(bounds) - 1)]


def extract_stance_reference(trace: Trace) -> ReferenceTrajectory:
    """Build the 1 kHz stance reference from the last complete stance phase.

    A complete stance is a touchdown event followed by a liftoff event.  The
    last one of a converged run is the periodic stance.  The segment is
    re-sampled onto a uniform millisecond grid anchored at the touchdown,
    using C1 Hermite interpolation through the trace samples and the exact
    event states at both ends.
    """
    stances: list[tuple[TraceEvent, TraceEvent]] = []
    pending_td: TraceEvent | None = None
    for ev in trace.events:
        if ev.kind == "touchdown":
            pending_td = ev
        elif ev.kind == "liftoff" and pending_td is not None:
            stances.append((pending_td, ev))
            pending_td = None
    if len(stances) < 2:
        raise ValueError(
            f"need at least 2 complete stance phases, found {len(stances)}")
    td, lo = stances[-1]

    inside = (trace.t > td.t) & (trace.t < lo.t)
    t_rel = np.concatenate(([0.0], trace.t[inside] - td.t, [lo.t - td.t]))
    y = np.concatenate(([td.y], trace.y[inside], [lo.y]))
    yd = np.concatenate(([td.yd], trace.yd[inside], [lo.yd]))
    # stance-side accelerations at the boundaries
    ydd = np.concatenate(([td.ydd_after], trace.ydd[inside], [lo.ydd_before]))

    y_spline = CubicHermiteSpline(t_rel, y, yd)
    yd_spline = CubicHermiteSpline(t_rel, yd, ydd)

    duration = float(lo.t - td.t)
    grid = np.arange(int(math.floor(duration * 1000.0 + 1e-9)) + 1) / 1000.0
    if duration - grid[-1] > 1e-9:
        grid = np.append(grid, duration)
    return ReferenceTrajectory(
        grid, y_spline(grid), yd_spline(grid), yd_spline.derivative()(grid))
