"""Integration driver: solver accuracy, events, sampling, serialization."""

import math

import numpy as np
import pytest

from hopmc.integrator import (
    ForceHistory,
    IntegrationError,
    IntegratorConfig,
    contact_segments,
    extract_stance_reference,
    integrate,
    load_trace,
)
from hopmc.models import HopperCommon, HoppingModel, MusFibModel, make_model


class _DecayModel(HoppingModel):
    """dx/dt = -x packed into the hopper state layout; never touches ground."""

    name = "decay"
    action_kind = "muscle"
    sensor_names = ()

    def __init__(self):
        super().__init__(HopperCommon(mass=1.0, gravity=9.81, rest_length=1e-3))

    def initial_state(self):
        return np.array([1.0, 0.0, 0.0])

    def derivative(self, t, x, ctx):
        return np.array([-x[0], 0.0, 0.0])

    def leg_force(self, t, x, ctx):
        return 0.0

    def control(self, t, x, ctx):
        return 0.0

    def sensors(self, t, x, ctx):
        return ()

    def params_dict(self):
        return {}


class _BlowUpModel(_DecayModel):
    name = "blowup"

    def derivative(self, t, x, ctx):
        if t > 0.1:
            return np.array([math.nan, 0.0, 0.0])
        return np.array([0.0, 0.0, 0.0])


class TestSolverAccuracy:
    def test_exponential_decay(self):
        cfg = IntegratorConfig(t_end=1.0)
        trace = integrate(_DecayModel(), cfg)
        assert abs(trace.y[-1] - math.exp(-1.0)) < 1e-10

    def test_error_tracks_tolerance(self):
        errs = []
        for tol in (1e-6, 1e-9, 1e-12):
            # max_step large enough that the tolerance governs the step size
            cfg = IntegratorConfig(abs_tol=tol, rel_tol=tol, t_end=1.0, max_step=0.5)
            trace = integrate(_DecayModel(), cfg)
            errs.append(abs(trace.y[-1] - math.exp(-1.0)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[0] / errs[1] > 30.0

    def test_sample_grid(self):
        trace = integrate(_DecayModel(), IntegratorConfig(t_end=0.25))
        assert len(trace) == 251
        np.testing.assert_allclose(np.diff(trace.t), 1e-3, rtol=1e-12)
        assert trace.t[0] == 0.0
        assert trace.t[-1] == pytest.approx(0.25, abs=1e-12)


class TestAborts:
    def test_non_finite_derivative(self):
        with pytest.raises(IntegrationError):
            integrate(_BlowUpModel(), IntegratorConfig(t_end=1.0))


class TestBallisticFlight:
    def test_closed_form_before_first_touchdown(self):
        # pure free fall from the 1.070 m apex until y reaches the rest length
        trace = integrate(make_model("musfib"), IntegratorConfig(t_end=0.11))
        expected = 1.070 - 0.5 * 9.81 * trace.t ** 2
        assert np.max(np.abs(trace.y - expected)) < 1e-8
        assert not trace.contact.any()
        assert np.all(trace.ydd == -9.81)

    def test_touchdown_speed_from_apex(self, pipeline):
        ev = pipeline.traces["musfib"].events[0]
        assert ev.kind == "touchdown"
        assert ev.yd == pytest.approx(-math.sqrt(2 * 9.81 * 0.07), abs=1e-6)


class TestTraceInvariants:
    @pytest.mark.parametrize("name", ["musfib", "muslin", "dcmot"])
    def test_event_localization(self, pipeline, name):
        trace = pipeline.traces[name]
        assert len(trace.events) >= 20
        for ev in trace.events:
            assert abs(ev.y - 1.0) < 1e-9

    @pytest.mark.parametrize("name", ["musfib", "muslin", "dcmot"])
    def test_flight_energy_conserved(self, pipeline, name):
        trace = pipeline.traces[name]
        checked = 0
        for a, b, in_contact in contact_segments(trace.contact):
            if in_contact or b - a < 5:
                continue
            energy = 0.5 * trace.yd[a:b] ** 2 + 9.81 * trace.y[a:b]
            assert np.max(np.abs(energy - energy[0])) / energy[0] < 1e-6
            checked += 1
        assert checked >= 5

    @pytest.mark.parametrize("name", ["musfib", "muslin", "dcmot"])
    def test_flight_acceleration_is_gravity(self, pipeline, name):
        trace = pipeline.traces[name]
        assert np.all(trace.ydd[~trace.contact] == -9.81)

    def test_contact_flag_matches_height(self, pipeline):
        for trace in pipeline.traces.values():
            clear = np.abs(trace.y - 1.0) > 1e-6
            np.testing.assert_array_equal(trace.contact[clear], trace.y[clear] < 1.0)

    def test_acceleration_channel_is_velocity_derivative(self, pipeline):
        # central difference of yd against the recorded ydd, away from events
        # and away from the force-velocity branch switch at yd = 0 (the leg
        # force has a genuine derivative kink there)
        trace = pipeline.traces["musfib"]
        inner = np.zeros(len(trace), dtype=bool)
        inner[1:-1] = (trace.contact[:-2] == trace.contact[1:-1]) & \
                      (trace.contact[2:] == trace.contact[1:-1])
        idx = np.nonzero(inner)[0][1:-1]
        idx = idx[trace.yd[idx - 1] * trace.yd[idx + 1] > 0]
        err = np.abs((trace.yd[idx + 1] - trace.yd[idx - 1]) / 2e-3 - trace.ydd[idx])
        assert np.median(err) < 1e-3
        assert err.max() < 0.05

    def test_sample_count_full_run(self, pipeline):
        for trace in pipeline.traces.values():
            assert len(trace) == 8001

    def test_muscle_action_is_reflex_of_sensor(self, pipeline):
        # action = clamp(gain * sensor + baseline) exactly, per sample
        for name, gain, base in (("musfib", 2.4 / 2500, 0.027),
                                 ("muslin", 0.8 / 2500, 0.19)):
            trace = pipeline.traces[name]
            expected = np.clip(gain * trace.sensors[:, 0] + base, 0.001, 1.0)
            np.testing.assert_allclose(trace.action, expected, atol=1e-12)


class TestCsvRoundTrip:
    def test_save_and_load(self, pipeline, tmp_path):
        trace = pipeline.traces["dcmot"]
        path = trace.save(tmp_path / "trace_dcmot.csv")
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == "t,y,yd,ydd,s1,s2,a,contact"
        back = load_trace(path)
        assert back.model == "dcmot"
        assert back.action_kind == "motor"
        assert back.sensor_names == ("y", "yd")
        for field in ("t", "y", "yd", "ydd", "action"):
            np.testing.assert_array_equal(getattr(back, field), getattr(trace, field))
        np.testing.assert_array_equal(back.sensors, trace.sensors)
        np.testing.assert_array_equal(back.contact, trace.contact)
        assert len(back.events) == len(trace.events)

    def test_missing_sidecar_rejected(self, pipeline, tmp_path):
        trace = pipeline.traces["musfib"]
        path = trace.save(tmp_path / "t.csv")
        (tmp_path / "t.meta.json").unlink()
        with pytest.raises(FileNotFoundError):
            load_trace(path)

    def test_deterministic_bytes(self, tmp_path):
        cfg = IntegratorConfig(t_end=1.0)
        p1 = integrate(MusFibModel(), cfg).save(tmp_path / "a.csv")
        p2 = integrate(MusFibModel(), cfg).save(tmp_path / "b.csv")
        assert p1.read_bytes() == p2.read_bytes()


class TestForceHistory:
    def test_empty_and_before_history(self):
        h = ForceHistory(0.015)
        assert h.at(0.0) == 0.0
        h.append(0.0, 3.0)
        assert h.at(-1.0) == 0.0
        assert h.at(0.0) == 3.0
        assert h.at(5.0) == 3.0     # flat beyond the last record

    def test_hermite_reproduces_cubic(self):
        # t^2 sampled with exact slopes is inside the interpolation family
        h = ForceHistory()
        for t in (0.0, 0.4, 1.0):
            h.append(t, t * t, 2 * t)
        for tq in (0.1, 0.2, 0.5, 0.77):
            assert h.at(tq) == pytest.approx(tq * tq, abs=1e-15)

    def test_jump_is_right_continuous_and_queued(self):
        h = ForceHistory(0.015)
        h.append(0.0, 0.0)
        h.append(1.0, 0.0)
        h.append(1.0, 50.0)   # touchdown jump
        h.append(1.1, 60.0, 100.0)
        assert h.at(1.0) == 50.0
        assert h.at(1.0 - 1e-9) == pytest.approx(0.0, abs=1e-6)
        assert h.next_break_after(0.5) == pytest.approx(1.015)

    def test_breaks_consumed_in_order(self):
        h = ForceHistory(0.01)
        h.add_breakpoint(1.0)
        h.add_breakpoint(2.0)
        assert h.next_break_after(0.0) == 1.0
        assert h.next_break_after(1.5) == 2.0
        assert h.next_break_after(2.5) == math.inf

    def test_monotonicity_enforced(self):
        h = ForceHistory()
        h.append(1.0, 0.0)
        with pytest.raises(ValueError):
            h.append(0.5, 0.0)


class TestStanceReference:
    def test_extracted_from_last_complete_stance(self, pipeline):
        trace = pipeline.traces["musfib"]
        ref = pipeline.reference
        touchdowns = [e for e in trace.events if e.kind == "touchdown"]
        liftoffs = [e for e in trace.events if e.kind == "liftoff"]
        last_td = touchdowns[-1] if liftoffs[-1].t > touchdowns[-1].t else touchdowns[-2]
        last_lo = [e for e in liftoffs if e.t > last_td.t][0]
        assert ref.duration == pytest.approx(last_lo.t - last_td.t, abs=1e-12)

    def test_boundary_states(self, pipeline):
        ref = pipeline.reference
        assert ref.y[0] == pytest.approx(1.0, abs=1e-9)
        assert ref.y[-1] == pytest.approx(1.0, abs=1e-9)
        assert ref.yd[0] < -1.0
        assert ref.yd[-1] > 1.0
        assert ref.y.min() > 0.8

    def test_duration_physiologic(self, pipeline):
        assert 0.2 <= pipeline.reference.duration <= 0.6

    def test_uniform_millisecond_grid(self, pipeline):
        tau = pipeline.reference.tau
        assert tau[0] == 0.0
        np.testing.assert_allclose(np.diff(tau)[:-1], 1e-3, rtol=1e-9)

    def test_needs_two_stances(self):
        trace = integrate(make_model("musfib"), IntegratorConfig(t_end=0.5))
        with pytest.raises(ValueError, match="stance"):
            extract_stance_reference(trace)


class TestContactSegments:
    def test_pattern(self):
        segs = contact_segments(np.array([False, False, True, True, False]))
        assert segs == [(0, 2, False), (2, 4, True), (4, 5, False)]

    def test_empty(self):
        assert contact_segments(np.array([], dtype=bool)) == []

    def test_single_run(self):
        assert contact_segments(np.ones(4, dtype=bool)) == [(0, 4, True)]
