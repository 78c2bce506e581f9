import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltcforge.analysis import DEFAULT_T_CALC, SyncBudgetInput, sync_budget
from ltcforge.bmc_codec import demodulate
from ltcforge.ltc_core import FrameRate, Timecode, encode_word
from ltcforge.timer_sim import (
    OscillatorModel,
    SimConfig,
    TimerConfig,
    first_exceedance,
    frame_start_errors,
    frame_ticks,
    measure_frame_deviation,
    simulate,
    trace_to_waveform,
)

F = 16_000_000
TICK_NS = 62.5


def run(fps, ppm=0.0, duration=2.0, until=0.0, t_calc=0.0, record=True, **kw):
    return simulate(
        TimerConfig(F, fps),
        OscillatorModel(ppm),
        SimConfig(duration, timepulse_available_until=until, t_calc=t_calc, record_edges=record, **kw),
    )


class TestFrameTicks:
    @pytest.mark.parametrize(
        "fps,ticks,t_frame_ms,residual_ns",
        [(24, 666_666, 41.666625, 41.6667), (25, 640_000, 40.0, 0.0), (30, 533_333, 33.3333125, 20.8333)],
    )
    def test_discretization_table(self, fps, ticks, t_frame_ms, residual_ns):
        got_ticks, residual = frame_ticks(fps, F)
        assert got_ticks == ticks
        assert float(Fraction(got_ticks, F)) * 1e3 == pytest.approx(t_frame_ms, abs=1e-10)
        assert float(residual) * 1e9 == pytest.approx(residual_ns, abs=1e-3)

    def test_residual_exact_fractions(self):
        # 1/fps - floor(f/fps)/f computed with integers only
        for fps in (24, 25, 30):
            assert frame_ticks(fps, F)[1] == Fraction(F % fps, fps * F)

    def test_tick_period(self):
        assert float(TimerConfig().tick_period) * 1e9 == TICK_NS

    @given(st.integers(1_000_000, 100_000_000), st.sampled_from([24, 25, 30]))
    def test_residual_below_one_tick(self, f, fps):
        _, residual = frame_ticks(fps, f)
        assert 0 <= residual < Fraction(1, f)


class TestFreeRunning:
    def test_zero_ppm_25fps_per_frame_latency(self):
        t_calc = DEFAULT_T_CALC
        tr = run(25, duration=10.0, t_calc=t_calc, per_frame=True, record=False)
        k = np.arange(len(tr.frame_times_ns))
        assert len(k) == 250
        np.testing.assert_allclose(tr.frame_times_ns, k * (40e6 + t_calc * 1e9), atol=1e-6)

    def test_zero_ppm_25fps_no_drift(self):
        tr = run(25, duration=10.0, record=False)
        assert np.all(measure_frame_deviation(tr) == 0)

    def test_24fps_slope(self):
        dev = measure_frame_deviation(run(24, duration=10.0, record=False))
        k = np.arange(dev.size)
        np.testing.assert_allclose(dev, -k * (1e9 / 24 - 666_666 * TICK_NS), atol=1e-3)
        assert dev[1] == pytest.approx(-41.6667, abs=1e-3)

    def test_30fps_slope(self):
        dev = measure_frame_deviation(run(30, duration=5.0, record=False))
        assert np.diff(dev) == pytest.approx(np.full(dev.size - 1, -20.8333), abs=1e-3)

    @pytest.mark.parametrize("fps", [24, 25, 30])
    @pytest.mark.parametrize("ppm", [-30.0, 0.0, 12.5, 30.0])
    @pytest.mark.parametrize("per_frame", [False, True])
    def test_drift_is_affine(self, fps, ppm, per_frame):
        t_calc = DEFAULT_T_CALC
        dev = measure_frame_deviation(run(fps, ppm, 20.0, t_calc=t_calc, per_frame=per_frame, record=False))
        k = np.arange(dev.size, dtype=float)
        ticks = F // fps
        # analytic per-frame slope: true frame length minus the nominal period
        slope = ticks * 1e9 / (F * (1 + ppm * 1e-6)) - 1e9 / fps + (t_calc * 1e9 if per_frame else 0.0)
        fit = np.polyfit(k, dev, 1)
        resid = dev - np.polyval(fit, k)
        total = dev - dev.mean()
        r2 = 1 - (resid @ resid) / (total @ total) if total @ total > 0 else 1.0
        assert r2 > 0.999999
        assert fit[0] == pytest.approx(slope, abs=1e-6)
        assert np.max(np.abs(dev - slope * k)) <= TICK_NS

    def test_sign_fast_oscillator_starts_early(self):
        errs = frame_start_errors(run(25, 30.0, 2.0, record=False))
        assert errs[-1] < 0

    @settings(max_examples=25, deadline=None)
    @given(
        st.sampled_from([24, 25, 30]),
        st.floats(0, 100),
        st.floats(0, 100),
        st.integers(1, 119),
    )
    def test_magnitude_grows_with_ppm(self, fps, a, b, k):
        lo, hi = sorted((a, b))
        e_lo = frame_start_errors(run(fps, lo, 5.0, record=False))[k]
        e_hi = frame_start_errors(run(fps, hi, 5.0, record=False))[k]
        assert abs(e_hi) >= abs(e_lo) - 1e-6

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0, 100), st.floats(0, 100), st.integers(1, 124))
    def test_magnitude_symmetric_without_residual(self, a, b, k):
        lo, hi = sorted((a, b))
        for sign in (1, -1):
            e_lo = frame_start_errors(run(25, sign * lo, 5.0, record=False))[k]
            e_hi = frame_start_errors(run(25, sign * hi, 5.0, record=False))[k]
            assert abs(e_hi) >= abs(e_lo) - 1e-6


class TestRealignment:
    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from([24, 25, 30]), st.floats(0, 30), st.floats(0, 200e-6))
    def test_anchor_after_pulse(self, fps, ppm, t_calc):
        tr = run(fps, ppm, 5.0, until=math.inf, t_calc=t_calc, record=False)
        pulses = np.arange(len(tr.anchors_ns)) * 1e9
        err = tr.anchors_ns - pulses
        assert np.all(err >= t_calc * 1e9 - 1e-6)
        assert np.all(err <= t_calc * 1e9 + TICK_NS + 1e-6)

    @settings(max_examples=10, deadline=None)
    @given(st.sampled_from([24, 25, 30]), st.floats(-30, 0))
    def test_anchor_after_pulse_slow_oscillator(self, fps, ppm):
        tr = run(fps, ppm, 5.0, until=math.inf, t_calc=DEFAULT_T_CALC, record=False)
        err = tr.anchors_ns - np.arange(len(tr.anchors_ns)) * 1e9
        assert np.all(err <= DEFAULT_T_CALC * 1e9 + TICK_NS + 1e-6)

    @pytest.mark.parametrize("fps", [24, 25, 30])
    @pytest.mark.parametrize("ppm", [-30.0, 30.0])
    def test_error_reset_each_second(self, fps, ppm):
        tr = run(fps, ppm, 30.0, until=math.inf, t_calc=DEFAULT_T_CALC, record=False)
        residual = float(frame_ticks(fps, F)[1])
        bound = fps * residual * 1e9 + abs(ppm) * 1e3 + DEFAULT_T_CALC * 1e9 + TICK_NS
        assert np.max(np.abs(frame_start_errors(tr))) <= bound

    def test_mid_second_start(self):
        start = Timecode(1, 0, 0, 10, 25)
        tr = simulate(TimerConfig(F, 25), OscillatorModel(30.0), SimConfig(3.0, t_calc=0.0), start)
        # first anchored frame is the one labelled 1:00:01:00, 15 frames in
        assert tr.timecode(15) == Timecode(1, 0, 1, 0, 25)
        assert tr.anchors_ns[1] == pytest.approx(15 * 40e6, abs=TICK_NS)

    def test_loss_mid_run(self):
        tr = run(30, 30.0, 20.0, until=5.0, t_calc=DEFAULT_T_CALC, record=False)
        errs = frame_start_errors(tr)
        assert len(tr.anchors_ns) == 5
        assert abs(errs[-1]) > abs(errs[5 * 30 + 10])


class TestEdges:
    def test_edges_alternate_and_increase(self):
        tr = run(30, 30.0, 1.0)
        assert np.all(np.diff(tr.edge_times_ns) > 0)
        assert np.all(np.diff(tr.levels.astype(int)) != 0)

    @pytest.mark.parametrize("fps", [24, 25, 30])
    def test_transitions_per_frame(self, fps):
        tr = run(fps, 30.0, 1.0, until=math.inf, t_calc=DEFAULT_T_CALC)
        bounds = np.searchsorted(tr.edge_times_ns, np.append(tr.frame_times_ns, np.inf))
        per_frame = np.diff(bounds)
        expected = [80 + sum(encode_word(tr.timecode(k)).bits) for k in range(len(tr.frame_times_ns))]
        assert per_frame.tolist() == expected

    def test_frame_starts_pair_with_timecodes(self):
        tr = run(25, duration=0.2)
        assert [tc for _, tc in tr.frame_starts] == [Timecode(0, 0, 0, k, 25) for k in range(5)]


class TestWaveform:
    def test_empty_trace(self):
        tr = run(25, duration=1.0, record=False)
        assert len(trace_to_waveform(tr, 48000)) == 0

    def test_single_frame_decodes(self):
        tr = run(25, duration=0.001)
        w = trace_to_waveform(tr, 48000)
        assert len(w) == 1920
        frames = demodulate(w)
        assert [f.timecode for f in frames] == [Timecode(0, 0, 0, 0, 25)]

    @pytest.mark.parametrize("fps", [24, 25, 30])
    def test_run_decodes(self, fps):
        tr = run(fps, 30.0, 2.0, until=math.inf, t_calc=DEFAULT_T_CALC)
        frames = demodulate(trace_to_waveform(tr, 44100, amplitude=0.5))
        assert [f.timecode for f in frames] == [tr.timecode(k) for k in range(len(tr.frame_times_ns))]

    def test_slow_oscillator_with_gnss_decodes(self):
        tr = run(30, -30.0, 3.0, until=math.inf, t_calc=DEFAULT_T_CALC)
        frames = demodulate(trace_to_waveform(tr, 48000))
        assert [f.timecode for f in frames] == [tr.timecode(k) for k in range(len(tr.frame_times_ns))]

    def test_end_of_budget_run_within_half_frame(self):
        tr = run(30, 30.0, 543.0, until=0.0, t_calc=DEFAULT_T_CALC)
        sr = 48000
        w = trace_to_waveform(tr, sr, start_ns=541.5e9, end_ns=tr.end_ns)
        frames = demodulate(w)
        assert len(frames) >= 40
        last = frames[-1]
        decoded_start = 541.5 + last.start_sample / sr
        nominal = last.timecode.total_frames / 30
        assert abs(decoded_start - nominal) <= 0.5 / 30


class TestBudgetConsistency:
    @pytest.mark.parametrize("fps", [24, 25, 30])
    @pytest.mark.parametrize("ppm", [5.0, 10.0, 30.0])
    def test_first_exceedance_matches_budget(self, fps, ppm):
        _, residual = frame_ticks(fps, F)
        predicted = sync_budget(SyncBudgetInput(DEFAULT_T_CALC, float(residual), fps, ppm))
        tr = run(fps, ppm, predicted * 1.05, until=0.0, t_calc=DEFAULT_T_CALC, record=False)
        got = first_exceedance(tr)
        assert got is not None
        assert got == pytest.approx(predicted, rel=0.01)

    def test_no_exceedance_with_gnss(self):
        assert first_exceedance(run(30, 30.0, 60.0, until=math.inf, t_calc=DEFAULT_T_CALC, record=False)) is None
