"""Event-level simulation of the frame/bit/half-bit timer hierarchy.

True time is in nanoseconds, with ``t = 0`` at the nominal start of the
first simulated frame. The oscillator drives a counter at ``f_timer``; a
positive ``ppm_error`` means the oscillator runs fast, so each tick is
shorter than nominal and free-running frames start early.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .analysis import DEFAULT_T_CALC
from .bmc_codec import Waveform
from .gnss_time import UtcInstant, timepulse_schedule
from .ltc_core import WORD_BITS, FrameRate, Timecode, encode_word

__all__ = [
    "TimerConfig",
    "OscillatorModel",
    "SimConfig",
    "EdgeTrace",
    "frame_ticks",
    "simulate",
    "measure_frame_deviation",
    "frame_start_errors",
    "first_exceedance",
    "trace_to_waveform",
]

NS = 1e9


@dataclass(frozen=True)
class TimerConfig:
    f_timer: int = 16_000_000
    rate: FrameRate = FrameRate.FPS_30

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", FrameRate.coerce(self.rate))
        if self.f_timer <= 0:
            raise ValueError("f_timer must be positive")

    @property
    def tick_period(self) -> Fraction:
        return Fraction(1, self.f_timer)


@dataclass(frozen=True)
class OscillatorModel:
    ppm_error: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.ppm_error) or self.ppm_error <= -1e6:
            raise ValueError("ppm_error must be finite and > -1e6")

    def tick_ns(self, f_timer: int) -> float:
        """True duration of one counter tick."""
        return NS / (f_timer * (1.0 + self.ppm_error * 1e-6))


@dataclass(frozen=True)
class SimConfig:
    """Run parameters.

    ``t_calc`` delays every timepulse-anchored frame start once
    (``per_frame=False``) or is added to every frame period
    (``per_frame=True``).
    """

    duration: float
    timepulse_available_until: float = math.inf
    t_calc: float = DEFAULT_T_CALC
    per_frame: bool = False
    timepulse_jitter_ns: float = 0.0
    seed: int = 0
    record_edges: bool = True

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if self.t_calc < 0:
            raise ValueError("t_calc must be >= 0")
        if self.timepulse_available_until < 0:
            raise ValueError("timepulse_available_until must be >= 0")


@dataclass
class EdgeTrace:
    edge_times_ns: np.ndarray
    levels: np.ndarray
    frame_times_ns: np.ndarray
    start: Timecode
    end_ns: float
    anchors_ns: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def rate(self) -> FrameRate:
        return self.start.rate

    @property
    def edges(self) -> list[tuple[float, int]]:
        return list(zip(self.edge_times_ns.tolist(), self.levels.tolist()))

    def timecode(self, k: int) -> Timecode:
        return Timecode.from_total_frames(self.start.total_frames + k, self.rate)

    @property
    def frame_starts(self) -> list[tuple[float, Timecode]]:
        return [(t, self.timecode(k)) for k, t in enumerate(self.frame_times_ns.tolist())]

    def __len__(self) -> int:
        return len(self.edge_times_ns)


def frame_ticks(rate: FrameRate | int, f_timer: int = 16_000_000) -> tuple[int, Fraction]:
    """Whole timer ticks per frame and the per-frame shortfall in seconds."""
    fps = int(FrameRate.coerce(rate))
    ticks = f_timer // fps
    residual = Fraction(1, fps) - Fraction(ticks, f_timer)
    return ticks, residual


def _slot_offsets(ticks: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(WORD_BITS, dtype=np.int64)
    bit_starts = (k * ticks) // WORD_BITS
    half_bits = ((2 * k + 1) * ticks) // (2 * WORD_BITS)
    return bit_starts, half_bits


def _frame_starts(
    tcfg: TimerConfig, osc: OscillatorModel, scfg: SimConfig, start: Timecode
) -> tuple[np.ndarray, np.ndarray]:
    fps = int(tcfg.rate)
    ticks, _ = frame_ticks(tcfg.rate, tcfg.f_timer)
    tick = osc.tick_ns(tcfg.f_timer)
    period = ticks * tick
    rel = scfg.t_calc * NS if scfg.per_frame else 0.0
    once = 0.0 if scfg.per_frame else scfg.t_calc * NS
    duration_ns = scfg.duration * NS
    until_ns = scfg.timepulse_available_until * NS

    # pulse j sits at the UTC second boundary j seconds after the start's second
    lead_ns = start.frames * NS / fps
    n_pulses = int(min(scfg.duration, scfg.timepulse_available_until, 1e7)) + 2
    schedule = timepulse_schedule(
        UtcInstant(2000, 1, 1, start.hours, start.minutes, start.seconds),
        n_pulses,
        scfg.timepulse_jitter_ns,
        scfg.seed,
    )
    pulses = schedule.instants_ns - lead_ns

    def quantize(t: float) -> float:
        return math.ceil(t / tick - 1e-9) * tick

    # frame index of each pulse-aligned frame start (frames value 0)
    first_aligned = (fps - start.frames) % fps
    first_pulse = 0 if start.frames == 0 else 1

    def pulse_for(k: int) -> float | None:
        j = first_pulse + (k - first_aligned) // fps
        nominal = k * NS / fps
        if nominal >= until_ns or j >= len(pulses):
            return None
        return float(pulses[j])

    out: list[np.ndarray] = []
    anchors: list[float] = []
    k = 0
    p0 = pulse_for(0) if start.frames == 0 else None
    anchor = quantize(max(p0, 0.0) + once) if p0 is not None else quantize(once)
    anchors.append(anchor)
    while anchor < duration_ns:
        next_aligned = first_aligned + ((k - first_aligned) // fps + 1) * fps
        pulse = pulse_for(next_aligned)
        if pulse is None:
            # free-running to the end of the run
            n = int(math.ceil((duration_ns - anchor) / (period + rel))) + 1
            seg = anchor + np.arange(n) * (period + rel)
            out.append(seg[seg < duration_ns])
            break
        n = next_aligned - k
        seg = anchor + np.arange(n) * (period + rel)
        out.append(seg[seg < duration_ns])
        if seg[-1] >= duration_ns:
            break
        anchor = quantize(pulse + once)
        anchors.append(anchor)
        k = next_aligned
    starts = np.concatenate(out) if out else np.zeros(0)
    return starts, np.asarray(anchors)


def simulate(
    tcfg: TimerConfig,
    osc: OscillatorModel,
    scfg: SimConfig,
    start: Timecode | None = None,
) -> EdgeTrace:
    """Run the generator for ``scfg.duration`` seconds of true time.

    While timepulses are available, the frame starting each UTC second is
    re-anchored to the pulse (plus the one-time latency), quantized up to
    the next oscillator tick; if the previous frame is still sending, its
    final bit is shortened to end at the anchor. Between
    anchors, frames advance by the whole-tick frame period of the drifting
    oscillator. Within a frame, bit ``k`` starts at ``floor(k*ticks/80)``
    and a 1-bit adds a half-bit edge at ``floor((2k+1)*ticks/160)``.
    """
    start = start or Timecode(0, 0, 0, 0, tcfg.rate)
    if start.rate != tcfg.rate:
        raise ValueError("start timecode rate differs from timer config rate")
    starts, anchors = _frame_starts(tcfg, osc, scfg, start)
    ticks, _ = frame_ticks(tcfg.rate, tcfg.f_timer)
    tick = osc.tick_ns(tcfg.f_timer)
    end_ns = float(starts[-1] + ticks * tick) if starts.size else 0.0

    if not scfg.record_edges or starts.size == 0:
        return EdgeTrace(np.zeros(0), np.zeros(0, dtype=np.int8), starts, start, end_ns, anchors)

    total0 = start.total_frames
    bits = np.array(
        [
            encode_word(Timecode.from_total_frames(total0 + k, tcfg.rate)).bits
            for k in range(starts.size)
        ],
        dtype=bool,
    )
    bit_starts, half_bits = _slot_offsets(ticks)
    offsets = np.empty(2 * WORD_BITS)
    offsets[0::2] = bit_starts * tick
    offsets[1::2] = half_bits * tick
    mask = np.ones((starts.size, 2 * WORD_BITS), dtype=bool)
    mask[:, 1::2] = bits
    grid = starts[:, None] + offsets[None, :]
    # a slow oscillator's last frame before an anchor is cut off there
    mask &= grid < np.append(starts[1:], np.inf)[:, None]
    times = grid[mask]
    levels = (np.arange(times.size) % 2 == 0).astype(np.int8)
    return EdgeTrace(times, levels, starts, start, end_ns, anchors)


def measure_frame_deviation(trace: EdgeTrace, rate: FrameRate | int | None = None) -> np.ndarray:
    """``start[k] - (start[0] + k/fps)`` in ns."""
    fps = int(FrameRate.coerce(rate if rate is not None else trace.rate))
    t = trace.frame_times_ns
    if t.size == 0:
        return np.zeros(0)
    k = np.arange(t.size)
    return t - (t[0] + k * NS / fps)


def frame_start_errors(trace: EdgeTrace, rate: FrameRate | int | None = None) -> np.ndarray:
    """Frame start minus the nominal UTC start of the frame's timecode, in ns."""
    fps = int(FrameRate.coerce(rate if rate is not None else trace.rate))
    k = np.arange(trace.frame_times_ns.size)
    return trace.frame_times_ns - k * NS / fps


def first_exceedance(trace: EdgeTrace, rate: FrameRate | int | None = None) -> float | None:
    """True time (s) of the first frame whose start error exceeds half a frame."""
    fps = int(FrameRate.coerce(rate if rate is not None else trace.rate))
    errors = frame_start_errors(trace, fps)
    over = np.flatnonzero(np.abs(errors) > NS / (2 * fps))
    if over.size == 0:
        return None
    return float(trace.frame_times_ns[over[0]] / NS)


def trace_to_waveform(
    trace: EdgeTrace,
    sample_rate: int = 48000,
    amplitude: float = 1.0,
    start_ns: float = 0.0,
    end_ns: float | None = None,
) -> Waveform:
    """Sample the edge list as a two-level square wave.

    Edges snap to the nearest sample. Before the first edge the line sits
    at the level opposite to it. ``start_ns``/``end_ns`` select a window.
    """
    if not 0 < amplitude <= 1:
        raise ValueError("amplitude must be in (0, 1]")
    if len(trace) == 0:
        return Waveform.empty(sample_rate)
    end_ns = trace.end_ns if end_ns is None else end_ns
    n = int(math.floor((end_ns - start_ns) * sample_rate / NS + 0.5))
    if n <= 0:
        return Waveform.empty(sample_rate)
    idx = np.floor((trace.edge_times_ns - start_ns) * sample_rate / NS + 0.5).astype(np.int64)
    # count of edges at or before each sample
    count = np.searchsorted(idx, np.arange(n), side="right")
    first_level = int(trace.levels[0])
    high = np.where(count % 2 == 1, first_level, 1 - first_level)
    return Waveform(np.where(high == 1, amplitude, -amplitude), sample_rate)
