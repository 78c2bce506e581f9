"""Biphase-mark modulation and demodulation of LTC word streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage, signal

from .ltc_core import (
    SYNC_WORD,
    WORD_BITS,
    FrameRate,
    LtcError,
    LtcWord,
    Timecode,
    decode_word,
)

__all__ = [
    "Waveform",
    "ChannelModel",
    "DecodedFrame",
    "Demodulator",
    "CodecError",
    "NoSignal",
    "NoCoverage",
    "UnsupportedSampleRate",
    "modulate",
    "modulate_bits",
    "demodulate",
    "apply_channel",
    "assign_frames",
    "match_frames",
    "zero_crossings",
    "transition_count",
]

SUPPORTED_SAMPLE_RATES = (44100, 48000)

# demodulator tuning
HYSTERESIS = 0.30
PEAK_WINDOW_S = 0.004
HALF_BIT_THRESHOLD = 0.75
GLITCH_THRESHOLD = 0.30
GAP_THRESHOLD = 1.5
INIT_INTERVALS = 200
SMOOTHING = 0.05
MIN_LEVEL = 1e-6
RATE_TOLERANCE = 0.015


class CodecError(ValueError):
    pass


class NoSignal(CodecError):
    """No decodable LTC transition stream in the input."""


class NoCoverage(CodecError):
    """A video frame is more than one frame period from every decoded word."""


class UnsupportedSampleRate(CodecError):
    pass


@dataclass
class Waveform:
    """Sampled audio, shape ``(n,)`` for mono or ``(n, channels)``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 2 and samples.shape[1] == 1:
            samples = samples[:, 0]
        if samples.ndim not in (1, 2) or (samples.ndim == 2 and samples.shape[1] != 2):
            raise ValueError(f"samples must be (n,) or (n, 2), got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def left(self) -> np.ndarray:
        return self.samples if self.samples.ndim == 1 else self.samples[:, 0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __neg__(self) -> "Waveform":
        return Waveform(-self.samples, self.sample_rate)

    @classmethod
    def empty(cls, sample_rate: int, channels: int = 1) -> "Waveform":
        shape = (0,) if channels == 1 else (0, channels)
        return cls(np.zeros(shape), sample_rate)


@dataclass(frozen=True)
class ChannelModel:
    """AC-coupled camera input: first-order high-pass, attenuation, noise."""

    highpass_corner: float = 159.0
    gain: float = 0.01
    noise_rms: float = 0.001

    def __post_init__(self) -> None:
        if self.highpass_corner < 0:
            raise ValueError("highpass_corner must be >= 0")
        if not 0 < self.gain <= 1:
            raise ValueError("gain must be in (0, 1]")
        if self.noise_rms < 0:
            raise ValueError("noise_rms must be >= 0")


@dataclass(frozen=True)
class DecodedFrame:
    word: LtcWord
    start_sample: int
    end_sample: int
    rate: FrameRate
    sample_rate: int

    @property
    def start_time(self) -> float:
        return self.start_sample / self.sample_rate

    @property
    def timecode(self) -> Timecode:
        return decode_word(self.word, self.rate)[0]


def _check_rate(bit_rate: float, sample_rate: int) -> None:
    # highest signal frequency is two transitions per bit
    if sample_rate < 2 * 2 * bit_rate:
        raise UnsupportedSampleRate(
            f"{sample_rate} Hz cannot carry {bit_rate:g} bit/s biphase-mark "
            f"(needs >= {4 * bit_rate:g} Hz)"
        )


def modulate_bits(
    bits: Sequence[int],
    bit_rate: int,
    sample_rate: int,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Biphase-mark square wave, starting with a transition to ``+amplitude``.

    Transition instants are quantized to the nearest sample using exact
    integer arithmetic, so a stream has ``round(len(bits) * sr / bit_rate)``
    samples regardless of length.
    """
    if not 0 < amplitude <= 1:
        raise ValueError("amplitude must be in (0, 1]")
    _check_rate(bit_rate, sample_rate)
    bits = np.asarray(bits, dtype=np.int64)
    n_bits = bits.size
    n_samples = (2 * n_bits * sample_rate + bit_rate) // (2 * bit_rate)
    if n_bits == 0:
        return np.zeros(0)

    i = np.arange(n_bits, dtype=np.int64)
    boundaries = (2 * i * sample_rate + bit_rate) // (2 * bit_rate)
    ones = i[bits == 1]
    mids = ((2 * ones + 1) * sample_rate + bit_rate) // (2 * bit_rate)
    toggles = np.zeros(n_samples + 1, dtype=np.int64)
    np.add.at(toggles, boundaries, 1)
    np.add.at(toggles, mids, 1)
    count = np.cumsum(toggles[:n_samples])
    return np.where(count % 2 == 1, amplitude, -amplitude).astype(np.float64)


def modulate(
    words: Iterable[LtcWord],
    rate: FrameRate | int,
    sample_rate: int = 48000,
    amplitude: float = 1.0,
    channels: int = 1,
) -> Waveform:
    """Concatenate ``words`` into one continuous-polarity BMC waveform.

    Stereo output carries the signal on the left channel only.
    """
    rate = FrameRate.coerce(rate)
    words = list(words)
    if not words:
        raise ValueError("modulate needs at least one word")
    bits = [b for w in words for b in w.bits]
    mono = modulate_bits(bits, rate.bit_rate, sample_rate, amplitude)
    if channels == 1:
        return Waveform(mono, sample_rate)
    if channels != 2:
        raise ValueError("channels must be 1 or 2")
    return Waveform(np.column_stack([mono, np.zeros_like(mono)]), sample_rate)


def apply_channel(w: Waveform, ch: ChannelModel, seed: int = 0) -> Waveform:
    """Gain, first-order high-pass (bilinear, prewarped at the corner), noise.

    Output is clipped to the [-1, 1] full scale.
    """
    x = w.samples * ch.gain if ch.gain != 1 else w.samples.copy()
    if ch.highpass_corner > 0 and len(w):
        if ch.highpass_corner >= w.sample_rate / 2:
            raise ValueError("high-pass corner must be below Nyquist")
        b, a = signal.butter(1, ch.highpass_corner, btype="highpass", fs=w.sample_rate)
        x = signal.lfilter(b, a, x, axis=0)
    if ch.noise_rms > 0:
        rng = np.random.default_rng(seed)
        x = x + rng.normal(0.0, ch.noise_rms, size=x.shape)
    return Waveform(np.clip(x, -1.0, 1.0), w.sample_rate)


class _Bit(NamedTuple):
    value: int  # -1 marks a break in the bit stream
    start: int
    end: int


_BREAK = -1
_SYNC = tuple(SYNC_WORD)


class Demodulator:
    """Streaming BMC decoder; feed chunks in order, then call :meth:`flush`.

    Pipeline: hysteresis comparator against a running peak estimate,
    transition intervals classified as half or full bits relative to a
    smoothed bit-period estimate, then sync-word alignment. Only the left
    channel of stereo input is used. Instances are not thread-safe.
    """

    def __init__(self, sample_rate: int):
        self.sample_rate = int(sample_rate)
        _check_rate(max(r.bit_rate for r in FrameRate), self.sample_rate)
        self._window = max(2, int(round(PEAK_WINDOW_S * self.sample_rate)))
        self._tail = np.zeros(0)
        self._state = 0
        self._pos = 0
        self._pending_transitions: list[int] = []
        self._last: int | None = None
        self._half_start: int | None = None
        self.bit_period: float | None = None
        self._bits: list[_Bit] = []
        self.transition_count = 0
        self._flushed = False

    def feed(self, chunk: np.ndarray | Waveform) -> list[DecodedFrame]:
        if self._flushed:
            raise RuntimeError("demodulator already flushed")
        if isinstance(chunk, Waveform):
            if chunk.sample_rate != self.sample_rate:
                raise ValueError("chunk sample rate does not match demodulator")
            x = chunk.left
        else:
            x = np.asarray(chunk, dtype=np.float64)
            if x.ndim == 2:
                x = x[:, 0]
        if x.size == 0:
            return []
        positions = self._comparator(x)
        self._pos += x.size
        return self._consume(positions)

    def flush(self) -> list[DecodedFrame]:
        self._flushed = True
        if self.bit_period is None:
            if len(self._pending_transitions) < 3:
                return []
            self.bit_period = self._estimate_period(np.diff(self._pending_transitions))
            out = self._consume_decoded(self._pending_transitions)
            self._pending_transitions = []
        else:
            out = []
        out += self._close(self._pos)
        return out

    # comparator

    def _comparator(self, x: np.ndarray) -> np.ndarray:
        mags = np.concatenate([self._tail, np.abs(x)])
        w = self._window
        env = ndimage.maximum_filter1d(mags, size=w, origin=(w - 1) // 2, mode="constant")
        env = env[self._tail.size:]
        self._tail = mags[-(w - 1):] if w > 1 else np.zeros(0)

        h = np.maximum(HYSTERESIS * env, MIN_LEVEL)
        s = np.where(x > h, 1, np.where(x < -h, -1, 0)).astype(np.int8)
        s = np.concatenate([[self._state], s])
        idx = np.where(s != 0, np.arange(s.size), 0)
        np.maximum.accumulate(idx, out=idx)
        filled = s[idx]
        self._state = int(filled[-1])
        change = np.flatnonzero((filled[1:] != filled[:-1]) & (filled[1:] != 0))
        return change + self._pos

    # bit recovery

    def _consume(self, positions: np.ndarray) -> list[DecodedFrame]:
        positions = positions.tolist()
        self.transition_count += len(positions)
        if self.bit_period is None:
            self._pending_transitions.extend(positions)
            if len(self._pending_transitions) <= INIT_INTERVALS:
                return []
            self.bit_period = self._estimate_period(
                np.diff(self._pending_transitions[: INIT_INTERVALS + 1])
            )
            positions, self._pending_transitions = self._pending_transitions, []
        return self._consume_decoded(positions)

    @staticmethod
    def _estimate_period(intervals: np.ndarray) -> float:
        """Full-bit period from a half/full interval mixture.

        The median lands on one of the two modes; the hypothesis (median is
        a full bit, or median is a half bit) explaining more intervals wins.
        """
        intervals = np.asarray(intervals, dtype=np.float64)
        intervals = intervals[intervals > 0]
        if intervals.size == 0:
            raise NoSignal("no transition intervals")
        m = float(np.median(intervals))

        def explained(period: float) -> tuple[int, np.ndarray, np.ndarray]:
            full = np.abs(intervals - period) < 0.25 * period
            half = np.abs(intervals - period / 2) < 0.125 * period
            return int(full.sum() + half.sum()), full, half

        score_full, full_a, half_a = explained(m)
        score_half, full_b, half_b = explained(2 * m)
        period, full, half = (m, full_a, half_a) if score_full >= score_half else (2 * m, full_b, half_b)
        samples = np.concatenate([intervals[full], 2 * intervals[half]])
        return float(samples.mean()) if samples.size else period

    def _consume_decoded(self, positions: Sequence[int]) -> list[DecodedFrame]:
        out: list[DecodedFrame] = []
        for p in positions:
            if self._last is None:
                self._last = p
                continue
            out += self._interval(self._last, p)
            self._last = p
        return out

    def _interval(self, last: int, p: int) -> list[DecodedFrame]:
        T = self.bit_period
        d = p - last
        if d < GLITCH_THRESHOLD * T or d > GAP_THRESHOLD * T:
            self._half_start = None
            return self._emit(_Bit(_BREAK, last, p))
        if d < HALF_BIT_THRESHOLD * T:
            if self._half_start is None:
                self._half_start = last
                return []
            start, self._half_start = self._half_start, None
            self._smooth(p - start)
            return self._emit(_Bit(1, start, p))
        out: list[DecodedFrame] = []
        if self._half_start is not None:
            # unpaired half bit: the one-bit pairing was out of phase
            self._half_start = None
            out += self._emit(_Bit(_BREAK, last, last))
        self._smooth(d)
        return out + self._emit(_Bit(0, last, p))

    def _smooth(self, observed: float) -> None:
        self.bit_period += SMOOTHING * (observed - self.bit_period)

    def _close(self, end: int) -> list[DecodedFrame]:
        """Treat the end of the stream as a final transition if it completes a bit."""
        if self._last is None or self.bit_period is None:
            return []
        T = self.bit_period
        d = end - self._last
        if self._half_start is not None and GLITCH_THRESHOLD * T <= d < HALF_BIT_THRESHOLD * T:
            start, self._half_start = self._half_start, None
            return self._emit(_Bit(1, start, end))
        return []

    def _emit(self, bit: _Bit) -> list[DecodedFrame]:
        bits = self._bits
        bits.append(bit)
        if len(bits) > 2 * WORD_BITS:
            del bits[:-WORD_BITS]
        if len(bits) < WORD_BITS or bit.value != 1:
            return []
        window = bits[-WORD_BITS:]
        values = tuple(b.value for b in window)
        if values[-16:] != _SYNC or _BREAK in values:
            return []
        start, end = window[0].start, window[-1].end
        rate = self._rate_for(end - start)
        if rate is None:
            return []
        word = LtcWord(values)
        try:
            decode_word(word, rate)
        except LtcError:
            return []
        return [DecodedFrame(word, start, end, rate, self.sample_rate)]

    def _rate_for(self, frame_samples: int) -> FrameRate | None:
        if frame_samples <= 0:
            return None
        fps = self.sample_rate / frame_samples
        best = min(FrameRate, key=lambda r: abs(fps - int(r)))
        if abs(fps - int(best)) > RATE_TOLERANCE * int(best):
            return None
        return best


def demodulate(w: Waveform) -> list[DecodedFrame]:
    """Decode every complete LTC word in ``w`` (left channel), in order."""
    dec = Demodulator(w.sample_rate)
    frames = dec.feed(w)
    frames += dec.flush()
    if not frames:
        raise NoSignal(
            f"no LTC words found ({dec.transition_count} transitions in {len(w)} samples)"
        )
    return frames


class FrameMatch(NamedTuple):
    index: int
    timecode: Timecode
    offset: float  # decoded word start minus video frame time, seconds


def match_frames(
    decoded: Sequence[DecodedFrame],
    video_frame_times: Sequence[float],
    rate: FrameRate | int,
) -> list[FrameMatch]:
    """Nearest decoded word for each video frame time (seconds into the recording)."""
    rate = FrameRate.coerce(rate)
    if not decoded:
        raise NoCoverage("no decoded words to assign")
    starts = np.array([d.start_time for d in decoded])
    times = np.asarray(video_frame_times, dtype=np.float64)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("video_frame_times must be sorted")
    period = 1.0 / int(rate)
    idx = np.searchsorted(starts, times)
    left = np.clip(idx - 1, 0, len(starts) - 1)
    right = np.clip(idx, 0, len(starts) - 1)
    pick = np.where(np.abs(times - starts[left]) <= np.abs(starts[right] - times), left, right)
    out = []
    for t, k in zip(times.tolist(), pick.tolist()):
        offset = starts[k] - t
        if abs(offset) > period:
            raise NoCoverage(f"video frame at {t:.6f} s is {abs(offset):.6f} s from the nearest word")
        out.append(FrameMatch(k, decode_word(decoded[k].word, rate)[0], offset))
    return out


def assign_frames(
    decoded: Sequence[DecodedFrame],
    video_frame_times: Sequence[float],
    rate: FrameRate | int,
) -> list[Timecode]:
    return [m.timecode for m in match_frames(decoded, video_frame_times, rate)]


def zero_crossings(x: np.ndarray) -> int:
    """Sign changes in ``x`` (zeros carry the previous sign)."""
    s = np.sign(np.asarray(x, dtype=np.float64))
    nz = s[s != 0]
    return int(np.count_nonzero(nz[1:] != nz[:-1]))



def transition_count(word: LtcWord) -> int:
    """Level changes needed to send ``word``: one per bit plus one per 1-bit."""
    return WORD_BITS + sum(word.bits)
