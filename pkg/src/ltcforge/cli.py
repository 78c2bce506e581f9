"""Command-line entry point: ``ltcforge {encode,decode,simulate,budget,evaluate}``.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 no decodable signal.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import analysis, audio_io, bmc_codec, timer_sim
from .gnss_time import UtcInstant
from .ltc_core import FrameRate, Timecode, UserBits, encode_word, increment, timecode_from_utc

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_SIGNAL = 3

FPS_CHOICES = [int(r) for r in FrameRate]
SAMPLE_RATES = list(bmc_codec.SUPPORTED_SAMPLE_RATES)


class UsageError(Exception):
    pass


def _seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("LTCFORGE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"LTCFORGE_SEED={env!r} is not an integer") from None


def _rate(value) -> FrameRate:
    try:
        return FrameRate.coerce(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _optional_float(text: str) -> float:
    if text.lower() in ("inf", "never", "none"):
        return math.inf
    return float(text)


# encode

def cmd_encode(args: argparse.Namespace) -> int:
    rate = _rate(args.fps)
    if args.sample_rate not in SAMPLE_RATES:
        raise UsageError(f"--sample-rate must be one of {SAMPLE_RATES}")
    if not 0 < args.amplitude <= 1:
        raise UsageError("--amplitude must be in (0, 1]")
    if args.duration < 0:
        raise UsageError("--duration must be >= 0")
    if args.start == "now-utc":
        tc = timecode_from_utc(UtcInstant.now(), rate)
    else:
        try:
            tc = Timecode.parse(args.start, rate)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        ub = UserBits.from_int(int(args.user_bits, 16))
    except ValueError as exc:
        raise UsageError(f"--user-bits: {exc}") from None

    n_frames = int(math.floor(args.duration * int(rate) + 1e-9))
    words = []
    for _ in range(n_frames):
        words.append(encode_word(tc, ub))
        tc = increment(tc)
    if words:
        wave = bmc_codec.modulate(words, rate, args.sample_rate, args.amplitude, args.channels)
    else:
        wave = bmc_codec.Waveform.empty(args.sample_rate, args.channels)
    audio_io.write_wav(wave, audio_io.WavSpec(args.sample_rate, args.channels), args.out)
    print(f"wrote {n_frames} frames @{int(rate)} fps ({len(wave)} samples) to {args.out}")
    return EXIT_OK


# decode

def _frame_times(args: argparse.Namespace, duration: float, rate: FrameRate) -> np.ndarray:
    if args.frame_times:
        rows = audio_io.read_csv(args.frame_times)
        if not rows:
            return np.zeros(0)
        key = "video_time_s" if "video_time_s" in rows[0] else next(iter(rows[0]))
        try:
            return np.array([float(r[key]) for r in rows])
        except ValueError as exc:
            raise UsageError(f"--frame-times: {exc}") from None
    n = int(math.floor(duration * int(rate) + 1e-9))
    return np.arange(n) / int(rate)


def cmd_decode(args: argparse.Namespace) -> int:
    if args.fps is None and not args.frame_times:
        raise UsageError("decode needs --frame-times or --fps")
    wave, spec = audio_io.read_wav(args.inp)
    frames = bmc_codec.demodulate(wave)
    if args.fps is not None:
        rate = _rate(args.fps)
    else:
        rates = [f.rate for f in frames]
        rate = max(set(rates), key=rates.count)
    times = _frame_times(args, wave.duration, rate)
    matches = bmc_codec.match_frames(frames, times, rate)
    rows = [
        (i, f"{t:.6f}", str(m.timecode), f"{m.offset * 1000:.3f}")
        for i, (t, m) in enumerate(zip(times.tolist(), matches))
    ]
    audio_io.write_csv(args.out, audio_io.DECODE_COLUMNS, rows)
    print(
        f"decoded {len(frames)} words @{int(rate)} fps from {spec.channels}-channel "
        f"{spec.sample_rate} Hz audio; assigned {len(rows)} video frames -> {args.out}"
    )
    return EXIT_OK


# simulate

def cmd_simulate(args: argparse.Namespace) -> int:
    rate = _rate(args.fps)
    if args.duration <= 0:
        raise UsageError("--duration must be > 0")
    if args.t_calc < 0:
        raise UsageError("--t-calc must be >= 0")
    if args.gnss_loss_at < 0:
        raise UsageError("--gnss-loss-at must be >= 0")
    try:
        start = Timecode.parse(args.start, rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tcfg = timer_sim.TimerConfig(args.f_timer, rate)
    osc = timer_sim.OscillatorModel(args.ppm)
    scfg = timer_sim.SimConfig(
        duration=args.duration,
        timepulse_available_until=args.gnss_loss_at,
        t_calc=args.t_calc,
        per_frame=args.per_frame_tcalc,
        timepulse_jitter_ns=args.jitter_ns,
        seed=_seed(args),
        record_edges=bool(args.trace_out or args.wav_out),
    )
    trace = timer_sim.simulate(tcfg, osc, scfg, start)

    if args.trace_out:
        audio_io.write_csv(
            args.trace_out,
            ("true_time_ns", "level"),
            ((f"{t:.3f}", lv) for t, lv in zip(trace.edge_times_ns.tolist(), trace.levels.tolist())),
        )
    if args.frames_out:
        audio_io.write_csv(
            args.frames_out,
            ("true_time_ns", "timecode"),
            ((f"{t:.3f}", str(tc)) for t, tc in trace.frame_starts),
        )
    if args.wav_out:
        wave = timer_sim.trace_to_waveform(trace, args.sample_rate, args.amplitude)
        audio_io.write_wav(wave, None, args.wav_out)

    ticks, residual = timer_sim.frame_ticks(rate, args.f_timer)
    errors = timer_sim.frame_start_errors(trace)
    deviation = timer_sim.measure_frame_deviation(trace)
    slope = float(np.polyfit(np.arange(deviation.size), deviation, 1)[0]) if deviation.size > 1 else 0.0
    exceed = timer_sim.first_exceedance(trace)
    eps = float(residual)
    try:
        budget = analysis.sync_budget(analysis.SyncBudgetInput(args.t_calc, eps, rate, abs(args.ppm)))
    except ValueError:
        budget = None
    summary = {
        "fps": int(rate),
        "ticks_per_frame": ticks,
        "t_frame_ms": ticks / args.f_timer * 1e3,
        "residual_ns": eps * 1e9,
        "frames": int(trace.frame_times_ns.size),
        "edges": len(trace),
        "deviation_slope_ns_per_frame": slope,
        "max_abs_error_ns": float(np.abs(errors).max()) if errors.size else 0.0,
        "first_half_frame_exceedance_s": exceed,
        "sync_budget_s": None if budget is None or math.isinf(budget) else budget,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# budget

def _eps_frame(args: argparse.Namespace, rate: FrameRate) -> float:
    if args.eps_frame is not None:
        return args.eps_frame
    return float(timer_sim.frame_ticks(rate, args.f_timer)[1])


def cmd_budget(args: argparse.Namespace) -> int:
    rates = [_rate(args.fps)] if args.fps is not None else list(FrameRate)
    if args.ppm < 0 or args.t_calc < 0 or (args.eps_frame is not None and args.eps_frame < 0):
        raise UsageError("--ppm, --t-calc and --eps-frame must be >= 0")
    for rate in rates:
        eps = _eps_frame(args, rate)
        try:
            inp = analysis.SyncBudgetInput(args.t_calc, eps, rate, args.ppm)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        t_max = analysis.sync_budget(inp)
        shown = "unbounded" if math.isinf(t_max) else f"{t_max:.1f} s"
        print(f"{int(rate)} fps: t_max = {shown} (eps_frame={eps * 1e9:.4f} ns, "
              f"ppm={args.ppm:g}, t_calc={args.t_calc * 1e6:g} us)")
    return EXIT_OK


# evaluate

def cmd_evaluate(args: argparse.Namespace) -> int:
    rate = _rate(args.fps)
    rows = audio_io.read_csv(args.pairs)
    if not rows:
        raise UsageError(f"{args.pairs} has no rows")
    cols = list(rows[0])
    ltc_key = "ltc_time_s" if "ltc_time_s" in cols else cols[0]
    ref_key = "reference_time_s" if "reference_time_s" in cols else cols[1]
    try:
        pairs = [(float(r[ltc_key]), float(r[ref_key])) for r in rows]
    except (ValueError, IndexError) as exc:
        raise UsageError(f"--pairs: {exc}") from None
    report = analysis.alignment_metrics(pairs, rate)
    sigma = analysis.rms_uncertainty(analysis.EvalSetup(args.t_disp, args.t_exp))
    out = {**report.to_dict(), "rms_uncertainty_s": sigma}
    audio_io.write_json(args.out, out)
    print(
        f"n={report.n} mean={report.mean * 1e3:.3f} ms MAE={report.mae * 1e3:.3f} ms "
        f"MaxAE={report.max_ae * 1e3:.3f} ms FSM={report.fsm * 1e3:.3f} ms "
        f"(half frame {report.half_frame * 1e3:.3f} ms); "
        f"setup RMS uncertainty {sigma * 1e3:.2f} ms"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ltcforge", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file whose keys override flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="write a WAV of modulated LTC")
    p.add_argument("--fps", type=int, choices=FPS_CHOICES, default=30)
    p.add_argument("--start", default="00:00:00:00", help="hh:mm:ss:ff or now-utc")
    p.add_argument("--duration", type=float, default=1.0, help="seconds")
    p.add_argument("--sample-rate", type=int, choices=SAMPLE_RATES, default=48000)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.add_argument("--channels", type=int, choices=(1, 2), default=1)
    p.add_argument("--user-bits", default="0", help="32-bit hex, BG1 in the low nibble")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode LTC audio and assign timecodes to video frames")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--frame-times", help="CSV with a video_time_s column")
    p.add_argument("--fps", type=int, choices=FPS_CHOICES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("simulate", help="simulate the timer hierarchy under oscillator drift")
    p.add_argument("--fps", type=int, choices=FPS_CHOICES, default=30)
    p.add_argument("--ppm", type=float, default=0.0)
    p.add_argument("--gnss-loss-at", type=_optional_float, default=math.inf,
                   help="seconds; 'never' keeps timepulses for the whole run")
    p.add_argument("--t-calc", type=float, default=analysis.DEFAULT_T_CALC)
    p.add_argument("--per-frame-tcalc", action="store_true")
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--start", default="00:00:00:00")
    p.add_argument("--f-timer", type=int, default=16_000_000)
    p.add_argument("--jitter-ns", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace-out")
    p.add_argument("--frames-out")
    p.add_argument("--wav-out")
    p.add_argument("--sample-rate", type=int, choices=SAMPLE_RATES, default=48000)
    p.add_argument("--amplitude", type=float, default=0.5)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("budget", help="free-running synchronization budget t_max")
    p.add_argument("--fps", type=int, choices=FPS_CHOICES)
    p.add_argument("--ppm", type=float, default=analysis.DEFAULT_PPM)
    p.add_argument("--t-calc", type=float, default=analysis.DEFAULT_T_CALC)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--eps-frame", type=float, help="per-frame discretization error, s")
    group.add_argument("--f-timer", type=int, default=16_000_000)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("evaluate", help="alignment metrics from (ltc, reference) time pairs")
    p.add_argument("--pairs", required=True, help="CSV: ltc_time_s,reference_time_s")
    p.add_argument("--fps", type=int, choices=FPS_CHOICES, required=True)
    p.add_argument("--t-disp", type=float, default=1 / 60)
    p.add_argument("--t-exp", type=float, default=1 / 60)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)
    return parser


def _config_flags(parser: argparse.ArgumentParser, path: str, explicit: set[str]) -> list[str]:
    """Turn a JSON config object into flags; keys already given on the command line are skipped."""
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"--config: {exc}")
    if not isinstance(config, dict):
        parser.error("--config must hold a JSON object")
    flags: list[str] = []
    for key, value in config.items():
        flag = "--" + str(key).replace("_", "-")
        if flag in explicit:
            continue
        if value is True:
            flags.append(flag)
        elif value is not False and value is not None:
            flags += [flag, str(value)]
    return flags


def _parse(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    commands = [a for a in rest if not a.startswith("-")]
    if not commands:
        return parser.parse_args(rest)
    at = rest.index(commands[0]) + 1
    explicit = {a.split("=", 1)[0] for a in rest[at:] if a.startswith("--")}
    injected = _config_flags(parser, known.config, explicit)
    args = parser.parse_args(rest[:at] + injected + rest[at:])
    args.config = known.config
    return args


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ltcforge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (bmc_codec.NoSignal, bmc_codec.NoCoverage) as exc:
        print(f"ltcforge {args.command}: {exc}", file=sys.stderr)
        return EXIT_SIGNAL
    except (OSError, audio_io.WavError) as exc:
        print(f"ltcforge {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
