"""GNSS-disciplined SMPTE linear timecode: words, BMC audio, timer simulation, timing budgets."""

from .analysis import (
    AlignmentReport,
    EvalSetup,
    PowerBudget,
    SyncBudgetInput,
    alignment_metrics,
    battery_runtime,
    rms_uncertainty,
    sync_budget,
)
from .audio_io import WavSpec, read_wav, write_wav
from .bmc_codec import (
    ChannelModel,
    DecodedFrame,
    Demodulator,
    Waveform,
    apply_channel,
    assign_frames,
    demodulate,
    modulate,
)
from .gnss_time import UtcInstant, parse_nmea, timepulse_schedule
from .ltc_core import (
    FrameRate,
    LtcWord,
    Timecode,
    UserBits,
    decode_word,
    encode_word,
    increment,
    timecode_from_utc,
)
from .timer_sim import (
    EdgeTrace,
    OscillatorModel,
    SimConfig,
    TimerConfig,
    frame_ticks,
    measure_frame_deviation,
    simulate,
    trace_to_waveform,
)

__version__ = "0.1.0"
