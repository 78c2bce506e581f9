"""PCM16 WAV files and the CSV/JSON tables written by the pipeline."""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .bmc_codec import Waveform

__all__ = [
    "WavSpec",
    "WavError",
    "NotRiff",
    "UnsupportedEncoding",
    "TruncatedData",
    "IoFailure",
    "read_wav",
    "write_wav",
    "write_csv",
    "read_csv",
    "write_json",
    "DECODE_COLUMNS",
]

DECODE_COLUMNS = ("frame_index", "video_time_s", "timecode", "error_ms")

_PCM = 1
_EXTENSIBLE = 0xFFFE
_PCM_SUBFORMAT_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


class WavError(Exception):
    pass


class NotRiff(WavError):
    pass


class UnsupportedEncoding(WavError):
    pass


class TruncatedData(WavError):
    pass


class IoFailure(WavError, OSError):
    pass


@dataclass(frozen=True)
class WavSpec:
    sample_rate: int
    channels: int = 1
    bits_per_sample: int = 16

    def __post_init__(self) -> None:
        if self.channels not in (1, 2):
            raise ValueError("channels must be 1 or 2")
        if self.bits_per_sample != 16:
            raise UnsupportedEncoding("only PCM16 is supported")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def block_align(self) -> int:
        return self.channels * 2

    def header(self, n_frames: int) -> bytes:
        """Canonical 44-byte RIFF/WAVE header."""
        data_size = n_frames * self.block_align
        return struct.pack(
            "<4sI4s4sIHHIIHH4sI",
            b"RIFF", 36 + data_size, b"WAVE",
            b"fmt ", 16, _PCM, self.channels, self.sample_rate,
            self.sample_rate * self.block_align, self.block_align, 16,
            b"data", data_size,
        )


def _to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(w: Waveform, spec: WavSpec | None, path: str | os.PathLike) -> None:
    spec = spec or WavSpec(w.sample_rate, w.channels)
    if spec.channels != w.channels:
        raise ValueError(f"spec has {spec.channels} channels, waveform has {w.channels}")
    if spec.sample_rate != w.sample_rate:
        raise ValueError("spec sample rate differs from waveform")
    pcm = _to_pcm16(w.samples)
    try:
        with open(path, "wb") as fh:
            fh.write(spec.header(len(w)))
            fh.write(pcm.tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_wav(path: str | os.PathLike) -> tuple[Waveform, WavSpec]:
    """Read a PCM16 WAV; samples are scaled by 1/32768."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise NotRiff(f"{os.fspath(path)!r} is not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8: pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise TruncatedData("fmt chunk too short")
            fmt = body
        elif chunk_id == b"data":
            if len(body) < size:
                raise TruncatedData(f"data chunk declares {size} bytes, file holds {len(body)}")
            payload = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise TruncatedData("no fmt chunk")
    if payload is None:
        raise TruncatedData("no data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _EXTENSIBLE and len(fmt) >= 40:
        if fmt[24:26] != b"\x01\x00" or fmt[26:40] != _PCM_SUBFORMAT_TAIL:
            raise UnsupportedEncoding("WAVE_FORMAT_EXTENSIBLE with a non-PCM subformat")
    elif tag != _PCM:
        raise UnsupportedEncoding(f"format tag {tag:#06x} is not integer PCM")
    if bits != 16:
        raise UnsupportedEncoding(f"{bits}-bit PCM is not supported (PCM16 only)")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{channels} channels not supported")
    if block_align != 2 * channels:
        raise UnsupportedEncoding(f"block_align {block_align} inconsistent with PCM16")
    if len(payload) % block_align:
        raise TruncatedData("data chunk ends mid-frame")

    pcm = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    if channels == 2:
        pcm = pcm.reshape(-1, 2)
    spec = WavSpec(rate, channels)
    return Waveform(pcm, rate), spec


def write_csv(
    path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: str | os.PathLike, obj: Any) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
