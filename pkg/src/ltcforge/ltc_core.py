"""SMPTE ST 12-1 linear timecode words and timecode arithmetic.

Bit layout of the 80-bit word (index 0 transmitted first, BCD digits
LSB first)::

    0-3   frame units        4-7   binary group 1
    8-9   frame tens         10    drop-frame flag    11  color-frame flag
    12-15 binary group 2
    16-19 seconds units      20-23 binary group 3
    24-26 seconds tens       27    flag (polarity @24/30, BGF0 @25)
    28-31 binary group 4
    32-35 minutes units      36-39 binary group 5
    40-42 minutes tens       43    flag (BGF0 @24/30, BGF2 @25)
    44-47 binary group 6
    48-51 hours units        52-55 binary group 7
    56-57 hours tens         58    BGF1               59  flag (BGF2 @24/30, polarity @25)
    60-63 binary group 8
    64-79 sync word 0011 1111 1111 1101
"""

from __future__ import annotations

import enum
import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple, Sequence

__all__ = [
    "FrameRate",
    "Timecode",
    "UserBits",
    "LtcWord",
    "WordFlags",
    "LtcError",
    "MalformedWord",
    "MissingSync",
    "SYNC_WORD",
    "WORD_BITS",
    "encode_word",
    "decode_word",
    "increment",
    "timecode_from_utc",
]

WORD_BITS = 80
SYNC_WORD: tuple[int, ...] = (0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1)
SYNC_START = 64

# (first bit, width) of each binary group, BG1..BG8
_GROUP_SLOTS = ((4, 4), (12, 4), (20, 4), (28, 4), (36, 4), (44, 4), (52, 4), (60, 4))

# name -> (first bit, width, max legal value)
_BCD_FIELDS = {
    "frame_units": (0, 4, 9),
    "frame_tens": (8, 2, 2),
    "seconds_units": (16, 4, 9),
    "seconds_tens": (24, 3, 5),
    "minutes_units": (32, 4, 9),
    "minutes_tens": (40, 3, 5),
    "hours_units": (48, 4, 9),
    "hours_tens": (56, 2, 2),
}

_DROP_FRAME_BIT = 10
_COLOR_FRAME_BIT = 11
_BGF1_BIT = 58


class LtcError(ValueError):
    """Base class for word-level decoding failures."""


class MalformedWord(LtcError):
    """A BCD field holds a value outside its legal range."""


class MissingSync(LtcError):
    """Bits 64..79 do not hold the sync word."""


class FrameRate(enum.IntEnum):
    """Integer frame rates supported by the generator (no drop-frame)."""

    FPS_24 = 24
    FPS_25 = 25
    FPS_30 = 30

    @property
    def frame_period(self) -> Fraction:
        return Fraction(1, int(self))

    @property
    def bit_rate(self) -> int:
        return WORD_BITS * int(self)

    @classmethod
    def coerce(cls, value: "FrameRate | int | str") -> "FrameRate":
        if isinstance(value, str):
            value = int(value.strip())
        try:
            return cls(int(value))
        except ValueError:
            raise ValueError(
                f"unsupported frame rate {value!r}; expected one of 24, 25, 30"
            ) from None


def _flag_bits(rate: FrameRate) -> tuple[int, int, int, int]:
    """Return (polarity, bgf0, bgf1, bgf2) bit positions for ``rate``."""
    if rate == FrameRate.FPS_25:
        return 59, 27, _BGF1_BIT, 43
    return 27, 43, _BGF1_BIT, 59


@dataclass(frozen=True, order=True)
class Timecode:
    hours: int
    minutes: int
    seconds: int
    frames: int
    rate: FrameRate = FrameRate.FPS_30

    def __post_init__(self) -> None:
        object.__setattr__(self, "rate", FrameRate.coerce(self.rate))
        for name, upper in (
            ("hours", 24),
            ("minutes", 60),
            ("seconds", 60),
            ("frames", int(self.rate)),
        ):
            value = getattr(self, name)
            if isinstance(value, bool):
                raise TypeError(f"{name} must be an int, got {value!r}")
            value = operator.index(value)
            object.__setattr__(self, name, value)
            if not 0 <= value < upper:
                raise ValueError(f"{name}={value} out of range [0, {upper})")

    @property
    def total_frames(self) -> int:
        fps = int(self.rate)
        return ((self.hours * 60 + self.minutes) * 60 + self.seconds) * fps + self.frames

    @classmethod
    def frames_per_day(cls, rate: FrameRate | int) -> int:
        return 86400 * int(rate)

    @classmethod
    def from_total_frames(cls, total: int, rate: FrameRate | int) -> "Timecode":
        rate = FrameRate.coerce(rate)
        fps = int(rate)
        total %= cls.frames_per_day(rate)
        seconds_total, frames = divmod(total, fps)
        minutes_total, seconds = divmod(seconds_total, 60)
        hours, minutes = divmod(minutes_total, 60)
        return cls(hours, minutes, seconds, frames, rate)

    @classmethod
    def parse(cls, text: str, rate: FrameRate | int) -> "Timecode":
        """Parse ``hh:mm:ss:ff`` (``;`` or ``.`` also accepted before the frames)."""
        cleaned = text.strip().replace(";", ":").replace(".", ":")
        parts = cleaned.split(":")
        if len(parts) != 4 or not all(p.isdigit() for p in parts):
            raise ValueError(f"invalid timecode {text!r}; expected hh:mm:ss:ff")
        h, m, s, f = (int(p) for p in parts)
        return cls(h, m, s, f, FrameRate.coerce(rate))

    @property
    def seconds_of_day(self) -> Fraction:
        """Nominal start of this frame, in seconds after midnight."""
        return Fraction(self.total_frames, int(self.rate))

    def __str__(self) -> str:
        return f"{self.hours:02d}:{self.minutes:02d}:{self.seconds:02d}:{self.frames:02d}"


@dataclass(frozen=True)
class UserBits:
    """The eight 4-bit binary groups, BG1 first."""

    groups: tuple[int, ...] = (0,) * 8

    def __post_init__(self) -> None:
        groups = tuple(int(g) for g in self.groups)
        if len(groups) != 8:
            raise ValueError(f"expected 8 binary groups, got {len(groups)}")
        if any(not 0 <= g <= 15 for g in groups):
            raise ValueError(f"binary groups must be in [0, 15]: {groups}")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_int(cls, value: int) -> "UserBits":
        """BG1 is the least-significant nibble of a 32-bit value."""
        if not 0 <= value < 1 << 32:
            raise ValueError("user bits value must fit in 32 bits")
        return cls(tuple((value >> (4 * i)) & 0xF for i in range(8)))

    def to_int(self) -> int:
        return sum(g << (4 * i) for i, g in enumerate(self.groups))


@dataclass(frozen=True)
class LtcWord:
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if len(bits) != WORD_BITS:
            raise ValueError(f"an LTC word has {WORD_BITS} bits, got {len(bits)}")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("LTC word bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits)

    def __len__(self) -> int:
        return WORD_BITS

    def __getitem__(self, index):
        return self.bits[index]

    @property
    def has_sync(self) -> bool:
        return self.bits[SYNC_START:] == SYNC_WORD

    @property
    def zero_count(self) -> int:
        return WORD_BITS - sum(self.bits)

    def to_bytes(self) -> bytes:
        """Pack into 10 bytes, bit 0 as the LSB of byte 0."""
        out = bytearray(10)
        for i, b in enumerate(self.bits):
            out[i // 8] |= b << (i % 8)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LtcWord":
        if len(data) != 10:
            raise ValueError("an LTC word packs into exactly 10 bytes")
        return cls(tuple((data[i // 8] >> (i % 8)) & 1 for i in range(WORD_BITS)))

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


class WordFlags(NamedTuple):
    drop_frame: int
    color_frame: int
    polarity: int
    bgf0: int
    bgf1: int
    bgf2: int


def _put(bits: list[int], start: int, width: int, value: int) -> None:
    for i in range(width):
        bits[start + i] = (value >> i) & 1


def _get(bits: Sequence[int], start: int, width: int) -> int:
    return sum(bits[start + i] << i for i in range(width))


def encode_word(tc: Timecode, ub: UserBits | None = None) -> LtcWord:
    """Pack ``tc`` and ``ub`` into an 80-bit word with the polarity bit set."""
    ub = ub or UserBits()
    bits = [0] * WORD_BITS
    digits = {
        "frame_units": tc.frames % 10,
        "frame_tens": tc.frames // 10,
        "seconds_units": tc.seconds % 10,
        "seconds_tens": tc.seconds // 10,
        "minutes_units": tc.minutes % 10,
        "minutes_tens": tc.minutes // 10,
        "hours_units": tc.hours % 10,
        "hours_tens": tc.hours // 10,
    }
    for name, (start, width, _) in _BCD_FIELDS.items():
        _put(bits, start, width, digits[name])
    for (start, width), group in zip(_GROUP_SLOTS, ub.groups):
        _put(bits, start, width, group)
    bits[SYNC_START:] = SYNC_WORD

    polarity_bit = _flag_bits(tc.rate)[0]
    if (WORD_BITS - sum(bits)) % 2:
        bits[polarity_bit] = 1
    return LtcWord(tuple(bits))


def decode_word(
    word: LtcWord | Sequence[int], rate: FrameRate | int
) -> tuple[Timecode, UserBits, WordFlags]:
    """Unpack a word transmitted at ``rate``.

    The rate is not carried in the word itself; it fixes where the
    polarity bit sits and the legal frame range.
    """
    if not isinstance(word, LtcWord):
        word = LtcWord(tuple(word))
    rate = FrameRate.coerce(rate)
    bits = word.bits
    if not word.has_sync:
        raise MissingSync(f"bits 64..79 {bits[SYNC_START:]} are not the sync word")

    digits = {}
    for name, (start, width, upper) in _BCD_FIELDS.items():
        value = _get(bits, start, width)
        if value > upper:
            raise MalformedWord(f"{name}={value} exceeds {upper}")
        digits[name] = value

    fields = {
        "hours": digits["hours_tens"] * 10 + digits["hours_units"],
        "minutes": digits["minutes_tens"] * 10 + digits["minutes_units"],
        "seconds": digits["seconds_tens"] * 10 + digits["seconds_units"],
        "frames": digits["frame_tens"] * 10 + digits["frame_units"],
    }
    try:
        tc = Timecode(rate=rate, **fields)
    except ValueError as exc:
        raise MalformedWord(str(exc)) from None

    ub = UserBits(tuple(_get(bits, start, width) for start, width in _GROUP_SLOTS))
    polarity, bgf0, bgf1, bgf2 = _flag_bits(rate)
    flags = WordFlags(
        drop_frame=bits[_DROP_FRAME_BIT],
        color_frame=bits[_COLOR_FRAME_BIT],
        polarity=bits[polarity],
        bgf0=bits[bgf0],
        bgf1=bits[bgf1],
        bgf2=bits[bgf2],
    )
    return tc, ub, flags


def increment(tc: Timecode) -> Timecode:
    return Timecode.from_total_frames(tc.total_frames + 1, tc.rate)


def timecode_from_utc(utc, rate: FrameRate | int) -> Timecode:
    """Timecode of the frame containing ``utc``.

    ``utc`` is anything with ``hour``/``minute``/``second`` and either a
    ``nanosecond`` (e.g. :class:`ltcforge.gnss_time.UtcInstant`) or a
    ``microsecond`` attribute (``datetime``). Frames are floored so they
    stay below the frame rate at every instant.
    """
    rate = FrameRate.coerce(rate)
    nanos = getattr(utc, "nanosecond", None)
    if nanos is None:
        nanos = utc.microsecond * 1000
    frames = nanos * int(rate) // 1_000_000_000
    return Timecode(utc.hour, utc.minute, utc.second, frames, rate)
