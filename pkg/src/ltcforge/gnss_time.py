"""GNSS receiver stand-in: NMEA time sentences and timepulse schedules."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

__all__ = [
    "UtcInstant",
    "TimepulseSchedule",
    "NmeaError",
    "ChecksumMismatch",
    "UnsupportedSentence",
    "MalformedField",
    "nmea_checksum",
    "parse_nmea",
    "format_rmc",
    "format_zda",
    "utc_from_sentences",
    "timepulse_schedule",
]

NS_PER_S = 1_000_000_000
MAX_JITTER_RMS_NS = 0.4 * NS_PER_S


class NmeaError(ValueError):
    pass


class ChecksumMismatch(NmeaError):
    pass


class UnsupportedSentence(NmeaError):
    pass


class MalformedField(NmeaError):
    pass


@dataclass(frozen=True)
class UtcInstant:
    year: int
    month: int
    day: int
    hour: int
    minute: int
    second: int
    nanosecond: int = 0
    valid: bool = True

    def __post_init__(self) -> None:
        # raises ValueError for impossible dates/times
        _dt.datetime(self.year, self.month, self.day, self.hour, self.minute, self.second)
        if not 0 <= self.nanosecond < NS_PER_S:
            raise ValueError(f"nanosecond={self.nanosecond} out of range")

    @classmethod
    def from_datetime(cls, value: _dt.datetime, valid: bool = True) -> "UtcInstant":
        if value.tzinfo is not None:
            value = value.astimezone(_dt.timezone.utc)
        return cls(
            value.year, value.month, value.day,
            value.hour, value.minute, value.second,
            value.microsecond * 1000, valid,
        )

    @classmethod
    def now(cls) -> "UtcInstant":
        return cls.from_datetime(_dt.datetime.now(_dt.timezone.utc))

    @property
    def date(self) -> _dt.date:
        return _dt.date(self.year, self.month, self.day)

    @property
    def nanos_of_day(self) -> int:
        return ((self.hour * 60 + self.minute) * 60 + self.second) * NS_PER_S + self.nanosecond

    def to_datetime(self) -> _dt.datetime:
        """Truncates to microseconds."""
        return _dt.datetime(
            self.year, self.month, self.day, self.hour, self.minute, self.second,
            self.nanosecond // 1000, tzinfo=_dt.timezone.utc,
        )


@dataclass(frozen=True)
class TimepulseSchedule:
    instants_ns: np.ndarray
    jitter_rms: float = 0.0

    def __len__(self) -> int:
        return len(self.instants_ns)


def nmea_checksum(payload: str) -> int:
    """XOR of the characters between ``$`` and ``*``."""
    return reduce(lambda acc, ch: acc ^ ord(ch), payload, 0)


def _split(line: str) -> list[str]:
    line = line.strip()
    if not line.startswith("$"):
        raise MalformedField(f"sentence must start with '$': {line!r}")
    star = line.rfind("*")
    if star < 0:
        raise MalformedField(f"missing '*hh' checksum: {line!r}")
    payload, given = line[1:star], line[star + 1:]
    if len(given) != 2:
        raise MalformedField(f"checksum must be two hex digits, got {given!r}")
    try:
        expected = int(given, 16)
    except ValueError:
        raise MalformedField(f"checksum {given!r} is not hex") from None
    actual = nmea_checksum(payload)
    if actual != expected:
        raise ChecksumMismatch(f"computed {actual:02X}, sentence says {given.upper()}")
    return payload.split(",")


def _parse_hhmmss(field: str) -> tuple[int, int, int, int]:
    whole, _, frac = field.partition(".")
    if len(whole) != 6 or not whole.isdigit() or (frac and not frac.isdigit()):
        raise MalformedField(f"bad time field {field!r}")
    nanos = int(frac.ljust(9, "0")[:9]) if frac else 0
    return int(whole[:2]), int(whole[2:4]), int(whole[4:6]), nanos


def _int_field(field: str, name: str) -> int:
    if not field.isdigit():
        raise MalformedField(f"bad {name} field {field!r}")
    return int(field)


def _build(date: tuple[int, int, int], hms: tuple[int, int, int, int], valid: bool) -> UtcInstant:
    try:
        return UtcInstant(*date, *hms, valid=valid)
    except ValueError as exc:
        raise MalformedField(str(exc)) from None


def parse_nmea(line: str) -> UtcInstant:
    """Parse an RMC or ZDA sentence (any talker id) into a UTC instant.

    The checksum is verified before any field is interpreted.
    """
    fields = _split(line)
    address = fields[0]
    if len(address) != 5 or not address.isalpha():
        raise MalformedField(f"bad address field {address!r}")
    kind = address[2:]

    if kind == "ZDA":
        # ZDA,hhmmss.ss,dd,mm,yyyy,zh,zm
        if len(fields) != 7:
            raise MalformedField(f"ZDA needs 7 fields, got {len(fields)}")
        hms = _parse_hhmmss(fields[1])
        day = _int_field(fields[2], "day")
        month = _int_field(fields[3], "month")
        year = _int_field(fields[4], "year")
        return _build((year, month, day), hms, True)

    if kind == "RMC":
        # RMC,time,status,lat,N/S,lon,E/W,sog,cog,ddmmyy,magvar,E/W[,mode[,navstatus]]
        if not 12 <= len(fields) <= 14:
            raise MalformedField(f"RMC needs 12-14 fields, got {len(fields)}")
        hms = _parse_hhmmss(fields[1])
        status = fields[2]
        if status not in ("A", "V"):
            raise MalformedField(f"bad RMC status {status!r}")
        date = fields[9]
        if len(date) != 6 or not date.isdigit():
            raise MalformedField(f"bad RMC date {date!r}")
        day, month, yy = int(date[:2]), int(date[2:4]), int(date[4:])
        # two-digit year pivot as used by common receivers
        year = 2000 + yy if yy < 80 else 1900 + yy
        return _build((year, month, day), hms, status == "A")

    raise UnsupportedSentence(f"unsupported sentence type {address!r}")


def _frame(payload: str) -> str:
    return f"${payload}*{nmea_checksum(payload):02X}"


def _hhmmss(t: UtcInstant, decimals: int) -> str:
    base = f"{t.hour:02d}{t.minute:02d}{t.second:02d}"
    if decimals <= 0:
        return base
    frac = str(t.nanosecond).rjust(9, "0")[:decimals]
    return f"{base}.{frac}"


def format_zda(t: UtcInstant, talker: str = "GN", decimals: int = 2) -> str:
    payload = f"{talker}ZDA,{_hhmmss(t, decimals)},{t.day:02d},{t.month:02d},{t.year:04d},00,00"
    return _frame(payload)


def format_rmc(t: UtcInstant, talker: str = "GN", decimals: int = 2) -> str:
    status = "A" if t.valid else "V"
    payload = (
        f"{talker}RMC,{_hhmmss(t, decimals)},{status},4722.6700,N,00832.8700,E,"
        f"0.000,,{t.day:02d}{t.month:02d}{t.year % 100:02d},,,{'A' if t.valid else 'N'}"
    )
    return _frame(payload)


def utc_from_sentences(lines: Iterable[str]) -> UtcInstant | None:
    """Latest time seen in ``lines``.

    When RMC and ZDA both report the same time-of-day, the ZDA date wins.
    Unparseable lines are skipped.
    """
    latest: UtcInstant | None = None
    zda_date: tuple[int, int, int, int] | None = None
    for line in lines:
        try:
            instant = parse_nmea(line)
        except NmeaError:
            continue
        if line.strip()[3:6] == "ZDA":
            zda_date = (instant.nanos_of_day, instant.year, instant.month, instant.day)
        elif zda_date is not None and zda_date[0] == instant.nanos_of_day:
            _, y, m, d = zda_date
            instant = UtcInstant(y, m, d, instant.hour, instant.minute, instant.second,
                                 instant.nanosecond, instant.valid)
        latest = instant
    return latest


def timepulse_schedule(
    start: UtcInstant, count: int, jitter_rms: float = 0.0, seed: int = 0
) -> TimepulseSchedule:
    """Pulses at the ``count`` UTC second boundaries at or after ``start``.

    Instants are nanoseconds relative to ``start``. Jitter is Gaussian with
    RMS ``jitter_rms`` ns, clipped to keep pulses inside their own second.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0 <= jitter_rms < MAX_JITTER_RMS_NS:
        raise ValueError(f"jitter_rms must be in [0, {MAX_JITTER_RMS_NS:.0f}) ns")
    first = (NS_PER_S - start.nanosecond) % NS_PER_S
    nominal = first + np.arange(count, dtype=np.float64) * NS_PER_S
    if jitter_rms == 0:
        return TimepulseSchedule(nominal, 0.0)
    rng = np.random.default_rng(seed)
    limit = NS_PER_S / 2 - 1
    jitter = np.clip(rng.normal(0.0, jitter_rms, count), -limit, limit)
    return TimepulseSchedule(nominal + jitter, float(jitter_rms))
