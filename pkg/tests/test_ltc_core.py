import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltcforge.gnss_time import UtcInstant
from ltcforge.ltc_core import (
    SYNC_WORD,
    FrameRate,
    LtcWord,
    MalformedWord,
    MissingSync,
    Timecode,
    UserBits,
    decode_word,
    encode_word,
    increment,
    timecode_from_utc,
)

RATES = list(FrameRate)
SYNC = [0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1]


def nibble(bits, start, width):
    # LSB first
    return sum(bits[start + i] << i for i in range(width))


def random_timecodes(rate, n, seed):
    rng = np.random.default_rng(seed)
    totals = rng.integers(0, 86400 * int(rate), n)
    ubs = rng.integers(0, 1 << 32, n, dtype=np.uint64)
    return [
        (Timecode.from_total_frames(int(t), rate), UserBits.from_int(int(u)))
        for t, u in zip(totals, ubs)
    ]


@st.composite
def timecodes(draw):
    rate = draw(st.sampled_from(RATES))
    return Timecode(
        draw(st.integers(0, 23)),
        draw(st.integers(0, 59)),
        draw(st.integers(0, 59)),
        draw(st.integers(0, int(rate) - 1)),
        rate,
    )


user_bits = st.lists(st.integers(0, 15), min_size=8, max_size=8).map(lambda g: UserBits(tuple(g)))


class TestFrameRate:
    def test_only_three_rates(self):
        assert [int(r) for r in FrameRate] == [24, 25, 30]
        for bad in (23, 29, 50, 60):
            with pytest.raises(ValueError):
                FrameRate.coerce(bad)

    def test_frame_period_is_rational(self):
        from fractions import Fraction

        assert FrameRate.FPS_24.frame_period == Fraction(1, 24)
        assert FrameRate.FPS_30.bit_rate == 2400


class TestTimecode:
    @pytest.mark.parametrize("field,value", [("hours", 24), ("minutes", 60), ("seconds", 60)])
    def test_field_ranges(self, field, value):
        kw = dict(hours=0, minutes=0, seconds=0, frames=0, rate=25)
        kw[field] = value
        with pytest.raises(ValueError):
            Timecode(**kw)

    @pytest.mark.parametrize("rate", RATES)
    def test_frames_below_rate(self, rate):
        Timecode(0, 0, 0, int(rate) - 1, rate)
        with pytest.raises(ValueError):
            Timecode(0, 0, 0, int(rate), rate)

    @pytest.mark.parametrize("rate", RATES)
    def test_total_frames_bijection(self, rate):
        fps = int(rate)
        rng = np.random.default_rng(fps)
        for n in [0, 1, fps - 1, fps, 86400 * fps - 1, *rng.integers(0, 86400 * fps, 2000).tolist()]:
            tc = Timecode.from_total_frames(n, rate)
            assert tc.total_frames == n
            assert tc.total_frames == ((tc.hours * 60 + tc.minutes) * 60 + tc.seconds) * fps + tc.frames

    def test_parse_and_str(self):
        tc = Timecode.parse("10:20:30:12", 25)
        assert (tc.hours, tc.minutes, tc.seconds, tc.frames) == (10, 20, 30, 12)
        assert str(tc) == "10:20:30:12"
        with pytest.raises(ValueError):
            Timecode.parse("10:20:30", 25)


class TestEncode:
    @pytest.mark.parametrize("rate,polarity_bit", [(24, 27), (25, 59), (30, 27)])
    def test_all_zero_word(self, rate, polarity_bit):
        w = encode_word(Timecode(0, 0, 0, 0, rate), UserBits())
        assert list(w.bits[64:]) == SYNC
        # 64 zero payload bits + 3 zeros in the sync word is odd, so the polarity bit flips
        expected = [0] * 64
        expected[polarity_bit] = 1
        assert list(w.bits[:64]) == expected

    def test_bcd_nibbles(self):
        w = encode_word(Timecode(10, 20, 30, 12, 30)).bits
        assert nibble(w, 0, 4) == 2    # frame units
        assert nibble(w, 8, 2) == 1    # frame tens
        assert nibble(w, 16, 4) == 0   # seconds units
        assert nibble(w, 24, 3) == 3   # seconds tens
        assert nibble(w, 32, 4) == 0   # minutes units
        assert nibble(w, 40, 3) == 2   # minutes tens
        assert nibble(w, 48, 4) == 0   # hours units
        assert nibble(w, 56, 2) == 1   # hours tens

    def test_user_bits_slots(self):
        ub = UserBits((1, 2, 3, 4, 5, 6, 7, 8))
        w = encode_word(Timecode(0, 0, 0, 0, 25), ub).bits
        assert [nibble(w, s, 4) for s in (4, 12, 20, 28, 36, 44, 52, 60)] == [1, 2, 3, 4, 5, 6, 7, 8]

    def test_sync_constant(self):
        assert list(SYNC_WORD) == SYNC

    def test_timestamp_and_user_bit_budget(self):
        assert 4 + 2 + 4 + 3 + 4 + 3 + 4 + 2 == 26
        assert len(UserBits().groups) * 4 == 32

    def test_flags_cleared(self):
        _, _, flags = decode_word(encode_word(Timecode(23, 59, 59, 29, 30), UserBits.from_int(0xFFFFFFFF)), 30)
        assert (flags.drop_frame, flags.color_frame, flags.bgf0, flags.bgf1, flags.bgf2) == (0, 0, 0, 0, 0)

    @given(timecodes(), user_bits)
    def test_even_zero_count(self, tc, ub):
        assert encode_word(tc, ub).zero_count % 2 == 0

    @settings(max_examples=300)
    @given(timecodes(), user_bits)
    def test_sync_unique_within_word(self, tc, ub):
        bits = encode_word(tc, ub).bits
        for offset in range(1, 64):
            assert list(bits[offset:offset + 16]) != SYNC, offset


class TestDecode:
    @pytest.mark.parametrize("rate", RATES)
    def test_round_trip_10k(self, rate):
        for tc, ub in random_timecodes(rate, 10_000, seed=int(rate)):
            got_tc, got_ub, _ = decode_word(encode_word(tc, ub), rate)
            assert (got_tc, got_ub) == (tc, ub)

    @given(timecodes(), user_bits)
    def test_round_trip_property(self, tc, ub):
        assert decode_word(encode_word(tc, ub), tc.rate)[:2] == (tc, ub)

    @pytest.mark.parametrize("rate", RATES)
    def test_last_frame_of_day(self, rate):
        tc = Timecode(23, 59, 59, int(rate) - 1, rate)
        assert decode_word(encode_word(tc), rate)[0] == tc

    def test_missing_sync(self):
        bits = list(encode_word(Timecode(1, 2, 3, 4, 25)).bits)
        bits[64:] = [1] * 16
        with pytest.raises(MissingSync):
            decode_word(LtcWord(tuple(bits)), 25)

    def test_seconds_tens_out_of_range(self):
        bits = list(encode_word(Timecode(1, 2, 3, 4, 25)).bits)
        bits[24:27] = [1, 1, 1]  # 7
        with pytest.raises(MalformedWord):
            decode_word(LtcWord(tuple(bits)), 25)

    def test_frame_tens_out_of_range(self):
        bits = list(encode_word(Timecode(1, 2, 3, 4, 30)).bits)
        bits[8:10] = [1, 1]  # 3
        with pytest.raises(MalformedWord):
            decode_word(LtcWord(tuple(bits)), 30)

    def test_frames_beyond_rate(self):
        w = encode_word(Timecode(0, 0, 0, 29, 30))
        with pytest.raises(MalformedWord):
            decode_word(w, 25)

    def test_flags_returned_verbatim(self):
        bits = list(encode_word(Timecode(1, 2, 3, 4, 30)).bits)
        bits[10] = 1
        bits[58] = 1
        _, _, flags = decode_word(LtcWord(tuple(bits)), 30)
        assert flags.drop_frame == 1 and flags.bgf1 == 1

    def test_bytes_round_trip(self):
        w = encode_word(Timecode(12, 34, 56, 7, 24), UserBits.from_int(0x12345678))
        assert LtcWord.from_bytes(w.to_bytes()) == w
        assert w.to_bytes()[8:] == bytes([0xFC, 0xBF])  # sync word, LSB-first packing


class TestIncrement:
    @pytest.mark.parametrize("rate", RATES)
    def test_second_carry(self, rate):
        assert increment(Timecode(0, 0, 0, int(rate) - 1, rate)) == Timecode(0, 0, 1, 0, rate)

    @pytest.mark.parametrize("rate", RATES)
    def test_day_wrap(self, rate):
        assert increment(Timecode(23, 59, 59, int(rate) - 1, rate)) == Timecode(0, 0, 0, 0, rate)

    @pytest.mark.parametrize("rate", RATES)
    def test_fps_increments_add_one_second(self, rate):
        tc = Timecode(1, 2, 3, 0, rate)
        for _ in range(int(rate)):
            tc = increment(tc)
        assert tc == Timecode(1, 2, 4, 0, rate)

    def test_monotone_until_wrap(self):
        tc = Timecode(23, 59, 50, 0, 30)
        prev = tc.total_frames
        for _ in range(299):
            tc = increment(tc)
            assert tc.total_frames == prev + 1
            prev = tc.total_frames
        assert increment(tc).total_frames == 0


class TestFromUtc:
    def test_second_boundary(self):
        assert timecode_from_utc(UtcInstant(2026, 1, 1, 12, 0, 0, 0), 30) == Timecode(12, 0, 0, 0, 30)

    def test_floor_not_round(self):
        assert timecode_from_utc(UtcInstant(2026, 1, 1, 12, 0, 0, 999_999_999), 30).frames == 29

    def test_half_second_at_25(self):
        assert timecode_from_utc(UtcInstant(2026, 1, 1, 6, 30, 15, 500_000_000), 25) == Timecode(6, 30, 15, 12, 25)

    def test_datetime_input(self):
        t = dt.datetime(2026, 1, 1, 6, 30, 15, 999_999)
        assert timecode_from_utc(t, 24) == Timecode(6, 30, 15, 23, 24)

    @given(st.integers(0, 999_999_999), st.sampled_from(RATES))
    def test_frames_always_below_rate(self, ns, rate):
        tc = timecode_from_utc(UtcInstant(2026, 5, 5, 1, 1, 1, ns), rate)
        assert tc.frames == (ns * int(rate)) // 10**9 < int(rate)
