import io
from datetime import date, time
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvwave.ingest import (
    DayTicks,
    EmptyDayError,
    TickFormatError,
    TickRecord,
    TickRowError,
    bin_day,
    modal_price,
    parse_ticks,
    to_millis,
    write_ticks,
)

HEADER = "date,time,price,volume\n"
D = date(2007, 4, 2)


def _ticks(pairs, day=D):
    return DayTicks(day, np.arange(len(pairs)) + 34200,
                    [to_millis(p) for p, _ in pairs], [v for _, v in pairs])


def test_parse_one_row():
    days = parse_ticks(io.StringIO(HEADER + "2007-04-02,09:30:01,8.004,500\n"))
    (ticks,) = days.values()
    assert list(ticks) == [TickRecord(D, time(9, 30, 1), Decimal("8.004"), 500)]


def test_parse_empty_file():
    assert parse_ticks(io.StringIO("")) == {}
    assert parse_ticks(io.StringIO(HEADER)) == {}


def test_parse_binary_stream():
    data = (HEADER + "2007-04-02,09:30:01,8.004,500\n").encode()
    assert len(parse_ticks(io.BytesIO(data))[D]) == 1


def test_zero_volume_is_row_error():
    with pytest.raises(TickRowError) as exc:
        parse_ticks(io.StringIO(HEADER + "2007-04-02,09:30:01,8.004,0\n"))
    assert exc.value.line == 2


@pytest.mark.parametrize("row", [
    "2007-04-02,09:30:01,abc,5",
    "2007-04-02,09:30:01,8.000,x",
    "2007-04-02,09:30:01,-1.000,5",
    "2007-13-02,09:30:01,8.000,5",
    "2007-04-02,09:30:01,8.000",
])
def test_bad_rows(row):
    with pytest.raises(TickRowError):
        parse_ticks(io.StringIO(HEADER + row + "\n"))


def test_lenient_mode_skips_and_collects():
    text = HEADER + "2007-04-02,09:30:01,8.000,0\n2007-04-02,09:30:02,8.010,10\n"
    errors = []
    days = parse_ticks(io.StringIO(text), strict=False, errors=errors)
    assert len(days[D]) == 1
    assert len(errors) == 1 and errors[0].line == 2


def test_header_mismatch():
    with pytest.raises(TickFormatError):
        parse_ticks(io.StringIO("day,time,price,vol\n2007-04-02,09:30:01,8.000,5\n"))


def test_session_filter_is_inclusive():
    text = HEADER + "".join(
        f"2007-04-02,{t},8.000,1\n" for t in ("09:29:59", "09:30:00", "11:30:00", "12:00:00"))
    days = parse_ticks(io.StringIO(text), session=(time(9, 30), time(11, 30)))
    assert len(days[D]) == 2


def test_days_keep_first_appearance_order():
    text = HEADER + "2007-04-03,09:30:00,8.000,1\n2007-04-02,09:30:00,8.000,1\n"
    assert list(parse_ticks(io.StringIO(text))) == [date(2007, 4, 3), D]


def test_round_trip():
    ticks = _ticks([("8.004", 100), ("7.996", 50), ("10.5", 7)])
    buf = io.StringIO()
    write_ticks([ticks], buf)
    assert parse_ticks(io.StringIO(buf.getvalue()))[D] == ticks


def test_four_decimals_rejected():
    with pytest.raises(ValueError):
        to_millis("8.0041")


def test_bin_half_up_rounding():
    dist = bin_day(_ticks([("8.004", 100), ("7.996", 50)]), "0.01")
    assert dist.bins == [(Decimal("8.000"), 1.0)]
    assert dist.total_volume == 150


def test_bin_normalization():
    dist = bin_day(_ticks([("10.00", 300), ("10.01", 100)]), "0.01")
    assert [(float(p), q) for p, q in dist.bins] == [(10.0, 0.75), (10.01, 0.25)]
    assert dist.total_volume == 400


def test_bin_half_tick():
    dist = bin_day(_ticks([("8.004", 100), ("7.996", 50)]), "0.005")
    assert [float(p) for p, _ in dist.bins] == [7.995, 8.005]
    assert np.allclose(dist.probabilities, [1 / 3, 2 / 3])


def test_exact_half_rounds_up():
    dist = bin_day(_ticks([("8.005", 1)]), "0.01")
    assert float(dist.bins[0][0]) == 8.01


def test_empty_day():
    with pytest.raises(EmptyDayError):
        bin_day(DayTicks(D, [], [], []), "0.01")


def test_modal_tie_uses_weighted_mean():
    dist = bin_day(_ticks([("10.00", 100), ("10.02", 100), ("10.01", 10)]), "0.01")
    assert modal_price(dist) == pytest.approx(10.01)


def test_effective_n_equal_volumes():
    dist = bin_day(_ticks([("10.00", 100)] * 40), "0.01")
    assert dist.effective_n == pytest.approx(40)


tick_lists = st.lists(
    st.tuples(st.integers(5000, 15000), st.integers(1, 10_000)), min_size=1, max_size=80)


@given(tick_lists)
def test_binning_conserves_volume(pairs):
    ticks = DayTicks(D, np.zeros(len(pairs)), [p for p, _ in pairs], [v for _, v in pairs])
    dist = bin_day(ticks, "0.01")
    assert dist.volumes.sum() == sum(v for _, v in pairs)
    assert abs(dist.probabilities.sum() - 1) < 1e-12
    assert np.all(np.diff(dist.bin_millis) > 0)
    assert np.all(dist.bin_millis % 10 == 0)


@given(tick_lists)
def test_coarse_bins_from_fine_ones(pairs):
    # a finer grid never merges bins
    ticks = DayTicks(D, np.zeros(len(pairs)), [p for p, _ in pairs], [v for _, v in pairs])
    fine = bin_day(ticks, "0.005")
    coarse = bin_day(ticks, "0.01")
    assert fine.n_bins >= coarse.n_bins
    assert fine.total_volume == coarse.total_volume
