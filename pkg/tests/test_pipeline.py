from datetime import date, timedelta
from decimal import Decimal

import numpy as np
import pytest

from pvwave.ingest import DayTicks, bin_day
from pvwave.models import BesselParams, TwoBesselParams
from pvwave.pipeline import (
    ClassifyConfig,
    DayClass,
    DayClassification,
    InsufficientDataError,
    classify_corpus,
    classify_day,
    count_peaks,
    equilibrium_series,
    largest_remainder_percentages,
    summarize,
)
from pvwave.synth import SynthDaySpec, synth_corpus, synth_day

from conftest import make_dist

D = date(2007, 4, 2)


def _day(family, params, lo="9.80", hi="10.20", seed=1, n=100_000, day=D):
    spec = SynthDaySpec(family, params, n, (Decimal(lo), Decimal(hi), Decimal("0.01")), seed, day)
    return synth_day(spec)


def test_bessel_day_is_agreement():
    dc = classify_day(_day("bessel", BesselParams(0.2, 50.0, 10.0)))
    assert dc.cls is DayClass.AGREEMENT
    assert dc.stage == 1
    assert abs(dc.equilibrium_price - 10.0) <= 0.01
    assert dc.equilibrium_source == "fitted"


def test_two_peak_day():
    params = TwoBesselParams(BesselParams(1.0, 50.0, 9.9), BesselParams(1.0, 50.0, 10.1))
    dc = classify_day(_day("two_bessel", params, "9.60", "10.40"))
    assert dc.cls is DayClass.TWO_PRICE_JUMP
    assert dc.equilibrium_source == "volume_weighted_mean"
    p1, p2 = dc.component_p0s
    assert abs(p1 - 9.9) <= 0.01 and abs(p2 - 10.1) <= 0.01


def test_uniform_day():
    ticks = _day("uniform", None, "9.85", "10.14")
    dc = classify_day(ticks)
    assert dc.n_bins == 30
    assert dc.cls is DayClass.NO_AGREEMENT_UNIFORM
    assert dc.chosen_fit is None
    assert dc.equilibrium_price == pytest.approx(ticks.vwap())


def test_uniform_day_under_significance_only():
    dc = classify_day(_day("uniform", None, "9.85", "10.14"), ClassifyConfig(gate="paper"))
    assert dc.cls in set(DayClass) - {DayClass.DEGENERATE}


def test_too_few_bins_is_degenerate():
    ticks = DayTicks(D, [34200, 34201, 34202], [10000, 10010, 10020], [5, 10, 5])
    dc = classify_day(ticks)
    assert dc.cls is DayClass.DEGENERATE
    assert "too_few_bins" in dc.flags
    assert dc.equilibrium_price == pytest.approx(10.01)
    assert not dc.usable


def test_empty_day():
    dc = classify_day(DayTicks(D, [], [], []))
    assert dc.cls is DayClass.DEGENERATE and "empty" in dc.flags
    assert classify_day([]).cls is DayClass.DEGENERATE


def test_short_circuit():
    dc = classify_day(_day("bessel", BesselParams(0.2, 50.0, 10.0)))
    assert list(dc.fits) == ["bessel"]


def test_invariants_on_mixed_days():
    corpus = synth_corpus(8, (0.25, 0.25, 0.25, 0.25), n_ticks=20_000, seed=5)
    days = {t.day: t for t in corpus.days()}
    results, summary = classify_corpus(days)
    assert summary.total == 8
    for dc in results:
        lo, hi = bin_day(days[dc.day], "0.01").price_range
        assert dc.equilibrium_price > 0
        assert lo - 0.005 <= dc.equilibrium_price <= hi + 0.005
        assert (dc.equilibrium_source == "fitted") == (dc.cls is DayClass.AGREEMENT)


def test_ten_bessel_days():
    corpus = synth_corpus(10, n_ticks=100_000, seed=3)
    results, summary = classify_corpus(list(corpus.days()))
    assert summary.counts[DayClass.AGREEMENT] == 10
    assert summary.percentages[DayClass.AGREEMENT] == 100.0


def test_parallel_equals_serial():
    corpus = synth_corpus(6, (0.5, 0.5, 0.0, 0.0), n_ticks=20_000, seed=8)
    days = {t.day: t for t in corpus.days()}
    serial, s1 = classify_corpus(days)
    parallel, s2 = classify_corpus(days, workers=2)
    assert [(d.day, d.cls, d.equilibrium_price) for d in serial] == \
        [(d.day, d.cls, d.equilibrium_price) for d in parallel]
    assert [d.chosen_fit.params if d.chosen_fit else None for d in serial] == \
        [d.chosen_fit.params if d.chosen_fit else None for d in parallel]
    assert s1 == s2


def test_percentages_sum_to_100():
    assert largest_remainder_percentages([1, 1, 1]) == [33.34, 33.33, 33.33]
    assert sum(largest_remainder_percentages([408, 59, 23, 5, 0])) == pytest.approx(100.0)
    assert largest_remainder_percentages([0, 0]) == [0.0, 0.0]


def test_summary_rows_have_total():
    rows = summarize([]).rows()
    assert rows[-1] == ("Total", 0, 0.0)
    assert [r[0] for r in rows[:-1]] == [str(c) for c in DayClass]


def test_count_peaks():
    x = np.round(np.arange(9.8, 10.2001, 0.01), 2)
    bump = lambda c: np.exp(-60 * np.abs(x - c))
    assert count_peaks(make_dist(x, bump(9.9) + bump(10.1))) == 2
    assert count_peaks(make_dist(x, bump(9.9) + 0.3 * bump(10.1))) == 1
    assert count_peaks(make_dist(x, bump(10.0) + bump(10.02))) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        ClassifyConfig(gate="other")
    with pytest.raises(ValueError):
        ClassifyConfig(min_bins=3)
    with pytest.raises(ValueError):
        ClassifyConfig(df_convention="nope")


def _dc(day, cls, p0, v=1000):
    src = "fitted" if cls is DayClass.AGREEMENT else "volume_weighted_mean"
    return DayClassification(day, cls, None, p0, src, v, 10, 1)


def test_series_in_date_order():
    d = [D + timedelta(days=i) for i in range(3)]
    series = equilibrium_series([_dc(d[2], DayClass.AGREEMENT, 10.05),
                                 _dc(d[0], DayClass.AGREEMENT, 10.00),
                                 _dc(d[1], DayClass.AGREEMENT, 10.10)])
    assert [s.p0 for s in series] == [10.00, 10.10, 10.05]


def test_series_skips_degenerate():
    d = [D + timedelta(days=i) for i in range(3)]
    series = equilibrium_series([_dc(d[0], DayClass.AGREEMENT, 10.0),
                                 _dc(d[1], DayClass.DEGENERATE, 10.2),
                                 _dc(d[2], DayClass.TWO_PRICE_JUMP, 10.1)])
    assert [s.day for s in series] == [d[0], d[2]]
    assert series[1].after_gap and series[1].source == "volume_weighted_mean"


def test_series_needs_two_days():
    with pytest.raises(InsufficientDataError):
        equilibrium_series([_dc(D, DayClass.AGREEMENT, 10.0)])
